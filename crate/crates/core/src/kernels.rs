//! Postsynaptic potential, after-hyperpolarization and impact kernels.
//!
//! All functions are pure. Times are in milliseconds, potentials are
//! dimensionless (the firing threshold is normalized to 1 by default).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on spike ages entering the impact kernel and the error functional.
pub const IMPACT_EPS: f64 = 1e-3;

/// Exponents below this short-circuit to zero.
pub const EXP_FLOOR: f64 = -700.0;

#[inline]
pub(crate) fn exp_floored(x: f64) -> f64 {
    if x < EXP_FLOOR {
        0.0
    } else {
        x.exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

impl Sign {
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            Sign::Excitatory => 1.0,
            Sign::Inhibitory => -1.0,
        }
    }
}

/// Shape of one synapse's PSP, shifted right by the synaptic delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PspParams {
    /// Distance of the synapse from the soma (dimensionless).
    pub alpha: f64,
    /// Rate of rise (dimensionless).
    pub beta: f64,
    /// Decay constant, ms.
    pub tau1: f64,
    /// Axonal/synaptic delay, ms.
    pub delay: f64,
    pub sign: Sign,
}

impl PspParams {
    pub fn excitatory(delay: f64) -> Self {
        Self {
            alpha: 1.5,
            beta: 1.0,
            tau1: 20.0,
            delay,
            sign: Sign::Excitatory,
        }
    }

    pub fn inhibitory(delay: f64) -> Self {
        Self {
            alpha: 1.2,
            beta: 1.0,
            tau1: 10.0,
            delay,
            sign: Sign::Inhibitory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta >= 0.0
            && self.tau1 > 0.0
            && self.delay >= 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.tau1.is_finite()
            && self.delay.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "psp parameters out of range: {self:?}"
            )))
        }
    }

    /// Age (after the delay) at which the unsigned PSP peaks.
    ///
    /// Root of `t^2 + (tau1/2) t - beta alpha^2 tau1 = 0`; zero when `beta = 0`.
    pub fn peak_age(&self) -> f64 {
        let c = self.beta * self.alpha * self.alpha;
        let b = 0.5 * self.tau1;
        (-b + (b * b + 4.0 * c * self.tau1).sqrt()) / 2.0
    }

    /// Largest magnitude the PSP reaches (unsigned, unit weight).
    pub fn peak_magnitude(&self) -> f64 {
        let t = self.peak_age();
        if t <= 0.0 {
            f64::INFINITY
        } else {
            unsigned_shape(self, t)
        }
    }
}

#[inline]
fn unsigned_shape(p: &PspParams, age: f64) -> f64 {
    let x = -p.beta * p.alpha * p.alpha / age - age / p.tau1;
    exp_floored(x) / (p.alpha * age.sqrt())
}

/// PSP value at time `t` after the spike's arrival at the synapse.
///
/// Zero for `t <= delay`; negated for inhibitory synapses.
pub fn psp_value(p: &PspParams, t: f64) -> f64 {
    let age = t - p.delay;
    if age <= 0.0 {
        return 0.0;
    }
    p.sign.factor() * unsigned_shape(p, age)
}

/// Time derivative of [`psp_value`]. Undefined exactly at onset.
pub fn psp_deriv(p: &PspParams, t: f64) -> Result<f64> {
    let age = t - p.delay;
    if age == 0.0 {
        return Err(Error::Domain(format!("psp derivative at onset t = {t}")));
    }
    Ok(psp_value_deriv(p, t).1)
}

/// Value and time derivative in one pass; both zero at or before onset.
#[inline]
pub fn psp_value_deriv(p: &PspParams, t: f64) -> (f64, f64) {
    let age = t - p.delay;
    if age <= 0.0 {
        return (0.0, 0.0);
    }
    let v = p.sign.factor() * unsigned_shape(p, age);
    let c = p.beta * p.alpha * p.alpha;
    let log_slope = -0.5 / age + c / (age * age) - 1.0 / p.tau1;
    (v, v * log_slope)
}

/// Self-inhibition applied after every efferent spike.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AhpParams {
    /// Maximum drop in potential right after a spike.
    pub amplitude: f64,
    /// Decay constant, ms.
    pub tau2: f64,
}

impl Default for AhpParams {
    fn default() -> Self {
        Self {
            amplitude: 1000.0,
            tau2: 1.2,
        }
    }
}

impl AhpParams {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude > 0.0
            && self.tau2 > 0.0
            && self.amplitude.is_finite()
            && self.tau2.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "ahp parameters out of range: {self:?}"
            )))
        }
    }
}

#[inline]
pub fn ahp_value(p: &AhpParams, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        -p.amplitude * exp_floored(-t / p.tau2)
    }
}

pub fn ahp_deriv(p: &AhpParams, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::Domain("ahp derivative at t = 0".into()));
    }
    Ok(ahp_deriv_unchecked(p, t))
}

#[inline]
pub(crate) fn ahp_deriv_unchecked(p: &AhpParams, t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        p.amplitude / p.tau2 * exp_floored(-t / p.tau2)
    }
}

/// Upper bound of the `tau` integration in the error functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactParams {
    /// Integration horizon, ms.
    pub horizon: f64,
}

impl Default for ImpactParams {
    fn default() -> Self {
        Self { horizon: 150.0 }
    }
}

/// PSP-shaped impact of a spike of age `t` on a virtual downstream neuron.
pub fn impact_f(beta: f64, tau: f64, t: f64) -> Result<f64> {
    if !(t > IMPACT_EPS) {
        return Err(Error::Domain(format!(
            "impact kernel requires t > {IMPACT_EPS}, got {t}"
        )));
    }
    if !(beta >= 0.0 && tau > 0.0) {
        return Err(Error::Domain(format!(
            "impact kernel parameters beta={beta}, tau={tau}"
        )));
    }
    Ok(exp_floored(-beta / t - t / tau) / tau)
}

/// Closed form of the product of two impact kernels integrated over
/// `beta in [0, inf)` and `tau in [0, horizon]`.
pub fn pair_kernel(t1: f64, t2: f64, impact: ImpactParams) -> Result<f64> {
    if !(t1 > 0.0 && t2 > 0.0) {
        return Err(Error::Domain(format!(
            "pair kernel needs positive ages, got ({t1}, {t2})"
        )));
    }
    Ok(pair_kernel_unchecked(t1, t2, impact.horizon))
}

#[inline]
pub(crate) fn pair_kernel_unchecked(t1: f64, t2: f64, horizon: f64) -> f64 {
    let s = t1 + t2;
    t1 * t2 / (s * s) * exp_floored(-s / horizon)
}

/// Partial derivative of the pair kernel with respect to its first argument.
#[inline]
pub(crate) fn pair_kernel_d1(t1: f64, t2: f64, horizon: f64) -> f64 {
    let s = t1 + t2;
    t2 * ((t2 - t1) - t1 / horizon * s) / (s * s * s) * exp_floored(-s / horizon)
}
