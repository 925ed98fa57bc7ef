//! Closed-form spike-train disparity and its gradient.
//!
//! Both trains are compared through their integrated impact on a family of
//! virtual downstream neurons; the double integral reduces to sums of
//! [`pair_kernel`](crate::kernels::pair_kernel) terms over spike ages.

use crate::kernels::{pair_kernel_d1, pair_kernel_unchecked, ImpactParams, IMPACT_EPS};

/// Spike ages (ms) within the window, each clamped to at least [`IMPACT_EPS`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpikeAgeVector(Vec<f64>);

impl SpikeAgeVector {
    pub fn new(ages: impl IntoIterator<Item = f64>) -> Self {
        Self(ages.into_iter().map(|a| a.max(IMPACT_EPS)).collect())
    }

    /// Ages at `now` of the given absolute spike times, keeping only spikes
    /// in `[now - upsilon, now]`.
    pub fn from_times(times: impl IntoIterator<Item = f64>, now: f64, upsilon: f64) -> Self {
        Self::new(
            times
                .into_iter()
                .map(|t| now - t)
                .filter(|&a| a >= 0.0 && a <= upsilon),
        )
    }

    pub fn ages(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn cross_sum(a: &[f64], b: &[f64], horizon: f64) -> f64 {
    a.iter()
        .map(|&x| {
            b.iter()
                .map(|&y| pair_kernel_unchecked(x, y, horizon))
                .sum::<f64>()
        })
        .sum()
}

/// Disparity between a desired and an output train; zero iff they coincide.
pub fn error_value(desired: &SpikeAgeVector, output: &SpikeAgeVector, impact: ImpactParams) -> f64 {
    let h = impact.horizon;
    let (d, o) = (desired.ages(), output.ages());
    // sum the cross term in an order that does not depend on which train
    // is called desired, so the value is exactly symmetric
    let cross = if canonical_first(d, o) {
        cross_sum(d, o, h)
    } else {
        cross_sum(o, d, h)
    };
    cross_sum(d, d, h) + cross_sum(o, o, h) - 2.0 * cross
}

fn canonical_first(a: &[f64], b: &[f64]) -> bool {
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Equal => a
            .iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|c| c.is_ne())
            .map_or(true, |c| c.is_lt()),
        c => c.is_lt(),
    }
}

/// Derivative of [`error_value`] with respect to the age of output spike `i`.
pub fn error_grad(
    i: usize,
    desired: &SpikeAgeVector,
    output: &SpikeAgeVector,
    impact: ImpactParams,
) -> f64 {
    let h = impact.horizon;
    let ti = output.ages()[i];
    let own: f64 = output
        .ages()
        .iter()
        .map(|&tj| pair_kernel_d1(ti, tj, h))
        .sum();
    let cross: f64 = desired
        .ages()
        .iter()
        .map(|&tj| pair_kernel_d1(ti, tj, h))
        .sum();
    2.0 * (own - cross)
}

pub fn error_grad_all(
    desired: &SpikeAgeVector,
    output: &SpikeAgeVector,
    impact: ImpactParams,
) -> Vec<f64> {
    (0..output.len())
        .map(|i| error_grad(i, desired, output, impact))
        .collect()
}
