//! Independent numerical oracles for the analytic derivatives.
//!
//! Kernel and functional derivatives are compared with finite differences
//! and adaptive quadrature. Spike-time partials and weight gradients are
//! compared with re-simulation: the network is run again with one frozen
//! weight, one arrival time or one synapse weight nudged, and the change in
//! spike times or error is measured directly. Re-simulation cases in which
//! any neuron's spike count changes are discarded, since the derivatives
//! are only defined while the spike pattern is preserved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disparity::{error_grad, error_value, SpikeAgeVector};
use crate::experiments::pair::{Architecture, KernelClass, Template};
use crate::experiments::poisson::{PoissonStream, RateProfile};
use crate::experiments::seeds::{mix, Stream};
use crate::gradients::{
    backpropagate, output_time_grads, plan_update, BoundarySign, LearnConfig, TapeMode,
};
use crate::kernels::{
    ahp_deriv, ahp_value, pair_kernel, psp_deriv, psp_value, AhpParams, ImpactParams, PspParams,
    Sign,
};
use crate::network::{EntryId, InputEvent, Network, SimConfig, Topology, W_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    KernelDerivatives,
    PairKernelQuadrature,
    ErrorFunctional,
    SpikeTapes,
    ChainRule,
    DescentDirection,
    Invariants,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::KernelDerivatives,
        CheckKind::PairKernelQuadrature,
        CheckKind::ErrorFunctional,
        CheckKind::SpikeTapes,
        CheckKind::ChainRule,
        CheckKind::DescentDirection,
        CheckKind::Invariants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::KernelDerivatives => "kernel_derivatives",
            CheckKind::PairKernelQuadrature => "pair_kernel_quadrature",
            CheckKind::ErrorFunctional => "error_functional",
            CheckKind::SpikeTapes => "spike_tapes",
            CheckKind::ChainRule => "chain_rule",
            CheckKind::DescentDirection => "descent_direction",
            CheckKind::Invariants => "invariants",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    #[serde(default = "all_checks")]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub seed: u64,
    /// Convert age gradients to emission-time gradients with the wrong
    /// sign. Only useful to confirm that the descent check catches it.
    #[serde(default)]
    pub sabotage_sign_flip: bool,
    /// Random pairs for the error-functional property sweep.
    #[serde(default = "default_property_pairs")]
    pub property_pairs: usize,
    #[serde(default = "default_fd_pairs")]
    pub fd_pairs: usize,
    /// Minimum number of spike-tape comparisons.
    #[serde(default = "default_tape_triples")]
    pub tape_triples: usize,
    #[serde(default = "default_instances")]
    pub chain_instances: usize,
    #[serde(default = "default_instances")]
    pub descent_instances: usize,
    /// Learning settings whose step the descent check shrinks.
    #[serde(default = "descent_learn")]
    pub descent_learn: LearnConfig,
    #[serde(default = "default_invariant_seconds")]
    pub invariant_seconds: f64,
}

fn all_checks() -> Vec<CheckKind> {
    CheckKind::ALL.to_vec()
}
fn default_property_pairs() -> usize {
    100_000
}
fn default_fd_pairs() -> usize {
    1000
}
fn default_tape_triples() -> usize {
    60
}
fn default_instances() -> usize {
    20
}
fn default_invariant_seconds() -> f64 {
    100.0
}
fn descent_learn() -> LearnConfig {
    LearnConfig {
        mu: 0.05,
        cap: 0.2,
        update_trigger_delay: 0.1,
    }
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            checks: all_checks(),
            seed: 0,
            sabotage_sign_flip: false,
            property_pairs: default_property_pairs(),
            fd_pairs: default_fd_pairs(),
            tape_triples: default_tape_triples(),
            chain_instances: default_instances(),
            descent_instances: default_instances(),
            descent_learn: descent_learn(),
            invariant_seconds: default_invariant_seconds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub cases: usize,
    /// Largest relative error seen (or the largest violation for property checks).
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

pub fn run_check(kind: CheckKind, cfg: &GradcheckConfig) -> CheckOutcome {
    match kind {
        CheckKind::KernelDerivatives => check_kernel_derivatives(),
        CheckKind::PairKernelQuadrature => check_pair_kernel_quadrature(),
        CheckKind::ErrorFunctional => {
            check_error_functional(cfg.property_pairs, cfg.fd_pairs, cfg.seed)
        }
        CheckKind::SpikeTapes => check_spike_tapes(cfg.tape_triples, cfg.seed),
        CheckKind::ChainRule => check_chain_rule(cfg.chain_instances, cfg.seed),
        CheckKind::DescentDirection => check_descent(
            cfg.descent_instances,
            cfg.seed,
            &cfg.descent_learn,
            boundary(cfg),
        ),
        CheckKind::Invariants => check_invariants(cfg.invariant_seconds, cfg.seed),
    }
}

fn boundary(cfg: &GradcheckConfig) -> BoundarySign {
    if cfg.sabotage_sign_flip {
        BoundarySign::Flipped
    } else {
        BoundarySign::Standard
    }
}

pub fn run_checks(cfg: &GradcheckConfig) -> Vec<CheckOutcome> {
    cfg.checks.iter().map(|&k| run_check(k, cfg)).collect()
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Five-point central difference.
pub fn fd5<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

fn outcome(
    check: CheckKind,
    cases: usize,
    max_rel_err: f64,
    tolerance: f64,
    note: String,
) -> CheckOutcome {
    CheckOutcome {
        check,
        cases,
        max_rel_err,
        tolerance,
        passed: cases > 0 && max_rel_err <= tolerance,
        note,
    }
}

pub fn check_kernel_derivatives() -> CheckOutcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let ages: Vec<f64> = (0..40).map(|k| 0.05 * 1.25f64.powi(k)).collect();
    for alpha in [1.2, 1.5] {
        for beta in [1.0, 5.0, 50.0] {
            for tau1 in [10.0, 20.0, 80.0, 100.0] {
                for sign in [Sign::Excitatory, Sign::Inhibitory] {
                    let p = PspParams {
                        alpha,
                        beta,
                        tau1,
                        delay: 0.5,
                        sign,
                    };
                    for &a in &ages {
                        let t = p.delay + a;
                        let v = psp_value(&p, t);
                        if v.abs() < 1e-250 {
                            continue;
                        }
                        let d = psp_deriv(&p, t).unwrap_or(f64::NAN);
                        let fd = fd5(|x| psp_value(&p, x), t, 1e-4 * a);
                        worst = worst.max(rel_err(d, fd, 1e-12 * v.abs() / a));
                        cases += 1;
                    }
                }
            }
        }
    }
    for amplitude in [1.0, 1000.0] {
        for tau2 in [0.5, 1.2, 5.0] {
            let p = AhpParams { amplitude, tau2 };
            for &a in &ages {
                let d = ahp_deriv(&p, a).unwrap_or(f64::NAN);
                let fd = fd5(|x| ahp_value(&p, x), a, 1e-4 * a);
                worst = worst.max(rel_err(d, fd, 1e-300));
                cases += 1;
            }
        }
    }
    outcome(
        CheckKind::KernelDerivatives,
        cases,
        worst,
        1e-5,
        "psp and ahp derivatives vs five-point differences".into(),
    )
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Product of two impact kernels integrated numerically over
/// `beta in [0, inf)` and `tau in (0, horizon]`.
pub fn pair_kernel_by_quadrature(t1: f64, t2: f64, horizon: f64) -> f64 {
    let inner = |tau: f64| -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        // beta = u / (1 - u) maps [0, 1) onto [0, inf)
        let g = |u: f64| -> f64 {
            if u >= 1.0 {
                return 0.0;
            }
            let beta = u / (1.0 - u);
            let jac = 1.0 / ((1.0 - u) * (1.0 - u));
            let f1 = (-beta / t1 - t1 / tau).exp() / tau;
            let f2 = (-beta / t2 - t2 / tau).exp() / tau;
            f1 * f2 * jac
        };
        // the integrand is concentrated where beta ~ t, i.e. u ~ t / (1 + t)
        let knee = (t1.min(t2) / (1.0 + t1.min(t2))).clamp(1e-6, 0.5);
        let scale = g(knee).abs().max(1e-300);
        adaptive_simpson(&g, 0.0, knee, 1e-10 * scale)
            + adaptive_simpson(&g, knee, 1.0, 1e-10 * scale)
    };
    let s = t1 + t2;
    let peak = (0.5 * s).min(horizon);
    let scale = inner(peak).abs().max(1e-300) * horizon;
    adaptive_simpson(&inner, 0.0, peak, 1e-9 * scale)
        + adaptive_simpson(&inner, peak, horizon, 1e-9 * scale)
}

pub fn check_pair_kernel_quadrature() -> CheckOutcome {
    let imp = ImpactParams::default();
    let ages: Vec<f64> = (0..10).map(|k| 0.5 * 1.9f64.powi(k)).collect();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for &a in &ages {
        for &b in &ages {
            let closed = pair_kernel(a, b, imp).unwrap_or(f64::NAN);
            let quad = pair_kernel_by_quadrature(a, b, imp.horizon);
            worst = worst.max(rel_err(closed, quad, 1e-300));
            cases += 1;
        }
    }
    outcome(
        CheckKind::PairKernelQuadrature,
        cases,
        worst,
        1e-4,
        "closed-form pair kernel vs 2-D adaptive quadrature on a 10x10 age grid".into(),
    )
}

fn random_ages(rng: &mut ChaCha8Rng, upsilon: f64) -> SpikeAgeVector {
    let n = rng.gen_range(1..=10);
    SpikeAgeVector::new((0..n).map(|_| rng.gen_range(0.0..upsilon)))
}

pub fn check_error_functional(property_pairs: usize, fd_pairs: usize, seed: u64) -> CheckOutcome {
    let imp = ImpactParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, Stream::Figure, 3));
    let mut self_err: f64 = 0.0;
    let mut asym: f64 = 0.0;
    let mut most_negative: f64 = 0.0;
    for _ in 0..property_pairs {
        let a = random_ages(&mut rng, 500.0);
        let b = random_ages(&mut rng, 500.0);
        self_err = self_err.max(error_value(&a, &a, imp).abs());
        asym = asym.max((error_value(&a, &b, imp) - error_value(&b, &a, imp)).abs());
        most_negative = most_negative.min(error_value(&a, &b, imp));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..fd_pairs {
        let d = random_ages(&mut rng, 500.0);
        let o = random_ages(&mut rng, 500.0);
        let i = rng.gen_range(0..o.len());
        let g = error_grad(i, &d, &o, imp);
        let x = o.ages()[i];
        let h = 1e-3 * x.max(0.01);
        let fd = fd5(
            |y| {
                let mut ages = o.ages().to_vec();
                ages[i] = y;
                error_value(&d, &SpikeAgeVector::new(ages), imp)
            },
            x,
            h,
        );
        worst = worst.max(rel_err(g, fd, 1e-9));
    }
    let properties_hold = self_err <= 1e-12 && asym == 0.0 && most_negative >= -1e-12;
    let mut out = outcome(
        CheckKind::ErrorFunctional,
        property_pairs + fd_pairs,
        worst,
        1e-4,
        format!(
            "max |E(x,x)| = {self_err:.1e}, max asymmetry = {asym:.1e}, min E = {most_negative:.1e}; gradient vs five-point differences"
        ),
    );
    out.passed &= properties_hold;
    out
}

/// A small network and a fixed input train used by the re-simulation oracles.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub topology: Topology,
    pub inputs: Vec<InputEvent>,
    pub sim: SimConfig,
    pub duration: f64,
}

/// Simulation settings for the oracles: crossings resolved far below the
/// finite-difference steps.
pub fn oracle_sim() -> SimConfig {
    SimConfig {
        crossing_tol: 1e-12,
        ..SimConfig::default()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Nudge {
    Weight(EntryId, f64),
    Arrival(EntryId, f64),
}

impl Scenario {
    /// Random network from `template` with weights uniform in `[lo, hi]`
    /// per layer, driven at `rate_hz` for `duration` ms.
    pub fn random(
        template: &Template,
        ranges: &[[f64; 2]],
        rate_hz: f64,
        duration: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, Stream::Pair, 0));
        let delays = template.sample_delays(&mut rng);
        let layers = template.architecture.neuron_layers();
        let weights: Vec<Vec<f64>> = template
            .fan_in()
            .iter()
            .zip(&layers)
            .map(|(&k, &l)| {
                (0..k)
                    .map(|_| rng.gen_range(ranges[l][0]..=ranges[l][1]))
                    .collect()
            })
            .collect();
        let topology = template.topology(&delays, &weights);
        let mut stream = PoissonStream::new(
            RateProfile::Homogeneous { rate_hz },
            template.architecture.inputs.len(),
            seed,
        );
        Self {
            topology,
            inputs: stream.take_until(duration),
            sim: oracle_sim(),
            duration,
        }
    }

    pub fn network(&self, weights: Option<&[Vec<f64>]>, tapes: bool) -> Network {
        let mut net = Network::new(&self.topology, self.sim).expect("scenario topology is valid");
        if let Some(w) = weights {
            net.set_weights(w).expect("weight shape");
        }
        if tapes {
            net = net.with_tapes(TapeMode::Full);
        }
        net.schedule_inputs(&self.inputs);
        net
    }

    /// Simulate to the end, applying `nudge` right after its entry is
    /// delivered. PSPs start after the synaptic delay, so nudging after the
    /// delivery step is exact as long as delays exceed one grid step.
    pub fn simulate(
        &self,
        weights: Option<&[Vec<f64>]>,
        nudge: Option<Nudge>,
        tapes: bool,
    ) -> Network {
        let mut net = self.network(weights, tapes);
        let mut pending = nudge;
        let end = net.grid_step_at_or_after(self.duration);
        while net.step_index() < end {
            net.step();
            if let Some(n) = pending {
                let id = match n {
                    Nudge::Weight(id, _) | Nudge::Arrival(id, _) => id,
                };
                if net.entries_created() > id.0 {
                    match n {
                        Nudge::Weight(id, d) => net.perturb_entry_weight(id, d),
                        Nudge::Arrival(id, d) => net.perturb_entry_arrival(id, d),
                    };
                    pending = None;
                }
            }
        }
        net
    }
}

fn spike_counts(net: &Network) -> Vec<usize> {
    net.neurons.iter().map(|n| n.efferent.len()).collect()
}

fn single_neuron_template(mixed: bool) -> Template {
    if mixed {
        Template::new(Architecture::single_neuron(vec![
            KernelClass::Excitatory,
            KernelClass::Excitatory,
            KernelClass::Excitatory,
            KernelClass::Nmda,
            KernelClass::Excitatory,
            KernelClass::Excitatory,
            KernelClass::Inhibitory,
            KernelClass::Excitatory,
        ]))
    } else {
        Template::new(Architecture::excitatory_neuron(8))
    }
}

fn two_two_one() -> Template {
    Template::new(Architecture {
        inputs: vec![KernelClass::Excitatory; 4],
        hidden: vec![vec![KernelClass::Excitatory; 2]],
    })
}

/// Oracle scenarios: single neurons (plain and mixed-sign) and a 2-2-1
/// network, each required to spike at every neuron.
pub fn oracle_scenarios(count: usize, seed: u64) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut attempt = 0u64;
    while out.len() < count && attempt < 50 * count as u64 + 50 {
        let s = mix(seed, Stream::Figure, 100 + attempt);
        let sc = match attempt % 3 {
            0 => Scenario::random(
                &single_neuron_template(false),
                &[[1.0, 4.0]],
                25.0,
                450.0,
                s,
            ),
            1 => Scenario::random(&single_neuron_template(true), &[[1.0, 5.0]], 25.0, 450.0, s),
            _ => Scenario::random(&two_two_one(), &[[2.0, 5.0], [5.0, 9.0]], 40.0, 450.0, s),
        };
        attempt += 1;
        let net = sc.simulate(None, None, false);
        let counts = spike_counts(&net);
        if counts.iter().all(|&c| c >= 2) && counts.iter().all(|&c| c <= 40) {
            out.push(sc);
        }
    }
    out
}

pub fn check_spike_tapes(min_triples: usize, seed: u64) -> CheckOutcome {
    let (hw, ht) = (1e-5, 1e-4);
    let mut worst: f64 = 0.0;
    let mut triples = 0;
    let mut skipped = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, Stream::Figure, 4));
    for sc in oracle_scenarios(12, seed) {
        if triples >= min_triples {
            break;
        }
        let base = sc.simulate(None, None, true);
        let counts = spike_counts(&base);
        for (n, neuron) in base.neurons.iter().enumerate() {
            for (k, eff) in neuron.efferent.iter().enumerate() {
                let Some(tape) = &eff.tape else { continue };
                let strong: Vec<_> = tape.entries.iter().filter(|e| e.dw.abs() > 1e-3).collect();
                if strong.is_empty() {
                    continue;
                }
                let e = strong[rng.gen_range(0..strong.len())];
                let spike_time = |nudge: Nudge| -> Option<f64> {
                    let net = sc.simulate(None, Some(nudge), false);
                    (spike_counts(&net) == counts).then(|| net.neurons[n].efferent[k].time)
                };
                let cases = [
                    (
                        Nudge::Weight(e.entry, hw),
                        Nudge::Weight(e.entry, -hw),
                        hw,
                        e.dw,
                    ),
                    (
                        Nudge::Arrival(e.entry, ht),
                        Nudge::Arrival(e.entry, -ht),
                        ht,
                        e.dt,
                    ),
                ];
                for (up, down, h, analytic) in cases {
                    match (spike_time(up), spike_time(down)) {
                        (Some(a), Some(b)) => {
                            let fd = (a - b) / (2.0 * h);
                            worst = worst.max(rel_err(analytic, fd, 1e-3));
                            triples += 1;
                        }
                        _ => skipped += 1,
                    }
                }
            }
        }
    }
    let mut out = outcome(
        CheckKind::SpikeTapes,
        triples,
        worst,
        1e-3,
        format!("spike-time partials vs re-simulation; {skipped} count-changing cases skipped"),
    );
    out.passed &= triples >= min_triples;
    out
}

/// Desired train for a scenario: the output of the same network with
/// weights scaled by random factors in `[0.8, 1.2]`.
fn desired_train(sc: &Scenario, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = sc.network(None, false).weights();
    let w: Vec<Vec<f64>> = base
        .iter()
        .map(|ws| ws.iter().map(|x| x * rng.gen_range(0.8..1.2)).collect())
        .collect();
    let net = sc.simulate(Some(&w), None, false);
    net.spike_times(net.output())
}

fn error_at_end(
    sc: &Scenario,
    weights: &[Vec<f64>],
    desired: &[f64],
    boundary: BoundarySign,
) -> (f64, Network) {
    let net = sc.simulate(Some(weights), None, true);
    let tg = output_time_grads(&net, desired, net.now(), ImpactParams::default(), boundary);
    (tg.error, net)
}

pub fn check_chain_rule(instances: usize, seed: u64) -> CheckOutcome {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, Stream::Figure, 5));
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut skipped = 0;
    for sc in oracle_scenarios(4 * instances, seed ^ 0x5eed) {
        if done >= instances {
            break;
        }
        let desired = desired_train(&sc, &mut rng);
        let w0 = sc.network(None, false).weights();
        let (_, net) = error_at_end(&sc, &w0, &desired, BoundarySign::Standard);
        let counts = spike_counts(&net);
        let tg = output_time_grads(
            &net,
            &desired,
            net.now(),
            ImpactParams::default(),
            BoundarySign::Standard,
        );
        let analytic = backpropagate(&net, &tg).per_synapse();
        let mut fd = analytic.clone();
        let mut ok = true;
        'outer: for (n, ws) in w0.iter().enumerate() {
            for s in 0..ws.len() {
                let mut e = [0.0; 2];
                for (j, sign) in [1.0, -1.0].into_iter().enumerate() {
                    let mut w = w0.clone();
                    w[n][s] += sign * h;
                    let (err, net2) = error_at_end(&sc, &w, &desired, BoundarySign::Standard);
                    if spike_counts(&net2) != counts {
                        ok = false;
                        break 'outer;
                    }
                    e[j] = err;
                }
                fd[n][s] = (e[0] - e[1]) / (2.0 * h);
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        let diff: f64 = analytic
            .iter()
            .flatten()
            .zip(fd.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = fd.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            skipped += 1;
            continue;
        }
        worst = worst.max(diff / norm);
        done += 1;
    }
    let mut out = outcome(
        CheckKind::ChainRule,
        done,
        worst,
        1e-2,
        format!("weight gradient vs re-simulated error differences (vector relative error); {skipped} instances skipped"),
    );
    out.passed &= done >= instances;
    out
}

pub fn check_descent(
    instances: usize,
    seed: u64,
    learn: &LearnConfig,
    boundary: BoundarySign,
) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, Stream::Figure, 6));
    let mut done = 0;
    let mut failed = 0;
    let mut halvings_used = 0;
    for sc in oracle_scenarios(4 * instances, seed ^ 0xd15c) {
        if done >= instances {
            break;
        }
        let desired = desired_train(&sc, &mut rng);
        let w0 = sc.network(None, false).weights();
        let (_, net) = error_at_end(&sc, &w0, &desired, BoundarySign::Standard);
        let tg = output_time_grads(&net, &desired, net.now(), ImpactParams::default(), boundary);
        let grads = backpropagate(&net, &tg).per_synapse();
        if tg.error <= 0.0 || grads.iter().flatten().all(|&g| g == 0.0) {
            continue;
        }
        done += 1;
        let mut cfg = *learn;
        let mut reduced = false;
        for halving in 0..=10 {
            let step = plan_update(&grads, &cfg);
            let w: Vec<Vec<f64>> = w0
                .iter()
                .zip(&step.deltas)
                .map(|(ws, ds)| ws.iter().zip(ds).map(|(w, d)| (w + d).max(W_MIN)).collect())
                .collect();
            let (e1, _) = error_at_end(&sc, &w, &desired, BoundarySign::Standard);
            if e1 < tg.error {
                reduced = true;
                halvings_used = halvings_used.max(halving);
                break;
            }
            cfg.mu *= 0.5;
        }
        if !reduced {
            failed += 1;
        }
    }
    CheckOutcome {
        check: CheckKind::DescentDirection,
        cases: done,
        max_rel_err: failed as f64,
        tolerance: 0.0,
        passed: done >= instances && failed == 0,
        note: format!("{failed} of {done} instances did not reduce the error within 10 halvings (most halvings needed: {halvings_used})"),
    }
}

pub fn check_invariants(seconds: f64, seed: u64) -> CheckOutcome {
    // the second scenario uses a short, shallow after-hyperpolarization so
    // that neurons fire again soon after the refractory period ends
    let mut weak_ahp = two_two_one();
    weak_ahp.neuron.ahp = AhpParams {
        amplitude: 5.0,
        tau2: 0.5,
    };
    let scenarios = [
        (two_two_one(), [[3.0, 6.0], [6.0, 10.0]]),
        (weak_ahp, [[4.0, 8.0], [4.0, 8.0]]),
    ];
    let mut min_gap = f64::INFINITY;
    let mut max_len = 0;
    let mut spikes = 0;
    let mut r = 0.0;
    let mut bound = 0;
    for (i, (template, ranges)) in scenarios.iter().enumerate() {
        let s = mix(seed, Stream::Figure, 7 + i as u64);
        let sc = Scenario::random(template, ranges, 60.0, 1.0, s);
        let mut net = Network::new(&sc.topology, SimConfig::default()).expect("valid topology");
        let upsilon = net.sim_config().upsilon;
        r = sc.topology.neuron.refractory;
        bound = (upsilon / r).ceil() as usize;
        let mut last = vec![f64::NEG_INFINITY; net.neurons.len()];
        let mut stream = PoissonStream::new(
            RateProfile::Homogeneous { rate_hz: 60.0 },
            sc.topology.input_channels,
            s,
        );
        let mut t = 0.0;
        while t < seconds * 1e3 {
            t += 50.0;
            for sp in net.advance(&stream.take_until(t), t) {
                min_gap = min_gap.min(sp.time - last[sp.neuron]);
                last[sp.neuron] = sp.time;
                spikes += 1;
            }
            max_len = max_len.max(net.max_ledger_len()).max(
                net.neurons
                    .iter()
                    .map(|n| n.efferent.len())
                    .max()
                    .unwrap_or(0),
            );
        }
    }
    CheckOutcome {
        check: CheckKind::Invariants,
        cases: spikes,
        max_rel_err: 0.0,
        tolerance: 0.0,
        passed: min_gap >= r && max_len <= bound && spikes > 0,
        note: format!("min inter-spike gap {min_gap:.4} ms (r = {r}), longest ledger {max_len} (bound {bound})"),
    }
}

/// Pass/fail table for a set of outcomes.
pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let mut s = format!(
        "{:<24} {:>7} {:>12} {:>10}  {}\n",
        "check", "cases", "max_err", "tol", "result"
    );
    for o in outcomes {
        s.push_str(&format!(
            "{:<24} {:>7} {:>12.3e} {:>10.1e}  {}  {}\n",
            o.check.name(),
            o.cases,
            o.max_rel_err,
            o.tolerance,
            if o.passed { "PASS" } else { "FAIL" },
            o.note
        ));
    }
    s
}
