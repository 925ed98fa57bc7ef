//! Online learning of one witness/learner pair.
//!
//! Witness and learner are stepped together on one grid. Each witness
//! output spike becomes a desired spike for the learner; each learner
//! output spike and each desired spike schedules an update at the first
//! grid point at least `update_trigger_delay` later. Triggers that land on
//! the same grid point are merged into one update.

use std::collections::VecDeque;
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use super::pair::{mape, mean, WitnessPair};
use super::poisson::{PoissonStream, RateProfile};
use super::suite::fmt6;
use crate::error::{Error, Result};
use crate::gradients::{
    apply_update, backpropagate, output_time_grads, BoundarySign, LearnConfig, TapeMode,
};
use crate::kernels::ImpactParams;
use crate::network::{EmittedSpike, InputEvent, Network, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Update budget.
    pub updates: u64,
    /// MAPE and error are recorded every this many updates.
    pub record_every: u64,
    /// Hard limit on simulated time, s.
    pub max_duration_s: f64,
    pub conv_threshold: f64,
    /// Consecutive updates below `conv_threshold` that end a run early.
    pub conv_window: u64,
    pub stop_on_convergence: bool,
    /// Keep one [`UpdateTrace`] row per update.
    pub trace_updates: bool,
    pub tape_mode: TapeMode,
    #[serde(default)]
    pub boundary: BoundarySign,
    pub sim: SimConfig,
    pub impact: ImpactParams,
    pub learn: LearnConfig,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            updates: 10_000,
            record_every: 100,
            max_duration_s: 60_000.0,
            conv_threshold: 0.02,
            conv_window: 1000,
            stop_on_convergence: false,
            trace_updates: false,
            tape_mode: TapeMode::Full,
            boundary: BoundarySign::Standard,
            sim: SimConfig::default(),
            impact: ImpactParams::default(),
            learn: LearnConfig::default(),
        }
    }
}

impl RunSettings {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.learn.validate()?;
        if self.record_every == 0 {
            return Err(Error::config("run.record_every", "must be at least 1"));
        }
        if !(self.max_duration_s > 0.0) {
            return Err(Error::config("run.max_duration_s", "must be positive"));
        }
        if !(self.conv_threshold > 0.0) {
            return Err(Error::config("run.conv_threshold", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Diverged,
    Slow,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::Diverged => "diverged",
            Outcome::Slow => "slow",
        }
    }
}

/// MAPE per neuron at recorded update indices. Index 0 is the initial state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapeSeries {
    pub update_idx: Vec<u64>,
    /// `per_neuron[n][i]` is neuron `n`'s MAPE at `update_idx[i]`.
    pub per_neuron: Vec<Vec<f64>>,
}

impl MapeSeries {
    fn push(&mut self, idx: u64, values: &[f64]) {
        if self.per_neuron.is_empty() {
            self.per_neuron = vec![Vec::new(); values.len()];
        }
        self.update_idx.push(idx);
        for (s, &v) in self.per_neuron.iter_mut().zip(values) {
            s.push(v);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub update_idx: u64,
    pub time_ms: f64,
    pub error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateTrace {
    pub update_idx: u64,
    pub trigger_time_ms: f64,
    pub error_value: f64,
    pub raw_grad_norm: f64,
    pub applied_norm: f64,
    pub capped: bool,
}

/// `update_idx,trigger_time_ms,error_value,raw_grad_norm,applied_norm,capped`.
pub fn update_trace_csv(rows: &[UpdateTrace]) -> String {
    let mut s =
        String::from("update_idx,trigger_time_ms,error_value,raw_grad_norm,applied_norm,capped\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.update_idx,
            fmt6(r.trigger_time_ms),
            fmt6(r.error_value),
            fmt6(r.raw_grad_norm),
            fmt6(r.applied_norm),
            u8::from(r.capped)
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub initial_mape: Vec<f64>,
    pub final_mape: Vec<f64>,
    pub mape: MapeSeries,
    pub error_trace: Vec<ErrorSample>,
    pub outcome: Outcome,
    pub updates: u64,
    pub simulated_ms: f64,
    pub witness_spikes: u64,
    pub learner_spikes: u64,
    pub capped_updates: u64,
    pub aborted_updates: u64,
    /// Update at which the convergence window was first completed.
    pub converged_at: Option<u64>,
    /// First update at which each neuron's MAPE fell to half its initial value.
    pub half_mape_at: Vec<Option<u64>>,
    pub final_weights: Vec<Vec<f64>>,
    /// Empty unless [`RunSettings::trace_updates`] is set.
    pub update_trace: Vec<UpdateTrace>,
    /// Not part of any exported file.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn initial_avg(&self) -> f64 {
        mean(&self.initial_mape)
    }

    pub fn final_avg(&self) -> f64 {
        mean(&self.final_mape)
    }

    pub fn improved(&self) -> bool {
        self.final_avg() < self.initial_avg()
    }
}

/// Where the learner's desired spikes come from.
#[derive(Clone, Debug)]
pub enum Teacher {
    /// Simulate the witness alongside the learner.
    Online,
    /// Use previously recorded witness output times (sorted, ms).
    Replay(Vec<f64>),
}

/// Drive the witness alone for `duration_ms` and return its output spike
/// times.
pub fn record_witness(
    pair: &WitnessPair,
    drive: RateProfile,
    sim: SimConfig,
    duration_ms: f64,
) -> Result<Vec<f64>> {
    let mut witness = Network::new(&pair.witness_topology(), sim)?;
    let mut stream = PoissonStream::new(drive, pair.template.architecture.inputs.len(), pair.seed);
    let out = witness.output();
    let mut times = Vec::new();
    let mut t = 0.0;
    while t < duration_ms {
        t = (t + INPUT_CHUNK_MS).min(duration_ms);
        let spikes = witness.advance(&stream.take_until(t), t);
        times.extend(spikes.iter().filter(|s| s.neuron == out).map(|s| s.time));
    }
    Ok(times)
}

const INPUT_CHUNK_MS: f64 = 100.0;

pub fn run_pair(
    pair: &WitnessPair,
    drive: RateProfile,
    settings: &RunSettings,
) -> Result<RunReport> {
    run_pair_with(pair, drive, settings, Teacher::Online)
}

pub fn run_pair_with(
    pair: &WitnessPair,
    drive: RateProfile,
    settings: &RunSettings,
    teacher: Teacher,
) -> Result<RunReport> {
    settings.validate()?;
    drive.validate()?;
    let started = Instant::now();
    let witness_weights = &pair.witness_weights;
    let mut witness = match teacher {
        Teacher::Online => Some(Network::new(&pair.witness_topology(), settings.sim)?),
        Teacher::Replay(_) => None,
    };
    let mut replay: VecDeque<f64> = match teacher {
        Teacher::Online => VecDeque::new(),
        Teacher::Replay(times) => times.into(),
    };
    let mut learner =
        Network::new(&pair.learner_topology(), settings.sim)?.with_tapes(settings.tape_mode);
    let out = learner.output();
    let mut stream = PoissonStream::new(drive, pair.template.architecture.inputs.len(), pair.seed);

    let initial_mape = mape(&learner.weights(), witness_weights)?;
    let initial_avg = mean(&initial_mape);
    let mut series = MapeSeries::default();
    series.push(0, &initial_mape);
    let mut current = initial_mape.clone();
    let mut half_mape_at = vec![None; initial_mape.len()];
    let mut error_trace = Vec::new();
    let mut update_trace = Vec::new();

    let upsilon = settings.sim.upsilon;
    let max_ms = settings.max_duration_s * 1e3;
    let trigger_delay = settings.learn.update_trigger_delay;
    let mut desired: VecDeque<f64> = VecDeque::new();
    let mut triggers: VecDeque<u64> = VecDeque::new();
    let mut scheduled_until = 0.0;
    let mut updates = 0u64;
    let mut streak = 0u64;
    let mut converged_at = None;
    let (mut witness_spikes, mut learner_spikes) = (0u64, 0u64);
    let (mut capped, mut aborted) = (0u64, 0u64);
    let mut spikes: Vec<EmittedSpike> = Vec::new();

    while updates < settings.updates {
        let t0 = learner.now();
        if t0 >= max_ms {
            break;
        }
        let t1 = learner.grid_time(learner.step_index() + 1);
        if t1 > scheduled_until {
            scheduled_until += INPUT_CHUNK_MS;
            let inputs: Vec<InputEvent> = stream.take_until(scheduled_until);
            learner.schedule_inputs(&inputs);
            if let Some(w) = witness.as_mut() {
                w.schedule_inputs(&inputs);
            }
        }

        let mut new_triggers: [Option<f64>; 2] = [None, None];
        if let Some(w) = witness.as_mut() {
            spikes.clear();
            w.step_into(&mut spikes);
            for s in spikes.iter().filter(|s| s.neuron == out) {
                desired.push_back(s.time);
                witness_spikes += 1;
                new_triggers[0] = Some(s.time);
            }
        } else {
            while replay.front().is_some_and(|&t| t <= t1) {
                let t = replay.pop_front().unwrap_or_default();
                desired.push_back(t);
                witness_spikes += 1;
                new_triggers[0] = Some(t);
            }
        }
        spikes.clear();
        learner.step_into(&mut spikes);
        for s in spikes.iter().filter(|s| s.neuron == out) {
            learner_spikes += 1;
            new_triggers[1] = Some(s.time);
        }
        let mut trig: Vec<u64> = new_triggers
            .iter()
            .flatten()
            .map(|&t| learner.grid_step_at_or_after(t + trigger_delay))
            .collect();
        trig.sort_unstable();
        for k in trig {
            if triggers.back().map_or(true, |&b| b < k) {
                triggers.push_back(k);
            }
        }

        while desired.front().is_some_and(|&t| t < t1 - upsilon) {
            desired.pop_front();
        }

        if triggers.front() == Some(&learner.step_index()) {
            triggers.pop_front();
            let now = learner.now();
            let desired_now: Vec<f64> = desired.iter().copied().collect();
            let tg = output_time_grads(
                &learner,
                &desired_now,
                now,
                settings.impact,
                settings.boundary,
            );
            let grads = backpropagate(&learner, &tg);
            let report = apply_update(&mut learner, &grads, &settings.learn);
            updates += 1;
            if settings.trace_updates {
                update_trace.push(UpdateTrace {
                    update_idx: updates,
                    trigger_time_ms: now,
                    error_value: tg.error,
                    raw_grad_norm: report.raw_grad_norm,
                    applied_norm: report.applied_norm,
                    capped: report.capped,
                });
            }
            capped += report.capped as u64;
            aborted += report.aborted as u64;
            current = mape(&learner.weights(), witness_weights)?;
            for (n, h) in half_mape_at.iter_mut().enumerate() {
                if h.is_none() && current[n] <= 0.5 * initial_mape[n] {
                    *h = Some(updates);
                }
            }
            let avg = mean(&current);
            if avg < settings.conv_threshold {
                streak += 1;
                if streak >= settings.conv_window && converged_at.is_none() {
                    converged_at = Some(updates);
                }
            } else {
                streak = 0;
            }
            let stop = settings.stop_on_convergence && converged_at.is_some();
            if updates % settings.record_every == 0 || updates == settings.updates || stop {
                series.push(updates, &current);
                error_trace.push(ErrorSample {
                    update_idx: updates,
                    time_ms: now,
                    error: tg.error,
                });
            }
            if stop {
                break;
            }
        }
    }
    if series.update_idx.last() != Some(&updates) {
        series.push(updates, &current);
    }

    let final_avg = mean(&current);
    let outcome = if final_avg < settings.conv_threshold {
        Outcome::Converged
    } else if final_avg > initial_avg {
        Outcome::Diverged
    } else {
        Outcome::Slow
    };
    let report = RunReport {
        seed: pair.seed,
        initial_mape,
        final_mape: current,
        mape: series,
        error_trace,
        outcome,
        updates,
        simulated_ms: learner.now(),
        witness_spikes,
        learner_spikes,
        capped_updates: capped,
        aborted_updates: aborted,
        converged_at,
        half_mape_at,
        final_weights: learner.weights(),
        update_trace,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    debug!(
        "pair {:#x}: {} updates over {:.1} s, MAPE {:.4} -> {:.4} ({})",
        pair.seed,
        report.updates,
        report.simulated_ms * 1e-3,
        report.initial_avg(),
        report.final_avg(),
        report.outcome.as_str()
    );
    Ok(report)
}
