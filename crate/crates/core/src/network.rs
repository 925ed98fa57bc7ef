//! Layered feedforward networks of spike-response neurons and their
//! fixed-step simulation.
//!
//! Every afferent spike is stored in its synapse's ledger together with the
//! weight the synapse had when the spike arrived, so weight updates never
//! rewrite history. Spike times are absolute (ms since the network was
//! created); ages are computed on demand.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{record_tape, SpikeTape, TapeMode};
use crate::kernels::{ahp_value, psp_value, AhpParams, PspParams, Sign};

pub type NeuronId = usize;

/// Weights never drop below this value during learning.
pub const W_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpikeId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Input(usize),
    Neuron(NeuronId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub source: Source,
    pub psp: PspParams,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub synapses: Vec<SynapseSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronParams {
    pub threshold: f64,
    /// Absolute refractory period, ms.
    pub refractory: f64,
    pub ahp: AhpParams,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            refractory: 1.0,
            ahp: AhpParams::default(),
        }
    }
}

/// Network structure and initial weights. Neurons are numbered layer by
/// layer, so neuron ids are a topological order; the last neuron is the
/// supervised output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub input_channels: usize,
    pub layers: Vec<Vec<NeuronSpec>>,
    pub neuron: NeuronParams,
}

impl Topology {
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::Topology("no layers".into()))?;
        if last.len() != 1 {
            return Err(Error::Topology(format!(
                "final layer must hold exactly one output neuron, found {}",
                last.len()
            )));
        }
        if !(self.neuron.threshold > 0.0 && self.neuron.refractory > 0.0) {
            return Err(Error::Topology(
                "threshold and refractory period must be positive".into(),
            ));
        }
        self.neuron.ahp.validate()?;
        let mut first_in_layer = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            for (ni, spec) in layer.iter().enumerate() {
                for (si, syn) in spec.synapses.iter().enumerate() {
                    syn.psp.validate()?;
                    if !(syn.weight >= 0.0 && syn.weight.is_finite()) {
                        return Err(Error::Topology(format!(
                            "layer {li} neuron {ni} synapse {si}: weight {} must be finite and non-negative",
                            syn.weight
                        )));
                    }
                    match syn.source {
                        Source::Input(c) if c >= self.input_channels => {
                            return Err(Error::Topology(format!(
                                "layer {li} neuron {ni} synapse {si}: input channel {c} out of range"
                            )))
                        }
                        Source::Neuron(n) if n >= first_in_layer => {
                            return Err(Error::Topology(format!(
                                "layer {li} neuron {ni} synapse {si}: source neuron {n} is not in an earlier layer"
                            )))
                        }
                        _ => {}
                    }
                }
            }
            first_in_layer += layer.len();
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Base time step, ms.
    pub dt: f64,
    /// Age beyond which spikes are forgotten, ms.
    pub upsilon: f64,
    /// Width of the bisection bracket for threshold crossings, ms.
    pub crossing_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            upsilon: 500.0,
            crossing_tol: 1e-6,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0
            && self.upsilon > 0.0
            && self.crossing_tol > 0.0
            && self.crossing_tol < self.dt)
        {
            return Err(Error::InvalidParameter(format!(
                "simulation config requires dt > 0, upsilon > 0 and 0 < crossing_tol < dt: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputEvent {
    pub channel: usize,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmittedSpike {
    pub neuron: NeuronId,
    pub id: SpikeId,
    pub time: f64,
}

#[derive(Clone, Debug)]
pub struct LedgerEntry {
    pub id: EntryId,
    pub arrival: f64,
    /// Synapse weight frozen onto this spike when it arrived.
    pub weight: f64,
    /// Upstream spike that produced this entry (none for network inputs).
    pub origin: Option<SpikeId>,
}

#[derive(Clone, Debug)]
pub struct Synapse {
    pub source: Source,
    pub psp: PspParams,
    pub weight: f64,
    pub ledger: VecDeque<LedgerEntry>,
    peak_age: f64,
    peak_mag: f64,
}

impl Synapse {
    fn new(spec: &SynapseSpec) -> Self {
        Self {
            source: spec.source,
            psp: spec.psp,
            weight: spec.weight,
            ledger: VecDeque::new(),
            peak_age: spec.psp.peak_age(),
            peak_mag: spec.psp.peak_magnitude(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Efferent {
    pub id: SpikeId,
    pub time: f64,
    pub tape: Option<SpikeTape>,
}

#[derive(Clone, Debug)]
pub struct Neuron {
    pub params: NeuronParams,
    pub layer: usize,
    pub synapses: Vec<Synapse>,
    pub efferent: VecDeque<Efferent>,
    last_spike: Option<f64>,
    /// Grid time at which the potential was last seen below threshold.
    below_at: Option<f64>,
    /// Set when an upper bound on the potential over all future times stays
    /// below threshold; cleared by any new arrival.
    quiet: bool,
}

impl Neuron {
    /// Membrane potential at absolute time `t` from the in-window spikes.
    pub fn potential(&self, t: f64) -> f64 {
        let mut p = 0.0;
        for syn in &self.synapses {
            for e in &syn.ledger {
                p += e.weight * psp_value(&syn.psp, t - e.arrival);
            }
        }
        for k in &self.efferent {
            p += ahp_value(&self.params.ahp, t - k.time);
        }
        p
    }

    /// Potential at `t` and an upper bound on the potential at any later
    /// time, valid as long as no new spike arrives.
    fn potential_and_bound(&self, t: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut bound = 0.0;
        for syn in &self.synapses {
            let excitatory = syn.psp.sign == Sign::Excitatory;
            for e in &syn.ledger {
                let v = e.weight * psp_value(&syn.psp, t - e.arrival);
                p += v;
                if excitatory {
                    if t - e.arrival - syn.psp.delay >= syn.peak_age {
                        bound += v;
                    } else {
                        bound += e.weight * syn.peak_mag;
                    }
                }
            }
        }
        for k in &self.efferent {
            p += ahp_value(&self.params.ahp, t - k.time);
        }
        (p, bound)
    }

    pub fn last_spike(&self) -> Option<f64> {
        self.last_spike
    }

    pub fn weights(&self) -> Vec<f64> {
        self.synapses.iter().map(|s| s.weight).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub neurons: Vec<Neuron>,
    input_channels: usize,
    input_fanout: Vec<Vec<(NeuronId, usize)>>,
    neuron_fanout: Vec<Vec<(NeuronId, usize)>>,
    sim: SimConfig,
    step: u64,
    pending: VecDeque<InputEvent>,
    next_entry: u64,
    next_spike: u64,
    tape_mode: Option<TapeMode>,
}

impl Network {
    pub fn new(topology: &Topology, sim: SimConfig) -> Result<Self> {
        topology.validate()?;
        sim.validate()?;
        let mut neurons = Vec::with_capacity(topology.neuron_count());
        let mut input_fanout = vec![Vec::new(); topology.input_channels];
        let mut neuron_fanout = vec![Vec::new(); topology.neuron_count()];
        for (li, layer) in topology.layers.iter().enumerate() {
            for spec in layer {
                let id = neurons.len();
                for (si, syn) in spec.synapses.iter().enumerate() {
                    match syn.source {
                        Source::Input(c) => input_fanout[c].push((id, si)),
                        Source::Neuron(n) => neuron_fanout[n].push((id, si)),
                    }
                }
                neurons.push(Neuron {
                    params: topology.neuron,
                    layer: li,
                    synapses: spec.synapses.iter().map(Synapse::new).collect(),
                    efferent: VecDeque::new(),
                    last_spike: None,
                    below_at: None,
                    quiet: false,
                });
            }
        }
        Ok(Self {
            neurons,
            input_channels: topology.input_channels,
            input_fanout,
            neuron_fanout,
            sim,
            step: 0,
            pending: VecDeque::new(),
            next_entry: 0,
            next_spike: 0,
            tape_mode: None,
        })
    }

    /// Record perturbation tapes at every emitted spike.
    pub fn with_tapes(mut self, mode: TapeMode) -> Self {
        self.tape_mode = Some(mode);
        self
    }

    pub fn tape_mode(&self) -> Option<TapeMode> {
        self.tape_mode
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn output(&self) -> NeuronId {
        self.neurons.len() - 1
    }

    /// Current simulation time, ms.
    pub fn now(&self) -> f64 {
        self.grid_time(self.step)
    }

    #[inline]
    pub fn grid_time(&self, step: u64) -> f64 {
        step as f64 * self.sim.dt
    }

    /// Index of the first grid point at or after `t`.
    pub fn grid_step_at_or_after(&self, t: f64) -> u64 {
        let k = (t / self.sim.dt).ceil().max(0.0) as u64;
        // guard against t/dt landing one ulp above an integer
        if k > 0 && self.grid_time(k - 1) >= t {
            k - 1
        } else {
            k
        }
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn neuron(&self, n: NeuronId) -> &Neuron {
        &self.neurons[n]
    }

    pub fn membrane_potential(&self, n: NeuronId, t: f64) -> f64 {
        self.neurons[n].potential(t)
    }

    /// Current synapse weights, one vector per neuron.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.neurons.iter().map(Neuron::weights).collect()
    }

    pub fn set_weights(&mut self, weights: &[Vec<f64>]) -> Result<()> {
        if weights.len() != self.neurons.len()
            || weights
                .iter()
                .zip(&self.neurons)
                .any(|(w, n)| w.len() != n.synapses.len())
        {
            return Err(Error::InvalidParameter(
                "weight shape does not match the network".into(),
            ));
        }
        for (n, ws) in self.neurons.iter_mut().zip(weights) {
            for (s, &w) in n.synapses.iter_mut().zip(ws) {
                s.weight = w;
            }
        }
        Ok(())
    }

    /// Queue input spikes. Events must be sorted by time.
    pub fn schedule_inputs(&mut self, events: &[InputEvent]) {
        debug_assert!(events.windows(2).all(|w| w[0].time <= w[1].time));
        debug_assert!(events.iter().all(|e| e.channel < self.input_channels));
        if let (Some(last), Some(first)) = (self.pending.back(), events.first()) {
            debug_assert!(last.time <= first.time);
        }
        self.pending.extend(events.iter().copied());
    }

    /// Queue `input_events` and simulate up to `until`.
    pub fn advance(&mut self, input_events: &[InputEvent], until: f64) -> Vec<EmittedSpike> {
        self.schedule_inputs(input_events);
        self.run_until(until)
    }

    /// Simulate grid steps while the step end does not exceed `until`.
    pub fn run_until(&mut self, until: f64) -> Vec<EmittedSpike> {
        let mut out = Vec::new();
        let slack = self.sim.dt * 1e-6;
        while self.grid_time(self.step + 1) <= until + slack {
            self.step_into(&mut out);
        }
        out
    }

    /// Simulate exactly one grid step.
    pub fn step(&mut self) -> Vec<EmittedSpike> {
        let mut out = Vec::new();
        self.step_into(&mut out);
        out
    }

    pub fn step_into(&mut self, out: &mut Vec<EmittedSpike>) {
        let t0 = self.grid_time(self.step);
        let t1 = self.grid_time(self.step + 1);
        while let Some(ev) = self.pending.front().copied() {
            if ev.time > t1 {
                break;
            }
            self.pending.pop_front();
            for i in 0..self.input_fanout[ev.channel].len() {
                let (n, s) = self.input_fanout[ev.channel][i];
                self.deliver(n, s, ev.time, None);
            }
        }
        for n in 0..self.neurons.len() {
            if let Some(t) = self.scan(n, t0, t1) {
                let id = self.emit(n, t);
                out.push(EmittedSpike {
                    neuron: n,
                    id,
                    time: t,
                });
            }
        }
        self.step += 1;
        self.prune_window(t1);
    }

    fn deliver(&mut self, n: NeuronId, syn: usize, arrival: f64, origin: Option<SpikeId>) {
        let id = EntryId(self.next_entry);
        self.next_entry += 1;
        let neuron = &mut self.neurons[n];
        let s = &mut neuron.synapses[syn];
        s.ledger.push_back(LedgerEntry {
            id,
            arrival,
            weight: s.weight,
            origin,
        });
        neuron.quiet = false;
    }

    /// Threshold test for one neuron over the step `(t0, t1]`.
    fn scan(&mut self, n: NeuronId, t0: f64, t1: f64) -> Option<f64> {
        let tol = self.sim.crossing_tol;
        let neuron = &mut self.neurons[n];
        let theta = neuron.params.threshold;
        let earliest = neuron
            .last_spike
            .map_or(f64::NEG_INFINITY, |s| s + neuron.params.refractory);
        if t1 < earliest {
            neuron.below_at = None;
            return None;
        }
        if neuron.quiet {
            neuron.below_at = Some(t1);
            return None;
        }
        let (p1, bound) = neuron.potential_and_bound(t1);
        let mut crossing = None;
        if p1 >= theta {
            let lower = t0.max(earliest);
            let lower_below = match neuron.below_at {
                Some(t) if t == lower => true,
                _ => neuron.potential(lower) < theta,
            };
            if lower_below {
                crossing = Some(bisect_crossing(neuron, lower, t1, tol));
            }
        }
        neuron.below_at = (p1 < theta).then_some(t1);
        neuron.quiet = bound < theta;
        crossing
    }

    fn emit(&mut self, n: NeuronId, t: f64) -> SpikeId {
        let id = SpikeId(self.next_spike);
        self.next_spike += 1;
        let tape = self
            .tape_mode
            .map(|mode| record_tape(&self.neurons[n], n, id, t, mode));
        let neuron = &mut self.neurons[n];
        neuron.efferent.push_back(Efferent { id, time: t, tape });
        neuron.last_spike = Some(t);
        neuron.below_at = None;
        for i in 0..self.neuron_fanout[n].len() {
            let (m, s) = self.neuron_fanout[n][i];
            self.deliver(m, s, t, Some(id));
        }
        id
    }

    /// Drop every spike older than the window, and every tape entry that
    /// refers to a dropped afferent spike.
    pub fn prune_window(&mut self, now: f64) {
        let cutoff = now - self.sim.upsilon;
        for neuron in &mut self.neurons {
            let mut dropped = false;
            for syn in &mut neuron.synapses {
                while syn.ledger.front().is_some_and(|e| e.arrival < cutoff) {
                    syn.ledger.pop_front();
                    dropped = true;
                }
            }
            while neuron.efferent.front().is_some_and(|k| k.time < cutoff) {
                neuron.efferent.pop_front();
            }
            if dropped {
                for k in &mut neuron.efferent {
                    if let Some(tape) = &mut k.tape {
                        tape.entries.retain(|e| e.arrival >= cutoff);
                    }
                }
            }
        }
    }

    /// Efferent spike times of neuron `n` currently in the window.
    pub fn spike_times(&self, n: NeuronId) -> Vec<f64> {
        self.neurons[n].efferent.iter().map(|k| k.time).collect()
    }

    pub fn find_spike(&self, n: NeuronId, id: SpikeId) -> Option<&Efferent> {
        let eff = &self.neurons[n].efferent;
        eff.binary_search_by_key(&id, |k| k.id)
            .ok()
            .map(|i| &eff[i])
    }

    /// Locate a ledger entry by id: (neuron, synapse, position).
    pub fn find_entry(&self, id: EntryId) -> Option<(NeuronId, usize, usize)> {
        for (n, neuron) in self.neurons.iter().enumerate() {
            for (s, syn) in neuron.synapses.iter().enumerate() {
                if let Some(pos) = syn.ledger.iter().position(|e| e.id == id) {
                    return Some((n, s, pos));
                }
            }
        }
        None
    }

    /// Shift the frozen weight of one afferent spike. Used by the
    /// re-simulation oracles.
    pub fn perturb_entry_weight(&mut self, id: EntryId, delta: f64) -> bool {
        match self.find_entry(id) {
            Some((n, s, pos)) => {
                self.neurons[n].synapses[s].ledger[pos].weight += delta;
                self.neurons[n].quiet = false;
                true
            }
            None => false,
        }
    }

    /// Shift the arrival time of one afferent spike.
    pub fn perturb_entry_arrival(&mut self, id: EntryId, delta: f64) -> bool {
        match self.find_entry(id) {
            Some((n, s, pos)) => {
                self.neurons[n].synapses[s].ledger[pos].arrival += delta;
                self.neurons[n].quiet = false;
                true
            }
            None => false,
        }
    }

    /// Number of ledger entries created so far; entry ids below this exist
    /// or have been pruned.
    pub fn entries_created(&self) -> u64 {
        self.next_entry
    }

    /// Largest number of ledger entries held by any synapse.
    pub fn max_ledger_len(&self) -> usize {
        self.neurons
            .iter()
            .flat_map(|n| n.synapses.iter().map(|s| s.ledger.len()))
            .max()
            .unwrap_or(0)
    }
}

/// Bisection on `[lo, hi]` with `P(lo) < theta <= P(hi)`; returns the upper
/// end of the final bracket.
fn bisect_crossing(neuron: &Neuron, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let theta = neuron.params.threshold;
    while hi - lo > tol {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        if neuron.potential(mid) >= theta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Spike raster as CSV: `neuron_id,time_ms`.
pub fn raster_csv(spikes: &[EmittedSpike]) -> String {
    let mut s = String::from("neuron_id,time_ms\n");
    for sp in spikes {
        s.push_str(&format!("{},{:.6}\n", sp.neuron, sp.time));
    }
    s
}
