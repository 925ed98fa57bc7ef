//! Perturbation analysis of spike times and the delayed, capped weight update.
//!
//! Tapes are kept in emission-time coordinates: `dw` is the derivative of a
//! spike's absolute emission time with respect to the frozen weight of one
//! afferent spike, `dt` its derivative with respect to that spike's arrival
//! time. The error functional is written in spike ages, so its gradient is
//! negated exactly once, in [`output_time_grads`], before it meets a tape.

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::disparity::{error_grad_all, error_value, SpikeAgeVector};
use crate::error::{Error, Result};
use crate::kernels::{ahp_deriv_unchecked, psp_value_deriv, ImpactParams};
use crate::network::{EntryId, Network, Neuron, NeuronId, SpikeId, W_MIN};

/// Rates of rise below this (potential/ms) mark a tape as near-singular.
pub const DENOM_FLOOR: f64 = 1e-6;

/// Whether a tape carries the after-hyperpolarization terms of the
/// recursion or drops them (the moderate-rate approximation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapeMode {
    Full,
    NoAhp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapeEntry {
    pub entry: EntryId,
    pub synapse: usize,
    pub arrival: f64,
    pub origin: Option<SpikeId>,
    /// d(emission time) / d(frozen weight), ms per weight unit.
    pub dw: f64,
    /// d(emission time) / d(arrival time).
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTape {
    pub neuron: NeuronId,
    pub spike: SpikeId,
    pub time: f64,
    /// Rate of rise of the potential at the crossing.
    pub denom: f64,
    pub near_singular: bool,
    /// Sorted by entry id.
    pub entries: Vec<TapeEntry>,
}

impl SpikeTape {
    pub fn get(&self, id: EntryId) -> Option<&TapeEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.entry)
            .ok()
            .map(|i| &self.entries[i])
    }
}

/// Partial derivatives of a spike emitted by `neuron` at `time` with respect
/// to every afferent spike that had arrived by then.
///
/// Must be called before the new spike is appended to the neuron's efferent
/// list (later efferent spikes are ignored either way). In [`TapeMode::Full`]
/// the recursion reads the tapes of the neuron's earlier in-window spikes.
pub fn record_tape(
    neuron: &Neuron,
    id: NeuronId,
    spike: SpikeId,
    time: f64,
    mode: TapeMode,
) -> SpikeTape {
    let mut entries = Vec::new();
    let mut denom = 0.0;
    for (si, syn) in neuron.synapses.iter().enumerate() {
        for e in &syn.ledger {
            if e.arrival > time {
                continue;
            }
            let (v, d) = psp_value_deriv(&syn.psp, time - e.arrival);
            denom += e.weight * d;
            entries.push(TapeEntry {
                entry: e.id,
                synapse: si,
                arrival: e.arrival,
                origin: e.origin,
                dw: -v,
                dt: e.weight * d,
            });
        }
    }
    entries.sort_unstable_by_key(|e| e.entry);

    if mode == TapeMode::Full {
        for k in &neuron.efferent {
            if k.time >= time {
                break;
            }
            let g = ahp_deriv_unchecked(&neuron.params.ahp, time - k.time);
            if g == 0.0 {
                continue;
            }
            denom += g;
            let Some(earlier) = &k.tape else { continue };
            // both lists are sorted by entry id
            let mut j = 0;
            for pe in &earlier.entries {
                while j < entries.len() && entries[j].entry < pe.entry {
                    j += 1;
                }
                if j < entries.len() && entries[j].entry == pe.entry {
                    entries[j].dw += g * pe.dw;
                    entries[j].dt += g * pe.dt;
                }
            }
        }
    }

    let near_singular = denom.abs() < DENOM_FLOOR;
    let limit = 1.0 / DENOM_FLOOR;
    let divide = |num: f64| -> f64 {
        let q = if denom != 0.0 {
            num / denom
        } else if num == 0.0 {
            0.0
        } else {
            num.signum() * f64::INFINITY
        };
        if near_singular {
            q.clamp(-limit, limit)
        } else {
            q
        }
    };
    for e in &mut entries {
        e.dw = divide(e.dw);
        e.dt = divide(e.dt);
    }
    SpikeTape {
        neuron: id,
        spike,
        time,
        denom,
        near_singular,
        entries,
    }
}

/// Recompute the partials of an in-window spike from the current ledgers,
/// with or without the after-hyperpolarization terms.
pub fn recompute_tape(
    net: &Network,
    n: NeuronId,
    spike: SpikeId,
    mode: TapeMode,
) -> Option<SpikeTape> {
    let k = net.find_spike(n, spike)?;
    Some(record_tape(net.neuron(n), n, spike, k.time, mode))
}

/// Moderate-rate approximation: the recursion through earlier efferent
/// spikes is dropped from numerator and denominator alike.
pub fn approx_partials(net: &Network, n: NeuronId, spike: SpikeId) -> Option<SpikeTape> {
    recompute_tape(net, n, spike, TapeMode::NoAhp)
}

/// How the age gradient of the error is converted to emission-time
/// coordinates. `Flipped` is a deliberately wrong conversion kept for
/// mutation testing of the gradient checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySign {
    #[default]
    Standard,
    Flipped,
}

/// Error and its gradient with respect to each in-window output spike.
#[derive(Clone, Debug, Default)]
pub struct TimeGrads {
    pub error: f64,
    /// `dE/d(emission time)` per output spike.
    pub per_spike: Vec<(SpikeId, f64)>,
}

/// Evaluate the error functional at `now` and convert its age gradient into
/// emission-time gradients for the output neuron's spikes.
pub fn output_time_grads(
    net: &Network,
    desired: &[f64],
    now: f64,
    impact: ImpactParams,
    boundary: BoundarySign,
) -> TimeGrads {
    let upsilon = net.sim_config().upsilon;
    let out = net.neuron(net.output());
    let spikes: Vec<_> = out
        .efferent
        .iter()
        .filter(|k| k.time <= now && now - k.time <= upsilon)
        .collect();
    let out_ages = SpikeAgeVector::from_times(spikes.iter().map(|k| k.time), now, upsilon);
    let des_ages = SpikeAgeVector::from_times(desired.iter().copied(), now, upsilon);
    let error = error_value(&des_ages, &out_ages, impact);
    let dage = error_grad_all(&des_ages, &out_ages, impact);
    let factor = match boundary {
        BoundarySign::Standard => -1.0,
        BoundarySign::Flipped => 1.0,
    };
    let per_spike = spikes
        .iter()
        .zip(dage)
        .map(|(k, g)| (k.id, factor * g))
        .collect();
    TimeGrads { error, per_spike }
}

/// Accumulated error gradients for one neuron's afferent spikes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeuronGrads {
    pub neuron: NeuronId,
    /// `dE/dw` per in-window ledger entry: (entry, synapse, value).
    pub weights: Vec<(EntryId, usize, f64)>,
    /// `dE/d(arrival)` for entries fed by upstream neurons, keyed by the
    /// upstream spike.
    pub upstream: Vec<(SpikeId, f64)>,
    /// Sum of `weights` per synapse.
    pub per_synapse: Vec<f64>,
}

fn neuron_grads(net: &Network, n: NeuronId, spike_grads: &HashMap<SpikeId, f64>) -> NeuronGrads {
    let neuron = net.neuron(n);
    let mut by_entry: HashMap<EntryId, (usize, Option<SpikeId>, f64, f64)> = HashMap::new();
    for k in &neuron.efferent {
        let Some(&g) = spike_grads.get(&k.id) else {
            continue;
        };
        if g == 0.0 {
            continue;
        }
        let Some(tape) = &k.tape else { continue };
        for e in &tape.entries {
            let slot = by_entry
                .entry(e.entry)
                .or_insert((e.synapse, e.origin, 0.0, 0.0));
            slot.2 += g * e.dw;
            slot.3 += g * e.dt;
        }
    }
    let mut sorted: Vec<_> = by_entry.into_iter().collect();
    sorted.sort_unstable_by_key(|(id, _)| *id);
    let weights: Vec<_> = sorted
        .iter()
        .map(|&(id, (s, _, w, _))| (id, s, w))
        .collect();
    let upstream: Vec<_> = sorted
        .iter()
        .filter_map(|&(_, (_, origin, _, a))| origin.map(|o| (o, a)))
        .collect();
    let mut per_synapse = vec![0.0; neuron.synapses.len()];
    for &(_, s, w) in &weights {
        per_synapse[s] += w;
    }
    NeuronGrads {
        neuron: n,
        weights,
        upstream,
        per_synapse,
    }
}

/// `dE/dw` for every afferent spike of the output neuron, summed over its
/// in-window output spikes.
pub fn output_weight_grads(net: &Network, time_grads: &TimeGrads) -> NeuronGrads {
    let grads: HashMap<_, _> = time_grads.per_spike.iter().copied().collect();
    neuron_grads(net, net.output(), &grads)
}

/// `dE/dw` for the afferent spikes of an upstream neuron, given `dE/ds` for
/// each of its own spikes (obtained from the downstream neurons' arrival
/// gradients).
pub fn intermediate_weight_grads(
    net: &Network,
    n: NeuronId,
    spike_grads: &HashMap<SpikeId, f64>,
) -> NeuronGrads {
    neuron_grads(net, n, spike_grads)
}

/// Network-wide weight gradients, one vector per neuron.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightGrads {
    pub per_neuron: Vec<NeuronGrads>,
}

impl WeightGrads {
    pub fn per_synapse(&self) -> Vec<Vec<f64>> {
        self.per_neuron
            .iter()
            .map(|g| g.per_synapse.clone())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.per_neuron
            .iter()
            .flat_map(|g| g.per_synapse.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Propagate output-spike gradients back through every layer.
pub fn backpropagate(net: &Network, time_grads: &TimeGrads) -> WeightGrads {
    let count = net.neurons.len();
    let mut per_neuron = vec![NeuronGrads::default(); count];
    let mut spike_grads: HashMap<SpikeId, f64> = time_grads.per_spike.iter().copied().collect();
    for n in (0..count).rev() {
        let g = if n == net.output() {
            output_weight_grads(net, time_grads)
        } else {
            intermediate_weight_grads(net, n, &spike_grads)
        };
        for &(origin, a) in &g.upstream {
            *spike_grads.entry(origin).or_insert(0.0) += a;
        }
        per_neuron[n] = g;
    }
    WeightGrads { per_neuron }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnConfig {
    /// Learning rate.
    pub mu: f64,
    /// Largest Euclidean length of one network-wide weight change.
    pub cap: f64,
    /// Delay between a triggering spike and the update, ms.
    pub update_trigger_delay: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            mu: 0.01,
            cap: 0.01,
            update_trigger_delay: 0.1,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu > 0.0 && self.cap > 0.0 && self.update_trigger_delay >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "learning config out of range: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// Applied change per neuron and synapse (before the weight floor).
    pub deltas: Vec<Vec<f64>>,
    pub raw_grad_norm: f64,
    pub applied_norm: f64,
    pub capped: bool,
    pub aborted: bool,
}

/// Compute the capped gradient step without touching the network.
pub fn plan_update(grads: &[Vec<f64>], cfg: &LearnConfig) -> UpdateReport {
    let raw_grad_norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if !raw_grad_norm.is_finite() {
        return UpdateReport {
            deltas: grads.iter().map(|g| vec![0.0; g.len()]).collect(),
            raw_grad_norm,
            applied_norm: 0.0,
            capped: false,
            aborted: true,
        };
    }
    let step = cfg.mu * raw_grad_norm;
    let (scale, capped) = if step > cfg.cap {
        (cfg.cap / step, true)
    } else {
        (1.0, false)
    };
    let deltas: Vec<Vec<f64>> = grads
        .iter()
        .map(|g| g.iter().map(|x| -cfg.mu * x * scale).collect())
        .collect();
    let applied_norm = deltas.iter().flatten().map(|d| d * d).sum::<f64>().sqrt();
    UpdateReport {
        deltas,
        raw_grad_norm,
        applied_norm,
        capped,
        aborted: false,
    }
}

/// Delayed update: every synapse moves by minus the learning rate times the
/// summed gradient of its in-window afferent spikes; the whole network-wide
/// step is capped in length and weights are floored at [`W_MIN`]. Later
/// arrivals pick up the new weights.
pub fn apply_update(net: &mut Network, grads: &WeightGrads, cfg: &LearnConfig) -> UpdateReport {
    let report = plan_update(&grads.per_synapse(), cfg);
    if report.aborted {
        warn!(
            "non-finite weight gradient at t = {:.3} ms; update skipped",
            net.now()
        );
        return report;
    }
    for (neuron, deltas) in net.neurons.iter_mut().zip(&report.deltas) {
        for (syn, d) in neuron.synapses.iter_mut().zip(deltas) {
            syn.weight = (syn.weight + d).max(W_MIN);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{psp_value, PspParams};
    use crate::network::{
        InputEvent, NeuronParams, NeuronSpec, SimConfig, Source, SynapseSpec, Topology,
    };

    fn one_input(weight: f64) -> Network {
        let topo = Topology {
            input_channels: 1,
            layers: vec![vec![NeuronSpec {
                synapses: vec![SynapseSpec {
                    source: Source::Input(0),
                    psp: PspParams::excitatory(0.5),
                    weight,
                }],
            }]],
            neuron: NeuronParams::default(),
        };
        Network::new(&topo, SimConfig::default())
            .unwrap()
            .with_tapes(TapeMode::Full)
    }

    #[test]
    fn first_spike_single_entry_tape() {
        let mut net = one_input(7.0);
        let spikes = net.advance(
            &[InputEvent {
                channel: 0,
                time: 1.0,
            }],
            10.0,
        );
        assert_eq!(spikes.len(), 1);
        let s = spikes[0].time;
        let tape = net
            .find_spike(0, spikes[0].id)
            .unwrap()
            .tape
            .clone()
            .unwrap();
        let psp = PspParams::excitatory(0.5);
        let (v, d) = psp_value_deriv(&psp, s - 1.0);
        assert_eq!(v, psp_value(&psp, s - 1.0));
        assert_eq!(tape.entries.len(), 1);
        assert!((tape.entries[0].dw - (-v / (7.0 * d))).abs() < 1e-12);
        assert!((tape.entries[0].dt - 1.0).abs() < 1e-12);
        let approx = approx_partials(&net, 0, spikes[0].id).unwrap();
        assert_eq!(approx.entries, tape.entries);
    }

    #[test]
    fn no_output_spikes_gives_zero_grads() {
        let mut net = one_input(0.5);
        net.advance(
            &[InputEvent {
                channel: 0,
                time: 1.0,
            }],
            10.0,
        );
        let tg = output_time_grads(
            &net,
            &[5.0],
            10.0,
            ImpactParams::default(),
            BoundarySign::Standard,
        );
        assert!(tg.per_spike.is_empty());
        let g = backpropagate(&net, &tg);
        assert!(g.per_synapse().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_output_spike_chain() {
        let mut net = one_input(7.0);
        let spikes = net.advance(
            &[InputEvent {
                channel: 0,
                time: 1.0,
            }],
            10.0,
        );
        let tg = output_time_grads(
            &net,
            &[4.0],
            10.0,
            ImpactParams::default(),
            BoundarySign::Standard,
        );
        let tape = net
            .find_spike(0, spikes[0].id)
            .unwrap()
            .tape
            .clone()
            .unwrap();
        let g = output_weight_grads(&net, &tg);
        assert_eq!(g.weights.len(), 1);
        assert!((g.weights[0].2 - tg.per_spike[0].1 * tape.entries[0].dw).abs() < 1e-15);
    }

    #[test]
    fn zero_grads_leave_weights() {
        let mut net = one_input(2.0);
        let grads = WeightGrads {
            per_neuron: vec![NeuronGrads {
                neuron: 0,
                per_synapse: vec![0.0],
                ..Default::default()
            }],
        };
        let r = apply_update(&mut net, &grads, &LearnConfig::default());
        assert_eq!(net.weights(), vec![vec![2.0]]);
        assert_eq!(r.applied_norm, 0.0);
    }

    #[test]
    fn small_step_is_exact() {
        let cfg = LearnConfig::default();
        let r = plan_update(&[vec![0.5]], &cfg);
        assert!(!r.capped);
        assert_eq!(r.deltas[0][0], -cfg.mu * 0.5);
    }

    #[test]
    fn cap_rescales_length_and_keeps_direction() {
        let cfg = LearnConfig::default();
        let g = vec![vec![6.0, 0.0], vec![8.0]];
        let scale = 10.0 * cfg.cap / cfg.mu / 10.0;
        let g: Vec<Vec<f64>> = g
            .iter()
            .map(|v| v.iter().map(|x| x * scale).collect())
            .collect();
        let r = plan_update(&g, &cfg);
        assert!(r.capped);
        assert!((r.applied_norm - cfg.cap).abs() < 1e-15);
        assert!((r.deltas[0][0] / r.deltas[1][0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn non_finite_aborts() {
        let mut net = one_input(2.0);
        let grads = WeightGrads {
            per_neuron: vec![NeuronGrads {
                neuron: 0,
                per_synapse: vec![f64::NAN],
                ..Default::default()
            }],
        };
        let r = apply_update(&mut net, &grads, &LearnConfig::default());
        assert!(r.aborted);
        assert_eq!(net.weights(), vec![vec![2.0]]);
    }

    #[test]
    fn floor_clamps_weights() {
        let mut net = one_input(1e-3);
        let grads = WeightGrads {
            per_neuron: vec![NeuronGrads {
                neuron: 0,
                per_synapse: vec![1.0],
                ..Default::default()
            }],
        };
        apply_update(&mut net, &grads, &LearnConfig::default());
        assert_eq!(net.weights(), vec![vec![W_MIN]]);
    }
}
