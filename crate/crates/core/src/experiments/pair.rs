//! Architectures, weight-range calibration and witness/learner pairs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::poisson::{PoissonStream, RateProfile};
use super::seeds::{mix, stream_rng, Stream};
use crate::error::{Error, Result};
use crate::kernels::{PspParams, Sign};
use crate::network::{Network, NeuronParams, NeuronSpec, SimConfig, Source, SynapseSpec, Topology};

/// Synapse classes. A presynaptic neuron or input channel has one class,
/// which fixes the PSP shape of every synapse it feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelClass {
    Excitatory,
    Inhibitory,
    /// Slow excitatory.
    Nmda,
    /// Slow inhibitory.
    GabaB,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PspShape {
    pub alpha: f64,
    pub beta: f64,
    pub tau1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelTable {
    pub excitatory: PspShape,
    pub inhibitory: PspShape,
    pub nmda: PspShape,
    pub gaba_b: PspShape,
}

impl Default for KernelTable {
    fn default() -> Self {
        Self {
            excitatory: PspShape {
                alpha: 1.5,
                beta: 1.0,
                tau1: 20.0,
            },
            inhibitory: PspShape {
                alpha: 1.2,
                beta: 1.0,
                tau1: 10.0,
            },
            nmda: PspShape {
                alpha: 1.5,
                beta: 5.0,
                tau1: 80.0,
            },
            gaba_b: PspShape {
                alpha: 1.2,
                beta: 50.0,
                tau1: 100.0,
            },
        }
    }
}

impl KernelTable {
    pub fn psp(&self, class: KernelClass, delay: f64) -> PspParams {
        let (shape, sign) = match class {
            KernelClass::Excitatory => (self.excitatory, Sign::Excitatory),
            KernelClass::Inhibitory => (self.inhibitory, Sign::Inhibitory),
            KernelClass::Nmda => (self.nmda, Sign::Excitatory),
            KernelClass::GabaB => (self.gaba_b, Sign::Inhibitory),
        };
        PspParams {
            alpha: shape.alpha,
            beta: shape.beta,
            tau1: shape.tau1,
            delay,
            sign,
        }
    }
}

/// Fully connected feedforward layout ending in a single output neuron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Class of each input channel.
    pub inputs: Vec<KernelClass>,
    /// Classes of the neurons in each hidden layer.
    #[serde(default)]
    pub hidden: Vec<Vec<KernelClass>>,
}

impl Architecture {
    pub fn single_neuron(inputs: Vec<KernelClass>) -> Self {
        Self {
            inputs,
            hidden: Vec::new(),
        }
    }

    pub fn excitatory_neuron(synapses: usize) -> Self {
        Self::single_neuron(vec![KernelClass::Excitatory; synapses])
    }

    /// 8 excitatory and 2 inhibitory synapses; half of each kind slow.
    pub fn mixed_neuron() -> Self {
        use KernelClass::*;
        Self::single_neuron(vec![
            Excitatory, Excitatory, Excitatory, Excitatory, Nmda, Nmda, Nmda, Nmda, Inhibitory,
            GabaB,
        ])
    }

    /// `inputs` channels into `hidden` neurons into one output, all excitatory.
    pub fn two_layer(inputs: usize, hidden: usize) -> Self {
        Self {
            inputs: vec![KernelClass::Excitatory; inputs],
            hidden: vec![vec![KernelClass::Excitatory; hidden]],
        }
    }

    /// Five inputs and five hidden neurons with the last two of each inhibitory.
    pub fn two_layer_mixed() -> Self {
        use KernelClass::*;
        let layer = vec![Excitatory, Excitatory, Excitatory, Inhibitory, Inhibitory];
        Self {
            inputs: layer.clone(),
            hidden: vec![layer],
        }
    }

    /// Neuron count per layer, output layer included.
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.hidden
            .iter()
            .map(Vec::len)
            .chain(std::iter::once(1))
            .collect()
    }

    pub fn synapse_count(&self) -> usize {
        let mut prev = self.inputs.len();
        let mut total = 0;
        for size in self.layer_sizes() {
            total += prev * size;
            prev = size;
        }
        total
    }

    /// Layer index of every neuron, in neuron id order.
    pub fn neuron_layers(&self) -> Vec<usize> {
        self.layer_sizes()
            .iter()
            .enumerate()
            .flat_map(|(l, &n)| std::iter::repeat(l).take(n))
            .collect()
    }

    /// Class of every hidden neuron in id order (the output has none).
    pub fn neuron_classes(&self) -> Vec<Option<KernelClass>> {
        self.hidden
            .iter()
            .flatten()
            .map(|&c| Some(c))
            .chain(std::iter::once(None))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::config(
                "architecture.inputs",
                "at least one input channel is required",
            ));
        }
        if self.hidden.iter().any(Vec::is_empty) {
            return Err(Error::config(
                "architecture.hidden",
                "hidden layers cannot be empty",
            ));
        }
        Ok(())
    }
}

/// Everything about a network except its weights and delays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub architecture: Architecture,
    #[serde(default)]
    pub kernels: KernelTable,
    #[serde(default)]
    pub neuron: NeuronParams,
    /// Synaptic delays are drawn uniformly from this range, ms.
    #[serde(default = "default_delay_range")]
    pub delay_range: [f64; 2],
}

fn default_delay_range() -> [f64; 2] {
    [0.4, 0.9]
}

impl Template {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            kernels: KernelTable::default(),
            neuron: NeuronParams::default(),
            delay_range: default_delay_range(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let [lo, hi] = self.delay_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::config(
                "template.delay_range",
                format!("invalid range [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    /// Delays for every synapse, grouped per neuron.
    pub fn sample_delays(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let [lo, hi] = self.delay_range;
        self.fan_in()
            .iter()
            .map(|&k| {
                (0..k)
                    .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                    .collect()
            })
            .collect()
    }

    /// Number of synapses on each neuron.
    pub fn fan_in(&self) -> Vec<usize> {
        let mut prev = self.architecture.inputs.len();
        let mut out = Vec::new();
        for size in self.architecture.layer_sizes() {
            out.extend(std::iter::repeat(prev).take(size));
            prev = size;
        }
        out
    }

    pub fn topology(&self, delays: &[Vec<f64>], weights: &[Vec<f64>]) -> Topology {
        let arch = &self.architecture;
        let mut layers = Vec::new();
        let mut id = 0;
        let mut prev: Vec<(Source, KernelClass)> = arch
            .inputs
            .iter()
            .enumerate()
            .map(|(c, &k)| (Source::Input(c), k))
            .collect();
        let classes: Vec<Vec<Option<KernelClass>>> = arch
            .hidden
            .iter()
            .map(|l| l.iter().map(|&c| Some(c)).collect())
            .chain(std::iter::once(vec![None]))
            .collect();
        for layer_classes in classes {
            let mut layer = Vec::new();
            for _ in &layer_classes {
                let synapses = prev
                    .iter()
                    .enumerate()
                    .map(|(si, &(source, class))| SynapseSpec {
                        source,
                        psp: self.kernels.psp(class, delays[id][si]),
                        weight: weights[id][si],
                    })
                    .collect();
                layer.push(NeuronSpec { synapses });
                id += 1;
            }
            let first = id - layer_classes.len();
            prev = layer_classes
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.map(|c| (Source::Neuron(first + i), c)))
                .collect();
            layers.push(layer);
        }
        Topology {
            input_channels: arch.inputs.len(),
            layers,
            neuron: self.neuron,
        }
    }
}

/// Uniform weight range for each layer, output layer last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRanges {
    pub layers: Vec<[f64; 2]>,
}

impl WeightRanges {
    pub fn sample(&self, template: &Template, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let layers = template.architecture.neuron_layers();
        template
            .fan_in()
            .iter()
            .zip(&layers)
            .map(|(&k, &l)| {
                let [lo, hi] = self.layers[l];
                (0..k)
                    .map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self, template: &Template) -> Result<()> {
        if self.layers.len() != template.architecture.layer_sizes().len() {
            return Err(Error::config(
                "weight_ranges",
                format!(
                    "expected {} layer ranges, found {}",
                    template.architecture.layer_sizes().len(),
                    self.layers.len()
                ),
            ));
        }
        for [lo, hi] in &self.layers {
            if !(*lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config(
                    "weight_ranges",
                    format!("invalid range [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Homogeneous drive rate, Hz.
    pub drive_hz: f64,
    /// Acceptable output rates, Hz.
    pub target_hz: [f64; 2],
    /// Each range is `[ratio * s, s]`; the scale `s` is searched.
    pub lo_ratio: f64,
    pub samples: usize,
    /// Simulated time per sample, s.
    pub sample_duration_s: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            drive_hz: 10.0,
            target_hz: [5.0, 50.0],
            lo_ratio: 0.25,
            samples: 50,
            sample_duration_s: 4.0,
            max_iterations: 40,
        }
    }
}

impl CalibrationConfig {
    fn centre(&self) -> f64 {
        (self.target_hz[0] * self.target_hz[1]).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub ranges: WeightRanges,
    /// Median rate of each layer at the returned range, Hz.
    pub median_rate_hz: Vec<f64>,
    /// Fraction of sampled networks whose output rate fell in the target band.
    pub in_band_fraction: f64,
}

struct Sample {
    delays: Vec<Vec<f64>>,
    /// Weights with each layer's scale factored out.
    units: Vec<Vec<f64>>,
    seed: u64,
}

/// Mean rate (Hz) of each neuron under homogeneous drive.
fn neuron_rates(
    template: &Template,
    sample: &Sample,
    scales: &[f64],
    cfg: &CalibrationConfig,
) -> Result<Vec<f64>> {
    let layers = template.architecture.neuron_layers();
    let weights: Vec<Vec<f64>> = sample
        .units
        .iter()
        .zip(&layers)
        .map(|(u, &l)| u.iter().map(|x| x * scales[l]).collect())
        .collect();
    let topo = template.topology(&sample.delays, &weights);
    let mut net = Network::new(&topo, SimConfig::default())?;
    let duration = cfg.sample_duration_s * 1e3;
    let mut stream = PoissonStream::new(
        RateProfile::Homogeneous {
            rate_hz: cfg.drive_hz,
        },
        template.architecture.inputs.len(),
        sample.seed,
    );
    let mut counts = vec![0usize; layers.len()];
    let chunk = 100.0;
    let mut t = 0.0;
    while t < duration {
        t = (t + chunk).min(duration);
        for s in net.advance(&stream.take_until(t), t) {
            counts[s.neuron] += 1;
        }
    }
    Ok(counts
        .iter()
        .map(|&c| c as f64 / cfg.sample_duration_s)
        .collect())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Find per-layer weight ranges under which random networks fire within
/// the target band when every input is driven at `drive_hz`.
///
/// Layers are calibrated in order. For each, the scale of `[lo_ratio * s, s]`
/// is bisected on a log scale, with a fixed set of sampled networks and
/// input trains, until the median mean rate of the layer's neurons is
/// within 10% of the geometric centre of the band.
pub fn calibrate(template: &Template, cfg: &CalibrationConfig, seed: u64) -> Result<Calibration> {
    template.validate()?;
    if !(cfg.lo_ratio > 0.0
        && cfg.lo_ratio <= 1.0
        && cfg.samples > 0
        && cfg.sample_duration_s > 0.0)
    {
        return Err(Error::config(
            "calibration",
            format!("invalid calibration settings {cfg:?}"),
        ));
    }
    let mut rng = stream_rng(seed, Stream::Calibration);
    let samples: Vec<Sample> = (0..cfg.samples)
        .map(|i| Sample {
            delays: template.sample_delays(&mut rng),
            units: template
                .fan_in()
                .iter()
                .map(|&k| (0..k).map(|_| rng.gen_range(cfg.lo_ratio..=1.0)).collect())
                .collect(),
            seed: mix(seed, Stream::Input, i as u64),
        })
        .collect();
    let layer_of = template.architecture.neuron_layers();
    let n_layers = template.architecture.layer_sizes().len();
    let mut scales = vec![1.0; n_layers];
    let mut medians = vec![0.0; n_layers];
    let centre = cfg.centre();

    let layer_median = |scales: &[f64], layer: usize| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut per_sample = Vec::with_capacity(samples.len());
        let mut all = Vec::with_capacity(samples.len());
        for s in &samples {
            let rates = neuron_rates(template, s, scales, cfg)?;
            let (sum, n) = rates
                .iter()
                .zip(&layer_of)
                .filter(|(_, &l)| l == layer)
                .fold((0.0, 0usize), |(a, n), (r, _)| (a + r, n + 1));
            per_sample.push(sum / n as f64);
            all.push(rates);
        }
        Ok((median(per_sample), all))
    };

    let mut last_rates = Vec::new();
    for layer in 0..n_layers {
        let (mut lo, mut hi) = (1e-3_f64, 1e3_f64);
        let mut found = None;
        for _ in 0..cfg.max_iterations {
            let mid = (lo * hi).sqrt();
            scales[layer] = mid;
            let (m, rates) = layer_median(&scales, layer)?;
            last_rates = rates;
            if (m - centre).abs() <= 0.1 * centre {
                found = Some(m);
                break;
            }
            if m < centre {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        match found {
            Some(m) => medians[layer] = m,
            None => {
                return Err(Error::Calibration(format!(
                    "layer {layer}: no weight scale reached {centre:.1} Hz within {} iterations",
                    cfg.max_iterations
                )))
            }
        }
    }
    let out = layer_of.len() - 1;
    let [blo, bhi] = cfg.target_hz;
    let in_band = last_rates
        .iter()
        .filter(|r| r[out] >= blo && r[out] <= bhi)
        .count();
    Ok(Calibration {
        ranges: WeightRanges {
            layers: scales.iter().map(|&s| [cfg.lo_ratio * s, s]).collect(),
        },
        median_rate_hz: medians,
        in_band_fraction: in_band as f64 / samples.len() as f64,
    })
}

/// A fixed witness network and a learner of identical structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub seed: u64,
    pub template: Template,
    pub delays: Vec<Vec<f64>>,
    pub witness_weights: Vec<Vec<f64>>,
    pub learner_weights: Vec<Vec<f64>>,
}

impl WitnessPair {
    pub fn witness_topology(&self) -> Topology {
        self.template.topology(&self.delays, &self.witness_weights)
    }

    pub fn learner_topology(&self) -> Topology {
        self.template.topology(&self.delays, &self.learner_weights)
    }

    pub fn initial_mape(&self) -> Result<Vec<f64>> {
        mape(&self.learner_weights, &self.witness_weights)
    }
}

/// Witness and learner weights drawn independently from `ranges`; delays
/// and kernel classes are shared.
pub fn make_pair(template: &Template, ranges: &WeightRanges, seed: u64) -> Result<WitnessPair> {
    template.validate()?;
    ranges.validate(template)?;
    let delays = template.sample_delays(&mut stream_rng(seed, Stream::Delays));
    let witness_weights = ranges.sample(template, &mut stream_rng(seed, Stream::WitnessWeights));
    let learner_weights = ranges.sample(template, &mut stream_rng(seed, Stream::LearnerWeights));
    Ok(WitnessPair {
        seed,
        template: template.clone(),
        delays,
        witness_weights,
        learner_weights,
    })
}

/// Like [`make_pair`], but the learner is placed at a chosen disparity: each
/// learner weight is the witness weight scaled by `1 +/- d`, with random
/// signs and deviations `d` spread around `target` so that every neuron's
/// MAPE equals `target` (deviations below the witness are capped at 0.95).
pub fn make_pair_at_mape(
    template: &Template,
    ranges: &WeightRanges,
    seed: u64,
    target: f64,
) -> Result<WitnessPair> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter(format!("target MAPE {target}")));
    }
    let mut pair = make_pair(template, ranges, seed)?;
    let mut rng = stream_rng(seed, Stream::Stratify);
    pair.learner_weights = pair
        .witness_weights
        .iter()
        .map(|ws| {
            let spread: Vec<f64> = ws.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
            let mean = spread.iter().sum::<f64>() / spread.len() as f64;
            let mut devs: Vec<f64> = spread.iter().map(|s| target * s / mean).collect();
            let signs: Vec<bool> = ws.iter().map(|_| rng.gen::<bool>()).collect();
            // keep weights positive; shift the excess onto upward deviations
            let mut excess = 0.0;
            for (d, &up) in devs.iter_mut().zip(&signs) {
                if !up && *d > 0.95 {
                    excess += *d - 0.95;
                    *d = 0.95;
                }
            }
            let ups = signs.iter().filter(|&&u| u).count();
            if excess > 0.0 && ups > 0 {
                for (d, &up) in devs.iter_mut().zip(&signs) {
                    if up {
                        *d += excess / ups as f64;
                    }
                }
            }
            ws.iter()
                .zip(devs.iter().zip(&signs))
                .map(|(w, (d, &up))| if up { w * (1.0 + d) } else { w * (1.0 - d) })
                .collect()
        })
        .collect();
    Ok(pair)
}

/// Mean absolute percentage error of each neuron's weights against the
/// witness's.
pub fn mape(learner: &[Vec<f64>], witness: &[Vec<f64>]) -> Result<Vec<f64>> {
    if learner.len() != witness.len()
        || learner.iter().zip(witness).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::InvalidParameter("weight shapes differ".into()));
    }
    learner
        .iter()
        .zip(witness)
        .map(|(l, w)| {
            if let Some(bad) = w.iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::Domain(format!(
                    "witness weight {bad} is not positive"
                )));
            }
            if l.is_empty() {
                return Ok(0.0);
            }
            Ok(l.iter().zip(w).map(|(a, b)| (a - b).abs() / b).sum::<f64>() / l.len() as f64)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
