use std::f64::consts::TAU;

use spikegrad::experiments::poisson::channel_phase;
use spikegrad::experiments::{
    calibrate, gen_poisson, make_pair, plan_pairs, record_witness, run_pair, run_pair_with,
    run_pairs, Architecture, CalibrationConfig, KernelClass, Placement, PoissonSpec, PoissonStream,
    RateProfile, RunSettings, Teacher, Template, WeightRanges, WitnessPair,
};
use spikegrad::gradients::{approx_partials, recompute_tape, TapeMode};
use spikegrad::network::{EmittedSpike, Network, SimConfig, Topology};

const SINE: RateProfile = RateProfile::Sinusoidal {
    max_rate_hz: 10.0,
    mod_freq_hz: 2.0,
};

fn single_ranges() -> WeightRanges {
    WeightRanges {
        layers: vec![[0.82, 3.28]],
    }
}

fn single_pair(seed: u64) -> WitnessPair {
    let t = Template::new(Architecture::excitatory_neuron(10));
    make_pair(&t, &single_ranges(), seed).unwrap()
}

fn simulate(
    topo: &Topology,
    sim: SimConfig,
    drive: RateProfile,
    seed: u64,
    ms: f64,
) -> (Network, Vec<EmittedSpike>) {
    let mut net = Network::new(topo, sim).unwrap();
    let mut s = PoissonStream::new(drive, topo.input_channels, seed);
    let mut spikes = Vec::new();
    let mut t = 0.0;
    while t < ms {
        t = (t + 100.0f64).min(ms);
        spikes.extend(net.advance(&s.take_until(t), t));
    }
    (net, spikes)
}

#[test]
fn homogeneous_counts_match_poisson_statistics() {
    let total: usize = (0..200u64)
        .map(|seed| {
            gen_poisson(&PoissonSpec {
                profile: RateProfile::Homogeneous { rate_hz: 10.0 },
                channels: 1,
                duration_s: 100.0,
                seed,
            })[0]
                .len()
        })
        .sum();
    let mean = total as f64 / 200.0;
    assert!((900.0..=1100.0).contains(&mean), "{mean}");
}

#[test]
fn sinusoidal_rate_follows_phase() {
    // Pooled over many channels: a single 100 s train holds only about ten
    // spikes in the quietest octile.
    let channels = 200;
    let trains = gen_poisson(&PoissonSpec {
        profile: SINE,
        channels,
        duration_s: 100.0,
        seed: 9,
    });
    let mut bins = [0usize; 8];
    for (c, train) in trains.iter().enumerate() {
        let phi = channel_phase(c, channels);
        for &t in train {
            let phase = (TAU * 2.0 * t * 1e-3 + phi).rem_euclid(TAU);
            bins[((phase / TAU * 8.0) as usize).min(7)] += 1;
        }
    }
    for (b, &count) in bins.iter().enumerate() {
        let lo = TAU * b as f64 / 8.0;
        let hi = lo + TAU / 8.0;
        let mean_rate = 5.0 * (1.0 - (hi.sin() - lo.sin()) / (hi - lo));
        let expected = mean_rate * 100.0 / 8.0 * channels as f64;
        let observed = count as f64;
        assert!(
            (observed - expected).abs() <= 0.15 * expected,
            "octile {b}: {observed} vs {expected}"
        );
    }
}

#[test]
fn channel_phases_are_evenly_spaced() {
    assert_eq!(channel_phase(0, 5), 0.0);
    assert!((channel_phase(1, 4) - TAU / 4.0).abs() < 1e-15);
}

#[test]
fn same_inputs_give_identical_rasters() {
    let pair = single_pair(1);
    let (_, a) = simulate(
        &pair.witness_topology(),
        SimConfig::default(),
        SINE,
        4,
        20_000.0,
    );
    let (_, b) = simulate(
        &pair.witness_topology(),
        SimConfig::default(),
        SINE,
        4,
        20_000.0,
    );
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn refractory_gap_and_subthreshold_after_spike() {
    let pair = single_pair(2);
    let strong = RateProfile::Homogeneous { rate_hz: 80.0 };
    let (net, spikes) = simulate(
        &pair.witness_topology(),
        SimConfig::default(),
        strong,
        5,
        400.0,
    );
    let times: Vec<f64> = spikes.iter().map(|s| s.time).collect();
    assert!(times.len() > 5);
    assert!(times.windows(2).all(|w| w[1] - w[0] >= 1.0));
    let n = net.output();
    for &t in net.spike_times(n).iter() {
        assert!(net.membrane_potential(n, t + 1e-9) < 1.0);
    }
}

#[test]
fn halving_the_step_keeps_spike_times() {
    let pair = single_pair(3);
    let coarse = SimConfig {
        crossing_tol: 1e-9,
        ..SimConfig::default()
    };
    let fine = SimConfig {
        dt: coarse.dt / 2.0,
        crossing_tol: coarse.crossing_tol / 2.0,
        ..coarse
    };
    let (_, a) = simulate(&pair.witness_topology(), coarse, SINE, 6, 10_000.0);
    let (_, b) = simulate(&pair.witness_topology(), fine, SINE, 6, 10_000.0);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!(
            (x.time - y.time).abs() < 10.0 * coarse.crossing_tol,
            "{} vs {}",
            x.time,
            y.time
        );
    }
}

#[test]
fn scaling_threshold_and_weights_together_changes_nothing() {
    let pair = single_pair(4);
    let mut scaled = pair.witness_topology();
    for n in scaled.layers.iter_mut().flatten() {
        for s in &mut n.synapses {
            s.weight *= 2.0;
        }
    }
    scaled.neuron.threshold *= 2.0;
    scaled.neuron.ahp.amplitude *= 2.0;
    let (_, a) = simulate(
        &pair.witness_topology(),
        SimConfig::default(),
        SINE,
        7,
        10_000.0,
    );
    let (_, b) = simulate(&scaled, SimConfig::default(), SINE, 7, 10_000.0);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.time - y.time).abs() < 1e-9);
    }
}

#[test]
fn one_synapse_calibration_reaches_the_band() {
    let t = Template::new(Architecture::single_neuron(vec![KernelClass::Excitatory]));
    let cfg = CalibrationConfig {
        samples: 20,
        ..CalibrationConfig::default()
    };
    let cal = calibrate(&t, &cfg, 0).unwrap();
    assert!(cal.median_rate_hz[0] >= 5.0, "{cal:?}");
}

#[test]
fn calibration_is_stable_across_seeds() {
    let t = Template::new(Architecture::excitatory_neuron(10));
    let cfg = CalibrationConfig {
        samples: 30,
        ..CalibrationConfig::default()
    };
    let a = calibrate(&t, &cfg, 1).unwrap().ranges.layers[0];
    let b = calibrate(&t, &cfg, 2).unwrap().ranges.layers[0];
    for i in 0..2 {
        assert!((a[i] - b[i]).abs() / a[i] < 0.2, "{a:?} vs {b:?}");
    }
}

#[test]
fn witnesses_fire_within_the_target_band() {
    let t = Template::new(Architecture::excitatory_neuron(10));
    let drive = RateProfile::Homogeneous { rate_hz: 10.0 };
    let in_band = (0..100u64)
        .filter(|&seed| {
            let pair = make_pair(&t, &single_ranges(), seed).unwrap();
            let (_, spikes) = simulate(
                &pair.witness_topology(),
                SimConfig::default(),
                drive,
                seed,
                10_000.0,
            );
            let rate = spikes.len() as f64 / 10.0;
            (5.0..=50.0).contains(&rate)
        })
        .count();
    assert!(in_band >= 95, "{in_band} of 100");
}

#[test]
fn independent_pairs_have_the_uniform_draw_mape() {
    let [lo, hi] = single_ranges().layers[0];
    // E|U - V| / V for independent U, V uniform on [lo, hi].
    let n = 10_000;
    let h = (hi - lo) / n as f64;
    let f = |v: f64| ((v - lo).powi(2) + (hi - v).powi(2)) / v;
    let mut integral = f(lo) + f(hi);
    for i in 1..n {
        integral += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let expected = integral * h / 3.0 / (2.0 * (hi - lo).powi(2));

    let t = Template::new(Architecture::excitatory_neuron(10));
    let pairs = plan_pairs(&t, &single_ranges(), 5, 1000, Placement::Independent).unwrap();
    let m: Vec<f64> = pairs.iter().map(|p| p.initial_mape().unwrap()[0]).collect();
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    assert!((mean - expected).abs() < 0.02, "{mean} vs {expected}");
}

#[test]
fn stratified_pairs_span_the_mape_range() {
    let t = Template::new(Architecture::excitatory_neuron(10));
    let placement = Placement::Stratified {
        bins: 10,
        max_mape: 1.0,
    };
    let pairs = plan_pairs(&t, &single_ranges(), 5, 100, placement).unwrap();
    let m: Vec<f64> = pairs.iter().map(|p| p.initial_mape().unwrap()[0]).collect();
    for (i, v) in m.iter().enumerate() {
        let bin = (i % 10) as f64;
        assert!(
            *v >= bin / 10.0 - 1e-12 && *v < (bin + 1.0) / 10.0 + 1e-12,
            "pair {i}: {v}"
        );
    }
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(0.0, f64::max);
    assert!(lo <= 0.05 && hi >= 0.95, "[{lo}, {hi}]");
}

#[test]
fn learner_at_the_witness_stays_there() {
    let mut pair = single_pair(6);
    pair.learner_weights = pair.witness_weights.clone();
    let settings = RunSettings {
        updates: 1000,
        ..RunSettings::default()
    };
    let r = run_pair(&pair, SINE, &settings).unwrap();
    assert_eq!(r.updates, 1000);
    assert!(r.mape.per_neuron[0].iter().all(|&m| m <= 1e-9));
    assert_eq!(r.witness_spikes, r.learner_spikes);
}

#[test]
fn witness_weights_are_untouched_by_learning() {
    let pair = single_pair(7);
    let before = pair.clone();
    let settings = RunSettings {
        updates: 300,
        ..RunSettings::default()
    };
    run_pair(&pair, SINE, &settings).unwrap();
    assert_eq!(pair, before);
}

#[test]
fn replayed_teacher_matches_online_teacher() {
    let pair = single_pair(8);
    let settings = RunSettings {
        updates: 1500,
        ..RunSettings::default()
    };
    let online = run_pair(&pair, SINE, &settings).unwrap();
    let recorded = record_witness(&pair, SINE, settings.sim, online.simulated_ms + 1.0).unwrap();
    let replayed = run_pair_with(&pair, SINE, &settings, Teacher::Replay(recorded)).unwrap();
    assert_eq!(online.final_weights, replayed.final_weights);
    assert_eq!(online.mape, replayed.mape);
    assert_eq!(online.error_trace, replayed.error_trace);
}

#[test]
fn suites_do_not_depend_on_job_count() {
    let t = Template::new(Architecture::excitatory_neuron(10));
    let pairs = plan_pairs(&t, &single_ranges(), 9, 4, Placement::Independent).unwrap();
    let settings = RunSettings {
        updates: 200,
        ..RunSettings::default()
    };
    let a = run_pairs(&pairs, SINE, &settings, 1).unwrap();
    let b = run_pairs(&pairs, SINE, &settings, 3).unwrap();
    let strip = |r: &spikegrad::experiments::SuiteReport| {
        r.results
            .iter()
            .map(|p| {
                let rep = p.report.as_ref().unwrap();
                (
                    p.pair_id,
                    p.seed,
                    rep.final_weights.clone(),
                    rep.mape.clone(),
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert!(run_pairs(&[], SINE, &settings, 2)
        .unwrap()
        .results
        .is_empty());
}

#[test]
fn approximate_tapes_agree_at_low_rates_and_not_at_high_rates() {
    let pair = single_pair(10);
    let rel_dev = |drive: RateProfile, ms: f64| -> (f64, bool) {
        let mut net = Network::new(&pair.witness_topology(), SimConfig::default())
            .unwrap()
            .with_tapes(TapeMode::Full);
        let mut s = PoissonStream::new(drive, 10, 11);
        let out = net.output();
        let mut worst: f64 = 0.0;
        let mut first_exact = true;
        let mut t = 0.0;
        while t < ms {
            t += 10.0f64;
            for k in net.advance(&s.take_until(t), t) {
                let full = recompute_tape(&net, out, k.id, TapeMode::Full).unwrap();
                let approx = approx_partials(&net, out, k.id).unwrap();
                if net.spike_times(out).len() == 1 {
                    first_exact &= full == approx;
                }
                let num: f64 = full
                    .entries
                    .iter()
                    .zip(&approx.entries)
                    .map(|(a, b)| (a.dw - b.dw).powi(2))
                    .sum();
                let den: f64 = full.entries.iter().map(|a| a.dw * a.dw).sum();
                if den > 0.0 {
                    worst = worst.max((num / den).sqrt());
                }
            }
        }
        (worst, first_exact)
    };
    let (low, first_exact) = rel_dev(RateProfile::Homogeneous { rate_hz: 2.0 }, 60_000.0);
    assert!(first_exact);
    assert!(low < 1e-3, "{low}");
    let (high, _) = rel_dev(RateProfile::Homogeneous { rate_hz: 150.0 }, 2_000.0);
    assert!(high > 1e-2, "{high}");
}

#[test]
fn pruned_tapes_hold_no_dropped_entries() {
    let pair = single_pair(12);
    let mut net = Network::new(&pair.witness_topology(), SimConfig::default())
        .unwrap()
        .with_tapes(TapeMode::Full);
    let mut s = PoissonStream::new(RateProfile::Homogeneous { rate_hz: 20.0 }, 10, 13);
    let mut t = 0.0;
    while t < 5_000.0 {
        t += 100.0;
        net.advance(&s.take_until(t), t);
        for neuron in &net.neurons {
            let live: std::collections::HashSet<_> = neuron
                .synapses
                .iter()
                .flat_map(|s| s.ledger.iter().map(|e| e.id))
                .collect();
            for k in &neuron.efferent {
                for e in &k.tape.as_ref().unwrap().entries {
                    assert!(
                        live.contains(&e.entry),
                        "tape references pruned entry {:?}",
                        e.entry
                    );
                }
            }
        }
    }
}
