//! Train one neuron to reproduce a witness neuron's output, then repeat the
//! run with the witness output recorded in advance and replayed.
//!
//! ```text
//! cargo run --release --example learn_single_neuron -- 20000
//! ```

use spikegrad::experiments::{
    make_pair_at_mape, record_witness, run_pair, run_pair_with, Architecture, RateProfile,
    RunSettings, Teacher, Template, WeightRanges,
};

fn main() -> spikegrad::Result<()> {
    let updates = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let template = Template::new(Architecture::excitatory_neuron(10));
    let ranges = WeightRanges {
        layers: vec![[0.82, 3.28]],
    };
    let pair = make_pair_at_mape(&template, &ranges, 5, 0.5)?;
    let drive = RateProfile::Sinusoidal {
        max_rate_hz: 10.0,
        mod_freq_hz: 2.0,
    };
    let settings = RunSettings {
        updates,
        record_every: updates / 20,
        ..RunSettings::default()
    };

    let report = run_pair(&pair, drive, &settings)?;
    println!("update  MAPE");
    for (idx, m) in report
        .mape
        .update_idx
        .iter()
        .zip(&report.mape.per_neuron[0])
    {
        println!("{idx:>6}  {m:.4}");
    }
    println!(
        "{} after {:.0} s simulated ({} witness spikes, {} learner spikes)",
        report.outcome.as_str(),
        report.simulated_ms / 1e3,
        report.witness_spikes,
        report.learner_spikes
    );

    let recorded = record_witness(&pair, drive, settings.sim, report.simulated_ms)?;
    let replayed = run_pair_with(&pair, drive, &settings, Teacher::Replay(recorded))?;
    println!(
        "replayed teacher: final MAPE {:.6} (online {:.6})",
        replayed.final_avg(),
        report.final_avg()
    );
    Ok(())
}
