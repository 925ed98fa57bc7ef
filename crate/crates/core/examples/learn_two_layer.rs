//! Train a 5-5-1 network against a witness and print every neuron's MAPE.

use spikegrad::experiments::{
    calibrate, make_pair_at_mape, run_pair, Architecture, CalibrationConfig, RateProfile,
    RunSettings, Template,
};

fn main() -> spikegrad::Result<()> {
    let updates = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(30_000);
    let template = Template::new(Architecture::two_layer(5, 5));
    let cal = calibrate(&template, &CalibrationConfig::default(), 0)?;
    let pair = make_pair_at_mape(&template, &cal.ranges, 9, 0.3)?;
    let settings = RunSettings {
        updates,
        record_every: updates / 10,
        stop_on_convergence: true,
        ..RunSettings::default()
    };
    let drive = RateProfile::Sinusoidal {
        max_rate_hz: 10.0,
        mod_freq_hz: 2.0,
    };
    let report = run_pair(&pair, drive, &settings)?;

    let names: Vec<String> = (0..5)
        .map(|i| format!("h{i}"))
        .chain(["out".to_string()])
        .collect();
    println!(
        "update  {}",
        names.iter().map(|n| format!("{n:>7}")).collect::<String>()
    );
    for (i, idx) in report.mape.update_idx.iter().enumerate() {
        let row: String = report
            .mape
            .per_neuron
            .iter()
            .map(|s| format!("{:>7.4}", s[i]))
            .collect();
        println!("{idx:>6}  {row}");
    }
    println!(
        "{} after {} updates",
        report.outcome.as_str(),
        report.updates
    );
    Ok(())
}
