//! A small batch of witness/learner pairs run in parallel, with the
//! scatter CSV of initial versus change in MAPE written to stdout.

use spikegrad::experiments::{
    plan_pairs, run_pairs, scatter_csv, Architecture, Placement, RateProfile, RunSettings,
    Template, WeightRanges,
};

fn main() -> spikegrad::Result<()> {
    let template = Template::new(Architecture::excitatory_neuron(10));
    let ranges = WeightRanges {
        layers: vec![[0.82, 3.28]],
    };
    let pairs = plan_pairs(&template, &ranges, 2024, 8, Placement::Independent)?;
    let settings = RunSettings {
        updates: 3000,
        ..RunSettings::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let drive = RateProfile::Homogeneous { rate_hz: 10.0 };
    let report = run_pairs(&pairs, drive, &settings, jobs)?;

    let s = report.summary();
    eprintln!(
        "{} of {} pairs improved, {} converged, {} diverged",
        s.improved, s.pairs, s.converged, s.diverged
    );
    print!("{}", scatter_csv(&report));
    Ok(())
}
