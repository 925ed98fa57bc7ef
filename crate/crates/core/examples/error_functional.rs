//! The spike-train disparity and its gradient on a few hand-made trains,
//! followed by how quickly the gradient fades with spike age.

use spikegrad::disparity::{error_grad_all, error_value, SpikeAgeVector};
use spikegrad::experiments::{binned_medians, decay_samples, median_in};
use spikegrad::kernels::ImpactParams;

fn main() {
    let impact = ImpactParams::default();
    let desired = SpikeAgeVector::new([12.0, 80.0, 230.0]);
    let cases = [
        ("identical", SpikeAgeVector::new([12.0, 80.0, 230.0])),
        ("shifted by 2 ms", SpikeAgeVector::new([14.0, 82.0, 232.0])),
        ("one missing", SpikeAgeVector::new([12.0, 80.0])),
        ("one extra", SpikeAgeVector::new([5.0, 12.0, 80.0, 230.0])),
        ("empty", SpikeAgeVector::default()),
    ];
    for (name, output) in &cases {
        let e = error_value(&desired, output, impact);
        let g = error_grad_all(&desired, output, impact);
        let g: Vec<String> = g.iter().map(|x| format!("{x:.3e}")).collect();
        println!("{name:<16} E = {e:.6e}  dE/dage = [{}]", g.join(", "));
    }

    let samples = decay_samples(10_000, 500.0, impact, 0);
    println!("\nmedian |dE/dt| by age, {} samples", samples.len());
    for (lo, m) in binned_medians(&samples, 500.0, 50.0) {
        if let Some(m) = m {
            println!("  [{lo:>3}, {:>3}) ms  {m:.3e}", lo + 50.0);
        }
    }
    if let (Some(young), Some(old)) = (
        median_in(&samples, 0.0, 10.0),
        median_in(&samples, 400.0, 500.0),
    ) {
        println!("ratio [0,10] / [400,500]: {:.1}", young / old);
    }
}
