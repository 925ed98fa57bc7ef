//! Find weight ranges that put random networks in the 5 to 50 Hz band.
//!
//! ```text
//! cargo run --release --example calibration -- two_layer
//! ```

use spikegrad::experiments::{calibrate, Architecture, CalibrationConfig, Template};

fn main() -> spikegrad::Result<()> {
    let arch = match std::env::args().nth(1).as_deref() {
        Some("mixed") => Architecture::mixed_neuron(),
        Some("two_layer") => Architecture::two_layer(5, 5),
        Some("two_layer_mixed") => Architecture::two_layer_mixed(),
        _ => Architecture::excitatory_neuron(10),
    };
    let template = Template::new(arch);
    let cal = calibrate(&template, &CalibrationConfig::default(), 0)?;
    for (layer, ([lo, hi], rate)) in cal
        .ranges
        .layers
        .iter()
        .zip(&cal.median_rate_hz)
        .enumerate()
    {
        println!("layer {layer}: weights in [{lo:.4}, {hi:.4}], median rate {rate:.2} Hz");
    }
    println!(
        "{:.0}% of sampled networks inside the band",
        100.0 * cal.in_band_fraction
    );
    Ok(())
}
