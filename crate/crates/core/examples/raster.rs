//! Drive one neuron with ten Poisson inputs and print its spike raster.
//!
//! ```text
//! cargo run --release --example raster > raster.csv
//! ```

use spikegrad::experiments::{
    Architecture, PoissonStream, RateProfile, Template, WeightRanges, WitnessPair,
};
use spikegrad::network::{raster_csv, Network, SimConfig};

fn main() -> spikegrad::Result<()> {
    let template = Template::new(Architecture::excitatory_neuron(10));
    let ranges = WeightRanges {
        layers: vec![[0.82, 3.28]],
    };
    let pair: WitnessPair = spikegrad::experiments::make_pair(&template, &ranges, 42)?;
    let mut net = Network::new(&pair.witness_topology(), SimConfig::default())?;

    let drive = RateProfile::Sinusoidal {
        max_rate_hz: 10.0,
        mod_freq_hz: 2.0,
    };
    let mut inputs = PoissonStream::new(drive, 10, 42);
    let duration = 5_000.0;
    let events = inputs.take_until(duration);
    let spikes = net.advance(&events, duration);

    eprintln!(
        "{} input spikes, {} output spikes in {} s",
        events.len(),
        spikes.len(),
        duration / 1e3
    );
    print!("{}", raster_csv(&spikes));
    Ok(())
}
