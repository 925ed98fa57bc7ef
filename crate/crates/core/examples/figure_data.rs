//! Regenerate one figure's CSV in-process, as `spikegrad figdata` does.
//!
//! ```text
//! cargo run --release --example figure_data -- fig2b configs/smoke.toml
//! ```

use std::path::Path;

use spikegrad::commands::figure_csv;
use spikegrad::config::RunConfig;

fn main() -> spikegrad::Result<()> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "fig1d".into());
    let cfg = match args.next() {
        Some(p) => RunConfig::load(Path::new(&p))?,
        None => RunConfig::default(),
    };
    print!("{}", figure_csv(&id, &cfg, 1)?);
    Ok(())
}
