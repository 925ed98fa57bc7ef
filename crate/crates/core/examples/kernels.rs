//! Tabulate the PSP of each synapse class and the after-hyperpolarization.
//!
//! Prints CSV `t_ms,excitatory,inhibitory,nmda,gaba_b,ahp` on stdout, one
//! row per 0.5 ms over the first 200 ms after arrival (zero delay).

use spikegrad::experiments::{KernelClass, KernelTable};
use spikegrad::kernels::{ahp_value, psp_value, AhpParams};

fn main() {
    let table = KernelTable::default();
    let classes = [
        KernelClass::Excitatory,
        KernelClass::Inhibitory,
        KernelClass::Nmda,
        KernelClass::GabaB,
    ];
    let psps: Vec<_> = classes.iter().map(|&c| table.psp(c, 0.0)).collect();
    let ahp = AhpParams::default();

    for (c, p) in classes.iter().zip(&psps) {
        eprintln!(
            "{c:?}: peak {:.4} at {:.2} ms",
            p.peak_magnitude(),
            p.peak_age()
        );
    }
    println!("t_ms,excitatory,inhibitory,nmda,gaba_b,ahp");
    for i in 1..=400 {
        let t = 0.5 * i as f64;
        let row: Vec<String> = psps
            .iter()
            .map(|p| format!("{:.6}", psp_value(p, t)))
            .collect();
        println!("{t:.1},{},{:.6}", row.join(","), ahp_value(&ahp, t));
    }
}
