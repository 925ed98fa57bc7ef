//! Run the numerical oracles against the analytic kernels, error gradient
//! and spike tapes, and print the pass/fail table.
//!
//! Pass `--all` to include the slower re-simulation checks.

use spikegrad::gradcheck::{format_table, run_checks, CheckKind, GradcheckConfig};

fn main() {
    let all = std::env::args().any(|a| a == "--all");
    let mut cfg = GradcheckConfig {
        property_pairs: 20_000,
        fd_pairs: 300,
        ..GradcheckConfig::default()
    };
    if !all {
        cfg.checks = vec![
            CheckKind::KernelDerivatives,
            CheckKind::ErrorFunctional,
            CheckKind::SpikeTapes,
            CheckKind::DescentDirection,
        ];
        cfg.descent_instances = 10;
    }
    let outcomes = run_checks(&cfg);
    print!("{}", format_table(&outcomes));
    if outcomes.iter().any(|o| !o.passed) {
        std::process::exit(1);
    }
}
