//! Witness-based evaluation: a fixed random witness network defines the
//! target transformation, and a structurally identical learner is trained
//! online on the witness's output. Progress is measured by the MAPE between
//! learner and witness weights.

pub mod decay;
pub mod pair;
pub mod poisson;
pub mod run;
pub mod seeds;
pub mod suite;

pub use decay::{binned_medians, decay_samples, median_in, DecaySample};
pub use pair::{
    calibrate, make_pair, make_pair_at_mape, mape, Architecture, Calibration, CalibrationConfig,
    KernelClass, KernelTable, PspShape, Template, WeightRanges, WitnessPair,
};
pub use poisson::{gen_poisson, PoissonSpec, PoissonStream, RateProfile};
pub use run::{
    record_witness, run_pair, run_pair_with, update_trace_csv, MapeSeries, Outcome, RunReport,
    RunSettings, Teacher, UpdateTrace,
};
pub use suite::{
    plan_pairs, run_pairs, scatter_csv, trajectories_csv, Placement, SuiteReport, SuiteSummary,
};
