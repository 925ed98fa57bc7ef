//! Batches of independent witness/learner pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pair::{make_pair, make_pair_at_mape, Template, WeightRanges, WitnessPair};
use super::poisson::RateProfile;
use super::run::{run_pair, Outcome, RunReport, RunSettings};
use super::seeds::{pair_seed, stream_rng, Stream};
use crate::error::{Error, Result};
use rand::Rng;

/// How learners are placed relative to their witnesses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    /// Learner weights drawn from the same range as the witness's.
    #[default]
    Independent,
    /// Pair `i` gets an initial MAPE drawn uniformly from bin `i mod bins`
    /// of `[0, max_mape)`.
    Stratified { bins: usize, max_mape: f64 },
}

/// Build `count` pairs from a master seed.
pub fn plan_pairs(
    template: &Template,
    ranges: &WeightRanges,
    master_seed: u64,
    count: usize,
    placement: Placement,
) -> Result<Vec<WitnessPair>> {
    (0..count)
        .map(|i| {
            let seed = pair_seed(master_seed, i as u64);
            match placement {
                Placement::Independent => make_pair(template, ranges, seed),
                Placement::Stratified { bins, max_mape } => {
                    if bins == 0 || !(max_mape > 0.0) {
                        return Err(Error::config(
                            "suite.placement",
                            "bins and max_mape must be positive",
                        ));
                    }
                    let width = max_mape / bins as f64;
                    let bin = (i % bins) as f64;
                    let u: f64 = stream_rng(seed, Stream::Stratify).gen_range(0.0..1.0);
                    make_pair_at_mape(template, ranges, seed, width * (bin + u))
                }
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairResult {
    pub pair_id: usize,
    pub seed: u64,
    pub report: std::result::Result<RunReport, String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<PairResult>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub pairs: usize,
    pub failed: usize,
    pub improved: usize,
    pub improvement_fraction: f64,
    pub converged: usize,
    pub diverged: usize,
    pub slow: usize,
    pub total_updates: u64,
    pub simulated_s: f64,
}

impl SuiteReport {
    pub fn reports(&self) -> impl Iterator<Item = (usize, &RunReport)> {
        self.results
            .iter()
            .filter_map(|r| r.report.as_ref().ok().map(|rep| (r.pair_id, rep)))
    }

    pub fn summary(&self) -> SuiteSummary {
        let mut s = SuiteSummary {
            pairs: self.results.len(),
            ..SuiteSummary::default()
        };
        for r in &self.results {
            match &r.report {
                Err(_) => s.failed += 1,
                Ok(rep) => {
                    s.improved += rep.improved() as usize;
                    match rep.outcome {
                        Outcome::Converged => s.converged += 1,
                        Outcome::Diverged => s.diverged += 1,
                        Outcome::Slow => s.slow += 1,
                    }
                    s.total_updates += rep.updates;
                    s.simulated_s += rep.simulated_ms * 1e-3;
                }
            }
        }
        let ok = s.pairs - s.failed;
        s.improvement_fraction = if ok == 0 {
            0.0
        } else {
            s.improved as f64 / ok as f64
        };
        s
    }

    pub fn ids_with_outcome(&self, outcome: Outcome) -> Vec<usize> {
        self.reports()
            .filter(|(_, r)| r.outcome == outcome)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Run every pair, `jobs` at a time. Results come back in pair order
/// regardless of scheduling.
pub fn run_pairs(
    pairs: &[WitnessPair],
    drive: RateProfile,
    settings: &RunSettings,
    jobs: usize,
) -> Result<SuiteReport> {
    let work = |(i, pair): (usize, &WitnessPair)| PairResult {
        pair_id: i,
        seed: pair.seed,
        report: run_pair(pair, drive, settings).map_err(|e| e.to_string()),
    };
    let results = if jobs <= 1 {
        pairs.iter().enumerate().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| pairs.par_iter().enumerate().map(work).collect())
    };
    Ok(SuiteReport { results })
}

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Initial versus change in average MAPE, one row per pair.
pub fn scatter_csv(report: &SuiteReport) -> String {
    let mut s = String::from("pair_id,seed,initial_mape,final_mape,delta_mape,outcome\n");
    for r in &report.results {
        match &r.report {
            Ok(rep) => {
                let (a, b) = (rep.initial_avg(), rep.final_avg());
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.pair_id,
                    r.seed,
                    fmt6(a),
                    fmt6(b),
                    fmt6(a - b),
                    rep.outcome.as_str()
                ));
            }
            Err(_) => s.push_str(&format!("{},{},,,,failed\n", r.pair_id, r.seed)),
        }
    }
    s
}

/// Recorded MAPE of every neuron of every pair.
pub fn trajectories_csv(report: &SuiteReport) -> String {
    let mut s = String::from("pair_id,neuron_id,update_idx,mape\n");
    for (id, rep) in report.reports() {
        for (n, values) in rep.mape.per_neuron.iter().enumerate() {
            for (idx, v) in rep.mape.update_idx.iter().zip(values) {
                s.push_str(&format!("{id},{n},{idx},{}\n", fmt6(*v)));
            }
        }
    }
    s
}
