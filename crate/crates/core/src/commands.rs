//! Entry points behind the `spikegrad` binary. Each `cmd_*` function
//! returns the process exit code: 0 on success, 1 when a gradient check
//! fails, 2 for configuration and I/O problems.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::suite::{fmt6, PairResult};
use crate::experiments::{
    binned_medians, calibrate, decay_samples, plan_pairs, run_pairs, scatter_csv, trajectories_csv,
    update_trace_csv, Architecture, Calibration, Outcome, Placement, RateProfile, SuiteReport,
    SuiteSummary, Template, WeightRanges, WitnessPair,
};
use crate::gradcheck::{format_table, run_checks};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Command-line values that take precedence over the config document.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn jobs(&self) -> usize {
        self.jobs
            .filter(|&j| j > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Load a config and apply `--seed` and `--out-dir`.
pub fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
        cfg.gradcheck.seed = seed;
    }
    if let Some(dir) = &ov.out_dir {
        cfg.out_dir = dir.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents.as_bytes())
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn report_error(e: &Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_USAGE
}

/// Weight ranges from the config, calibrating when none are given.
pub fn resolve_ranges(
    cfg: &RunConfig,
    template: &Template,
) -> Result<(WeightRanges, Option<Calibration>)> {
    match &cfg.weight_ranges {
        Some(r) => Ok((r.clone(), None)),
        None => {
            let cal = calibrate(template, &cfg.calibration, cfg.seed)?;
            info!(
                "calibrated ranges {:?}, median rates {:?} Hz",
                cal.ranges.layers, cal.median_rate_hz
            );
            Ok((cal.ranges.clone(), Some(cal)))
        }
    }
}

/// Diverged pairs rerun under a scaled drive.
#[derive(Clone, Debug)]
pub struct Rescue {
    pub rate_scale: f64,
    pub report: SuiteReport,
}

#[derive(Clone, Debug)]
pub struct SuiteRun {
    /// The effective config, with calibrated ranges filled in.
    pub config: RunConfig,
    pub calibration: Option<Calibration>,
    pub report: SuiteReport,
    pub rescue: Option<Rescue>,
}

/// Rerun the listed pairs with every input rate scaled, keeping pair ids.
pub fn rerun_pairs(
    pairs: &[WitnessPair],
    ids: &[usize],
    drive: RateProfile,
    scale: f64,
    cfg: &RunConfig,
    jobs: usize,
) -> Result<SuiteReport> {
    let subset: Vec<WitnessPair> = ids.iter().map(|&i| pairs[i].clone()).collect();
    let mut report = run_pairs(&subset, drive.scaled(scale), &cfg.run, jobs)?;
    for (r, &id) in report.results.iter_mut().zip(ids) {
        r.pair_id = id;
    }
    Ok(report)
}

pub fn execute_run(cfg: &RunConfig, jobs: usize) -> Result<SuiteRun> {
    cfg.validate()?;
    let (ranges, calibration) = resolve_ranges(cfg, &cfg.template)?;
    let pairs = plan_pairs(
        &cfg.template,
        &ranges,
        cfg.seed,
        cfg.suite.pairs,
        cfg.suite.placement,
    )?;
    let report = run_pairs(&pairs, cfg.drive, &cfg.run, jobs)?;
    let rescue = match cfg.suite.rescue_rate_scale {
        Some(scale) => {
            let ids = report.ids_with_outcome(Outcome::Diverged);
            Some(Rescue {
                rate_scale: scale,
                report: rerun_pairs(&pairs, &ids, cfg.drive, scale, cfg, jobs)?,
            })
        }
        None => None,
    };
    let mut config = cfg.clone();
    config.weight_ranges = Some(ranges);
    Ok(SuiteRun {
        config,
        calibration,
        report,
        rescue,
    })
}

#[derive(Clone, Debug, Serialize)]
struct Failure<'a> {
    pair_id: usize,
    message: &'a str,
}

#[derive(Clone, Debug, Serialize)]
struct RescueSummary {
    rate_scale: f64,
    pair_ids: Vec<usize>,
    diverged_before: usize,
    summary: SuiteSummary,
}

#[derive(Clone, Debug, Serialize)]
struct RunSummary<'a> {
    seed: u64,
    #[serde(flatten)]
    summary: SuiteSummary,
    failures: Vec<Failure<'a>>,
    rescue: Option<RescueSummary>,
}

fn failures(report: &SuiteReport) -> Vec<Failure<'_>> {
    report
        .results
        .iter()
        .filter_map(|r: &PairResult| {
            r.report.as_ref().err().map(|m| Failure {
                pair_id: r.pair_id,
                message: m,
            })
        })
        .collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidParameter(format!("json encoding: {e}")))
}

/// Write every output of a suite run into `dir` and return the paths.
pub fn write_run_outputs(run: &SuiteRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = RunSummary {
        seed: run.config.seed,
        summary: run.report.summary(),
        failures: failures(&run.report),
        rescue: run.rescue.as_ref().map(|r| RescueSummary {
            rate_scale: r.rate_scale,
            pair_ids: r.report.results.iter().map(|p| p.pair_id).collect(),
            diverged_before: r.report.results.len(),
            summary: r.report.summary(),
        }),
    };
    let mut files = vec![
        ("config.toml", run.config.to_toml_string()?),
        ("scatter.csv", scatter_csv(&run.report)),
        ("trajectories.csv", trajectories_csv(&run.report)),
        ("summary.json", to_json(&summary)?),
    ];
    if let Some(cal) = &run.calibration {
        files.push(("calibration.json", to_json(cal)?));
    }
    if let Some(r) = &run.rescue {
        files.push(("rescue_scatter.csv", scatter_csv(&r.report)));
        files.push(("rescue_trajectories.csv", trajectories_csv(&r.report)));
    }
    let mut files: Vec<(PathBuf, String)> =
        files.into_iter().map(|(n, t)| (dir.join(n), t)).collect();
    if run.config.run.trace_updates {
        for (id, r) in run.report.reports() {
            files.push((
                dir.join("traces").join(format!("pair_{id}.csv")),
                update_trace_csv(&r.update_trace),
            ));
        }
    }
    files
        .into_iter()
        .map(|(path, text)| write_atomic(&path, &text).map(|_| path))
        .collect()
}

pub fn cmd_run(config: &Path, ov: &Overrides) -> i32 {
    let started = Instant::now();
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    let run = match execute_run(&cfg, ov.jobs()) {
        Ok(r) => r,
        Err(e) => return report_error(&e),
    };
    let dir = PathBuf::from(&cfg.out_dir);
    if let Err(e) = write_run_outputs(&run, &dir) {
        return report_error(&e);
    }
    let s = run.report.summary();
    println!(
        "{} pairs: {} improved ({:.3}), {} converged, {} diverged, {} slow, {} failed",
        s.pairs, s.improved, s.improvement_fraction, s.converged, s.diverged, s.slow, s.failed
    );
    if let Some(r) = &run.rescue {
        let rs = r.report.summary();
        println!(
            "rescue at rate x{}: {} of {} still diverged",
            r.rate_scale, rs.diverged, rs.pairs
        );
    }
    println!("outputs in {}", dir.display());
    eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
    EXIT_OK
}

pub fn cmd_gradcheck(config: &Path, ov: &Overrides) -> i32 {
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    if cfg.gradcheck.checks.is_empty() {
        println!("0 checks selected; nothing to run");
        return EXIT_OK;
    }
    let outcomes = run_checks(&cfg.gradcheck);
    print!("{}", format_table(&outcomes));
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.check.name())
        .collect();
    if failed.is_empty() {
        println!("all {} checks passed", outcomes.len());
        EXIT_OK
    } else {
        eprintln!("failed checks: {}", failed.join(", "));
        EXIT_CHECK_FAILED
    }
}

/// Figure ids accepted by `figdata`.
pub const FIGURES: [&str; 13] = [
    "fig1d", "fig2a", "fig2b", "fig2c", "fig2d", "fig3a", "fig3b", "fig3c", "fig3d", "fig4a",
    "fig4b", "fig5a", "fig5b",
];

const SINUSOIDAL: RateProfile = RateProfile::Sinusoidal {
    max_rate_hz: 10.0,
    mod_freq_hz: 2.0,
};
const HOMOGENEOUS: RateProfile = RateProfile::Homogeneous { rate_hz: 10.0 };
const STRATIFIED: Placement = Placement::Stratified {
    bins: 10,
    max_mape: 1.0,
};
/// Drive scale for the low-rate reruns when the config does not set one.
const DEFAULT_RESCUE_SCALE: f64 = 0.2;
/// Upper MAPE shown in the zoomed mixed-network panel.
const ZOOM_MAPE: f64 = 0.1;

struct FigureSuite {
    pairs: Vec<WitnessPair>,
    report: SuiteReport,
}

fn figure_suite(
    cfg: &RunConfig,
    arch: Architecture,
    drive: RateProfile,
    placement: Placement,
    count: usize,
    updates: u64,
    stop: bool,
    jobs: usize,
) -> Result<FigureSuite> {
    let template = Template {
        architecture: arch,
        ..cfg.template.clone()
    };
    let cal = calibrate(&template, &cfg.calibration, cfg.seed)?;
    let pairs = plan_pairs(&template, &cal.ranges, cfg.seed, count, placement)?;
    let mut settings = cfg.run;
    settings.updates = updates;
    settings.stop_on_convergence = stop;
    let report = run_pairs(&pairs, drive, &settings, jobs)?;
    Ok(FigureSuite { pairs, report })
}

fn subset(report: &SuiteReport, keep: impl Fn(&PairResult) -> bool) -> SuiteReport {
    SuiteReport {
        results: report.results.iter().filter(|r| keep(r)).cloned().collect(),
    }
}

fn converged(r: &PairResult) -> bool {
    matches!(&r.report, Ok(rep) if rep.outcome == Outcome::Converged)
}

fn first_only(report: SuiteReport) -> SuiteReport {
    SuiteReport {
        results: report.results.into_iter().take(1).collect(),
    }
}

fn decay_csv(cfg: &RunConfig) -> String {
    let samples = decay_samples(
        cfg.figures.decay_pairs,
        cfg.run.sim.upsilon,
        cfg.run.impact,
        cfg.seed,
    );
    let mut s = String::from("t_ms,abs_dE_dt\n");
    for x in &samples {
        s.push_str(&format!("{},{:.6e}\n", fmt6(x.age), x.abs_grad));
    }
    for (lo, m) in binned_medians(&samples, cfg.run.sim.upsilon, 50.0) {
        if let Some(m) = m {
            info!("median |dE/dt| over [{lo}, {}) ms: {m:.3e}", lo + 50.0);
        }
    }
    s
}

/// The CSV behind one figure panel.
pub fn figure_csv(id: &str, cfg: &RunConfig, jobs: usize) -> Result<String> {
    let f = &cfg.figures;
    let rescue_scale = cfg.suite.rescue_rate_scale.unwrap_or(DEFAULT_RESCUE_SCALE);
    let single = || Architecture::excitatory_neuron(10);
    let two = || Architecture::two_layer(5, 5);
    let csv = match id {
        "fig1d" => decay_csv(cfg),
        "fig2a" | "fig2b" => {
            let drive = if id == "fig2a" {
                HOMOGENEOUS
            } else {
                SINUSOIDAL
            };
            let run = figure_suite(
                cfg,
                single(),
                drive,
                Placement::Independent,
                f.scatter_pairs,
                f.scatter_updates,
                false,
                jobs,
            )?;
            scatter_csv(&run.report)
        }
        "fig2c" | "fig2d" => {
            let arch = if id == "fig2c" {
                single()
            } else {
                Architecture::mixed_neuron()
            };
            let run = figure_suite(
                cfg,
                arch,
                SINUSOIDAL,
                STRATIFIED,
                f.convergence_pairs,
                f.convergence_updates,
                true,
                jobs,
            )?;
            trajectories_csv(&run.report)
        }
        "fig3a" | "fig3b" | "fig3c" | "fig3d" | "fig4a" | "fig4b" => {
            let run = figure_suite(
                cfg,
                two(),
                SINUSOIDAL,
                STRATIFIED,
                f.network_pairs,
                f.network_updates,
                true,
                jobs,
            )?;
            let report = match id {
                "fig3a" => subset(&run.report, converged),
                "fig3b" => first_only(subset(&run.report, converged)),
                "fig3c" => subset(&run.report, |r| !converged(r)),
                "fig3d" => first_only(subset(&run.report, |r| !converged(r))),
                _ => {
                    let mut ids: Vec<usize> = subset(&run.report, |r| !converged(r))
                        .results
                        .iter()
                        .map(|r| r.pair_id)
                        .collect();
                    if id == "fig4b" {
                        ids.truncate(1);
                    }
                    let mut c = cfg.clone();
                    c.run.updates = f.network_updates;
                    c.run.stop_on_convergence = true;
                    rerun_pairs(&run.pairs, &ids, SINUSOIDAL, rescue_scale, &c, jobs)?
                }
            };
            trajectories_csv(&report)
        }
        "fig5a" | "fig5b" => {
            let run = figure_suite(
                cfg,
                Architecture::two_layer_mixed(),
                SINUSOIDAL,
                STRATIFIED,
                f.network_pairs,
                f.network_updates,
                true,
                jobs,
            )?;
            // The first converged network, or the one that got closest.
            let pick = run
                .report
                .results
                .iter()
                .find(|r| converged(r))
                .or_else(|| {
                    run.report
                        .results
                        .iter()
                        .filter(|r| r.report.is_ok())
                        .min_by(|a, b| {
                            let fa = a.report.as_ref().map_or(f64::INFINITY, |r| r.final_avg());
                            let fb = b.report.as_ref().map_or(f64::INFINITY, |r| r.final_avg());
                            fa.total_cmp(&fb)
                        })
                })
                .cloned();
            let report = SuiteReport {
                results: pick.into_iter().collect(),
            };
            let csv = trajectories_csv(&report);
            if id == "fig5a" {
                csv
            } else {
                zoom(&csv)
            }
        }
        other => {
            return Err(Error::config(
                "figure",
                format!("unknown figure id `{other}`"),
            ))
        }
    };
    Ok(csv)
}

/// Keep the header and the trajectory rows with MAPE at most [`ZOOM_MAPE`].
fn zoom(csv: &str) -> String {
    let mut lines = csv.lines();
    let mut s = lines.next().unwrap_or_default().to_string() + "\n";
    for l in lines {
        let v: f64 = l
            .rsplit(',')
            .next()
            .and_then(|x| x.parse().ok())
            .unwrap_or(f64::INFINITY);
        if v <= ZOOM_MAPE {
            s.push_str(l);
            s.push('\n');
        }
    }
    s
}

pub fn cmd_figdata(id: &str, config: &Path, ov: &Overrides) -> i32 {
    if !FIGURES.contains(&id) {
        eprintln!(
            "error: unknown figure id `{id}`; expected one of {}",
            FIGURES.join(", ")
        );
        return EXIT_USAGE;
    }
    let started = Instant::now();
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    let csv = match figure_csv(id, &cfg, ov.jobs()) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    let path = Path::new(&cfg.out_dir).join(format!("{id}.csv"));
    if let Err(e) = write_atomic(&path, &csv) {
        return report_error(&e);
    }
    println!("{}", path.display());
    eprintln!("wall time {:.1} s", started.elapsed().as_secs_f64());
    EXIT_OK
}
