use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spikegrad::config::RunConfig;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn spikegrad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikegrad"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let o = spikegrad(&["run", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("/definitely/not/here.toml"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unknown_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "[run.learn]\nmu = 0.01\nmomentum = 0.9\n").unwrap();
    let o = spikegrad(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.learn.momentum"), "{}", stderr(&o));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "[run.sim]\ndt = -1.0\n").unwrap();
    let o = spikegrad(&["gradcheck", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.sim"), "{}", stderr(&o));
}

#[test]
fn unknown_figure_exits_2() {
    let o = spikegrad(&["figdata", "fig9", &cfg("smoke.toml")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_check_selection_runs_nothing() {
    let o = spikegrad(&["gradcheck", &cfg("no_checks.toml")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("0 checks"), "{}", stdout(&o));
}

#[test]
fn sign_flip_fixture_fails_descent_check() {
    let o = spikegrad(&["gradcheck", &cfg("sabotage.toml")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("descent_direction"));
    assert!(stderr(&o).contains("descent_direction"), "{}", stderr(&o));
}

#[test]
fn smoke_gradcheck_passes() {
    let o = spikegrad(&["gradcheck", &cfg("smoke.toml")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("all 3 checks passed"));
}

fn read_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_is_byte_identical_across_repeats_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let c = cfg("smoke.toml");
    let o = spikegrad(&["run", &c, "--jobs", "1", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = read_outputs(&out);
    let o = spikegrad(&["run", &c, "--jobs", "3", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let second = read_outputs(&out);
    assert_eq!(first, second);

    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        [
            "config.toml",
            "scatter.csv",
            "summary.json",
            "trajectories.csv"
        ]
    );
    let scatter = String::from_utf8(first[1].1.clone()).unwrap();
    let mut lines = scatter.lines();
    assert_eq!(
        lines.next(),
        Some("pair_id,seed,initial_mape,final_mape,delta_mape,outcome")
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn seed_flag_changes_the_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = cfg("smoke.toml");
    spikegrad(&["run", &c, "--out-dir", a.to_str().unwrap()]);
    spikegrad(&["run", &c, "--seed", "8", "--out-dir", b.to_str().unwrap()]);
    assert_ne!(
        fs::read(a.join("scatter.csv")).unwrap(),
        fs::read(b.join("scatter.csv")).unwrap()
    );
    let echoed = RunConfig::load(&b.join("config.toml")).unwrap();
    assert_eq!(echoed.seed, 8);
}

#[test]
fn config_echo_reloads_and_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = spikegrad(&["run", &cfg("smoke.toml"), "--out-dir", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let echo = a.join("config.toml");
    let reloaded = RunConfig::load(&echo).unwrap();
    assert_eq!(reloaded.out_dir, a.to_string_lossy());

    let o = spikegrad(&[
        "run",
        echo.to_str().unwrap(),
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["scatter.csv", "trajectories.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn calibrated_run_writes_calibration_and_fills_ranges() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cal.toml");
    fs::write(
        &p,
        "[calibration]\nsamples = 5\nsample_duration_s = 2.0\n[suite]\npairs = 1\n[run]\nupdates = 20\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = spikegrad(&[
        "run",
        p.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("calibration.json").exists());
    let echoed = RunConfig::load(&out.join("config.toml")).unwrap();
    assert!(echoed.weight_ranges.is_some());
}

#[test]
fn fig1d_rows_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikegrad(&[
        "figdata",
        "fig1d",
        &cfg("smoke.toml"),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig1d.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_ms,abs_dE_dt"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert!(rows.len() >= 500);
    assert!(rows
        .iter()
        .all(|&(t, g)| (0.0..=500.0).contains(&t) && g >= 0.0));
}

#[test]
fn fig2a_points_never_lie_above_the_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let o = spikegrad(&[
        "figdata",
        "fig2a",
        &cfg("smoke.toml"),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig2a.csv")).unwrap();
    for l in csv.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        let initial: f64 = f[2].parse().unwrap();
        let delta: f64 = f[4].parse().unwrap();
        assert!(delta <= initial + 1e-12, "{l}");
    }
}

#[test]
fn reference_config_is_the_default() {
    let reference = RunConfig::load(&configs().join("reference.toml")).unwrap();
    assert_eq!(reference, RunConfig::default());
}

#[test]
fn every_shipped_config_validates() {
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}

#[test]
fn update_trace_has_one_row_per_update() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = fs::read_to_string(configs().join("smoke.toml")).unwrap();
    text = text.replace("[run]\n", "[run]\ntrace_updates = true\n");
    let p = dir.path().join("trace.toml");
    fs::write(&p, text).unwrap();
    let out = dir.path().join("out");
    let o = spikegrad(&["run", p.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("traces").join("pair_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("update_idx,trigger_time_ms,error_value,raw_grad_norm,applied_norm,capped")
    );
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",0") || r.ends_with(",1")));
}
