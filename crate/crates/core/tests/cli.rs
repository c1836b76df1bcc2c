use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asynclc::estimators::{default_grid, fit_curve, CoefName, Method, Smoothing};
use asynclc::io::{emit_plot_data, read_plot_data, write_dataset};
use asynclc::scb::{bootstrap_band, Contrast, ScbConfig, Target};
use asynclc::simulation::{generate_dataset, replicate_rng, DgpConfig, Setting};
use asynclc::Dataset;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_asynclc"));
    c.env("ASYNCLC_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let ds: Dataset =
        generate_dataset(&DgpConfig::new(n, Setting::I), &mut replicate_rng(21, 0)).unwrap();
    let (s, a) = (dir.join("sync.csv"), dir.join("async.csv"));
    write_dataset(&ds, &s, Some(&a)).unwrap();
    (s, a)
}

#[test]
fn fit_with_auto_bandwidths_writes_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (s, a) = toy(dir.path(), 120);
    let out = dir.path().join("fit.csv");
    let o = run(&[
        "fit",
        "--sync",
        s.to_str().unwrap(),
        "--async",
        a.to_str().unwrap(),
        "--method",
        "two-step",
        "--h",
        "auto",
        "--h1",
        "auto",
        "--h2",
        "auto",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 182);
    assert!(lines[0].starts_with("t,beta1,beta1_se"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.csv.json")).unwrap())
            .unwrap();
    assert!(meta["h"].as_f64().unwrap() > 0.0);
    assert_eq!(meta["grid_points"], 181);
}

#[test]
fn bad_alpha_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--alpha",
        "1.5",
        "--n",
        "50",
        "--reps",
        "2",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ERROR BAD_PARAM"), "{}", stderr(&o));
    let o = run(&["fit", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("ERROR BAD_PARAM"));
}

#[test]
fn data_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = run(&[
        "fit",
        "--sync",
        missing.to_str().unwrap(),
        "--h",
        "0.1",
        "--h1",
        "0.1",
        "--h2",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ERROR IO_ERROR"));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "subject_id,time,y,x1\n1,0.1,2.0,1\n1,0.2,oops,1\n").unwrap();
    let o = run(&[
        "fit",
        "--sync",
        bad.to_str().unwrap(),
        "--h",
        "0.1",
        "--h1",
        "0.1",
        "--h2",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("select-bandwidth"));
}

#[test]
fn scb_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (s, a) = toy(dir.path(), 100);
    let go = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .env("ASYNCLC_THREADS", threads)
            .args([
                "scb",
                "--sync",
                s.to_str().unwrap(),
                "--async",
                a.to_str().unwrap(),
                "--h",
                "n^-0.6",
                "--h1",
                "n^-0.5",
                "--h2",
                "n^-0.5",
                "--replicates",
                "200",
                "--seed",
                "5",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let first = go("a.csv", "1");
    assert_eq!(first, go("b.csv", "1"));
    assert_eq!(first, go("c.csv", "4"));
    let text = String::from_utf8(first).unwrap();
    assert!(text.lines().next().unwrap().contains("gamma1_scb_hi"));
}

#[test]
fn config_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (s, a) = toy(dir.path(), 100);
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# bandwidths\nh = 0.3\nh1 = 0.2\nh2 = 0.2\ngrid = 0.2:0.8:7\n",
    )
    .unwrap();
    let out = dir.path().join("fit.csv");
    let o = run(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--sync",
        s.to_str().unwrap(),
        "--async",
        a.to_str().unwrap(),
        "--h2",
        "0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.csv.json")).unwrap())
            .unwrap();
    assert_eq!(meta["h"], 0.3);
    assert_eq!(meta["h2"], 0.25);
    assert_eq!(meta["grid_points"], 7);
    std::fs::write(&cfg, "bandwith = 0.3\n").unwrap();
    let o = run(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--sync",
        s.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sim");
    let o = run(&[
        "simulate",
        "--n",
        "80",
        "--reps",
        "4",
        "--seed",
        "3",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let points = std::fs::read_to_string(dir.path().join("sim_points.csv")).unwrap();
    // header plus two coefficients at three times
    assert_eq!(points.lines().count(), 7);
    assert!(dir.path().join("sim_curves.csv").exists());
    assert!(dir.path().join("sim.json").exists());
}

#[test]
fn normalize_keeps_original_times() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s.csv");
    std::fs::write(
        &s,
        "subject_id,time,y,x1\na,10,1,1\na,20,2,3\nb,10,1,5\nb,20,2,7\n",
    )
    .unwrap();
    let out = dir.path().join("n.csv");
    let o = run(&[
        "normalize",
        "--sync",
        s.to_str().unwrap(),
        "--column",
        "x1",
        "--mode",
        "longitudinal",
        "--h",
        "0.2",
        "--out-sync",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows[0][1], "10");
    assert_eq!(rows[1][1], "20");
    let z: f64 = rows[0][3].parse().unwrap();
    assert!((z + 1.0).abs() < 1e-12);
}

#[test]
fn plot_data_round_trips_and_band_width_is_constant() {
    let ds: Dataset =
        generate_dataset(&DgpConfig::new(120, Setting::I), &mut replicate_rng(2, 0)).unwrap();
    let grid: Vec<f64> = default_grid();
    let curve = fit_curve(
        &ds,
        Method::TwoStepCentering,
        &grid,
        Smoothing::two_step(0.1, 0.12, 0.12),
    )
    .unwrap();
    let cfg = ScbConfig {
        replicates: 200,
        ..Default::default()
    };
    let band = bootstrap_band(&ds, &curve, Target::Beta, &Contrast::Coordinate(0), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&curve, &[(CoefName::Beta(0), &band)], dir.path(), "p").unwrap();
    assert_eq!(files.len(), 2);
    let beta = read_plot_data(&files[0]).unwrap();
    assert_eq!(beta.len(), grid.len());
    for (i, row) in beta.iter().enumerate() {
        assert_eq!(row[0], grid[i]);
        assert_eq!(row[1], curve.estimate(i, CoefName::Beta(0)).unwrap().0);
        let (lo, hi) = curve.ci(i, CoefName::Beta(0)).unwrap();
        assert_eq!((row[2], row[3]), (lo, hi));
        assert_eq!((row[4], row[5]), (band.lower(i), band.upper(i)));
        assert!(((row[5] - row[4]) - 2.0 * band.c_alpha).abs() < 1e-12);
    }
    // no band for gamma: blank columns
    let gamma = read_plot_data(&files[1]).unwrap();
    assert!(gamma
        .iter()
        .all(|r| r[4].is_nan() && r[5].is_nan() && r[1].is_finite()));
    let raw = std::fs::read_to_string(&files[1]).unwrap();
    assert!(raw.lines().nth(1).unwrap().ends_with(",,"));
}
