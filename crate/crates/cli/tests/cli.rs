//! End-to-end checks of the command-line surface: file shapes, flag
//! validation, exit codes and the documented estimator identities.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_driftkit")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch driftkit")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "driftkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_small(dir: &Path, name: &str, n_paths: &str) -> PathBuf {
    run_ok(
        dir,
        &["simulate", "--model", "1", "--N", n_paths, "--n", "50", "--seed", "3", "-o", name],
    );
    dir.join(name)
}

fn parse_curve(path: &Path) -> (Vec<f64>, Vec<f64>) {
    let text = fs::read_to_string(path).unwrap();
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for line in text.lines().skip(1) {
        let (x, v) = line.split_once(',').unwrap();
        xs.push(x.parse().unwrap());
        vs.push(v.parse().unwrap());
    }
    (xs, vs)
}

#[test]
fn simulate_writes_expected_shape_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["simulate", "--model", "1", "--N", "50", "--n", "50", "--T", "5", "--t0", "1", "--seed", "7", "-o", "paths.csv"],
    );
    let text = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 51); // header + one row per path
    for line in &lines {
        assert_eq!(line.split(',').count(), 51);
    }
    assert_eq!(lines[0].split(',').next().unwrap(), "1");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("paths.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    for artifact in manifest["artifacts"].as_array().unwrap() {
        assert!(dir.path().join(artifact.as_str().unwrap()).exists());
    }
}

#[test]
fn simulate_rejects_unknown_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["simulate", "--model", "9", "-o", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_two_bandwidth_collapse_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "p.csv", "10");
    let input = input.to_str().unwrap();
    run_ok(dir.path(), &["estimate", "--input", input, "--h", "0.04", "-o", "a.csv"]);
    run_ok(
        dir.path(),
        &["estimate", "--input", input, "--h", "0.04", "--eta", "0.04", "-o", "b.csv"],
    );
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
    let (_, values) = parse_curve(&dir.path().join("a.csv"));
    assert_eq!(values.len(), 200);
}

#[test]
fn estimate_density_mass_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "p.csv", "50");
    run_ok(
        dir.path(),
        &[
            "estimate", "--input", input.to_str().unwrap(), "--h", "0.04", "--kind", "density",
            "--eval-quantile", "0.001", "--eval-points", "500", "-o", "d.csv",
        ],
    );
    let (xs, vs) = parse_curve(&dir.path().join("d.csv"));
    let mut mass = 0.0;
    for g in 1..xs.len() {
        mass += 0.5 * (vs[g] + vs[g - 1]) * (xs[g] - xs[g - 1]);
    }
    assert!((mass - 1.0).abs() < 0.05, "density mass {mass}");
}

#[test]
fn estimate_rejects_eta_for_density_and_garbage_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "p.csv", "4");
    let out = run(
        dir.path(),
        &[
            "estimate", "--input", input.to_str().unwrap(), "--h", "0.1", "--eta", "0.1",
            "--kind", "density", "-o", "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("junk.csv"), "not,a\nnumber,grid\n").unwrap();
    let out = run(
        dir.path(),
        &["estimate", "--input", "junk.csv", "--h", "0.1", "-o", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cv_reproduces_the_coarse_candidate_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "p.csv", "10");
    run_ok(
        dir.path(),
        &["cv", "--input", input.to_str().unwrap(), "--grid", "0.02:0.02:10", "-o", "cv.csv"],
    );
    let text = fs::read_to_string(dir.path().join("cv.csv")).unwrap();
    let hs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(hs.len(), 10);
    for (k, h) in hs.iter().enumerate() {
        assert!((h - 0.02 * (k + 1) as f64).abs() < 1e-12);
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cv.json")).unwrap()).unwrap();
    assert!(report["selected"].as_f64().unwrap() > 0.0);
}

#[test]
fn cv_single_candidate_and_constant_paths() {
    let dir = tempfile::tempdir().unwrap();
    let input = simulate_small(dir.path(), "p.csv", "6");
    run_ok(
        dir.path(),
        &["cv", "--input", input.to_str().unwrap(), "--grid", "0.07", "-o", "one.csv"],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("one.json")).unwrap()).unwrap();
    assert_eq!(report["selected"].as_f64().unwrap(), 0.07);

    // Constant paths: zero criterion everywhere, tie broken to the largest h.
    let mut flat = String::from("1,2,3,4\n");
    flat.push_str("0.5,0.5,0.5,0.5\n");
    flat.push_str("-0.25,-0.25,-0.25,-0.25\n");
    fs::write(dir.path().join("flat.csv"), flat).unwrap();
    run_ok(
        dir.path(),
        &["cv", "--input", "flat.csv", "--grid", "0.02:0.02:10", "-o", "flat_cv.csv"],
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("flat_cv.json")).unwrap())
            .unwrap();
    assert!((report["selected"].as_f64().unwrap() - 0.2).abs() < 1e-12);
    for c in report["criteria"].as_array().unwrap() {
        assert_eq!(c.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn cv_needs_two_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("single.csv"), "1,2,3\n0.1,0.2,0.3\n").unwrap();
    let out = run(
        dir.path(),
        &["cv", "--input", "single.csv", "--grid", "0.1,0.2", "-o", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_writes_summary_and_flags_single_rep() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["experiment", "--model", "1", "--N", "10", "--reps", "2", "--seed", "7", "-o", "exp"],
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("exp.json")).unwrap()).unwrap();
    assert_eq!(summary["per_rep"].as_array().unwrap().len(), 2);
    assert_eq!(summary["failures"], 0);
    let csv = fs::read_to_string(dir.path().join("exp.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 replications

    let out = run(
        dir.path(),
        &["experiment", "--model", "1", "--N", "10", "--reps", "1", "--seed", "7", "-o", "single"],
    );
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("single.json")).unwrap())
            .unwrap();
    assert_eq!(summary["std_mse"], 0.0);
    assert!(!summary["warnings"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("single replication"));
}

#[test]
fn csv_round_trip_reproduces_in_process_results_exactly() {
    use driftkit_core::*;

    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin())
        .current_dir(dir.path())
        .env("DRIFTKIT_THREADS", "1")
        .args(["simulate", "--model", "2", "--N", "9", "--n", "50", "--seed", "21", "-o", "p.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());

    // The written ensemble carries full precision: parsing it back gives the
    // in-process simulation bit for bit.
    let model = SdeModel::preset(2).unwrap();
    let grid = ObservationGrid::new(1.0, 5.0, 50).unwrap();
    let direct = simulate_ensemble(&model, 9, &grid, 10, 21).unwrap();
    let file = fs::File::open(dir.path().join("p.csv")).unwrap();
    let parsed = PathEnsemble::read_csv(std::io::BufReader::new(file)).unwrap();
    for i in 0..9 {
        for j in 0..=50 {
            assert_eq!(direct.value(i, j).to_bits(), parsed.value(i, j).to_bits());
        }
    }

    // Estimation through the CLI matches estimation on the direct ensemble.
    run_ok(dir.path(), &["estimate", "--input", "p.csv", "--h", "0.06", "-o", "c.csv"]);
    let xs = evaluation_grid(&direct, 0.05, 200).unwrap();
    let curve =
        estimate_drift(&direct, &Kernel::gaussian(), 0.06, &xs, &FloorSpec::default()).unwrap();
    let (file_xs, file_vs) = parse_curve(&dir.path().join("c.csv"));
    for g in 0..200 {
        assert_eq!(curve.xs()[g].to_bits(), file_xs[g].to_bits());
        assert_eq!(curve.values()[g].to_bits(), file_vs[g].to_bits());
    }
}

#[test]
fn experiment_all_writes_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny sizes: this checks the layout, not the statistics.
    run_ok(
        dir.path(),
        &["experiment", "--all", "--N", "8", "--reps", "2", "--eval-points", "40", "-o", "table"],
    );
    let csv = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "statistic,model_1,model_2,model_3,model_4");
    assert!(lines[1].starts_with("100x_mean_mse,"));
    assert!(lines[2].starts_with("100x_std_mse,"));
    assert_eq!(lines.len(), 3);
    let summaries: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("table.json")).unwrap()).unwrap();
    assert_eq!(summaries.as_array().unwrap().len(), 4);
}
