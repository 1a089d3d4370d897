//! Acceptance: every subcommand run twice with identical flags produces
//! byte-identical outputs.
//!
//! The data artifacts (everything listed in the run manifest) are compared
//! byte for byte under the ambient environment. The manifest itself carries
//! a wall-clock timestamp, so it is compared modulo that field — and then
//! byte for byte with `SOURCE_DATE_EPOCH` pinned.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_driftkit")
}

fn run(dir: &Path, args: &[&str], pin_time: bool) {
    let mut cmd = Command::new(bin());
    cmd.current_dir(dir).args(args);
    if pin_time {
        cmd.env("SOURCE_DATE_EPOCH", "1700000000");
    }
    let out = cmd.output().expect("failed to launch driftkit");
    assert!(
        out.status.success(),
        "driftkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Artifact paths listed in the manifest next to `output`.
fn artifacts(dir: &Path, output: &str) -> Vec<PathBuf> {
    let manifest_path = dir.join(Path::new(output).with_extension("manifest.json"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| dir.join(a.as_str().unwrap()))
        .collect()
}

fn manifest_without_timestamp(dir: &Path, output: &str) -> String {
    let path = dir.join(Path::new(output).with_extension("manifest.json"));
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|line| !line.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Run `args` in two fresh directories and demand byte-identical artifacts.
fn assert_deterministic(label: &str, prepare: &[&[&str]], args: &[&str], output: &str) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for step in prepare {
            run(dir, step, false);
        }
        run(dir, args, false);
    }

    for artifact in artifacts(a.path(), output) {
        let name = artifact.file_name().unwrap();
        let bytes_a = fs::read(a.path().join(name)).unwrap();
        let bytes_b = fs::read(b.path().join(name)).unwrap();
        assert_eq!(
            bytes_a, bytes_b,
            "{label}: artifact {name:?} differs between identical runs"
        );
        assert!(artifact.exists(), "{label}: listed artifact {artifact:?} missing");
    }
    assert_eq!(
        manifest_without_timestamp(a.path(), output),
        manifest_without_timestamp(b.path(), output),
        "{label}: manifests differ beyond the timestamp"
    );

    // With the timestamp pinned the manifests must match byte for byte too.
    let c = tempfile::tempdir().unwrap();
    let d = tempfile::tempdir().unwrap();
    for dir in [c.path(), d.path()] {
        for step in prepare {
            run(dir, step, true);
        }
        run(dir, args, true);
    }
    let manifest = Path::new(output).with_extension("manifest.json");
    assert_eq!(
        fs::read(c.path().join(&manifest)).unwrap(),
        fs::read(d.path().join(&manifest)).unwrap(),
        "{label}: pinned-timestamp manifests differ"
    );
    println!("criterion 8: {label} byte-identical across repeated runs");
}

#[test]
fn criterion_8_cli_determinism() {
    let simulate: &[&str] = &[
        "simulate", "--model", "2", "--N", "20", "--n", "50", "--T", "5", "--t0", "1",
        "--seed", "11", "-o", "paths.csv",
    ];
    assert_deterministic("simulate", &[], simulate, "paths.csv");
    assert_deterministic(
        "estimate",
        &[simulate],
        &["estimate", "--input", "paths.csv", "--h", "0.05", "--eta", "0.08", "-o", "curve.csv"],
        "curve.csv",
    );
    assert_deterministic(
        "cv",
        &[simulate],
        &["cv", "--input", "paths.csv", "--grid", "0.02:0.02:10", "-o", "cv.csv"],
        "cv.csv",
    );
    assert_deterministic(
        "experiment",
        &[],
        &["experiment", "--model", "3", "--N", "12", "--reps", "2", "--seed", "5", "-o", "exp"],
        "exp",
    );
    println!("criterion 8 PASS: all four subcommands are deterministic given their flags");
}
