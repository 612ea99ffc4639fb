use std::path::Path;
use std::process::{Command, Output};

use mvs_core::features::DrenetWeights;
use mvs_core::io::{read_depth, read_ply, write_weights, ModelWeights};
use mvs_core::regularizer::HuLstmWeights;

fn mvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvs")).args(args).output().expect("binary runs")
}

fn mvs_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvs"))
        .env("MVS_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {report}"))
        .parse()
        .unwrap()
}

#[test]
fn plane_project_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("plane");
    let est = dir.path().join("est");
    let cloud = dir.path().join("cloud.ply");
    ok(mvs(&["synth", "--scene", "plane", "--views", "7", "--size", "64x48", "--seed", "3", "--out", s(&project)]));
    ok(mvs(&[
        "depth", "--in", s(&project), "--views", "7", "--num-depths", "32", "--depth-mode", "uniform",
        "--features", "photometric", "--regularizer", "passthrough", "--out", s(&est),
    ]));
    let fused = ok(mvs(&["fuse", "--in", s(&est), "--filter", "dynamic", "--out", s(&cloud)]));
    assert!(fused.starts_with("points="));
    let report = ok(mvs(&["eval", "--recon", s(&cloud), "--gt", s(&project.join("gt.ply")), "--threshold", "0.005"]));
    let f = value(&report, "f_score");
    assert!(f > 0.5, "{report}");
    assert!(read_ply(&cloud).unwrap().colors.is_some());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mvs(&["synth", "--out", "x", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(mvs(&["teleport"]).status.code(), Some(2));
    assert_eq!(mvs(&["fuse", "--in", "x", "--filter", "sideways", "--out", "y"]).status.code(), Some(2));
    assert_eq!(mvs(&[]).status.code(), Some(2));
}

#[test]
fn module_errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvs(&["fuse", "--in", s(dir.path()), "--out", s(&dir.path().join("c.ply"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let project = dir.path().join("p");
    ok(mvs(&["synth", "--size", "16x12", "--views", "3", "--out", s(&project)]));
    let out = mvs(&["depth", "--in", s(&project), "--features", "drenet", "--out", s(&project)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--weights"));
}

#[test]
fn both_filters_write_valid_clouds_from_the_same_depths() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("p");
    // Perturbed ground truth written straight into depths/.
    ok(mvs(&[
        "synth", "--scene", "sphere", "--views", "5", "--size", "32x24", "--seed", "1", "--out", s(&project),
        "--noise-sigma", "0.0005", "--outlier-frac", "0.1",
    ]));
    assert!(read_depth(&project.join("depths/00000000.pfm")).unwrap().valid_count() > 0);
    let mut counts = Vec::new();
    for (filter, fmt) in [("dynamic", "ascii"), ("fixed", "binary")] {
        let cloud = dir.path().join(format!("{filter}.ply"));
        ok(mvs(&["fuse", "--in", s(&project), "--filter", filter, "--format", fmt, "--out", s(&cloud)]));
        let c = read_ply(&cloud).unwrap();
        assert!(!c.is_empty());
        assert!(c.points.iter().all(|p| p.coords.norm() < 1.0));
        counts.push(c.len());
    }
    assert_ne!(counts[0], 0);
}

#[test]
fn runs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut clouds = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let project = dir.path().join(format!("p{k}"));
        let cloud = dir.path().join(format!("c{k}.ply"));
        ok(mvs_threads(threads, &["synth", "--size", "32x24", "--seed", "9", "--out", s(&project)]));
        ok(mvs_threads(threads, &["depth", "--in", s(&project), "--num-depths", "16", "--out", s(&project)]));
        ok(mvs_threads(threads, &["fuse", "--in", s(&project), "--out", s(&cloud)]));
        clouds.push(std::fs::read(&cloud).unwrap());
    }
    assert!(!clouds[0].is_empty());
    assert_eq!(clouds[0], clouds[1]);
    assert_eq!(clouds[1], clouds[2]);
}

#[test]
fn learned_modules_run_from_a_weight_file() {
    let dir = tempfile::tempdir().unwrap();
    let project = dir.path().join("p");
    let weights = dir.path().join("model.mvsw");
    write_weights(
        &weights,
        &ModelWeights {
            features: Some(DrenetWeights::seeded(1)),
            regularizer: Some(HuLstmWeights::seeded(2)),
        },
    )
    .unwrap();
    ok(mvs(&["synth", "--size", "12x10", "--views", "3", "--out", s(&project)]));
    ok(mvs(&[
        "depth", "--in", s(&project), "--views", "3", "--num-depths", "4", "--depth-mode", "inverse", "--features",
        "drenet", "--weights", s(&weights), "--regularizer", "hulstm", "--out", s(&project),
    ]));
    let d = read_depth(&project.join("depths/00000002.pfm")).unwrap();
    assert_eq!((d.width(), d.height(), d.valid_count()), (12, 10, 120));
}

#[test]
fn check_passes() {
    let out = ok(mvs(&["check"]));
    assert!(out.lines().count() >= 5);
    assert!(out.lines().all(|l| l.starts_with("PASS ")), "{out}");
}
