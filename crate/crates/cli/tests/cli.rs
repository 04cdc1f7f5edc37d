use std::path::Path;
use std::process::{Command, Output};

use scatterkit::dataset::{rasterize, sample_scene, scale_to_max};
use scatterkit::forward::{add_noise, ForwardSolver};
use scatterkit::imaging::imaging_matrix;
use scatterkit::inversion::{projected_landweber, ReconstructionConfig};
use scatterkit::io;
use scatterkit::support::{extract_support, SupportExtractor};
use scatterkit::{ContrastField, DirectionSet, Grid};

const CONFIG: &str = "\
rho = 3.0
n_inv = 16
p1 = 8
q1 = 4
delta = 0.05
seed = 3

[reconstruction]
k0 = 6.0
iters_projected = 3
iters_variational = 3
";

fn scatterkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatterkit"))
        .current_dir(dir)
        .arg("--config")
        .arg("run.toml")
        .args(args)
        .env_remove("SCATTERKIT_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = scatterkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> (tempfile::TempDir, ContrastField<f64>) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let grid = Grid::new(3.0, 16).unwrap();
    let m = scale_to_max(&rasterize(&sample_scene(4, 3.0).unwrap(), &grid).unwrap(), 1.0).unwrap();
    io::save_contrast(&dir.path().join("truth.cplx1"), &m, serde_json::Value::Null).unwrap();
    (dir, m)
}

#[test]
fn file_pipeline_equals_in_memory_pipeline() {
    let (dir, m) = setup();
    let d = dir.path();
    ok(d, &["simulate", "--truth", "truth.cplx1", "--out", "data_k.cplx1"]);
    ok(d, &["simulate", "--truth", "truth.cplx1", "--out", "data_k0.cplx1", "--k", "6", "--p", "16", "--q", "8", "--seed", "4"]);
    ok(d, &["image", "--data", "data_k0.cplx1", "--out", "image.real1"]);
    ok(d, &["extract", "--image", "image.real1", "--out", "mask.real1"]);
    ok(d, &["reconstruct", "--data", "data_k.cplx1", "--mask", "mask.real1", "--algorithm", "projected", "--out", "rec.cplx1", "--truth", "truth.cplx1"]);
    let e: f64 = ok(d, &["eval", "--reconstruction", "rec.cplx1", "--truth", "truth.cplx1", "--report", "report.csv"]).trim().parse().unwrap();

    let cfg = ReconstructionConfig {
        k0: 6.0,
        iters_projected: 3,
        iters_variational: 3,
        ..ReconstructionConfig::default()
    };
    let grid = *m.grid();
    let data_k = ForwardSolver::new(grid, 1.0, cfg.solver).unwrap().far_field(&m, DirectionSet::new(4).unwrap(), DirectionSet::new(8).unwrap()).unwrap();
    let data_k = add_noise(&data_k, 0.05, 3).unwrap();
    let data_k0 = ForwardSolver::new(grid, 6.0, cfg.solver).unwrap().far_field(&m, DirectionSet::new(8).unwrap(), DirectionSet::new(16).unwrap()).unwrap();
    let data_k0 = add_noise(&data_k0, 0.05, 4).unwrap();
    let image = imaging_matrix(&data_k0, &grid);
    let mask = extract_support(&SupportExtractor::classical(), &image).unwrap();
    let (rec, trace) = projected_landweber(&data_k, &mask, &cfg).unwrap();

    assert_eq!(io::load_far_field::<f64>(&d.join("data_k.cplx1")).unwrap(), data_k);
    assert_eq!(io::load_imaging::<f64>(&d.join("image.real1")).unwrap(), image);
    assert_eq!(io::load_mask::<f64>(&d.join("mask.real1")).unwrap(), mask);
    assert_eq!(io::load_contrast::<f64>(&d.join("rec.cplx1")).unwrap(), rec);
    assert_eq!(e, scatterkit::inversion::contrast_error(&m, &rec).unwrap());

    let csv = std::fs::read_to_string(d.join("rec.cplx1.trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + trace.len());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rec.cplx1.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "reconstruct");
    assert_eq!(manifest["config"]["reconstruction"]["iters_projected"], 3);
    assert!(manifest["inputs"]["mask.real1"].is_string());
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn zero_truth_gives_zero_data() {
    let (dir, m) = setup();
    let zero = ContrastField::zeros(*m.grid());
    io::save_contrast(&dir.path().join("zero.cplx1"), &zero, serde_json::Value::Null).unwrap();
    ok(dir.path(), &["simulate", "--truth", "zero.cplx1", "--out", "u.cplx1"]);
    let u = io::load_far_field::<f64>(&dir.path().join("u.cplx1")).unwrap();
    assert!(u.values().iter().all(|z| z.norm() == 0.0));
}

#[test]
fn exports() {
    let (dir, _) = setup();
    let d = dir.path();
    ok(d, &["simulate", "--truth", "truth.cplx1", "--out", "u.cplx1", "--k", "6", "--p", "16", "--q", "8"]);
    ok(d, &["image", "--data", "u.cplx1", "--out", "image.real1"]);
    ok(d, &["extract", "--image", "image.real1", "--out", "mask.real1", "--method", "oracle", "--truth", "truth.cplx1"]);
    ok(d, &["export", "--input", "mask.real1", "--out", "mask.pgm"]);
    let pgm = std::fs::read(d.join("mask.pgm")).unwrap();
    let body = &pgm[b"P5\n16 16\n65535\n".len()..];
    let mut levels: Vec<u16> = body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    levels.sort();
    levels.dedup();
    assert_eq!(levels, vec![0, 65535]);
    assert!(d.join("mask.pgm.json").exists());

    ok(d, &["export", "--input", "image.real1", "--out", "image.csv"]);
    let back = io::decode_csv(&std::fs::read_to_string(d.join("image.csv")).unwrap()).unwrap();
    let (orig, _) = io::read_real1(&d.join("image.real1")).unwrap();
    assert!(back.iter().zip(orig.iter()).all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs().max(1.0)));

    ok(d, &["export", "--input", "truth.cplx1", "--out", "truth.pgm"]);
}

#[test]
fn exit_codes() {
    let (dir, _) = setup();
    let d = dir.path();
    // Bad flag value and unknown algorithm: configuration errors.
    assert_eq!(scatterkit(d, &["simulate", "--truth", "truth.cplx1", "--out", "u.cplx1", "--delta", "-1"]).status.code(), Some(2));
    assert_eq!(scatterkit(d, &["reconstruct", "--data", "x", "--out", "y", "--algorithm", "magic"]).status.code(), Some(2));
    ok(d, &["simulate", "--truth", "truth.cplx1", "--out", "u.cplx1"]);
    assert_eq!(scatterkit(d, &["reconstruct", "--data", "u.cplx1", "--out", "r.cplx1", "--algorithm", "projected"]).status.code(), Some(2));
    // Missing and corrupt files: I/O errors.
    assert_eq!(scatterkit(d, &["image", "--data", "missing.cplx1", "--out", "i.real1"]).status.code(), Some(4));
    std::fs::write(d.join("junk.cplx1"), b"not a matrix").unwrap();
    assert_eq!(scatterkit(d, &["image", "--data", "junk.cplx1", "--out", "i.real1"]).status.code(), Some(4));
    // A huge stepsize diverges: numerical failure.
    assert_eq!(
        scatterkit(d, &["reconstruct", "--data", "u.cplx1", "--out", "r.cplx1", "--algorithm", "landweber", "--mu", "1e6", "--iters", "5"]).status.code(),
        Some(3)
    );
    std::fs::write(d.join("bad.toml"), "unknown_key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scatterkit"))
        .current_dir(d)
        .args(["--config", "bad.toml", "export", "--input", "u.cplx1", "--out", "u.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_smoke_with_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "n_inv = 16\nn_fwd = 48\np1 = 8\nq1 = 4\np2 = 16\nq2 = 8\n[reconstruction]\nk0 = 6.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scatterkit"))
        .current_dir(d)
        .env("SCATTERKIT_JOBS", "1")
        .args(["--config", "run.toml", "gen-data", "--out", "ds", "--count", "1", "--train", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (input, _) = io::read_real1(&d.join("ds/pairs/0.input.real1")).unwrap();
    assert_eq!(input.dim(), (16, 16));
    let manifest = scatterkit::dataset::read_manifest(&d.join("ds")).unwrap();
    assert_eq!(manifest.train, vec![0]);
}
