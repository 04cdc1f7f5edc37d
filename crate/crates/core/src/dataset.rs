//! Random ellipse phantoms and the paired training data for the support network.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{ContrastField, FarFieldMatrix};
use crate::forward::{add_noise, ForwardSolver, SolverOptions};
use crate::grid::{DirectionSet, Grid};
use crate::imaging::{imaging_matrix, normalize};
use crate::io;
use crate::scalar::{Cplx, Real};
use crate::support::support_of;

/// Minimum gap between two ellipses of a scene.
pub const MARGIN: f64 = 0.1;
/// Whole-scene redraws before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub value: f64,
}

impl Ellipse {
    /// Pixel-center membership test after undoing rotation and translation.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let (dx, dy) = (x[0] - self.center[0], x[1] - self.center[1]);
        let (s, c) = self.theta.sin_cos();
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    fn boundary(&self, count: usize) -> Vec<[f64; 2]> {
        let (s, c) = self.theta.sin_cos();
        (0..count)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / count as f64;
                let (u, v) = (self.a * t.cos(), self.b * t.sin());
                [self.center[0] + c * u - s * v, self.center[1] + s * u + c * v]
            })
            .collect()
    }

    /// Ramanujan's perimeter approximation; only used to bound sample spacing.
    fn perimeter(&self) -> f64 {
        let (a, b) = (self.a, self.b);
        std::f64::consts::PI * (3.0 * (a + b) - ((3.0 * a + b) * (a + 3.0 * b)).sqrt())
    }
}

/// Conservative check that the gap between two ellipses is at least `margin`.
///
/// Boundary samples are at most `s` apart along each curve, so a sampled
/// distance of `margin + s` guarantees a true distance of `margin`.
pub fn separated(e1: &Ellipse, e2: &Ellipse, margin: f64) -> bool {
    let d = ((e1.center[0] - e2.center[0]).powi(2) + (e1.center[1] - e2.center[1]).powi(2)).sqrt();
    if d >= e1.a + e2.a + margin {
        return true;
    }
    if d < e1.b + e2.b || e1.contains(e2.center) || e2.contains(e1.center) {
        return false;
    }
    const SAMPLES: usize = 512;
    let spacing = e1.perimeter().max(e2.perimeter()) / SAMPLES as f64 * 1.01;
    let need = (margin + spacing).powi(2);
    let p1 = e1.boundary(SAMPLES);
    let p2 = e2.boundary(SAMPLES);
    p1.iter()
        .all(|x| p2.iter().all(|y| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) >= need))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipseScene {
    pub rho: f64,
    pub ellipses: Vec<Ellipse>,
}

impl EllipseScene {
    pub fn is_feasible(&self) -> bool {
        let inside = self.ellipses.iter().all(|e| e.center[0].hypot(e.center[1]) + e.a <= self.rho);
        let disjoint = self.ellipses.iter().enumerate().all(|(i, e)| {
            self.ellipses[i + 1..].iter().all(|f| separated(e, f, MARGIN))
        });
        inside && disjoint
    }
}

/// Two or three disjoint ellipses in `B_rho`, redrawn as a whole until feasible.
pub fn sample_scene(seed: u64, rho: f64) -> Result<EllipseScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    for _ in 0..MAX_REJECTIONS {
        let count = rng.gen_range(2..=3);
        let ellipses = (0..count)
            .map(|_| {
                let a = rng.gen_range(0.6..1.2);
                let b = rng.gen_range(0.3..0.6);
                let theta = rng.gen_range(0.0..tau);
                let value = rng.gen_range(1.0..3.0);
                let r = (rho - a).max(0.0) * rng.gen::<f64>().sqrt();
                let phi = rng.gen_range(0.0..tau);
                Ellipse {
                    center: [r * phi.cos(), r * phi.sin()],
                    a,
                    b,
                    theta,
                    value,
                }
            })
            .collect();
        let scene = EllipseScene { rho, ellipses };
        if scene.is_feasible() {
            return Ok(scene);
        }
    }
    Err(Error::SamplingExhausted(MAX_REJECTIONS))
}

/// Piecewise-constant contrast sampled at pixel centers, exactly zero elsewhere.
pub fn rasterize<T: Real>(scene: &EllipseScene, grid: &Grid<T>) -> Result<ContrastField<T>> {
    let n = grid.n();
    let values = Array2::from_shape_fn((n, n), |(i, j)| {
        let c = grid.center(i, j);
        let x = [c[0].as_f64(), c[1].as_f64()];
        scene
            .ellipses
            .iter()
            .find(|e| e.contains(x))
            .map_or(Cplx::new(T::zero(), T::zero()), |e| Cplx::new(T::lit(e.value), T::zero()))
    });
    ContrastField::new(*grid, values)
}

/// `m · target / ‖m‖_max`.
pub fn scale_to_max<T: Real>(m: &ContrastField<T>, target: T) -> Result<ContrastField<T>> {
    if !(target > T::zero()) {
        return Err(Error::invalid(format!("target max must be positive, got {target}")));
    }
    if m.is_zero() {
        return Err(Error::invalid("cannot scale a zero contrast"));
    }
    Ok(m.scaled(target / m.max_modulus()))
}

/// Parameters of the training-set pipeline. Defaults are the desk-scale run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    /// Samples in the training split; the rest are validation. Defaults to 90%.
    pub train: Option<usize>,
    pub seed: u64,
    pub delta: f64,
    pub rho: f64,
    pub n_inv: usize,
    pub n_fwd: usize,
    pub k: f64,
    pub k0: f64,
    pub p1: usize,
    pub q1: usize,
    pub p2: usize,
    pub q2: usize,
    pub solver: SolverOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 300,
            train: None,
            seed: 0,
            delta: 0.05,
            rho: 3.0,
            n_inv: 80,
            n_fwd: 320,
            k: 1.0,
            k0: 15.0,
            p1: 32,
            q1: 16,
            p2: 128,
            q2: 64,
            solver: SolverOptions::default(),
        }
    }
}

impl DatasetConfig {
    pub fn train_count(&self) -> usize {
        self.train.unwrap_or(self.count * 9 / 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count() > self.count {
            return Err(Error::invalid("training split larger than the sample count"));
        }
        if !(self.delta >= 0.0) || !(self.k > 0.0) || !(self.k0 > 0.0) {
            return Err(Error::invalid("delta must be >= 0 and wave numbers positive"));
        }
        Grid::new(self.rho, self.n_inv)?;
        Grid::new(self.rho, self.n_fwd)?;
        for c in [self.p1, self.q1, self.p2, self.q2] {
            DirectionSet::new(c)?;
        }
        Ok(())
    }
}

/// Seeds that fully determine one sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeeds {
    pub scene: u64,
    pub noise_k: u64,
    pub noise_k0: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl SampleSeeds {
    pub fn for_index(base: u64, index: usize) -> Self {
        let scene = base.wrapping_add(index as u64);
        Self {
            scene,
            noise_k: splitmix(scene ^ 0x6b),
            noise_k0: splitmix(scene ^ 0x6b30),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub seeds: SampleSeeds,
    pub scene: EllipseScene,
    /// File name relative to the dataset root, and its sha256.
    pub files: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub config: DatasetConfig,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub samples: Vec<SampleEntry>,
}

pub const MANIFEST_FORMAT: &str = "scatterkit-dataset-1";

fn relative_files(index: usize) -> [String; 6] {
    [
        format!("pairs/{index}.input.real1"),
        format!("pairs/{index}.target.real1"),
        format!("truth/{index}.cplx1"),
        format!("truth/{index}.fwd.cplx1"),
        format!("farfield/{index}.k.cplx1"),
        format!("farfield/{index}.k0.cplx1"),
    ]
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn existing_entry(root: &Path, index: usize, seeds: SampleSeeds, scene: &EllipseScene) -> Option<SampleEntry> {
    let names = relative_files(index);
    let input = root.join(&names[0]);
    let (_, meta) = io::read_real1(&input).ok()?;
    if meta.get("seeds")? != &serde_json::to_value(seeds).ok()? {
        return None;
    }
    let files = names
        .iter()
        .map(|n| sha256_file(&root.join(n)).ok().map(|h| (n.clone(), h)))
        .collect::<Option<Vec<_>>>()?;
    Some(SampleEntry {
        index,
        seeds,
        scene: scene.clone(),
        files,
    })
}

/// One generated sample held in memory.
#[derive(Clone, Debug)]
pub struct Sample {
    pub scene: EllipseScene,
    /// Normalized imaging matrix on the inversion grid.
    pub input: Array2<f64>,
    /// Support mask on the inversion grid, as 0/1.
    pub target: Array2<f64>,
    pub truth: ContrastField<f64>,
    pub truth_fwd: ContrastField<f64>,
    pub data_k: FarFieldMatrix<f64>,
    pub data_k0: FarFieldMatrix<f64>,
}

/// Run the whole pipeline for one seed tuple.
pub fn generate_sample(cfg: &DatasetConfig, seeds: SampleSeeds) -> Result<Sample> {
    let scene = sample_scene(seeds.scene, cfg.rho)?;
    let fine = Grid::new(cfg.rho, cfg.n_fwd)?;
    let coarse = Grid::new(cfg.rho, cfg.n_inv)?;
    let truth = rasterize(&scene, &fine)?;
    let at_k0 = ForwardSolver::new(fine, cfg.k0, cfg.solver)?.far_field(
        &truth,
        DirectionSet::new(cfg.q2)?,
        DirectionSet::new(cfg.p2)?,
    )?;
    let at_k0 = add_noise(&at_k0, cfg.delta, seeds.noise_k0)?;
    let at_k = ForwardSolver::new(fine, cfg.k, cfg.solver)?.far_field(
        &truth,
        DirectionSet::new(cfg.q1)?,
        DirectionSet::new(cfg.p1)?,
    )?;
    let at_k = add_noise(&at_k, cfg.delta, seeds.noise_k)?;
    let input = normalize(imaging_matrix(&at_k0, &coarse).values());
    let truth_inv = rasterize(&scene, &coarse)?;
    Ok(Sample {
        target: support_of(&truth_inv).to_real(),
        input,
        scene,
        truth: truth_inv,
        truth_fwd: truth,
        data_k: at_k,
        data_k0: at_k0,
    })
}

fn write_sample(root: &Path, cfg: &DatasetConfig, index: usize, seeds: SampleSeeds) -> Result<SampleEntry> {
    let s = generate_sample(cfg, seeds)?;
    let names = relative_files(index);
    let path = |i: usize| root.join(&names[i]);
    let grid_meta = json!({"rho": cfg.rho, "n": cfg.n_inv, "seeds": seeds});
    io::write_real1(&path(1), &s.target, &json!({"kind": "mask", "rho": cfg.rho, "n": cfg.n_inv}))?;
    io::save_contrast(&path(2), &s.truth, json!({"seeds": seeds}))?;
    io::save_contrast(&path(3), &s.truth_fwd, json!({"seeds": seeds}))?;
    io::save_far_field(&path(4), &s.data_k, Some(seeds.noise_k))?;
    io::save_far_field(&path(5), &s.data_k0, Some(seeds.noise_k0))?;
    // Written last: its sidecar marks the sample as complete when resuming.
    let mut meta = grid_meta;
    meta["kind"] = json!("normalized-imaging");
    meta["k0"] = json!(cfg.k0);
    meta["delta"] = json!(cfg.delta);
    io::write_real1(&path(0), &s.input, &meta)?;
    let files = names
        .iter()
        .map(|n| Ok((n.clone(), sha256_file(&root.join(n))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleEntry {
        index,
        seeds,
        scene: s.scene,
        files,
    })
}

pub fn manifest_path(root: &Path) -> PathBuf {
    root.join("manifest.json")
}

/// Generate (or complete) a dataset directory. Samples already on disk with
/// matching seeds are kept; the manifest is written atomically at the end.
pub fn generate_training_set(cfg: &DatasetConfig, root: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    for sub in ["pairs", "truth", "farfield"] {
        fs::create_dir_all(root.join(sub))?;
    }
    let mut samples = (0..cfg.count)
        .into_par_iter()
        .map(|index| {
            let seeds = SampleSeeds::for_index(cfg.seed, index);
            let wrap = |e: Error| Error::Sample {
                index,
                source: Box::new(e),
            };
            let scene = sample_scene(seeds.scene, cfg.rho).map_err(wrap)?;
            if let Some(entry) = existing_entry(root, index, seeds, &scene) {
                log::debug!("sample {index} already present");
                return Ok(entry);
            }
            log::info!("generating sample {index}");
            write_sample(root, cfg, index, seeds).map_err(wrap)
        })
        .collect::<Result<Vec<_>>>()?;
    samples.sort_by_key(|s| s.index);
    let train = cfg.train_count();
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        config: cfg.clone(),
        train: (0..train).collect(),
        validation: (train..cfg.count).collect(),
        samples,
    };
    io::write_atomic(&manifest_path(root), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    Ok(serde_json::from_str(&fs::read_to_string(manifest_path(root))?)?)
}
