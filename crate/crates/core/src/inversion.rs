//! Landweber-type reconstructions and the relative error metric.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::derivative::LinearizationCache;
use crate::error::{Error, Result};
use crate::field::{frobenius, ContrastField, FarFieldMatrix};
use crate::forward::{ForwardSolver, SolverOptions};
use crate::grid::Grid;
use crate::scalar::{Cplx, Real};
use crate::support::SupportMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Wave number of the inversion data.
    pub k: f64,
    /// Wave number of the imaging data.
    pub k0: f64,
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Iterations of projected (and plain) Landweber.
    pub iters_projected: usize,
    /// Iterations of variational gradient descent.
    pub iters_variational: usize,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Abort once `max |m_i|` exceeds this.
    pub divergence_limit: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            k: 1.0,
            k0: 15.0,
            mu: 1.0,
            lambda: 1.0,
            gamma: 0.1,
            iters_projected: 100,
            iters_variational: 100,
            solver: SolverOptions::default(),
            seed: 0,
            divergence_limit: 1e3,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.k > 0.0) || !(self.k0 > 0.0) {
            return bad(format!("wave numbers must be > 0 (k = {}, k0 = {})", self.k, self.k0));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad(format!("stepsize mu must be > 0, got {}", self.mu));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.iters_projected == 0 || self.iters_variational == 0 {
            return bad("iteration counts must be >= 1".into());
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return bad(format!("solver tolerance must lie in (0, 1), got {}", self.solver.tol));
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence limit must be > 0".into());
        }
        Ok(())
    }
}

/// Per-iteration record; entry `i` describes the iterate `m_{i+1}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    /// `‖F(m_0) − u^δ‖ = ‖u^δ‖`.
    pub initial_residual: f64,
    /// `‖F(m_{i+1}) − u^δ‖`.
    pub residuals: Vec<f64>,
    /// `½‖m_{i+1} − S ⊙ m_{i+1}‖²` (zero without a mask).
    pub regularization: Vec<f64>,
    /// Relative error against the ground truth, when one was supplied.
    pub errors: Vec<Option<f64>>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,residual,regularization,relative_error\n");
        s.push_str(&format!("0,{:e},0,\n", self.initial_residual));
        for i in 0..self.len() {
            let err = self.errors[i].map(|e| format!("{e:e}")).unwrap_or_default();
            s.push_str(&format!("{},{:e},{:e},{}\n", i + 1, self.residuals[i], self.regularization[i], err));
        }
        s
    }
}

/// The three iterations.
#[derive(Clone, Debug)]
pub enum Method<T: Real> {
    /// `m_{i+1} = m_i − μ F'(m_i)*(F(m_i) − u^δ)`.
    Landweber,
    /// Landweber followed by `m ↦ S ⊙ m`.
    Projected(SupportMask<T>),
    /// Landweber plus `μλ (m_i − S ⊙ m_i)`.
    Variational(SupportMask<T>),
}

/// `S ⊙ f`.
pub fn project<T: Real>(mask: &SupportMask<T>, f: &Array2<Cplx<T>>) -> Result<Array2<Cplx<T>>> {
    if mask.values().dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            what: "projection",
            expected: mask.values().dim(),
            found: f.dim(),
        });
    }
    Ok(Zip::from(f)
        .and(mask.values())
        .map_collect(|&z, &s| if s { z } else { Cplx::new(T::zero(), T::zero()) }))
}

/// `½‖f − S ⊙ f‖²`.
pub fn regularizer<T: Real>(mask: &SupportMask<T>, f: &Array2<Cplx<T>>) -> T {
    let off: T = f
        .iter()
        .zip(mask.values())
        .filter(|(_, &s)| !s)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    off / T::lit(2.0)
}

/// Run `method` from `m_0 = 0` on the grid `grid`. `observer` sees every
/// iterate `m_{i+1}` with its index `i + 1`.
pub fn reconstruct<T: Real>(
    data: &FarFieldMatrix<T>,
    grid: Grid<T>,
    method: &Method<T>,
    iterations: usize,
    cfg: &ReconstructionConfig,
    truth: Option<&ContrastField<T>>,
    mut observer: impl FnMut(usize, &ContrastField<T>),
) -> Result<(ContrastField<T>, IterateTrace)> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be >= 1"));
    }
    let k = data.wave_number();
    if (k.as_f64() - cfg.k).abs() > 1e-12 * cfg.k {
        return Err(Error::invalid(format!(
            "data wave number {} differs from the configured k = {}",
            k, cfg.k
        )));
    }
    let mask = match method {
        Method::Landweber => None,
        Method::Projected(s) | Method::Variational(s) => {
            if s.grid() != &grid {
                return Err(Error::invalid("mask grid differs from the inversion grid"));
            }
            Some(s)
        }
    };
    if let Some(t) = truth {
        if t.grid() != &grid {
            return Err(Error::invalid("ground-truth grid differs from the inversion grid"));
        }
    }
    let (inc, obs) = (data.incident(), data.observation());
    let solver = ForwardSolver::new(grid, k, cfg.solver)?;
    let mu = T::lit(cfg.mu);
    let lambda = T::lit(cfg.lambda);

    let mut trace = IterateTrace {
        initial_residual: data.norm().as_f64(),
        ..IterateTrace::default()
    };
    let mut cache = LinearizationCache::new(&solver, ContrastField::zeros(grid), inc).map_err(|e| e.at_iteration(0))?;
    let mut adjoint_guess: Option<Vec<Vec<Cplx<T>>>> = None;
    for i in 0..iterations {
        let residual = cache.far_field(obs).values() - data.values();
        let (grad, sols) = cache
            .frechet_adjoint_apply_warm(&residual, obs, adjoint_guess.as_deref())
            .map_err(|e| e.at_iteration(i))?;
        adjoint_guess = Some(sols);
        let m = cache.contrast().values();
        let mut next = m - &grad.mapv(|g| g * mu);
        match method {
            Method::Landweber => {}
            Method::Projected(s) => {
                next = project(s, &next)?;
                assert!(
                    Zip::from(&next).and(s.values()).all(|z, &on| on || z.norm_sqr() == T::zero()),
                    "projected iterate leaks outside the mask"
                );
            }
            Method::Variational(s) => {
                let off = m - &project(s, m)?;
                next = next - off.mapv(|z| z * (mu * lambda));
            }
        }
        let max = next.iter().fold(0.0f64, |a, z| {
            let v = z.norm().as_f64();
            if v.is_nan() {
                f64::INFINITY
            } else {
                a.max(v)
            }
        });
        if !(max <= cfg.divergence_limit) {
            return Err(Error::Diverged {
                iteration: i + 1,
                max_modulus: max,
            });
        }
        let next = ContrastField::unconstrained(grid, next)?;
        observer(i + 1, &next);
        let guess = cache.fields().clone();
        cache = LinearizationCache::with_guess(&solver, next, inc, Some(&guess)).map_err(|e| e.at_iteration(i + 1))?;
        let m = cache.contrast();
        trace
            .residuals
            .push(frobenius(&(cache.far_field(obs).values() - data.values())).as_f64());
        trace
            .regularization
            .push(mask.map_or(0.0, |s| regularizer(s, m.values()).as_f64()));
        trace
            .errors
            .push(truth.map(|t| contrast_error(t, m)).transpose()?.map(|e| e.as_f64()));
    }
    Ok((cache.contrast().clone(), trace))
}

/// Projected Landweber for `cfg.iters_projected` iterations.
pub fn projected_landweber<T: Real>(
    data: &FarFieldMatrix<T>,
    mask: &SupportMask<T>,
    cfg: &ReconstructionConfig,
) -> Result<(ContrastField<T>, IterateTrace)> {
    let grid = *mask.grid();
    reconstruct(data, grid, &Method::Projected(mask.clone()), cfg.iters_projected, cfg, None, |_, _| {})
}

/// Plain Landweber for `cfg.iters_projected` iterations.
pub fn landweber<T: Real>(
    data: &FarFieldMatrix<T>,
    grid: Grid<T>,
    cfg: &ReconstructionConfig,
) -> Result<(ContrastField<T>, IterateTrace)> {
    reconstruct(data, grid, &Method::Landweber, cfg.iters_projected, cfg, None, |_, _| {})
}

/// Gradient descent on the mask-regularized functional for
/// `cfg.iters_variational` iterations.
pub fn variational_gd<T: Real>(
    data: &FarFieldMatrix<T>,
    mask: &SupportMask<T>,
    cfg: &ReconstructionConfig,
) -> Result<(ContrastField<T>, IterateTrace)> {
    let grid = *mask.grid();
    reconstruct(data, grid, &Method::Variational(mask.clone()), cfg.iters_variational, cfg, None, |_, _| {})
}

/// `sqrt(mean |(n − n̂)/n|²)` over refractive indices.
pub fn relative_error<T: Real>(n_true: &Array2<Cplx<T>>, n_hat: &Array2<Cplx<T>>) -> Result<T> {
    if n_true.dim() != n_hat.dim() {
        return Err(Error::DimensionMismatch {
            what: "relative error",
            expected: n_true.dim(),
            found: n_hat.dim(),
        });
    }
    if let Some(((i, j), _)) = n_true.indexed_iter().find(|(_, z)| z.norm_sqr() == T::zero()) {
        return Err(Error::invalid(format!("refractive index vanishes at ({i}, {j})")));
    }
    let sum: T = n_true
        .iter()
        .zip(n_hat)
        .map(|(n, h)| ((n - h) / n).norm_sqr())
        .sum();
    Ok((sum / T::from_usize_lossy(n_true.len())).sqrt())
}

/// [`relative_error`] of `n = m + 1`.
pub fn contrast_error<T: Real>(m_true: &ContrastField<T>, m_hat: &ContrastField<T>) -> Result<T> {
    let one = Cplx::new(T::one(), T::zero());
    relative_error(&m_true.values().mapv(|z| z + one), &m_hat.values().mapv(|z| z + one))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::far_field_operator;
    use crate::grid::DirectionSet;
    use crate::support::support_of;

    fn phantom(n: usize) -> ContrastField<f64> {
        let g = Grid::new(3.0f64, n).unwrap();
        let v = Array2::from_shape_fn((n, n), |(i, j)| {
            let [x, y] = g.center(i, j);
            if (x - 0.8).powi(2) / 0.8 + (y + 0.5).powi(2) / 0.3 <= 1.0 {
                Cplx::new(1.0, 0.0)
            } else {
                Cplx::new(0.0, 0.0)
            }
        });
        ContrastField::new(g, v).unwrap()
    }

    fn small_cfg(iters: usize) -> ReconstructionConfig {
        ReconstructionConfig {
            iters_projected: iters,
            iters_variational: iters,
            ..ReconstructionConfig::default()
        }
    }

    #[test]
    fn relative_error_examples() {
        let n = Array2::from_elem((4, 4), Cplx::new(2.0f64, 0.0));
        let h = Array2::from_elem((4, 4), Cplx::new(1.0, 0.0));
        assert_eq!(relative_error(&n, &n).unwrap(), 0.0);
        assert!((relative_error(&n, &h).unwrap() - 0.5).abs() < 1e-15);
        let mut one = Array2::from_elem((80, 80), Cplx::new(1.0f64, 0.0));
        let ones = one.clone();
        one[[3, 7]] = Cplx::new(2.0, 0.0);
        assert!((relative_error(&one, &ones).unwrap() - 0.00625).abs() < 1e-15);
        let mut zero = n.clone();
        zero[[1, 1]] = Cplx::new(0.0, 0.0);
        assert!(relative_error(&zero, &h).is_err());
    }

    #[test]
    fn projection_properties() {
        let g = Grid::new(3.0f64, 8).unwrap();
        let f = Array2::from_shape_fn((8, 8), |(i, j)| Cplx::new(i as f64, j as f64 - 3.0));
        assert_eq!(project(&SupportMask::ones(g), &f).unwrap(), f);
        assert!(project(&SupportMask::zeros(g), &f).unwrap().iter().all(|z| z.norm() == 0.0));
        let mask = SupportMask::new(g, Array2::from_shape_fn((8, 8), |(i, j)| (i + j) % 3 == 0)).unwrap();
        let p = project(&mask, &f).unwrap();
        assert_eq!(project(&mask, &p).unwrap(), p);
    }

    #[test]
    fn regularizer_gradient_matches_finite_difference() {
        let g = Grid::new(3.0f64, 8).unwrap();
        let mask = SupportMask::new(g, Array2::from_shape_fn((8, 8), |(i, j)| i > j)).unwrap();
        let f = Array2::from_shape_fn((8, 8), |(i, j)| Cplx::new((i as f64).sin(), (j as f64).cos()));
        let d = Array2::from_shape_fn((8, 8), |(i, j)| Cplx::new((i * j) as f64 * 0.1, 0.3));
        let grad = &f - &project(&mask, &f).unwrap();
        let h = 1e-5;
        let fd = (regularizer(&mask, &(&f + &(&d * Cplx::new(h, 0.0))))
            - regularizer(&mask, &(&f - &(&d * Cplx::new(h, 0.0)))))
            / (2.0 * h);
        let exact: f64 = grad.iter().zip(d.iter()).map(|(a, b)| (a * b.conj()).re).sum();
        assert!((fd - exact).abs() < 1e-6 * exact.abs());
    }

    #[test]
    fn zero_data_stays_at_zero() {
        let g = Grid::new(3.0f64, 16).unwrap();
        let data = FarFieldMatrix::zeros(1.0, DirectionSet::new(4).unwrap(), DirectionSet::new(8).unwrap());
        let (m, trace) = projected_landweber(&data, &SupportMask::ones(g), &small_cfg(3)).unwrap();
        assert!(m.is_zero());
        assert_eq!(trace.len(), 3);
        assert!(trace.residuals.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn first_landweber_step_is_born_adjoint() {
        let truth = phantom(16);
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(8).unwrap();
        let data = far_field_operator(&truth, 1.0, inc, obs, 1e-10).unwrap();
        let (m1, _) = landweber(&data, *truth.grid(), &small_cfg(1)).unwrap();
        let solver = ForwardSolver::new(*truth.grid(), 1.0, SolverOptions::default()).unwrap();
        let cache = LinearizationCache::new(&solver, ContrastField::zeros(*truth.grid()), inc).unwrap();
        let expect = cache.frechet_adjoint_apply(data.values(), obs).unwrap();
        assert!(frobenius(&(m1.values() - &expect)) <= 1e-14 * frobenius(&expect));
    }

    #[test]
    fn projected_iterates_stay_on_mask_and_residual_decreases() {
        let truth = phantom(24);
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(8).unwrap();
        let data = far_field_operator(&truth, 1.0, inc, obs, 1e-10).unwrap();
        let mask = support_of(&truth);
        let mut off_mask_ok = true;
        let (_, trace) = reconstruct(
            &data,
            *truth.grid(),
            &Method::Projected(mask.clone()),
            5,
            &small_cfg(5),
            Some(&truth),
            |_, m| {
                off_mask_ok &= m.values().iter().zip(mask.values()).all(|(z, &s)| s || z.norm() == 0.0);
            },
        )
        .unwrap();
        assert!(off_mask_ok);
        let mut prev = trace.initial_residual;
        for &r in &trace.residuals {
            assert!(r <= prev * 1.01);
            prev = r;
        }
        assert!(trace.errors.iter().all(|e| e.is_some()));
        assert!(trace.to_csv().lines().count() == 7);
    }

    #[test]
    fn huge_stepsize_is_caught() {
        let truth = phantom(16);
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(8).unwrap();
        let data = far_field_operator(&truth, 1.0, inc, obs, 1e-10).unwrap();
        let cfg = ReconstructionConfig {
            mu: 1e6,
            ..small_cfg(5)
        };
        let err = landweber(&data, *truth.grid(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(ReconstructionConfig::default().validate().is_ok());
        for bad in [
            ReconstructionConfig { mu: 0.0, ..Default::default() },
            ReconstructionConfig { lambda: -1.0, ..Default::default() },
            ReconstructionConfig { gamma: 1.0, ..Default::default() },
            ReconstructionConfig { iters_variational: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
