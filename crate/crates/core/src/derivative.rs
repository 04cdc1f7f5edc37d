//! Fréchet derivative of the far-field map and its adjoint.

use ndarray::Array2;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{check_finite, check_shape, ContrastField, FarFieldMatrix, TotalFieldSet};
use crate::forward::{far_field_of_fields, FarFieldQuadrature, ForwardSolver, System};
use crate::grid::DirectionSet;
use crate::scalar::{Cplx, Real};

/// Total fields of one contrast at one wave number, plus the bound
/// Lippmann–Schwinger system used by the linearized solves.
pub struct LinearizationCache<'a, T: Real> {
    solver: &'a ForwardSolver<T>,
    contrast: ContrastField<T>,
    incident: DirectionSet,
    fields: TotalFieldSet<T>,
    system: System<'a, T>,
    key: String,
}

/// Hex SHA-256 of the grid, wave number, direction count and contrast bytes.
pub fn content_hash<T: Real>(m: &ContrastField<T>, k: T, inc: DirectionSet) -> String {
    let mut h = Sha256::new();
    h.update(m.grid().rho().as_f64().to_le_bytes());
    h.update((m.grid().n() as u64).to_le_bytes());
    h.update(k.as_f64().to_le_bytes());
    h.update((inc.count() as u64).to_le_bytes());
    for z in m.values().iter() {
        h.update(z.re.as_f64().to_le_bytes());
        h.update(z.im.as_f64().to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl<'a, T: Real> LinearizationCache<'a, T> {
    pub fn new(solver: &'a ForwardSolver<T>, m: ContrastField<T>, inc: DirectionSet) -> Result<Self> {
        Self::with_guess(solver, m, inc, None)
    }

    /// Like [`Self::new`], warm-starting the total-field solves from `guess`
    /// (typically the fields of the previous iterate).
    pub fn with_guess(
        solver: &'a ForwardSolver<T>,
        m: ContrastField<T>,
        inc: DirectionSet,
        guess: Option<&TotalFieldSet<T>>,
    ) -> Result<Self> {
        if m.grid() != solver.grid() {
            return Err(Error::invalid("contrast grid differs from the solver grid"));
        }
        let system = solver.system(&m)?;
        let fields = system.total_fields(inc, guess)?;
        let key = content_hash(&m, solver.wave_number(), inc);
        Ok(Self {
            solver,
            contrast: m,
            incident: inc,
            fields,
            system,
            key,
        })
    }

    pub fn contrast(&self) -> &ContrastField<T> {
        &self.contrast
    }

    pub fn fields(&self) -> &TotalFieldSet<T> {
        &self.fields
    }

    pub fn incident(&self) -> DirectionSet {
        self.incident
    }

    pub fn wave_number(&self) -> T {
        self.solver.wave_number()
    }

    pub fn tolerance(&self) -> f64 {
        self.solver.options().tol
    }

    /// Content hash of the linearization point.
    pub fn key(&self) -> &str {
        &self.key
    }

    /// True if this cache was built for exactly `m` at the same wave number.
    pub fn matches(&self, m: &ContrastField<T>) -> bool {
        content_hash(m, self.wave_number(), self.incident) == self.key
    }

    /// `F(m)` from the cached total fields.
    pub fn far_field(&self, obs: DirectionSet) -> FarFieldMatrix<T> {
        let quad = FarFieldQuadrature::new(self.solver.grid(), self.wave_number(), obs);
        far_field_of_fields(&quad, &self.contrast, &self.fields, self.incident, obs, self.wave_number())
    }

    fn k2(&self) -> T {
        self.wave_number() * self.wave_number()
    }

    /// `F'(m) q`, a `P × Q` matrix.
    pub fn frechet_apply(&self, q: &Array2<Cplx<T>>, obs: DirectionSet) -> Result<Array2<Cplx<T>>> {
        let grid = self.solver.grid();
        check_shape("perturbation", q, grid.shape())?;
        check_finite("perturbation", q)?;
        let quad = FarFieldQuadrature::new(grid, self.wave_number(), obs);
        let pot = self.solver.potential();
        let k2 = self.k2();
        let n2 = grid.n() * grid.n();
        let zero = Cplx::new(T::zero(), T::zero());
        let products: Vec<(Vec<Cplx<T>>, Vec<Cplx<T>>)> = self
            .fields
            .fields()
            .par_iter()
            .map(|u| {
                let qu: Vec<_> = q.iter().zip(u.iter()).map(|(a, b)| a * b).collect();
                let mut rhs = vec![zero; n2];
                pot.apply_slice(&qu, &mut rhs);
                rhs.iter_mut().for_each(|z| *z = *z * k2);
                (qu, rhs)
            })
            .collect();
        let rhs: Vec<&[Cplx<T>]> = products.iter().map(|(_, r)| r.as_slice()).collect();
        let sols = self.system.solve_many(&rhs, None, false);
        let columns = products
            .par_iter()
            .zip(sols)
            .enumerate()
            .map(|(j, ((qu, _), sol))| {
                let (v, _) = sol.map_err(|e| e.in_direction(j))?;
                let density: Vec<_> = self
                    .contrast
                    .values()
                    .iter()
                    .zip(&v)
                    .zip(qu)
                    .map(|((m, v), qu)| m * v + qu)
                    .collect();
                Ok(quad.apply_slice(&density))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros((obs.count(), self.incident.count()));
        for (j, col) in columns.into_iter().enumerate() {
            for (p, v) in col.into_iter().enumerate() {
                out[[p, j]] = v;
            }
        }
        Ok(out)
    }

    /// `F'(m)* r`, the adjoint under unweighted Frobenius inner products.
    pub fn frechet_adjoint_apply(&self, r: &Array2<Cplx<T>>, obs: DirectionSet) -> Result<Array2<Cplx<T>>> {
        self.frechet_adjoint_apply_warm(r, obs, None).map(|(g, _)| g)
    }

    /// [`Self::frechet_adjoint_apply`] with warm starts for the adjoint
    /// solves. Also returns the adjoint solutions, one per direction, for
    /// reuse as the next guess.
    pub fn frechet_adjoint_apply_warm(
        &self,
        r: &Array2<Cplx<T>>,
        obs: DirectionSet,
        guess: Option<&[Vec<Cplx<T>>]>,
    ) -> Result<(Array2<Cplx<T>>, Vec<Vec<Cplx<T>>>)> {
        check_shape("far-field residual", r, (obs.count(), self.incident.count()))?;
        check_finite("far-field residual", r)?;
        if let Some(g) = guess {
            if g.len() != self.incident.count() {
                return Err(Error::invalid("adjoint warm-start count differs from direction count"));
            }
        }
        let grid = self.solver.grid();
        let quad = FarFieldQuadrature::new(grid, self.wave_number(), obs);
        let pot = self.solver.potential();
        let k2 = self.k2();
        let n2 = grid.n() * grid.n();
        let zero = Cplx::new(T::zero(), T::zero());
        let sources: Vec<(Vec<Cplx<T>>, Vec<Cplx<T>>)> = (0..self.incident.count())
            .into_par_iter()
            .map(|j| {
                let col: Vec<_> = r.column(j).iter().copied().collect();
                let g = quad.backproject(&col);
                let b: Vec<_> = self.contrast.values().iter().zip(&g).map(|(m, g)| m.conj() * g).collect();
                (g, b)
            })
            .collect();
        let rhs: Vec<&[Cplx<T>]> = sources.iter().map(|(_, b)| b.as_slice()).collect();
        let guesses: Option<Vec<&[Cplx<T>]>> = guess.map(|g| g.iter().map(Vec::as_slice).collect());
        let sols = self.system.solve_many(&rhs, guesses.as_deref(), true);
        let parts = self
            .fields
            .fields()
            .par_iter()
            .zip(sources.par_iter())
            .zip(sols)
            .enumerate()
            .map(|(j, ((u, (g, _)), sol))| {
                let (w, _) = sol.map_err(|e| e.in_direction(j))?;
                let mut tw = vec![zero; n2];
                pot.apply_adjoint_slice(&w, &mut tw);
                let contrib: Vec<_> = u
                    .iter()
                    .zip(g.iter().zip(&tw))
                    .map(|(u, (g, t))| u.conj() * (g + t * k2))
                    .collect();
                Ok((contrib, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Array2::zeros(grid.shape());
        let mut sols = Vec::with_capacity(parts.len());
        for (contrib, w) in parts {
            for (o, c) in out.iter_mut().zip(contrib) {
                *o += c;
            }
            sols.push(w);
        }
        Ok((out, sols))
    }
}

/// `F'(m) q` for the linearization stored in `cache`.
pub fn frechet_apply<T: Real>(
    cache: &LinearizationCache<'_, T>,
    q: &Array2<Cplx<T>>,
    obs: DirectionSet,
) -> Result<Array2<Cplx<T>>> {
    cache.frechet_apply(q, obs)
}

/// `F'(m)* r` for the linearization stored in `cache`.
pub fn frechet_adjoint_apply<T: Real>(
    cache: &LinearizationCache<'_, T>,
    r: &Array2<Cplx<T>>,
    obs: DirectionSet,
) -> Result<Array2<Cplx<T>>> {
    cache.frechet_adjoint_apply(r, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{frobenius, inner};
    use crate::forward::{born_far_field, SolverOptions};
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<Cplx<f64>> {
        Array2::from_shape_simple_fn((rows, cols), || Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    fn blob(n: usize) -> ContrastField<f64> {
        let g = Grid::new(3.0f64, n).unwrap();
        let v = Array2::from_shape_fn((n, n), |(i, j)| {
            let [x, y] = g.center(i, j);
            if (x - 0.5).powi(2) / 1.2 + (y + 0.3).powi(2) / 0.4 <= 1.0 {
                Cplx::new(1.5, 0.0)
            } else {
                Cplx::new(0.0, 0.0)
            }
        });
        ContrastField::new(g, v).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero() {
        let m = blob(16);
        let solver = ForwardSolver::new(*m.grid(), 1.0, SolverOptions::default()).unwrap();
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(6).unwrap();
        let cache = LinearizationCache::new(&solver, m, inc).unwrap();
        let f = cache.frechet_apply(&Array2::zeros((16, 16)), obs).unwrap();
        assert!(f.iter().all(|z| z.norm() == 0.0));
        let g = cache.frechet_adjoint_apply(&Array2::zeros((6, 4)), obs).unwrap();
        assert!(g.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_contrast_derivative_is_born() {
        let g = Grid::new(3.0f64, 16).unwrap();
        let solver = ForwardSolver::new(g, 1.0, SolverOptions::default()).unwrap();
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(6).unwrap();
        let cache = LinearizationCache::new(&solver, ContrastField::zeros(g), inc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_matrix(16, 16, &mut rng);
        let f = cache.frechet_apply(&q, obs).unwrap();
        let qf = ContrastField::unconstrained(g, q).unwrap();
        let b = born_far_field(&qf, 1.0, inc, obs).unwrap();
        assert_eq!(&f, b.values());
    }

    #[test]
    fn adjoint_identity_holds() {
        let m = blob(24);
        let solver = ForwardSolver::new(*m.grid(), 1.0, SolverOptions::default()).unwrap();
        let inc = DirectionSet::new(4).unwrap();
        let obs = DirectionSet::new(8).unwrap();
        let cache = LinearizationCache::new(&solver, m, inc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..3 {
            let q = random_matrix(24, 24, &mut rng);
            let r = random_matrix(8, 4, &mut rng);
            let lhs = inner(&cache.frechet_apply(&q, obs).unwrap(), &r);
            let rhs = inner(&q, &cache.frechet_adjoint_apply(&r, obs).unwrap());
            let rel = (lhs - rhs).norm() / (frobenius(&q) * frobenius(&r));
            assert!(rel < 1e-8, "{rel}");
        }
    }

    #[test]
    fn warm_started_adjoint_matches_cold() {
        let m = blob(16);
        let solver = ForwardSolver::new(*m.grid(), 1.0, SolverOptions::with_tol(1e-12)).unwrap();
        let inc = DirectionSet::new(3).unwrap();
        let obs = DirectionSet::new(5).unwrap();
        let cache = LinearizationCache::new(&solver, m, inc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_matrix(5, 3, &mut rng);
        let (cold, sols) = cache.frechet_adjoint_apply_warm(&r, obs, None).unwrap();
        let (warm, _) = cache.frechet_adjoint_apply_warm(&r, obs, Some(&sols)).unwrap();
        assert!(frobenius(&(&cold - &warm)) < 1e-10 * frobenius(&cold));
    }

    #[test]
    fn cache_key_tracks_contrast() {
        let m = blob(16);
        let solver = ForwardSolver::new(*m.grid(), 1.0, SolverOptions::default()).unwrap();
        let inc = DirectionSet::new(2).unwrap();
        let cache = LinearizationCache::new(&solver, m.clone(), inc).unwrap();
        assert!(cache.matches(&m));
        assert!(!cache.matches(&m.scaled(1.0001)));
        assert_eq!(cache.key().len(), 64);
    }
}
