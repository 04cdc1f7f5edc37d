//! Restarted GMRES for matrix-free complex linear operators.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

/// `y = A x` for a square operator acting on flat complex vectors.
pub trait LinearOperator<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[Cplx<T>], y: &mut [Cplx<T>]);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresConfig {
    /// Krylov subspace dimension between restarts.
    pub restart: usize,
    /// Cap on the total number of operator applications inside the Arnoldi loop.
    pub max_iters: usize,
    /// Relative residual `‖b − A x‖ / ‖b‖` to reach.
    pub tol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 60,
            max_iters: 2000,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dotc<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2<T: Real>(a: &[Cplx<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// `ys[i] = A xs[i]` for several vectors at once. Operators whose cost is
/// dominated by a shared factorization implement this directly.
pub trait BatchOperator<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply_batch(&self, xs: &[&[Cplx<T>]], ys: &mut [Vec<Cplx<T>>]);
}

/// Adapter applying a [`LinearOperator`] column by column.
pub struct Columns<'a, T: Real>(pub &'a dyn LinearOperator<T>);

impl<T: Real> BatchOperator<T> for Columns<'_, T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_batch(&self, xs: &[&[Cplx<T>]], ys: &mut [Vec<Cplx<T>>]) {
        xs.par_iter().zip(ys.par_iter_mut()).for_each(|(x, y)| self.0.apply(x, y));
    }
}

#[cfg(test)]
fn residual<T: Real>(op: &dyn LinearOperator<T>, b: &[Cplx<T>], x: &[Cplx<T>], r: &mut [Cplx<T>]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

enum Want {
    /// `A x` for the true residual at a restart.
    Residual,
    /// `A v_k` for the next Arnoldi step.
    Arnoldi(usize),
}

/// One restarted GMRES run, driven one operator application at a time.
struct State<'b, T: Real> {
    b: &'b [Cplx<T>],
    x: Vec<Cplx<T>>,
    bnorm: T,
    tol: T,
    restart: usize,
    max_iters: usize,
    basis: Vec<Vec<Cplx<T>>>,
    // Column-major Hessenberg: hess[j] holds column j (length restart + 1).
    hess: Vec<Vec<Cplx<T>>>,
    cs: Vec<T>,
    sn: Vec<Cplx<T>>,
    g: Vec<Cplx<T>>,
    total: usize,
    want: Want,
}

impl<'b, T: Real> State<'b, T> {
    fn new(b: &'b [Cplx<T>], x: Vec<Cplx<T>>, cfg: &GmresConfig) -> Self {
        let zero = Cplx::new(T::zero(), T::zero());
        let m = cfg.restart;
        Self {
            b,
            x,
            bnorm: norm2(b),
            tol: T::lit(cfg.tol),
            restart: m,
            max_iters: cfg.max_iters,
            basis: Vec::with_capacity(m + 1),
            hess: vec![vec![zero; m + 1]; m],
            cs: vec![T::zero(); m],
            sn: vec![zero; m],
            g: vec![zero; m + 1],
            total: 0,
            want: Want::Residual,
        }
    }

    fn input(&self) -> &[Cplx<T>] {
        match self.want {
            Want::Residual => &self.x,
            Want::Arnoldi(k) => &self.basis[k],
        }
    }

    /// Consume `A · input()`; returns the outcome once the run is over.
    fn advance(&mut self, mut w: Vec<Cplx<T>>) -> Option<Result<GmresStats>> {
        let zero = Cplx::new(T::zero(), T::zero());
        match self.want {
            Want::Residual => {
                for (ri, bi) in w.iter_mut().zip(self.b) {
                    *ri = bi - *ri;
                }
                let beta = norm2(&w);
                let rel = beta / self.bnorm;
                if rel <= self.tol {
                    return Some(Ok(GmresStats {
                        iterations: self.total,
                        relative_residual: rel.as_f64(),
                    }));
                }
                if self.total >= self.max_iters {
                    return Some(Err(Error::NotConverged {
                        iterations: self.total,
                        residual: rel.as_f64(),
                    }));
                }
                self.basis.clear();
                self.basis.push(w.into_iter().map(|v| v / beta).collect());
                self.g.iter_mut().for_each(|v| *v = zero);
                self.g[0] = Cplx::new(beta, T::zero());
                self.want = Want::Arnoldi(0);
                None
            }
            Want::Arnoldi(k) => {
                self.total += 1;
                // Modified Gram-Schmidt.
                let col = &mut self.hess[k];
                for (j, v) in self.basis.iter().enumerate() {
                    let hjk = dotc(v, &w);
                    col[j] = hjk;
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= hjk * vi;
                    }
                }
                let hnext = norm2(&w);
                col[k + 1] = Cplx::new(hnext, T::zero());

                let (cs, sn) = (&mut self.cs, &mut self.sn);
                for j in 0..k {
                    let t = col[j] * cs[j] + sn[j] * col[j + 1];
                    col[j + 1] = col[j + 1] * cs[j] - sn[j].conj() * col[j];
                    col[j] = t;
                }
                let a = col[k];
                let bb = col[k + 1];
                let r_ab = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                if a.norm() == T::zero() {
                    cs[k] = T::zero();
                    sn[k] = Cplx::new(T::one(), T::zero());
                } else {
                    let phase = a / a.norm();
                    cs[k] = a.norm() / r_ab;
                    sn[k] = phase * bb.conj() / r_ab;
                }
                col[k] = col[k] * cs[k] + sn[k] * col[k + 1];
                col[k + 1] = zero;
                self.g[k + 1] = -sn[k].conj() * self.g[k];
                self.g[k] = self.g[k] * cs[k];

                let estimate = self.g[k + 1].norm() / self.bnorm;
                let done = estimate <= self.tol * T::lit(0.5)
                    || hnext == T::zero()
                    || self.total >= self.max_iters
                    || k + 1 == self.restart;
                if done {
                    self.update(k + 1);
                    self.want = Want::Residual;
                } else {
                    self.basis.push(w.into_iter().map(|v| v / hnext).collect());
                    self.want = Want::Arnoldi(k + 1);
                }
                None
            }
        }
    }

    /// Back substitution for the triangular least-squares system, then `x += V y`.
    fn update(&mut self, k_done: usize) {
        let zero = Cplx::new(T::zero(), T::zero());
        let mut y = vec![zero; k_done];
        for i in (0..k_done).rev() {
            let mut s = self.g[i];
            for j in (i + 1)..k_done {
                s -= self.hess[j][i] * y[j];
            }
            y[i] = s / self.hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in self.x.iter_mut().zip(&self.basis[j]) {
                *xi += *yj * vi;
            }
        }
    }
}

fn check(n: usize, b: &[Cplx<impl Real>], x: &[Cplx<impl Real>], cfg: &GmresConfig) -> Result<()> {
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch {
            what: "gmres vectors",
            expected: (n, n),
            found: (b.len(), x.len()),
        });
    }
    if cfg.restart == 0 || !(cfg.tol > 0.0) {
        return Err(Error::invalid("gmres needs restart >= 1 and tol > 0"));
    }
    Ok(())
}

/// Solve `A x = b` starting from the initial guess already stored in `x`.
///
/// Convergence is judged on the true residual, recomputed at every restart
/// and at exit, so a successful return guarantees `‖b − A x‖ ≤ tol·‖b‖`.
pub fn gmres<T: Real>(
    op: &dyn LinearOperator<T>,
    b: &[Cplx<T>],
    x: &mut [Cplx<T>],
    cfg: &GmresConfig,
) -> Result<GmresStats> {
    let n = op.dim();
    check(n, b, x, cfg)?;
    if norm2(b) == T::zero() {
        x.iter_mut().for_each(|v| *v = Cplx::new(T::zero(), T::zero()));
        return Ok(GmresStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut state = State::new(b, x.to_vec(), cfg);
    loop {
        let mut w = vec![Cplx::new(T::zero(), T::zero()); n];
        op.apply(state.input(), &mut w);
        if let Some(out) = state.advance(w) {
            x.copy_from_slice(&state.x);
            return out;
        }
    }
}

/// [`gmres`] for several right-hand sides sharing one operator, each with its
/// own configuration. The runs advance in lockstep so every step makes a
/// single batched operator call; finished runs drop out.
pub fn gmres_batch<T: Real>(
    op: &dyn BatchOperator<T>,
    bs: &[&[Cplx<T>]],
    xs: &mut [Vec<Cplx<T>>],
    cfgs: &[GmresConfig],
) -> Vec<Result<GmresStats>> {
    let n = op.dim();
    let zero = Cplx::new(T::zero(), T::zero());
    let mut out: Vec<Option<Result<GmresStats>>> = Vec::with_capacity(bs.len());
    let mut states: Vec<(usize, State<T>)> = Vec::new();
    assert_eq!(bs.len(), cfgs.len(), "one configuration per right-hand side");
    for (i, ((b, x), cfg)) in bs.iter().zip(xs.iter_mut()).zip(cfgs).enumerate() {
        if let Err(e) = check(n, b, x, cfg) {
            out.push(Some(Err(e)));
        } else if norm2(b) == T::zero() {
            x.iter_mut().for_each(|v| *v = zero);
            out.push(Some(Ok(GmresStats {
                iterations: 0,
                relative_residual: 0.0,
            })));
        } else {
            out.push(None);
            states.push((i, State::new(b, std::mem::take(x), cfg)));
        }
    }
    while !states.is_empty() {
        let mut ws = vec![vec![zero; n]; states.len()];
        {
            let inputs: Vec<&[Cplx<T>]> = states.iter().map(|(_, s)| s.input()).collect();
            op.apply_batch(&inputs, &mut ws);
        }
        let results: Vec<Option<Result<GmresStats>>> = states
            .par_iter_mut()
            .zip(ws.into_par_iter())
            .map(|((_, s), w)| s.advance(w))
            .collect();
        let mut keep = Vec::with_capacity(states.len());
        for ((i, s), r) in states.into_iter().zip(results) {
            match r {
                Some(r) => {
                    xs[i] = s.x;
                    out[i] = Some(r);
                }
                None => keep.push((i, s)),
            }
        }
        states = keep;
    }
    out.into_iter().map(|r| r.expect("every run finishes")).collect()
}
