//! Separation-of-variables solution for a homogeneous penetrable disk
//! centred at the origin.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ContrastField, FarFieldMatrix};
use crate::grid::{DirectionSet, Grid};
use crate::scalar::{Cplx, Real};
use crate::special::{bessel_j, bessel_j_prime, hankel1, hankel1_prime};

/// Coefficients `c_l`, `l = 0..=order`, such that
/// `u^∞(θ_obs, θ_inc) = Σ_{|l| ≤ order} c_|l| e^{il(θ_obs − θ_inc)}`.
fn coefficients(n0: f64, radius: f64, k: f64, order: usize) -> Vec<Complex64> {
    let k1 = k * n0.sqrt();
    let x = k * radius;
    let x1 = k1 * radius;
    let pref = (2.0 / (std::f64::consts::PI * k)).sqrt() * Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
    (0..=order as i32)
        .map(|l| {
            let jl1 = bessel_j(l, x1);
            let djl1 = bessel_j_prime(l, x1);
            let num = bessel_j(l, x) * k1 * djl1 - k * bessel_j_prime(l, x) * jl1;
            let den = hankel1(l, x) * k1 * djl1 - k * hankel1_prime(l, x) * jl1;
            // b_l i^{-l} with b_l = −i^l num/den.
            let c = -pref * num / den;
            // At very high order J underflows and Y overflows; the term is negligible.
            if c.re.is_finite() && c.im.is_finite() {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

fn evaluate(coef: &[Complex64], inc: DirectionSet, obs: DirectionSet) -> Array2<Complex64> {
    Array2::from_shape_fn((obs.count(), inc.count()), |(p, q)| {
        let t = obs.angle::<f64>(p) - inc.angle::<f64>(q);
        let mut acc = coef[0];
        for (l, c) in coef.iter().enumerate().skip(1) {
            acc += c * 2.0 * (l as f64 * t).cos();
        }
        acc
    })
}

/// Far field of a plane wave scattered by the disk `|x| < radius` with
/// refractive index `n0`, by the cylindrical-harmonic series truncated at
/// order `truncation`.
///
/// Fails if `truncation < ⌈k·radius⌉ + 10`, or if adding five more terms
/// changes the result by more than `1e-10` relative to its norm.
pub fn disk_series_far_field<T: Real>(
    n0: T,
    radius: T,
    k: T,
    inc: DirectionSet,
    obs: DirectionSet,
    truncation: usize,
) -> Result<FarFieldMatrix<T>> {
    let (n0f, rf, kf) = (n0.as_f64(), radius.as_f64(), k.as_f64());
    if !(n0f > 0.0) || !(rf > 0.0) || !(kf > 0.0) || !n0f.is_finite() || !rf.is_finite() || !kf.is_finite() {
        return Err(Error::invalid("disk series needs n0 > 0, radius > 0, k > 0"));
    }
    let min_order = (kf * rf).ceil() as usize + 10;
    if truncation < min_order {
        return Err(Error::invalid(format!(
            "truncation {truncation} below the minimum {min_order} for k*radius = {}",
            kf * rf
        )));
    }
    let coef = coefficients(n0f, rf, kf, truncation + 5);
    let lo = evaluate(&coef[..=truncation], inc, obs);
    let hi = evaluate(&coef, inc, obs);
    let scale = hi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tail = (&hi - &lo).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if tail > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SeriesTruncation { tail });
    }
    let values = lo.mapv(|z| Cplx::new(T::lit(z.re), T::lit(z.im)));
    FarFieldMatrix::new(values, k, inc, obs, T::zero())
}

/// Contrast of the disk `|x| < radius` with value `value`, each pixel holding
/// the fraction of its area inside the disk (estimated on a `sub × sub`
/// lattice of sample points) times `value`.
pub fn cell_averaged_disk<T: Real>(grid: Grid<T>, radius: T, value: T, sub: usize) -> Result<ContrastField<T>> {
    if !(radius > T::zero()) || radius >= grid.rho() || sub == 0 {
        return Err(Error::invalid("disk radius must lie in (0, rho) and sub >= 1"));
    }
    let h = grid.h();
    let r2 = radius * radius;
    let subf = T::from_usize_lossy(sub);
    let total = T::from_usize_lossy(sub * sub);
    let values = Array2::from_shape_fn(grid.shape(), |(i, j)| {
        let [cx, cy] = grid.center(i, j);
        let mut inside = 0usize;
        for a in 0..sub {
            let x = cx - h / T::lit(2.0) + (T::from_usize_lossy(a) + T::lit(0.5)) * h / subf;
            for b in 0..sub {
                let y = cy - h / T::lit(2.0) + (T::from_usize_lossy(b) + T::lit(0.5)) * h / subf;
                if x * x + y * y < r2 {
                    inside += 1;
                }
            }
        }
        Cplx::new(value * T::from_usize_lossy(inside) / total, T::zero())
    });
    ContrastField::new(grid, values)
}
