use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::field::FarFieldMatrix;
use crate::scalar::{Cplx, Real};

/// `U + E` with `E` complex Gaussian, rescaled so that `‖E‖ = delta·‖U‖` in
/// the Frobenius norm. Deterministic for a fixed seed.
///
/// `delta = 0` returns `U` unchanged. So does `U ≡ 0` (with a warning), since
/// relative noise is then undefined.
pub fn add_noise<T: Real>(u: &FarFieldMatrix<T>, delta: T, seed: u64) -> crate::Result<FarFieldMatrix<T>> {
    if !(delta >= T::zero()) || !delta.is_finite() {
        return Err(crate::Error::invalid(format!("noise level must be >= 0, got {delta}")));
    }
    if delta == T::zero() {
        return Ok(u.clone());
    }
    let norm = u.norm().as_f64();
    if norm == 0.0 {
        log::warn!("far-field data is identically zero; relative noise is undefined, returning data unchanged");
        return Ok(u.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Array2<(f64, f64)> = Array2::from_shape_simple_fn(u.values().dim(), || {
        (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let enorm = e.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
    let scale = delta.as_f64() * norm / enorm;
    let values = ndarray::Zip::from(u.values())
        .and(&e)
        .map_collect(|z, &(a, b)| *z + Cplx::new(T::lit(a * scale), T::lit(b * scale)));
    Ok(u.with_values(values, delta))
}
