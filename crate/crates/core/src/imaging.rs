//! Orthogonality-sampling indicator from far-field data.

use ndarray::Array2;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FarFieldMatrix;
use crate::grid::Grid;
use crate::scalar::{cis, Cplx, Real};

/// Indicator values on a pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagingMatrix<T: Real> {
    grid: Grid<T>,
    values: Array2<T>,
    wave_number: T,
}

impl<T: Real> ImagingMatrix<T> {
    /// Entries must be finite and nonnegative.
    pub fn new(grid: Grid<T>, values: Array2<T>, wave_number: T) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::DimensionMismatch {
                what: "imaging matrix",
                expected: grid.shape(),
                found: values.dim(),
            });
        }
        if let Some(((row, col), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "imaging matrix",
                row,
                col,
            });
        }
        if values.iter().any(|v| *v < T::zero()) {
            return Err(Error::invalid("imaging matrix has negative entries"));
        }
        Ok(Self {
            grid,
            values,
            wave_number,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn wave_number(&self) -> T {
        self.wave_number
    }

    /// Pixel indices where the maximum is attained.
    pub fn argmax(&self) -> Vec<(usize, usize)> {
        let max = self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        self.values
            .indexed_iter()
            .filter(|(_, &v)| v == max)
            .map(|(ij, _)| ij)
            .collect()
    }
}

/// `(2π/Q)(2π/P) Σ_q |Σ_p u_pq e^{i k0 x̂_p·z}|²` with `k0` the wave number of `U`.
pub fn imaging_value<T: Real>(u: &FarFieldMatrix<T>, z: [T; 2]) -> T {
    let k0 = u.wave_number();
    let phases: Vec<Cplx<T>> = (0..u.p())
        .map(|p| {
            let d: [T; 2] = u.observation().direction(p);
            cis(k0 * (d[0] * z[0] + d[1] * z[1]))
        })
        .collect();
    let sum: T = u
        .values()
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(&phases)
                .map(|(a, e)| a * e)
                .sum::<Cplx<T>>()
                .norm_sqr()
        })
        .sum();
    weight(u) * sum
}

fn weight<T: Real>(u: &FarFieldMatrix<T>) -> T {
    let two_pi = T::TAU();
    two_pi / T::from_usize_lossy(u.q()) * two_pi / T::from_usize_lossy(u.p())
}

/// Reference implementation: [`imaging_value`] at every pixel center.
pub fn imaging_matrix_pointwise<T: Real>(u: &FarFieldMatrix<T>, grid: &Grid<T>) -> ImagingMatrix<T> {
    let n = grid.n();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| imaging_value(u, grid.center(i, j))).collect())
        .collect();
    let values = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
    ImagingMatrix {
        grid: *grid,
        values,
        wave_number: u.wave_number(),
    }
}

/// Indicator on the whole grid. The phase `e^{ik0 x̂_p·z_ij}` factors into
/// `a_p(x_i)·b_p(y_j)`, so each incident column costs one `n × P × n` product.
pub fn imaging_matrix<T: Real>(u: &FarFieldMatrix<T>, grid: &Grid<T>) -> ImagingMatrix<T> {
    let n = grid.n();
    let k0 = u.wave_number();
    let coords = grid.coords();
    let dirs: Vec<[T; 2]> = u.observation().directions();
    let ax = Array2::from_shape_fn((n, u.p()), |(i, p)| cis(k0 * dirs[p][0] * coords[i]));
    let by = Array2::from_shape_fn((u.p(), n), |(p, j)| cis(k0 * dirs[p][1] * coords[j]));
    let acc = u
        .values()
        .columns()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|col| {
            let mut scaled = by.clone();
            for (mut row, c) in scaled.rows_mut().into_iter().zip(col.iter()) {
                row.mapv_inplace(|v| v * c);
            }
            ax.dot(&scaled).mapv(|z| z.norm_sqr())
        })
        .reduce(|| Array2::zeros((n, n)), |a, b| a + b);
    let w = weight(u);
    ImagingMatrix {
        grid: *grid,
        values: acc.mapv(|v| v * w),
        wave_number: k0,
    }
}

/// Entry types [`normalize`] accepts.
pub trait Modulus: Copy {
    type Scalar: Real;
    fn modulus(self) -> Self::Scalar;
    fn div_by(self, d: Self::Scalar) -> Self;
}

impl<T: Real> Modulus for T {
    type Scalar = T;
    fn modulus(self) -> T {
        self.abs()
    }
    fn div_by(self, d: T) -> T {
        self / d
    }
}

impl<T: Real> Modulus for Cplx<T> {
    type Scalar = T;
    fn modulus(self) -> T {
        self.norm()
    }
    fn div_by(self, d: T) -> Self {
        self / d
    }
}

/// `A / max_ij |A_ij|`, and `0` for `A ≡ 0`.
pub fn normalize<A: Modulus>(a: &Array2<A>) -> Array2<A> {
    let max = a.iter().fold(A::Scalar::zero(), |m, v| num_traits::Float::max(m, v.modulus()));
    if max == A::Scalar::zero() {
        return a.clone();
    }
    a.mapv(|v| v.div_by(max))
}
