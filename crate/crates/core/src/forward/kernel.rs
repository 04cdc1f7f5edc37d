//! FFT evaluation of the Helmholtz volume potential on a pixel grid.
//!
//! `(T w)(x_ij) = h² Σ_kl Φ(x_ij − x_kl) w_kl` with the self-cell replaced by the
//! integral of `Φ` over the disk of equal area. Pairwise offsets on an `n × n`
//! grid span `-(n−1)..=(n−1)` pixels per axis, so the kernel is sampled on a
//! `2n × 2n` periodic lattice (side `4ρ`) and truncated beyond `n − 1` pixels;
//! the circular convolution then equals the aperiodic one exactly.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::check_finite;
use crate::grid::Grid;
use crate::scalar::{Cplx, Real};
use crate::special::{helmholtz_green, helmholtz_green_disk_integral};

/// Kernel value for an integer pixel offset `(a, b)`, already multiplied by the pixel area.
pub fn kernel_entry(k: f64, h: f64, a: i64, b: i64) -> num_complex::Complex64 {
    if a == 0 && b == 0 {
        let radius = h / std::f64::consts::PI.sqrt();
        helmholtz_green_disk_integral(k, radius)
    } else {
        let r = h * ((a * a + b * b) as f64).sqrt();
        helmholtz_green(k, r) * (h * h)
    }
}

/// Precomputed Fourier symbol of the volume potential for one grid and wave number.
pub struct VolumePotential<T: Real> {
    grid: Grid<T>,
    wave_number: T,
    size: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    /// Transformed kernel, stored transposed (`[col][row]`) to match the
    /// layout after the column pass.
    symbol_t: Vec<Cplx<T>>,
}

impl<T: Real> std::fmt::Debug for VolumePotential<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolumePotential")
            .field("grid", &self.grid)
            .field("wave_number", &self.wave_number)
            .field("size", &self.size)
            .finish()
    }
}

fn transpose<T: Copy>(src: &[T], dst: &mut [T], size: usize) {
    const B: usize = 32;
    for ib in (0..size).step_by(B) {
        for jb in (0..size).step_by(B) {
            for i in ib..(ib + B).min(size) {
                for j in jb..(jb + B).min(size) {
                    dst[j * size + i] = src[i * size + j];
                }
            }
        }
    }
}

impl<T: Real> VolumePotential<T> {
    pub fn new(grid: Grid<T>, wave_number: T) -> Result<Self> {
        if !(wave_number > T::zero()) || !wave_number.is_finite() {
            return Err(Error::invalid(format!("wave number must be > 0, got {wave_number}")));
        }
        let n = grid.n();
        let size = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);

        let k = wave_number.as_f64();
        let h = grid.h().as_f64();
        let offset = |idx: usize| -> Option<i64> {
            match idx {
                i if i < n => Some(i as i64),
                i if i == n => None,
                i => Some(i as i64 - size as i64),
            }
        };
        // Φ depends only on |offset|; evaluate each distinct (|a|, |b|) once.
        let mut quadrant = vec![num_complex::Complex64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in a..n {
                let v = kernel_entry(k, h, a as i64, b as i64);
                quadrant[a * n + b] = v;
                quadrant[b * n + a] = v;
            }
        }
        let zero = Cplx::new(T::zero(), T::zero());
        let mut kernel = vec![zero; size * size];
        for i in 0..size {
            let Some(a) = offset(i) else { continue };
            for j in 0..size {
                let Some(b) = offset(j) else { continue };
                let v = quadrant[a.unsigned_abs() as usize * n + b.unsigned_abs() as usize];
                kernel[i * size + j] = Cplx::new(T::lit(v.re), T::lit(v.im));
            }
        }
        forward.process(&mut kernel);
        let mut symbol_t = vec![zero; size * size];
        transpose(&kernel, &mut symbol_t, size);
        forward.process(&mut symbol_t);
        // Fold the 1/size² normalisation of the inverse transform into the symbol.
        let scale = T::one() / T::from_usize_lossy(size * size);
        symbol_t.iter_mut().for_each(|z| *z = *z * scale);

        Ok(Self {
            grid,
            wave_number,
            size,
            forward,
            inverse,
            symbol_t,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn wave_number(&self) -> T {
        self.wave_number
    }

    /// `out = T w` for an `n × n` row-major buffer; no validation.
    pub fn apply_slice(&self, w: &[Cplx<T>], out: &mut [Cplx<T>]) {
        let n = self.grid.n();
        let size = self.size;
        let zero = Cplx::new(T::zero(), T::zero());
        let mut buf = vec![zero; size * size];
        for i in 0..n {
            buf[i * size..i * size + n].copy_from_slice(&w[i * n..(i + 1) * n]);
        }
        // Rows n..size are zero and stay zero under the row transform.
        self.forward.process(&mut buf[..n * size]);
        let mut cols = vec![zero; size * size];
        transpose(&buf, &mut cols, size);
        self.forward.process(&mut cols);
        for (c, s) in cols.iter_mut().zip(&self.symbol_t) {
            *c = *c * s;
        }
        self.inverse.process(&mut cols);
        transpose(&cols, &mut buf, size);
        // Only the first n rows of the result are needed.
        self.inverse.process(&mut buf[..n * size]);
        for i in 0..n {
            out[i * n..(i + 1) * n].copy_from_slice(&buf[i * size..i * size + n]);
        }
    }

    /// `out = T* w = conj(T conj(w))`; `T` is complex symmetric.
    pub fn apply_adjoint_slice(&self, w: &[Cplx<T>], out: &mut [Cplx<T>]) {
        let wc: Vec<_> = w.iter().map(|z| z.conj()).collect();
        self.apply_slice(&wc, out);
        out.iter_mut().for_each(|z| *z = z.conj());
    }

    /// Validated matrix interface.
    pub fn apply(&self, w: ArrayView2<'_, Cplx<T>>) -> Result<Array2<Cplx<T>>> {
        let n = self.grid.n();
        if w.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "volume potential input",
                expected: (n, n),
                found: w.dim(),
            });
        }
        let w = w.as_standard_layout().to_owned();
        check_finite("volume potential input", &w)?;
        let mut out = Array2::zeros((n, n));
        self.apply_slice(
            w.as_slice().expect("standard layout"),
            out.as_slice_mut().expect("standard layout"),
        );
        Ok(out)
    }
}

/// Discrete volume potential `T w` on `grid` at wave number `k`.
pub fn apply_kernel<T: Real>(grid: &Grid<T>, k: T, w: &Array2<Cplx<T>>) -> Result<Array2<Cplx<T>>> {
    VolumePotential::new(*grid, k)?.apply(w.view())
}
