//! Pixel grids on the square `[-rho, rho]²` and uniform direction sets on the unit circle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform `n × n` pixel grid on `C_rho = [-rho, rho]²`.
///
/// Matrix entry `(i, j)` is the pixel whose center is
/// `(-rho + (i + 1/2)·h, -rho + (j + 1/2)·h)` with `h = 2·rho/n`: the row index
/// runs along `x`, the column index along `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    rho: T,
    n: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(rho: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs n >= 2, got {n}")));
        }
        if !(rho > T::zero()) || !rho.is_finite() {
            return Err(Error::invalid(format!("grid needs rho > 0, got {rho}")));
        }
        Ok(Self { rho, n })
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    /// Pixel width `2·rho/n`.
    pub fn h(&self) -> T {
        T::lit(2.0) * self.rho / T::from_usize_lossy(self.n)
    }

    pub fn pixel_area(&self) -> T {
        let h = self.h();
        h * h
    }

    /// Center coordinate of pixel index `i` along one axis.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        -self.rho + (T::from_usize_lossy(i) + T::lit(0.5)) * self.h()
    }

    /// All pixel-center coordinates along one axis, increasing.
    pub fn coords(&self) -> Vec<T> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [T; 2] {
        [self.coord(i), self.coord(j)]
    }

    /// Whether the pixel center lies in the open disk `B_rho`.
    pub fn in_disk(&self, i: usize, j: usize) -> bool {
        let [x, y] = self.center(i, j);
        x * x + y * y < self.rho * self.rho
    }

    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            rho: U::lit(self.rho.as_f64()),
            n: self.n,
        }
    }
}

/// `count` directions `(cos θ_j, sin θ_j)` with `θ_j = 2πj/count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DirectionSet {
    count: usize,
}

impl DirectionSet {
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("direction set must be non-empty"));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn angle<T: Real>(&self, j: usize) -> T {
        T::lit(2.0) * T::PI() * T::from_usize_lossy(j) / T::from_usize_lossy(self.count)
    }

    pub fn direction<T: Real>(&self, j: usize) -> [T; 2] {
        let t: T = self.angle(j);
        [t.cos(), t.sin()]
    }

    pub fn directions<T: Real>(&self) -> Vec<[T; 2]> {
        (0..self.count).map(|j| self.direction(j)).collect()
    }
}
