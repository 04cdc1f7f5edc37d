//! Data carried between pipeline stages: contrasts, far-field matrices and total fields.

use ndarray::Array2;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::grid::{DirectionSet, Grid};
use crate::scalar::{Cplx, Real};

pub(crate) fn check_shape<A>(what: &'static str, a: &Array2<A>, expected: (usize, usize)) -> Result<()> {
    if a.dim() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found: a.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_finite<T: Real>(what: &'static str, a: &Array2<Cplx<T>>) -> Result<()> {
    match a.indexed_iter().find(|(_, z)| !z.re.is_finite() || !z.im.is_finite()) {
        Some(((row, col), _)) => Err(Error::NonFinite { what, row, col }),
        None => Ok(()),
    }
}

/// Frobenius norm of a complex matrix.
pub fn frobenius<T: Real>(a: &Array2<Cplx<T>>) -> T {
    a.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Unweighted Frobenius inner product `<a, b> = Σ a_ij · conj(b_ij)`.
pub fn inner<T: Real>(a: &Array2<Cplx<T>>, b: &Array2<Cplx<T>>) -> Cplx<T> {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// `max_ij |a_ij|`.
pub fn max_modulus<T: Real>(a: &Array2<Cplx<T>>) -> T {
    a.iter().fold(T::zero(), |m, z| m.max(z.norm()))
}

/// Samples `m(x_ij)` of the contrast on a pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastField<T: Real> {
    grid: Grid<T>,
    values: Array2<Cplx<T>>,
}

impl<T: Real> ContrastField<T> {
    /// Checked constructor: shape must match the grid, entries must be finite
    /// and vanish at every pixel center outside the disk `B_rho`.
    pub fn new(grid: Grid<T>, values: Array2<Cplx<T>>) -> Result<Self> {
        let field = Self::unconstrained(grid, values)?;
        if let Some(((row, col), _)) = field
            .values
            .indexed_iter()
            .find(|((i, j), z)| !z.is_zero() && !grid.in_disk(*i, *j))
        {
            return Err(Error::invalid(format!(
                "contrast is nonzero outside B_rho at pixel ({row}, {col})"
            )));
        }
        Ok(field)
    }

    /// Constructor for reconstructions, which live on all of `C_rho` and are
    /// not required to vanish outside the disk.
    pub fn unconstrained(grid: Grid<T>, values: Array2<Cplx<T>>) -> Result<Self> {
        check_shape("contrast", &values, grid.shape())?;
        check_finite("contrast", &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self {
            grid,
            values: Array2::zeros(grid.shape()),
        }
    }

    /// Real-valued contrast.
    pub fn from_real(grid: Grid<T>, values: &Array2<T>) -> Result<Self> {
        Self::new(grid, values.mapv(|v| Cplx::new(v, T::zero())))
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Cplx<T>> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Cplx<T>> {
        self.values
    }

    pub fn max_modulus(&self) -> T {
        max_modulus(&self.values)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.is_zero())
    }

    /// Multiply every entry by a real factor.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.mapv(|z| z * factor),
        }
    }
}

/// Far-field measurements `u^∞(x̂_p, d_q)` at one wave number, `P × Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldMatrix<T: Real> {
    values: Array2<Cplx<T>>,
    wave_number: T,
    incident: DirectionSet,
    observation: DirectionSet,
    noise_level: T,
}

impl<T: Real> FarFieldMatrix<T> {
    pub fn new(
        values: Array2<Cplx<T>>,
        wave_number: T,
        incident: DirectionSet,
        observation: DirectionSet,
        noise_level: T,
    ) -> Result<Self> {
        check_shape(
            "far-field matrix",
            &values,
            (observation.count(), incident.count()),
        )?;
        if !(wave_number > T::zero()) {
            return Err(Error::invalid(format!("wave number must be > 0, got {wave_number}")));
        }
        if !(noise_level >= T::zero()) {
            return Err(Error::invalid(format!("noise level must be >= 0, got {noise_level}")));
        }
        Ok(Self {
            values,
            wave_number,
            incident,
            observation,
            noise_level,
        })
    }

    pub fn zeros(wave_number: T, incident: DirectionSet, observation: DirectionSet) -> Self {
        Self {
            values: Array2::zeros((observation.count(), incident.count())),
            wave_number,
            incident,
            observation,
            noise_level: T::zero(),
        }
    }

    pub fn values(&self) -> &Array2<Cplx<T>> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Cplx<T>> {
        &mut self.values
    }

    pub fn wave_number(&self) -> T {
        self.wave_number
    }

    pub fn incident(&self) -> DirectionSet {
        self.incident
    }

    pub fn observation(&self) -> DirectionSet {
        self.observation
    }

    pub fn noise_level(&self) -> T {
        self.noise_level
    }

    pub fn p(&self) -> usize {
        self.observation.count()
    }

    pub fn q(&self) -> usize {
        self.incident.count()
    }

    pub fn norm(&self) -> T {
        frobenius(&self.values)
    }

    pub(crate) fn with_values(&self, values: Array2<Cplx<T>>, noise_level: T) -> Self {
        Self {
            values,
            noise_level,
            ..self.clone()
        }
    }
}

/// Total fields `u(·, d_q)` on a grid, one per incident direction.
#[derive(Clone, Debug)]
pub struct TotalFieldSet<T: Real> {
    grid: Grid<T>,
    wave_number: T,
    fields: Vec<Array2<Cplx<T>>>,
}

impl<T: Real> TotalFieldSet<T> {
    pub fn new(grid: Grid<T>, wave_number: T, fields: Vec<Array2<Cplx<T>>>) -> Result<Self> {
        for f in &fields {
            check_shape("total field", f, grid.shape())?;
            check_finite("total field", f)?;
        }
        Ok(Self {
            grid,
            wave_number,
            fields,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn wave_number(&self) -> T {
        self.wave_number
    }

    pub fn fields(&self) -> &[Array2<Cplx<T>>] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}
