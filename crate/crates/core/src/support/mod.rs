//! Binary support masks: exact masks of known contrasts, thresholded
//! indicator maps, and masks predicted by the U-Net.

mod unet;
mod weights;

use ndarray::Array2;

pub use unet::{architecture, synthetic_weights, unet_infer, UNet};
pub use weights::{fingerprint, NetworkWeights, Tensor};

use crate::error::{Error, Result};
use crate::field::ContrastField;
use crate::grid::Grid;
use crate::imaging::{normalize, ImagingMatrix};
use crate::scalar::{Cplx, Real};

/// Side length the network was trained for.
pub const NETWORK_SIDE: usize = 80;
/// Default threshold of the classical extractor on the normalized indicator.
pub const CLASSICAL_GAMMA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct SupportMask<T: Real> {
    grid: Grid<T>,
    values: Array2<bool>,
}

impl<T: Real> SupportMask<T> {
    pub fn new(grid: Grid<T>, values: Array2<bool>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::DimensionMismatch {
                what: "support mask",
                expected: grid.shape(),
                found: values.dim(),
            });
        }
        Ok(Self { grid, values })
    }

    /// Entries must be exactly 0 or 1.
    pub fn from_real(grid: Grid<T>, values: &Array2<T>) -> Result<Self> {
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| **v != T::zero() && **v != T::one()) {
            return Err(Error::invalid(format!("mask entry ({i}, {j}) is {v}, expected 0 or 1")));
        }
        Self::new(grid, values.mapv(|v| v == T::one()))
    }

    pub fn ones(grid: Grid<T>) -> Self {
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), true),
        }
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), false),
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<bool> {
        &self.values
    }

    /// 0/1 as reals.
    pub fn to_real(&self) -> Array2<T> {
        self.values.mapv(|b| if b { T::one() } else { T::zero() })
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &Self) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.values.iter().zip(other.values.iter()) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Mask of the pixels where `m` is nonzero (exact test).
pub fn support_of<T: Real>(m: &ContrastField<T>) -> SupportMask<T> {
    SupportMask {
        grid: *m.grid(),
        values: m.values().mapv(|z| z != Cplx::new(T::zero(), T::zero())),
    }
}

/// `1` where `a > gamma`, `0` where `a ≤ gamma`.
pub fn threshold<T: Real>(grid: Grid<T>, a: &Array2<T>, gamma: T) -> Result<SupportMask<T>> {
    check_gamma(gamma)?;
    SupportMask::new(grid, a.mapv(|v| v > gamma))
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// How a mask is obtained from an imaging matrix.
#[derive(Clone, Debug)]
pub enum SupportExtractor<T: Real> {
    /// Threshold the normalized indicator directly.
    Classical { gamma: T },
    /// Threshold the network output on the normalized indicator.
    Neural { net: Box<UNet>, gamma: T },
    /// Return a fixed mask.
    Oracle(SupportMask<T>),
}

impl<T: Real> SupportExtractor<T> {
    pub fn classical() -> Self {
        SupportExtractor::Classical {
            gamma: T::lit(CLASSICAL_GAMMA),
        }
    }

    pub fn neural(weights: NetworkWeights, gamma: T) -> Result<Self> {
        check_gamma(gamma)?;
        Ok(SupportExtractor::Neural {
            net: Box::new(UNet::new(weights)?),
            gamma,
        })
    }
}

/// Apply `extractor` to an imaging matrix.
pub fn extract_support<T: Real>(extractor: &SupportExtractor<T>, image: &ImagingMatrix<T>) -> Result<SupportMask<T>> {
    let grid = *image.grid();
    match extractor {
        SupportExtractor::Oracle(mask) => {
            if mask.grid() != image.grid() {
                return Err(Error::invalid("oracle mask grid differs from the imaging grid"));
            }
            Ok(mask.clone())
        }
        SupportExtractor::Classical { gamma } => threshold(grid, &normalize(image.values()), *gamma),
        SupportExtractor::Neural { net, gamma } => {
            check_gamma(*gamma)?;
            if grid.n() != NETWORK_SIDE {
                return Err(Error::invalid(format!(
                    "the network expects a {NETWORK_SIDE}x{NETWORK_SIDE} grid, got {0}x{0}",
                    grid.n()
                )));
            }
            let input = normalize(image.values()).mapv(|v| v.as_f64() as f32);
            let out = net.infer(&input)?;
            threshold(grid, &out.mapv(|v| T::lit(v as f64)), *gamma)
        }
    }
}
