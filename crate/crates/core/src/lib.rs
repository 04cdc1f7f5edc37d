//! Two-dimensional inverse medium scattering.
//!
//! Forward modelling with a Lippmann–Schwinger solver, direct imaging from
//! far-field data, support extraction and support-regularized Landweber
//! reconstruction. Numerical code is generic over [`Real`]; the `*64` and
//! `*32` aliases below fix the precision.

pub mod error;
pub mod dataset;
pub mod derivative;
pub mod field;
pub mod forward;
pub mod grid;
pub mod imaging;
pub mod inversion;
pub mod io;
pub mod krylov;
pub mod scalar;
pub mod special;
pub mod support;

pub use error::{Error, Result};
pub use field::{ContrastField, FarFieldMatrix, TotalFieldSet};
pub use grid::{DirectionSet, Grid};
pub use scalar::{Cplx, Real};

pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type ContrastField64 = ContrastField<f64>;
pub type ContrastField32 = ContrastField<f32>;
pub type FarFieldMatrix64 = FarFieldMatrix<f64>;
pub type FarFieldMatrix32 = FarFieldMatrix<f32>;
pub type ImagingMatrix64 = imaging::ImagingMatrix<f64>;
pub type ImagingMatrix32 = imaging::ImagingMatrix<f32>;
pub type SupportMask64 = support::SupportMask<f64>;
pub type SupportMask32 = support::SupportMask<f32>;
pub type ForwardSolver64 = forward::ForwardSolver<f64>;
pub type ForwardSolver32 = forward::ForwardSolver<f32>;
