//! Numerical verification of Reilly-type upper bounds for the first eigenvalues of the
//! linearized operators `L_r` on closed submanifolds of space forms.
//!
//! The pipeline is: a [`immersion::SurfaceSpec`] is meshed by [`mesh::generate`], the
//! operator `L_r = div(T^r grad)` is discretized with P1 elements in [`assembly`], the smallest
//! eigenpairs come from [`eigensolve`], and [`verify::check_theorem`] evaluates both sides of
//! every inequality into a [`verify::VerificationReport`].
//!
//! Everything numerical is generic over [`scalar::Real`]; the aliases below fix `f64` (and
//! `f32` with a `32` suffix).

// `!(x > 0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scalar;
pub mod immersion;
pub mod newton;
pub mod mesh;
pub mod linalg;
pub mod assembly;
pub mod eigensolve;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Surface = immersion::SurfaceSpec<f64>;
pub type Sample = immersion::GeometrySample<f64>;
pub type Newton = newton::NewtonData<f64>;
pub type Mesh = mesh::SimplicialMesh<f64>;
pub type Matrix = linalg::SparseSymMatrix<f64>;
pub type Spectrum = eigensolve::SpectralResult<f64>;

pub type Surface32 = immersion::SurfaceSpec<f32>;
pub type Sample32 = immersion::GeometrySample<f32>;
pub type Newton32 = newton::NewtonData<f32>;
pub type Mesh32 = mesh::SimplicialMesh<f32>;
pub type Matrix32 = linalg::SparseSymMatrix<f32>;
pub type Spectrum32 = eigensolve::SpectralResult<f32>;
