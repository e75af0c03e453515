//! Numerics for regular generalized indefinite strings on `[0, 1)`.
//!
//! The differential equation `-f'' = z ω f + z² ν f` is handled through the
//! normalized anti-derivative `w` of `ω` and the density `p` of `ν`, both
//! piecewise constant on a uniform grid. Modules:
//!
//! * [`coeff`]: grids, coefficients, hypothesis checks on coefficient sequences.
//! * [`propagator`]: exact per-cell transfer matrices for `F' = R F`.
//! * [`spectral`]: fundamental solutions, Wronskians, eigenvalue scans.
//! * [`resolvent`]: the unitary maps `P`, `Q`, the Green's-function resolvent
//!   and its dense matrix realization.
//! * [`relation_gap`]: finite-dimensional linear relations and the gap metric.
//! * [`convergence`]: perturbation families and convergence experiments.

pub mod coeff;
pub mod convergence;
mod error;
pub mod numeric;
pub mod propagator;
pub mod relation_gap;
pub mod resolvent;
pub mod spectral;

pub use error::{GisError, Result};
pub use num_complex::Complex64;

pub use coeff::{GridPartition, PiecewiseConst, StringSpec};
pub use propagator::{Endpoint, SolutionPath};
pub use spectral::Spectrum;
