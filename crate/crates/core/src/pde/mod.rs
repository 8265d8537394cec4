//! Finite differences for the heat equation with nonlinear Robin boundaries.
//!
//! Nodes `x_i = i / n`. The end nodes carry half cells, so the discrete mass
//! `sum_i w_i rho_i` with trapezoidal weights changes only through the
//! boundary fluxes.

mod checks;
mod field;
mod io;
mod solver;
mod stationary;

pub use checks::{
    entropy_inequality_check, mass_balance_residual, parabolic_bounds_check, BoundsReport, EntropyReport,
};
pub use field::{DensityField, Grid};
pub use io::{read_binary, write_binary, write_csv, FieldHeader, BINARY_MAGIC};
pub use solver::{solve_hydro, solve_perturbed, Scheme, SolverOptions};
pub use stationary::{classify_stability, stationary_profiles, Stability, StationaryProfile};

use thiserror::Error;

use crate::boundary::BoundaryError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("grid needs at least 8 cells, got {0}")]
    GridSize(usize),
    #[error("time step {dt} exceeds the stability bound {bound}")]
    Stability { dt: f64, bound: f64 },
    #[error("horizon must be finite and nonnegative")]
    Horizon,
    #[error("initial density {value} at x = {x} outside [0, 1]")]
    InitialRange { x: f64, value: f64 },
    #[error("non-finite value at t = {t}, x = {x}")]
    NonFinite { t: f64, x: f64 },
    #[error("density {value} at t = {t}, x = {x} outside [0, 1]")]
    Bounds { t: f64, x: f64, value: f64 },
    #[error("field touches 0 or 1 at t = {t}, x = {x}")]
    Singular { t: f64, x: f64 },
    #[error("Newton solve did not converge at t = {t} (residual {residual})")]
    Newton { t: f64, residual: f64 },
    #[error("scan resolution {0} is below 100")]
    Resolution(usize),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error("{0}")]
    Io(String),
    #[error("malformed field file: {0}")]
    Format(String),
}

impl From<std::io::Error> for PdeError {
    fn from(e: std::io::Error) -> Self {
        PdeError::Io(e.to_string())
    }
}
