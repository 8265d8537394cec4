//! Dynamical large deviations on gridded density paths.
//!
//! `J(H)` is concave in the coefficients of `H`, so the rate functional is
//! computed by damped Newton over a finite tensor basis. The bulk/boundary
//! split of the rate functional interpolates the boundary values of `H`
//! with `Xi`, the normalised primitive of `1 / sigma(rho)`.

mod decomposition;
mod functional;
mod path;

pub use decomposition::{
    boundary_charges, decompose_i, phi_grid_scan, phi_legendre, upsilon, xi_field, zeta, zeta_trace, BoundaryCost,
    DecompositionReport, PhiMethod, PhiResult,
};
pub use functional::{closed_form_q, eval_i, eval_j, eval_q, IResult};
pub use path::PathDensity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::BoundaryError;
use crate::testfn::{SpaceBasis, TestFunctionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LdpError {
    #[error("malformed path: {0}")]
    Shape(String),
    #[error("path value {value} at frame {k}, node {i} outside [0, 1]")]
    Range { k: usize, i: usize, value: f64 },
    #[error("path touches 0 or 1")]
    NotInterior,
    #[error("path starts at {path} but the initial profile is {gamma} at x = {x}")]
    InitialMismatch { x: f64, path: f64, gamma: f64 },
    #[error("test function horizon {test} differs from path horizon {path}")]
    Horizon { path: f64, test: f64 },
    #[error("{0}")]
    Basis(String),
    #[error("optimizer stopped after {iterations} iterations with gradient norm {grad_norm}")]
    NonConvergence { iterations: usize, grad_norm: f64, value: f64, last: Vec<f64> },
    #[error("quadratic form is not positive definite")]
    Singular,
    #[error(transparent)]
    TestFunction(#[from] TestFunctionError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
}

/// Basis sizes and optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpOptions {
    /// Bernstein degree in time.
    pub p: usize,
    /// Spatial size parameter.
    #[serde(rename = "J")]
    pub j: usize,
    /// Spatial family for unconstrained boundary values.
    pub free_basis: SpaceBasis,
    /// Spatial family vanishing at `x = 0, 1`.
    pub zero_basis: SpaceBasis,
    pub ridge: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LdpOptions {
    fn default() -> Self {
        Self {
            p: 6,
            j: 8,
            free_basis: SpaceBasis::Legendre,
            zero_basis: SpaceBasis::LegendreBubble,
            ridge: 1e-10,
            max_iter: 200,
            grad_tol: 1e-9,
        }
    }
}

impl LdpOptions {
    pub fn with_sizes(p: usize, j: usize) -> Self {
        Self { p, j, ..Self::default() }
    }
}
