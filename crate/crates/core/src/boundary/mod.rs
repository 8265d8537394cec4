//! Boundary reservoirs: window rate tables and their Bernoulli moments.

mod irreducibility;
mod moments;
mod table;
mod window;

pub use irreducibility::{validate_irreducibility, IrreducibilityReport, SideReport};
pub use moments::{
    bernstein_derivative, bernstein_eval, creation_rate, creation_rate_k, destruction_rate,
    destruction_rate_k, flux, h_boundary, window_expectation, BoundaryMoments, MomentPolynomials,
    PfrakVariant, EXPONENT_CAP,
};
pub use table::{BoundaryRateTable, L3Params, RateModel, MAX_WINDOW};
pub use window::{Side, WindowState};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundaryError {
    #[error("window size {l} outside 1..={max}")]
    WindowSize { l: usize, max: usize },
    #[error("rate table has {got} entries, expected {expected}")]
    TableShape { expected: usize, got: usize },
    #[error("negative or NaN rate on {side} side from {from} to {to}")]
    NegativeRate { side: Side, from: u32, to: u32 },
    #[error("mask {mask} does not fit a window of size {l}")]
    MaskOutOfRange { l: usize, mask: u32 },
    #[error("tables must be given as (left, right)")]
    SideMismatch,
    #[error("left window size {left} differs from right window size {right}")]
    WindowMismatch { left: usize, right: usize },
    #[error("invalid preset: {0}")]
    Preset(String),
    #[error("rate table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("density {0} outside [0, 1]")]
    DensityRange(f64),
    #[error("k = {k} outside 1..={l}")]
    KRange { k: usize, l: usize },
    #[error("|M| * l = {0} exceeds the exponent cap")]
    ExponentRange(f64),
}
