//! Event-driven simulation of the exclusion process with window reservoirs.
//!
//! Time is macroscopic: bulk swaps fire at rate `N^2` per discrepant bond and
//! window replacements at `N R(eta, xi)`.

mod configuration;
mod engine;
mod exact;
mod rng;

pub use configuration::{sample_initial, Configuration, IndexedSet};
pub use engine::{
    apply_event, dynkin_residual, empirical_pair, event_catalog, gillespie_step, run_replica, simulate,
    Event, EventCounters, RunStats, SimConfig, TrajectoryRecord,
};
pub use exact::{exact_law_small_n, law_expectation, product_law, SparseGenerator, MAX_EXACT_SITES};
pub use rng::{replica_rng, splitmix64};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Invalid(String),
    #[error("model is not irreducible")]
    Reducible,
    #[error("no transition has positive rate")]
    Absorbing,
    #[error("no generator accumulator for observable {0}")]
    MissingAccumulator(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("internal error: {0}")]
    Internal(String),
}
