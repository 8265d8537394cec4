//! Exclusion processes in contact with non-reversible window reservoirs.

pub mod boundary;
pub mod numerics;
pub mod scalar;
pub mod testfn;
pub mod profile;
pub mod sim;
pub mod pde;
pub mod ldp;

/// Double-precision instances of the generic types.
pub type Model = boundary::RateModel<f64>;
pub type RateTable = boundary::BoundaryRateTable<f64>;
pub type Moments = boundary::BoundaryMoments<f64>;
pub type TestFn = testfn::TestFunction<f64>;
pub type Field = pde::DensityField<f64>;
pub type Path = ldp::PathDensity<f64>;
