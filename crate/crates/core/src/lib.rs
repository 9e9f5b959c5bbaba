//! Fast first fix for BeiDou-style constellations.
//!
//! Position, clock bias and the integer ambiguities of non-GEO fractional
//! pseudoranges are solved together from four or more full GEO
//! pseudoranges, starting from the earth center with no time or position
//! prior. A GEO-only GDOP gate decides whether the ambiguity rounding is
//! safe.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod constellation;
pub mod coverage;
pub mod error;
pub mod frames;
pub mod io;
pub mod measurements;
pub mod solver;

pub use constellation::{Catalog, SatelliteClass, SatelliteRecord};
pub use error::{Error, Result};
pub use frames::{EcefVector, GeodeticPoint, OrbitalElements};
pub use measurements::{Measurement, MeasurementKind, MeasurementSet, Modulus};
pub use solver::{
    solve_conventional, solve_fast, NavState, SolveResult, SolveStatus, SolverConfig,
};
