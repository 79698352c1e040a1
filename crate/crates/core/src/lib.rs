//! Network scale-up (NSUM) prevalence estimation under barrier effects.
//!
//! The crate covers the full loop used to compare the simple NSUM
//! estimators:
//!
//! * [`netgen`] builds two-block stochastic block model populations,
//! * [`ingest`] loads attributed real networks and turns categorical
//!   attributes into candidate probe groups and experiment cases,
//! * [`survey`] draws simple random samples and their aggregated relational
//!   data (ARD),
//! * [`estimators`] implements the four composite estimators
//!   (dRpR, dRpA, dApA, dApR),
//! * [`analytic`] holds the first-order bias and variance approximations
//!   and the winner grids built from them,
//! * [`montecarlo`] runs replicate surveys and checks the closed forms
//!   against simulation.
//!
//! Numeric code in [`estimators`] and [`analytic`] is generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`, which is
//! what the simulation harness uses.

pub mod analytic;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod montecarlo;
pub mod netgen;
pub mod scalar;
pub mod seed;
pub mod survey;

pub use error::{NsumError, Result};
pub use scalar::Scalar;

/// Real type used by the simulation harness.
pub type Real = f64;

pub type EstimateOutcome = estimators::EstimateOutcome<Real>;
pub type LinkProbabilities = analytic::LinkProbabilities<Real>;
pub type MomentPair = analytic::MomentPair<Real>;
pub type WinnerGrid = analytic::WinnerGrid<Real>;
pub type GridCell = analytic::GridCell<Real>;
pub type GridFixed = analytic::GridFixed<Real>;
pub type Axis = analytic::Axis<Real>;
