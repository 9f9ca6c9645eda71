//! Conformal vector fields on flat pseudo-Euclidean space: zero sets,
//! their stratification, and conformal invariants of 1- and 2-jets at zeros.

pub mod checks;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod jets;
pub mod metric;
pub mod sigma;
pub mod zeros;

pub use checks::Check;
pub use error::{Error, Result};
pub use field::{FlatConformalField, PointJet, Rescaling};
pub use metric::{MetricSpace, Subspace};
