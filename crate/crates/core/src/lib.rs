//! Finite-dimensional noncommutative geometry: spectral triples, one-forms,
//! gauge morphisms, connections and correspondences, certified spectral
//! distances, and truncations of the Moyal plane.

pub mod algebra;
pub mod connections;
pub mod distance;
pub mod error;
pub mod gauge;
pub mod matrix;
pub mod moyal;
pub mod report;
pub mod sdp;
pub mod triple;

pub use error::{Error, Result};
pub use matrix::{ComplexMatrix, ComplexVector};
pub use report::ValidationReport;
