//! Numerical toolkit for block-spin averaging of an SU(2) lattice field.
//!
//! A fine configuration on an `n × n` lattice is averaged over `L × L` boxes
//! to a coarse configuration. For a prescribed coarse configuration the crate
//! finds the critical point of the nearest-neighbour action on the constraint
//! surface by a contraction-mapping iteration, verifies it independently, and
//! provides the kernel, image-sum and random-walk machinery used to bound the
//! iteration.

pub mod calculus;
pub mod checks;
pub mod error;
pub mod fields;
pub mod green;
pub mod images;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod randomwalk;
pub mod solver;
pub mod su2;

pub use error::{Error, Result};
pub use lattice::{LatticeGeometry, Level, Site};
pub use su2::{Sign, Su2, Vec3};
