//! Certified estimation of the packing and centered Hausdorff measures
//! of totally disconnected self-similar sets.
//!
//! Given a system of contracting similitudes whose basic cylinders are
//! pairwise disjoint, the crate builds the discrete approximations A_k
//! of the attractor, scans spherical densities over admissible balls,
//! and attaches a priori error bounds that turn each estimate into a
//! 100%-confidence interval.

pub mod chausdorff;
pub mod cli;
pub mod cloud;
pub mod config;
pub mod error;
pub mod estimate;
pub mod formulas;
pub mod ifs;
pub mod neighbors;
pub mod oracle;
pub mod packing;

pub use error::{Error, Result};
