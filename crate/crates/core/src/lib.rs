//! Vector DC magnetometry with NV centers.
//!
//! The crate covers the static spin-1 model of an NV center, azimuth sensing
//! through a reference DC field (Ramsey) or a linearly polarized reference
//! microwave (Rabi), dephasing dynamics for single spins and GHZ ensembles,
//! and the uncertainty pipeline built on top of them.
//!
//! Units are fixed throughout: angular frequency in rad/µs, magnetic field in
//! mT, time in µs, angles in radians.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod fit;
pub mod nvmodel;
pub mod rabi;
pub mod spinalg;

pub use error::{Error, Result};
