//! Numerical laboratory for property A and operator norm localization on
//! finite metric spaces.

pub mod certificates;
pub mod duality;
pub mod error;
pub mod linalg;
pub mod localization;
pub mod operators;
pub mod space;

#[cfg(test)]
extern crate self as onl_core;
#[cfg(test)]
#[path = "../tests/common/mod.rs"]
mod common;
#[cfg(test)]
mod properties;

pub use certificates::{KernelCertificate, SubsetCertificate, VectorCertificate};
pub use duality::{EquivalenceReport, SchurCPMap};
pub use error::{Error, Result};
pub use linalg::{NormMethod, C64};
pub use localization::{BlockCompression, LocalizationReport, OnlProfile};
pub use operators::{BandedOperator, Block, Field};
pub use space::{BallCover, Family, FiniteMetricSpace, GeometryProfile};
