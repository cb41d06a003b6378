use thiserror::Error;

use crate::space::MetricViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected: no path from vertex {from} to vertex {to}")]
    DisconnectedGraph { from: usize, to: usize },

    #[error("point {point} is not in a space of {size} points")]
    UnknownPoint { point: usize, size: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("distance table is not a metric ({} violations, first: {})", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    InvalidMetric(Vec<MetricViolation>),

    #[error("power iteration did not reach relative tolerance {tol:e} within {iterations} iterations")]
    ConvergenceFailure { iterations: usize, tol: f64 },

    #[error("operator is zero")]
    ZeroOperator,

    #[error("power-trick witness collapsed to the zero vector at stage {stage}")]
    DegenerateWitness { stage: usize },

    #[error("all weights are zero")]
    AllWeightsZero,

    #[error("invalid radii R = {r}, S = {s}: {reason}")]
    InvalidRadii { r: f64, s: f64, reason: &'static str },

    #[error("subset for point {point} is empty")]
    EmptySubset { point: usize },

    #[error("kernel is not Hermitian: |k(y,z) - conj k(z,y)| = {defect:e} at ({y}, {z})")]
    NotHermitian { y: usize, z: usize, defect: f64 },

    #[error("space is not a tree metric: {0}")]
    NotATree(String),

    #[error("radius mismatch: map has radius {expected}, compression has radius {found}")]
    RadiusMismatch { expected: f64, found: f64 },

    #[error("operands live on different spaces or multiplicities")]
    SpaceMismatch,

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
