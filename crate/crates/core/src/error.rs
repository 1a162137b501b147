use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the domain of {function}: {detail}")]
    Domain { function: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration rejected:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error(
        "energy {energy} hartree lies within {tolerance:e} of inner eigenvalue {eigenvalue}; \
         shift the energy grid point slightly"
    )]
    Pole { energy: f64, eigenvalue: f64, tolerance: f64 },

    #[error("singular {what} (condition number {condition:e}) at energy {energy} hartree")]
    Singular { what: &'static str, condition: f64, energy: f64 },

    #[error("overlap matrix is not positive definite; the radial basis is malformed")]
    Cholesky,

    #[error("eigendecomposition failed to converge for l = {l}")]
    Eigen { l: u32 },

    #[error("closed channel: n = {channel} has kinetic energy {kinetic} hartree at E = {energy}")]
    ClosedChannel { channel: i32, energy: f64, kinetic: f64 },

    #[error("missing S-matrix entry for l = {l} at E = {energy} hartree")]
    Coverage { l: u32, energy: f64 },

    #[error("ODE step size underflow at z = {z} (h = {step:e})")]
    StepUnderflow { z: f64, step: f64 },

    #[error("norm drift {drift:e} exceeds tolerance {tolerance:e} at impact parameter {b}")]
    NormDrift { b: f64, drift: f64, tolerance: f64 },

    #[error("{0}")]
    Numerical(String),

    #[error("cache entry {path}: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse configuration: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { function, detail: detail.into() }
    }
}
