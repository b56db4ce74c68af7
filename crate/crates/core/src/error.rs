//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// A model or solver parameter violates its invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{name}` = {value}: {reason}")]
pub struct ParamError {
    pub name: String,
    pub value: f64,
    pub reason: String,
}

impl ParamError {
    pub fn new(name: impl Into<String>, value: f64, reason: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("non-finite value in `{component}` at t = {t} s")]
    NonFinite { t: f64, component: &'static str },

    #[error("chamber volume `{component}` = {volume} mL is not positive at t = {t} s")]
    NonPositiveVolume {
        t: f64,
        component: &'static str,
        volume: f64,
    },

    #[error("adaptive step size underflow at t = {t} s (h = {h})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("chamber advance failed at p_lv = {p_lv} mmHg: {reason}")]
    ChamberAdvance { p_lv: f64, reason: String },

    #[error(
        "no sign change of the volume residual on [{p_lo}, {p_hi}] mmHg \
         (residuals {r_lo:e} and {r_hi:e} mL) at t = {t} s"
    )]
    Bracket {
        t: f64,
        p_lo: f64,
        p_hi: f64,
        r_lo: f64,
        r_hi: f64,
    },

    #[error("root-find did not reach |residual| <= {tol:e} mL within {iterations} iterations at t = {t} s (last residual {residual:e})")]
    NoConvergence {
        t: f64,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Configuration-document error. `line` is 1-based; 0 when the error is not tied to a line.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: malformed entry `{text}` (expected key = value)")]
    Malformed { line: usize, text: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("duplicate key `{key}` on lines {first} and {second}")]
    DuplicateKey {
        key: String,
        first: usize,
        second: usize,
    },

    #[error("line {line}: key `{key}` expects {expected}, got `{value}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },

    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("line {line}: key `{key}`: {source}")]
    Invalid {
        line: usize,
        key: String,
        #[source]
        source: ParamError,
    },

    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Integration(#[from] IntegrationError),

    #[error(transparent)]
    Coupling(#[from] CouplingError),

    #[error("analysis refused: {0}")]
    Analysis(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
