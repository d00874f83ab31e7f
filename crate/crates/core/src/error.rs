use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("curves live on different grids")]
    GridMismatch,

    #[error("negative shift {0}")]
    NegativeShift(f64),

    #[error("invalid Lévy component: {0}")]
    InvalidDriver(String),

    #[error("cumulant argument {z} outside admissible interval ({lo}, {hi})")]
    CumulantDomain { z: f64, lo: f64, hi: f64 },

    #[error("derivative order {0} exceeds cap {1}")]
    OrderTooHigh(u32, u32),

    #[error("invalid market price of risk: {0}")]
    InvalidMpr(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("time to maturity {tau} outside [0, {xi_max}]")]
    MaturityOutOfRange { tau: f64, xi_max: f64 },

    #[error("path aborted at step {step}: {reason}")]
    PathAborted { step: usize, reason: String },

    #[error("need at least {needed} paths, got {got}")]
    UnderPowered { needed: usize, got: usize },

    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),

    #[error("volatility is not quasi-exponential: {0}")]
    NotQuasiExponential(String),

    #[error("foliation ODE blew up at step {0}")]
    FoliationBlowUp(usize),

    #[error("invariance not certified (max residual {0:e})")]
    NotCertified(f64),

    #[error("insufficient distinct evaluation points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("Laplace argument {lambda} outside declared strip ({lo}, {hi})")]
    StripViolation { lambda: f64, lo: f64, hi: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config key {key}: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
