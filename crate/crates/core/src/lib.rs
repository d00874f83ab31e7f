pub mod config;
pub mod curve;
pub mod drift;
pub mod error;
pub mod levy;
pub mod model;
pub mod mpr;
pub mod oracles;
pub mod qexp;
pub mod realization;
pub mod sim;
pub mod span_rank;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
