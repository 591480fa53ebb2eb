//! Hidden truncation hyperbolic (HTH) distributions and finite mixtures of
//! them for model-based clustering.

pub mod dist;
pub mod em;
pub mod error;
pub mod metrics;
pub mod par;
pub mod specfun;
pub mod trunc;

pub use error::{Error, Result};
