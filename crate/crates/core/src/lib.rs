//! Offloading-gain analysis for clustered device-to-device caching networks
//! with cooperative (CoMP) transmission.
//!
//! Devices form a Thomas cluster process; each device caches file `m`
//! independently with probability `c_m`. A request is served from the local
//! cache, jointly by every catering device of the requester's cluster, or
//! falls back to the base station. The crate provides:
//!
//! * [`model`]: network, library and caching-policy types;
//! * [`analytic`]: exact and lower-bound coverage and offloading gain;
//! * [`optimizer`]: the KKT caching placement for the single-caterer bound;
//! * [`simulator`]: Monte Carlo ground truth with confidence intervals;
//! * [`cli`]: configuration loading, experiment runners and result output.

pub mod analytic;
pub mod cli;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
