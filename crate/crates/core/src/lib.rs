//! Return-distribution analysis for high-frequency price series: multi-horizon
//! log returns on a stitched trading-minute axis, symmetric alpha-stable
//! scaling of the zero-return density, power-law and exponential tail fits,
//! Student's t likelihood fits, and moment-distance convergence toward the
//! Gaussian — each estimator validated against built-in synthetic generators
//! with known ground truth.

pub mod convergence;
pub mod density;
pub mod error;
pub mod export;
pub mod fitting;
pub mod market_data;
pub mod returns;
pub mod stable;
mod stats;
pub mod synth;

pub use error::{Error, Result};
