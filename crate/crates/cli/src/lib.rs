//! Library surface of the pipeline driver, so integration tests can run the
//! same code paths the binary does.

pub mod commands;
pub mod config;
pub mod pipeline;
