//! Library surface of the pipeline CLI, shared with the acceptance suite.

pub mod config;
pub mod pipeline;
