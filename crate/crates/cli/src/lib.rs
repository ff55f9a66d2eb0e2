//! Configuration, orchestration and serialization for the `qtherm` tool.

pub mod config;
pub mod experiments;
pub mod ops;
pub mod output;
