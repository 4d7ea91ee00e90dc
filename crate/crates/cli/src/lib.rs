//! Experiment harness behind the `hamnet` binary.

pub mod config;
pub mod grid;
pub mod report;
