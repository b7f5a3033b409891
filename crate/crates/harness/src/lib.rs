//! Experiment harness: configuration, runs, aggregation, timing and tables.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod run;
pub mod tables;
pub mod timing;
