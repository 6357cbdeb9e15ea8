//! Command-line front end: config loading, stage orchestration and run
//! artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
