//! Experiment orchestration: flat key=value configuration files, the Monte
//! Carlo runner that sweeps a design variable across points, and report
//! rendering in CSV and JSON.

pub mod config;
pub mod report;
pub mod runner;
