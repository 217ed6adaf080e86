//! Scenario files, report output, parameter sweeps and the built-in
//! reproduction suite on top of `oblique-core`.

pub mod config;
pub mod report;
pub mod runner;
pub mod suite;
