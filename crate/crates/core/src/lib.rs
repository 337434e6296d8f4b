//! Particle marginal Metropolis-Hastings for nonlinear state-space models.

pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod em;
pub mod evidence;
pub mod filter;
pub mod imh;
pub mod likelihood;
pub mod math;
pub mod mixture;
pub mod model;
pub mod models;
pub mod oracle;
pub mod parallel;
pub mod params;
pub mod pmmh;
pub mod prior;
pub mod report;
pub mod runner;
pub mod verify;
pub mod rwm;
