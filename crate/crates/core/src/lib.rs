//! Two-stage stochastic planning of distributed generation on radial
//! distribution feeders.
//!
//! The pipeline runs bottom-up: [`grid_case`] loads a feeder and its
//! technology catalog, [`timeseries`] ingests hourly weather and demand,
//! [`scenario`] clusters those hours into weighted operating points,
//! [`planner`] compiles the stochastic program into a [`milp::MilpProblem`],
//! and [`saa`] replicates the whole thing to bound the true optimum.

pub mod grid_case;
pub mod timeseries;
pub mod milp;
pub mod scenario;
pub mod planner;
pub mod saa;
