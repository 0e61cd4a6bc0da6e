//! Scenario query engine: decides whether labelled scenes match a static
//! scenario program by incremental delta-satisfiability queries.

pub mod dsl;
pub mod geomap;
pub mod interval;
pub mod constraints;
pub mod solver;
pub mod forest;
pub mod eval;
pub mod engine;
pub mod sampler;
