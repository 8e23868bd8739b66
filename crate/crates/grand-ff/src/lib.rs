//! Infinite-server stochastic bin packing with ranked servers.
//!
//! Customers of several types arrive in Poisson streams and are packed into
//! an unlimited pool of servers subject to monotone configuration
//! constraints. Greedy-random policies (GRAND) decide empty-vs-occupied;
//! the First-Fit rule decides which physical rank an empty placement takes.
//! The crate bundles:
//!
//! - `model`: configuration families, scenarios, validation;
//! - `engine`: the exact rank-oblivious CTMC simulator with replayable logs;
//! - `ranks`: the ranked-server layer (First-Fit and comparators, coupled
//!   replay, `U`/`G(N)` tracking);
//! - `optim`: the fluid-scale LP for `q*` and the convex surrogate giving
//!   `x^{*,a}`, `q^{*,a}`, with independent oracles;
//! - `fluid`: the linearized drift at the equilibrium, stability checks, and
//!   trajectory integration;
//! - `stats`: batch-means estimation and distributional diagnostics;
//! - `experiment`: seeded multi-replication studies and their tables.

pub mod engine;
pub mod experiment;
pub mod fluid;
pub mod model;
pub mod optim;
pub mod ranks;
pub mod stats;
