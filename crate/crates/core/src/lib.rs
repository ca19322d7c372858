//! Two-stage stochastic scheduling on an unknown number of identical machines.
//!
//! Jobs are packed into `m` bags before the machine count `k` is drawn from a
//! known distribution; afterwards the bags are scheduled on `k` machines.
//! The crate evaluates solutions exactly, solves small instances by brute
//! force, and runs guess-and-round approximation pipelines for the expected
//! makespan, the expected Santa Claus value and the expected lp norm.

pub mod baselines;
pub mod grouping;
pub mod model;
pub mod oracle;
pub mod rational;
pub mod rounding;
pub mod schemes;
pub mod tcip;
