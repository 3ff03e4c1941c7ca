//! Experiment harness: Monte Carlo trial execution, link-level QPSK
//! verification, and result emission.

pub mod experiment;
pub mod link;
pub mod montecarlo;
pub mod report;
