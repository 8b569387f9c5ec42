//! Hybrid network intrusion detection: a signature engine, a statistical
//! anomaly engine and a small transformer classifier over tokenized flows,
//! combined by max-fusion.

pub mod anomaly;
pub mod dataset;
pub mod fusion;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod signature;
