//! Heterogeneous uplink access simulator: grant-free IoT users with
//! repetition-based transmission coexisting with a broadband user under RAN
//! slicing or sharing, plus decentralised tabular learners for the IoT
//! repetition policy.

pub mod agents;
pub mod config;
pub mod env;
pub mod metrics;
pub mod phy;
pub mod runner;
pub mod scenario;
pub mod sic;
