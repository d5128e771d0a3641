//! Experiment harness for decentralized SGD: synthetic data, configuration,
//! experiment runners, reports and the acceptance suite.

pub mod config;
pub mod data;
pub mod experiment;
pub mod report;
pub mod scenario;
pub mod verify;
