//! Decentralized SGD on a fixed or time-varying gossip graph, with coupled
//! twin runs for measuring algorithmic stability and the matching
//! generalization and optimization bounds.

pub mod bounds;
pub mod engine;
pub mod losses;
pub mod stability;
pub mod topology;
