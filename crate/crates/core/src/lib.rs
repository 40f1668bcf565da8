//! Federated gradient boosting over horizontally partitioned data, using
//! locality-sensitive hashing to pair instances across parties.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod federation;
pub mod gbdt;
pub mod lsh;
