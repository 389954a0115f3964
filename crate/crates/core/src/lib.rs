//! Independence testing with data-driven tree partitions.
//!
//! The pipeline grows a median-split tree ([`partition`]), builds the nested
//! family of pruned subtrees ([`pruner`]), picks one size by penalized
//! divergence and thresholds its statistic ([`decision`]). [`baselines`],
//! [`models`] and [`harness`] supply the comparison tests, synthetic data and
//! Monte-Carlo experiments.

pub mod baselines;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod harness;
pub mod infostat;
pub mod models;
pub mod partition;
pub mod pruner;
pub mod quadrature;
pub mod regularizer;

pub use dataset::Dataset;
pub use decision::{decide_independence, estimate_mi, Schedule, TestDecision};
pub use error::{Error, Result};
pub use models::ModelConfig;
pub use partition::{grow_full_tree, TspTree};
