pub mod cli;
pub mod commitment;
pub mod consensus;
pub mod domain;
pub mod fixed;
pub mod ledger;
pub mod rewards;
pub mod scheduler;
pub mod scoring;
pub mod sim;

pub use domain::{Amount, MarketConfig, ModelId, ModelProfile, NodeId, QualityScore, RewardParams, Role, ScoreDomain};
pub use fixed::Fixed;
