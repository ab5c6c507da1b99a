//! Self-evolving relevance pipeline at desk scale.
//!
//! The crate simulates a query stream with graded ground truth, mines
//! informative query-document pairs with four feedback/uncertainty agents,
//! labels them through a two-level agreement protocol, retrains a pluggable
//! relevance model on the merged data each iteration, and reports ranking
//! metrics that quantify the gap between consensus-labeled evolution and
//! plain self-training. Every stage is deterministic given its seed: equal
//! seeds reproduce artifacts byte for byte.

pub mod annotator;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod jsonl;
pub mod miner;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod pipeline;
pub mod seeding;
pub mod simulator;

pub use error::{Error, Result};
