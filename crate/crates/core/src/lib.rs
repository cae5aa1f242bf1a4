//! Active-learning selection engine over precomputed feature embeddings.
//!
//! The engine scores unlabeled samples by how much local feature fusion
//! toward class anchors disturbs their predictions (discrepancy-confusion
//! uncertainty), keeps the high scorers, clusters them with
//! uncertainty-weighted k-means, and picks one representative per cluster
//! that is close to its centroid while far from every class anchor.
//! Baseline strategies (random, k-means, core-set, entropy, margin), a
//! softmax classifier trainer, a simulated oracle, and a multi-cycle
//! benchmark harness round out the toolkit.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod diversity;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod pools;
pub mod scoring;
pub mod seeding;
pub mod strategies;

pub use error::{Error, Result};
