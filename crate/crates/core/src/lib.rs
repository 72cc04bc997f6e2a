//! Hierarchical two-agent actor-critic recommender.
//!
//! A high-level agent reads click/order histories and emits a set of
//! bounded goal vectors every `c` steps; a low-level agent reads
//! browse/click histories, emits a continuous virtual action each step,
//! and is rewarded both by user feedback and by how closely its actions
//! track the stage-active goal. Actions are mapped onto real catalog
//! items by cosine similarity with within-session exclusion. Training
//! follows the deterministic-policy-gradient recipe with experience
//! replay and soft target updates, against a synthetic session
//! environment (or a learned feedback simulator).

pub mod catalog;
pub mod checkpoint;
pub mod encoders;
pub mod env;
pub mod error;
pub mod eval;
pub mod heads;
pub mod high_agent;
pub mod low_agent;
pub mod numerics;
pub mod replay;
pub mod rng;
pub mod trainer;

pub use error::{CoreError, Result};
pub use numerics::{Tensor1, Tensor2};
