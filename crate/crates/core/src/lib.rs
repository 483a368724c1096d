//! Multi-object pre-grasp synthesis for an articulated multi-fingered hand.
//!
//! The pipeline samples hand poses from a Gibbs distribution over a
//! multi-object grasp energy with annealed Metropolis-adjusted Langevin
//! chains, refines them toward contact, plans reach trajectories and scores
//! them with grasp-quality metrics.

pub mod config;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod export;
pub mod geometry;
pub mod kinematics;
pub mod metrics;
pub mod refine;
pub mod sampler;

pub use error::{Error, Result};
