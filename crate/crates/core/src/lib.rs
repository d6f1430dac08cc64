//! Bayesian Nash equilibria of the collective invitation contest.
//!
//! A requester posts a task on a social network. Agents invite neighbours
//! and decide whether to contribute; an agent wins the prize when it
//! outperforms every invited agent it does not lead. This crate derives the
//! invitation graph from a profile of invitations, builds the order tree of
//! the leading relation, computes the threshold equilibrium, simulates
//! contests under it, and checks that inviting every neighbour is a best
//! response.

pub mod contest;
pub mod deviation;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod fixtures;
pub mod gen;
pub mod graph;
pub mod rng;
pub mod tree;

pub use contest::{BatchStats, ContestOutcome, DynamicsCurve, TaskSample};
pub use deviation::{DeviationReport, VerifyMode, VerifySummary};
pub use dist::{AbilityDistribution, ContestParams, Distribution};
pub use equilibrium::{SolveTrace, ThresholdProfile};
pub use error::{CimError, Result};
pub use graph::{InvitationGraph, InvitationProfile, NodeId, SocialGraph};
pub use tree::{LeadSets, OrderTree, TreeFingerprint, TypeSignature};

/// Crate version, stamped into every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
