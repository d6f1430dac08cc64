//! Shared instance builders for the benchmarks.

use cim_core::gen::random_social_graph;
use cim_core::graph::derive_invitation_graph;
use cim_core::tree::build_order_tree;
use cim_core::{ContestParams, Distribution, InvitationProfile, OrderTree, SocialGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// A social graph, its all-invite order tree and the usual contest setup
/// (prize 1, cost 0.1, Exp(1) abilities).
pub struct Scenario {
    pub graph: SocialGraph,
    pub tree: OrderTree,
    pub params: ContestParams,
    pub dist: Distribution,
}

impl Scenario {
    /// Sparse connected graph with `n` nodes and about `n / 2` chords, so
    /// the order tree keeps a mix of cut vertices and blocks.
    pub fn sparse(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let graph = random_social_graph(&mut rng, n, n / 2);
        let h = derive_invitation_graph(&graph, &InvitationProfile::all_invite(&graph));
        let tree = build_order_tree(&h).expect("generated graph is connected");
        Self {
            graph,
            tree,
            params: ContestParams::new(1.0, 0.1).expect("valid params"),
            dist: Distribution::exponential(1.0).expect("valid rate"),
        }
    }
}
