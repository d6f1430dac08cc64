//! Seeded random instances: trees, sparse connected graphs.

use rand::Rng;

use crate::graph::{InvitationGraph, NodeId, SocialGraph};
use crate::tree::OrderTree;

/// Random recursive tree on `n_agents + 1` slots. `branch_bias` in `[0, 1]`
/// pulls new nodes toward recent ones, producing deeper trees.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n_agents: usize, branch_bias: f64) -> OrderTree {
    let mut parents = vec![0usize; n_agents + 1];
    for (s, parent) in parents.iter_mut().enumerate().skip(1) {
        *parent = if rng.random::<f64>() < branch_bias && s > 1 {
            rng.random_range(s.saturating_sub(3).max(1)..s)
        } else {
            rng.random_range(0..s)
        };
    }
    OrderTree::from_parent_slots(&parents).expect("generated parents are acyclic")
}

/// Connected graph on `n` nodes: a random spanning tree plus `extra`
/// random chords. Node 0 is the requester.
pub fn random_connected_edges<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    extra: usize,
) -> Vec<(u32, u32)> {
    let mut edges = Vec::with_capacity(n + extra);
    for v in 1..n {
        edges.push((rng.random_range(0..v) as u32, v as u32));
    }
    if n >= 2 {
        for _ in 0..extra {
            let a = rng.random_range(0..n) as u32;
            let b = rng.random_range(0..n) as u32;
            if a != b {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges
}

pub fn random_social_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, extra: usize) -> SocialGraph {
    let edges = random_connected_edges(rng, n, extra);
    SocialGraph::from_dense_edges(n, &edges, 0).expect("generated graph is valid")
}

pub fn random_invitation_graph<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    extra: usize,
) -> InvitationGraph {
    let edges = random_connected_edges(rng, n, extra);
    InvitationGraph::from_slots(
        (0..n as u32).map(NodeId).collect(),
        (0..n as u64).collect(),
        &edges,
    )
}
