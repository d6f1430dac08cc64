//! Small hand-built instances used by tests, benches and the CLI fixtures.

use crate::graph::{InvitationProfile, NodeId, SocialGraph};
use crate::tree::OrderTree;

/// Names of the toy social graph's nodes, indexed by original id.
pub const TOY_NAMES: [&str; 9] = ["p", "a", "b", "c", "d", "e", "f", "g", "h"];

/// Edge list of the toy social graph in original ids (see [`TOY_NAMES`]).
pub const TOY_EDGES: [(u64, u64); 9] = [
    (0, 1), // p-a
    (0, 2), // p-b
    (1, 7), // a-g
    (2, 3), // b-c
    (2, 4), // b-d
    (3, 5), // c-e
    (4, 5), // d-e
    (5, 6), // e-f
    (4, 8), // d-h
];

pub fn toy_social_graph() -> SocialGraph {
    SocialGraph::from_edges(TOY_EDGES)
        .and_then(|g| g.with_requester(0))
        .expect("toy graph is valid")
}

/// Profile where `a` and `d` invite nobody and everyone else invites all.
pub fn toy_profile(g: &SocialGraph) -> InvitationProfile {
    let mut prof = InvitationProfile::all_invite(g);
    for name in ["a", "d"] {
        let id = TOY_NAMES.iter().position(|&n| n == name).unwrap() as u64;
        prof.set(g, g.node(id).unwrap(), &[]).unwrap();
    }
    prof
}

/// Expected order tree of the toy instance as `(child, parent)` names.
pub const TOY_TREE: [(&str, &str); 6] = [
    ("a", "p"),
    ("b", "p"),
    ("c", "b"),
    ("d", "b"),
    ("e", "b"),
    ("f", "e"),
];

/// A tree together with the names of its slots.
#[derive(Clone, Debug)]
pub struct NamedTree {
    pub tree: OrderTree,
    pub names: Vec<&'static str>,
}

impl NamedTree {
    fn build(edges: &[(&'static str, &'static str)]) -> Self {
        let mut names = vec!["p"];
        for &(child, _) in edges {
            names.push(child);
        }
        let parents: Vec<usize> = std::iter::once(0)
            .chain(edges.iter().map(|&(_, par)| {
                names
                    .iter()
                    .position(|&n| n == par)
                    .expect("parent listed before child")
            }))
            .collect();
        let tree = OrderTree::from_parent_slots(&parents).expect("fixture tree is valid");
        Self { tree, names }
    }

    pub fn slot(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|&n| n == name)
            .unwrap_or_else(|| panic!("no node named {name}"))
    }

    pub fn name(&self, slot: usize) -> &'static str {
        self.names[slot]
    }

    /// Social graph whose edges are exactly the tree edges.
    pub fn as_social_graph(&self) -> SocialGraph {
        let edges: Vec<(u32, u32)> = self
            .tree
            .agents()
            .map(|s| (self.tree.parent(s).unwrap() as u32, s as u32))
            .collect();
        SocialGraph::from_dense_edges(self.tree.len(), &edges, 0).expect("tree graph is valid")
    }

    pub fn node(&self, name: &str) -> NodeId {
        NodeId(self.slot(name) as u32)
    }
}

/// Tree with four subtrees under the requester where `a`/`c` and `e`/`b`/`i`
/// share structure.
pub fn type_example() -> NamedTree {
    NamedTree::build(&[
        ("a", "p"),
        ("b", "p"),
        ("c", "p"),
        ("d", "p"),
        ("e", "a"),
        ("f", "a"),
        ("g", "b"),
        ("h", "c"),
        ("i", "c"),
        ("j", "e"),
        ("k", "i"),
    ])
}

/// [`type_example`] as `(tree, slot lookup)`.
pub fn type_example_tree() -> (OrderTree, impl Fn(&str) -> usize) {
    let named = type_example();
    let tree = named.tree.clone();
    (tree, move |n: &str| named.slot(n))
}

/// Deviation example: `k` and `j` under the requester, `i` and `h` under
/// `k`; `i` and `j` both lead a leaf and a two-node chain.
pub fn deviation_example() -> NamedTree {
    NamedTree::build(&[
        ("k", "p"),
        ("j", "p"),
        ("h", "k"),
        ("i", "k"),
        ("di1", "i"),
        ("di2", "i"),
        ("di3", "di2"),
        ("dj1", "j"),
        ("dj2", "j"),
        ("dj3", "dj2"),
    ])
}

/// Chain `p - a - b - c`.
pub fn chain3() -> NamedTree {
    NamedTree::build(&[("a", "p"), ("b", "a"), ("c", "b")])
}

/// Star of `k` leaves under the requester.
pub fn star(k: usize) -> OrderTree {
    let parents = vec![0usize; k + 1];
    OrderTree::from_parent_slots(&parents).expect("star is valid")
}
