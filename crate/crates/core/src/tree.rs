//! Order trees: the leading relation of an invitation graph as a rooted tree.
//!
//! Agent `i` leads `j` when every path from the requester to `j` passes
//! through `i`. In an undirected graph this is exactly "i is a cut vertex
//! separating the requester from j", so the tree falls out of one
//! biconnected-component DFS: every non-root vertex hangs below the head
//! vertex of the block through which the DFS first entered it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::sync::{Mutex, OnceLock};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CimError, Result};
use crate::graph::{InvitationGraph, NodeId};

/// Rooted tree over `U ∪ {p}`. Slot 0 is the requester.
#[derive(Clone, Debug)]
pub struct OrderTree {
    nodes: Vec<NodeId>,
    original: Vec<u64>,
    parent: Vec<u32>,
    children: Vec<Vec<u32>>,
    subtree_size: Vec<u32>,
    depth: Vec<u32>,
    /// Preorder position of each slot.
    tin: Vec<u32>,
    /// Slots in preorder; the subtree of `s` is `preorder[tin[s]..tin[s] + size[s]]`.
    preorder: Vec<u32>,
}

const NO_PARENT: u32 = u32::MAX;

impl OrderTree {
    /// Builds a tree from a parent array over slots. `parents[0]` is ignored
    /// (slot 0 is the root); every other entry must point to a valid slot and
    /// the structure must be acyclic.
    pub fn from_parents(nodes: Vec<NodeId>, original: Vec<u64>, parents: &[usize]) -> Result<Self> {
        let n = parents.len();
        if n == 0 || nodes.len() != n || original.len() != n {
            return Err(CimError::InvalidTree("slot arrays disagree in length".into()));
        }
        let mut children = vec![Vec::new(); n];
        let mut parent = vec![NO_PARENT; n];
        for (s, &par) in parents.iter().enumerate().skip(1) {
            if par >= n || par == s {
                return Err(CimError::InvalidTree(format!("slot {s} has parent {par}")));
            }
            parent[s] = par as u32;
            children[par].push(s as u32);
        }
        // children are kept in slot order; canonical routines never depend on it
        let mut tin = vec![u32::MAX; n];
        let mut preorder = Vec::with_capacity(n);
        let mut depth = vec![0u32; n];
        let mut stack = vec![0u32];
        while let Some(s) = stack.pop() {
            tin[s as usize] = preorder.len() as u32;
            preorder.push(s);
            for &c in children[s as usize].iter().rev() {
                depth[c as usize] = depth[s as usize] + 1;
                stack.push(c);
            }
        }
        if preorder.len() != n {
            return Err(CimError::InvalidTree("parent array contains a cycle".into()));
        }
        let mut subtree_size = vec![1u32; n];
        for &s in preorder.iter().rev().take(n - 1) {
            let p = parent[s as usize] as usize;
            subtree_size[p] += subtree_size[s as usize];
        }
        Ok(Self {
            nodes,
            original,
            parent,
            children,
            subtree_size,
            depth,
            tin,
            preorder,
        })
    }

    /// Tree on anonymous slots `0..parents.len()`, node ids equal to slots.
    pub fn from_parent_slots(parents: &[usize]) -> Result<Self> {
        let n = parents.len();
        Self::from_parents(
            (0..n as u32).map(NodeId).collect(),
            (0..n as u64).collect(),
            parents,
        )
    }

    /// Number of slots, requester included.
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Number of agents `|U|`.
    pub fn agent_count(&self) -> usize {
        self.parent.len() - 1
    }

    pub fn agents(&self) -> std::ops::Range<usize> {
        1..self.parent.len()
    }

    pub fn root(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn node_id(&self, slot: usize) -> NodeId {
        self.nodes[slot]
    }

    pub fn original_id(&self, slot: usize) -> u64 {
        self.original[slot]
    }

    /// Slot of a node, if it is in the tree.
    pub fn slot_of(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&v| v == node)
    }

    /// Map from node id to slot, for repeated lookups.
    pub fn slot_index(&self) -> HashMap<NodeId, usize> {
        self.nodes.iter().enumerate().map(|(s, &v)| (v, s)).collect()
    }

    pub fn parent(&self, slot: usize) -> Option<usize> {
        match self.parent[slot] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn children(&self, slot: usize) -> &[u32] {
        &self.children[slot]
    }

    pub fn is_leaf(&self, slot: usize) -> bool {
        self.children[slot].is_empty()
    }

    pub fn subtree_size(&self, slot: usize) -> usize {
        self.subtree_size[slot] as usize
    }

    pub fn depth(&self, slot: usize) -> usize {
        self.depth[slot] as usize
    }

    pub fn preorder(&self) -> &[u32] {
        &self.preorder
    }

    pub fn preorder_position(&self, slot: usize) -> usize {
        self.tin[slot] as usize
    }

    /// True when `a` is a proper ancestor of `b`.
    #[inline]
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let (ta, tb) = (self.tin[a], self.tin[b]);
        ta < tb && tb < ta + self.subtree_size[a]
    }

    /// Slots in the subtree of `slot`, `slot` itself first.
    pub fn subtree(&self, slot: usize) -> impl Iterator<Item = usize> + '_ {
        let start = self.tin[slot] as usize;
        self.preorder[start..start + self.subtree_size[slot] as usize]
            .iter()
            .map(|&s| s as usize)
    }

    /// Parent map keyed by original id, root excluded.
    pub fn parent_map(&self) -> BTreeMap<u64, u64> {
        self.agents()
            .map(|s| (self.original[s], self.original[self.parent[s] as usize]))
            .collect()
    }

    /// `{"node": parent}` keyed by original ids.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, u64> = self
            .parent_map()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        serde_json::to_value(map).expect("string map serializes")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph order_tree {\n");
        let _ = writeln!(out, "  \"{}\" [shape=box];", self.original[0]);
        for s in self.agents() {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\";",
                self.original[self.parent[s] as usize], self.original[s]
            );
        }
        out.push_str("}\n");
        out
    }
}

/// Computes the order tree of an invitation graph in linear time.
///
/// Fails when some agent is unreachable from the requester, which cannot
/// happen for graphs produced by [`crate::graph::derive_invitation_graph`].
pub fn build_order_tree(h: &InvitationGraph) -> Result<OrderTree> {
    let n = h.slot_count();
    const UNSEEN: u32 = u32::MAX;
    let mut disc = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut parents = vec![0usize; n];
    let mut vstack: Vec<u32> = Vec::with_capacity(n);
    // (vertex, next neighbour index, dfs parent)
    let mut frames: Vec<(u32, usize, u32)> = vec![(0, 0, UNSEEN)];
    let mut time = 0u32;
    disc[0] = 0;
    low[0] = 0;
    vstack.push(0);
    while let Some(frame) = frames.last_mut() {
        let (u, ref mut next, dfs_parent) = *frame;
        let nbrs = h.slot_neighbors(u as usize);
        if *next < nbrs.len() {
            let v = nbrs[*next];
            *next += 1;
            if disc[v as usize] == UNSEEN {
                time += 1;
                disc[v as usize] = time;
                low[v as usize] = time;
                vstack.push(v);
                frames.push((v, 0, u));
            } else if v != dfs_parent {
                low[u as usize] = low[u as usize].min(disc[v as usize]);
            }
            continue;
        }
        frames.pop();
        if dfs_parent == UNSEEN {
            break;
        }
        let w = dfs_parent as usize;
        low[w] = low[w].min(low[u as usize]);
        if low[u as usize] >= disc[w] {
            // block headed by w: everything above u on the stack hangs below w
            loop {
                let x = vstack.pop().expect("vertex stack underflow");
                parents[x as usize] = w;
                if x == u {
                    break;
                }
            }
        }
    }
    if let Some(s) = disc.iter().position(|&d| d == UNSEEN) {
        return Err(CimError::Disconnected(h.original_ids()[s]));
    }
    OrderTree::from_parents(
        (0..n).map(|s| h.node_at(s)).collect(),
        h.original_ids().to_vec(),
        &parents,
    )
}

/// Derived sets `D_i`, `C_i` and `P_i` of an order tree.
///
/// `D_i` is a contiguous preorder range and `C_i` a root path, so both are
/// served as views. `P_i = U - D_i - {i}` is only materialized when the tree
/// has at most `materialize_limit` agents.
#[derive(Clone, Debug)]
pub struct LeadSets<'a> {
    tree: &'a OrderTree,
    competitors: Option<Vec<Vec<u32>>>,
}

impl<'a> LeadSets<'a> {
    pub const DEFAULT_MATERIALIZE_LIMIT: usize = 10_000;

    pub fn new(tree: &'a OrderTree) -> Self {
        Self::with_limit(tree, Self::DEFAULT_MATERIALIZE_LIMIT)
    }

    pub fn with_limit(tree: &'a OrderTree, materialize_limit: usize) -> Self {
        let competitors = (tree.agent_count() <= materialize_limit).then(|| {
            let mut all = vec![Vec::new(); tree.len()];
            for (i, list) in all.iter_mut().enumerate().skip(1) {
                *list = Self::scan_competitors(tree, i).map(|s| s as u32).collect();
            }
            all
        });
        Self { tree, competitors }
    }

    fn scan_competitors(tree: &OrderTree, i: usize) -> impl Iterator<Item = usize> + '_ {
        let start = tree.tin[i] as usize;
        let end = start + tree.subtree_size[i] as usize;
        tree.preorder[1..start]
            .iter()
            .chain(&tree.preorder[end..])
            .map(|&s| s as usize)
    }

    pub fn tree(&self) -> &OrderTree {
        self.tree
    }

    pub fn is_materialized(&self) -> bool {
        self.competitors.is_some()
    }

    /// `D_i`, in preorder.
    pub fn descendants(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.tree.subtree(i).skip(1)
    }

    pub fn descendant_count(&self, i: usize) -> usize {
        self.tree.subtree_size(i) - 1
    }

    /// `C_i`, ordered from the requester's side down to the parent of `i`.
    pub fn leaders(&self, i: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.tree.depth(i));
        let mut cur = self.tree.parent(i);
        while let Some(s) = cur {
            if s == 0 {
                break;
            }
            path.push(s);
            cur = self.tree.parent(s);
        }
        path.reverse();
        path
    }

    /// `P_i`.
    pub fn competitors(&self, i: usize) -> Box<dyn Iterator<Item = usize> + '_> {
        match &self.competitors {
            Some(all) => Box::new(all[i].iter().map(|&s| s as usize)),
            None => Box::new(Self::scan_competitors(self.tree, i)),
        }
    }

    pub fn competitor_count(&self, i: usize) -> usize {
        self.tree.agent_count() - self.tree.subtree_size(i)
    }

    pub fn is_competitor(&self, i: usize, j: usize) -> bool {
        j != 0 && j != i && !self.tree.is_ancestor(i, j)
    }
}

/// Global intern table mapping sorted child-label lists to labels. Shared by
/// every tree in the process so that labels are comparable across trees.
fn interner() -> &'static Mutex<HashMap<Vec<u32>, u32>> {
    static TABLE: OnceLock<Mutex<HashMap<Vec<u32>, u32>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut m = HashMap::new();
        m.insert(Vec::new(), LEAF_LABEL);
        Mutex::new(m)
    })
}

/// Label shared by every leaf.
pub const LEAF_LABEL: u32 = 0;

/// Canonical label per slot: equal labels exactly when the rooted subtrees
/// are isomorphic as unordered trees.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeSignature {
    labels: Vec<u32>,
}

impl TypeSignature {
    pub fn label(&self, slot: usize) -> u32 {
        self.labels[slot]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Agents grouped by label. Members are in ascending slot order.
    pub fn classes(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (s, &l) in self.labels.iter().enumerate().skip(1) {
            out.entry(l).or_default().push(s);
        }
        out
    }

    pub fn class_count(&self) -> usize {
        self.classes().len()
    }
}

/// AHU labelling of every subtree, bottom-up.
pub fn canonical_types(t: &OrderTree) -> TypeSignature {
    let mut labels = vec![LEAF_LABEL; t.len()];
    let mut table = interner().lock().unwrap_or_else(|e| e.into_inner());
    for &s in t.preorder().iter().rev() {
        let s = s as usize;
        if t.is_leaf(s) {
            continue;
        }
        let mut key: Vec<u32> = t.children(s).iter().map(|&c| labels[c as usize]).collect();
        key.sort_unstable();
        let next = table.len() as u32;
        labels[s] = *table.entry(key).or_insert(next);
    }
    TypeSignature { labels }
}

/// SHA-256 Merkle digest of the unordered rooted tree. Independent of the
/// process, so it is safe to persist and sort on.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TreeFingerprint(#[serde(serialize_with = "hex_ser")] pub [u8; 32]);

fn hex_ser<S: serde::Serializer>(bytes: &[u8; 32], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&hex_string(bytes))
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(64), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

impl fmt::Display for TreeFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex_string(&self.0))
    }
}

impl fmt::Debug for TreeFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TreeFingerprint({})", &hex_string(&self.0)[..16])
    }
}

pub fn tree_fingerprint(t: &OrderTree) -> TreeFingerprint {
    merkle(t, None)
}

/// Fingerprint that additionally pins one slot, so trees that are
/// isomorphic but place `marked` differently hash apart.
pub fn marked_fingerprint(t: &OrderTree, marked: usize) -> TreeFingerprint {
    merkle(t, Some(marked))
}

fn merkle(t: &OrderTree, marked: Option<usize>) -> TreeFingerprint {
    let mut digests = vec![[0u8; 32]; t.len()];
    let mut kids: Vec<[u8; 32]> = Vec::new();
    for &s in t.preorder().iter().rev() {
        let s = s as usize;
        kids.clear();
        kids.extend(t.children(s).iter().map(|&c| digests[c as usize]));
        kids.sort_unstable();
        let mut h = Sha256::new();
        h.update([if Some(s) == marked { b'*' } else { b'(' }]);
        for k in &kids {
            h.update(k);
        }
        h.update(*b")");
        digests[s].copy_from_slice(&h.finalize());
    }
    TreeFingerprint(digests[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::derive_invitation_graph;

    fn names(t: &OrderTree, slots: impl IntoIterator<Item = usize>) -> Vec<&'static str> {
        let mut v: Vec<_> = slots
            .into_iter()
            .map(|s| fixtures::TOY_NAMES[t.original_id(s) as usize])
            .collect();
        v.sort_unstable();
        v
    }

    fn toy_tree() -> OrderTree {
        let g = fixtures::toy_social_graph();
        let h = derive_invitation_graph(&g, &fixtures::toy_profile(&g));
        build_order_tree(&h).unwrap()
    }

    #[test]
    fn toy_tree_lead_sets() {
        let t = toy_tree();
        let ls = LeadSets::new(&t);
        let slot = |name: &str| {
            t.agents()
                .find(|&s| fixtures::TOY_NAMES[t.original_id(s) as usize] == name)
                .unwrap()
        };
        let (b, e) = (slot("b"), slot("e"));
        assert_eq!(names(&t, ls.descendants(b)), ["c", "d", "e", "f"]);
        assert!(ls.leaders(b).is_empty());
        assert_eq!(names(&t, ls.leaders(e)), ["b"]);
        assert_eq!(names(&t, ls.descendants(e)), ["f"]);
        assert_eq!(names(&t, ls.competitors(e)), ["a", "b", "c", "d"]);
    }

    #[test]
    fn star_has_only_leaves() {
        let h = InvitationGraph::from_slots(
            (0..4).map(NodeId).collect(),
            (0..4).collect(),
            &[(0, 1), (0, 2), (0, 3)],
        );
        let t = build_order_tree(&h).unwrap();
        assert!(t.agents().all(|s| t.is_leaf(s) && t.parent(s) == Some(0)));
        assert_eq!(canonical_types(&t).class_count(), 1);
    }

    #[test]
    fn path_becomes_chain() {
        let h = InvitationGraph::from_slots(
            (0..4).map(NodeId).collect(),
            (0..4).collect(),
            &[(0, 1), (1, 2), (2, 3)],
        );
        let t = build_order_tree(&h).unwrap();
        let ls = LeadSets::new(&t);
        assert_eq!(ls.leaders(3), vec![1, 2]);
        assert_eq!(ls.descendants(1).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(ls.competitor_count(1), 0);
        assert_eq!(ls.competitors(1).count(), 0);
        assert_eq!(canonical_types(&t).class_count(), 3);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let h = InvitationGraph::from_slots(
            (0..3).map(NodeId).collect(),
            (0..3).collect(),
            &[(0, 1)],
        );
        assert!(matches!(build_order_tree(&h), Err(CimError::Disconnected(2))));
    }

    #[test]
    fn cycle_through_requester_has_no_leaders() {
        let h = InvitationGraph::from_slots(
            (0..4).map(NodeId).collect(),
            (0..4).collect(),
            &[(0, 1), (1, 2), (2, 3), (3, 0)],
        );
        let t = build_order_tree(&h).unwrap();
        assert!(t.agents().all(|s| t.parent(s) == Some(0)));
    }

    #[test]
    fn parent_cycle_rejected() {
        assert!(OrderTree::from_parent_slots(&[0, 2, 1]).is_err());
        assert!(OrderTree::from_parent_slots(&[0, 1]).is_err());
    }

    #[test]
    fn labelled_types_of_example_tree() {
        let (t, slot) = fixtures::type_example_tree();
        let ty = canonical_types(&t);
        let l = |n: &str| ty.label(slot(n));
        assert_eq!(l("e"), l("b"));
        assert_eq!(l("b"), l("i"));
        assert_eq!(l("a"), l("c"));
        for leaf in ["j", "f", "g", "h", "k", "d"] {
            assert_eq!(l(leaf), LEAF_LABEL);
        }
        assert_ne!(l("a"), l("b"));
        assert_ne!(l("b"), LEAF_LABEL);
    }

    #[test]
    fn fingerprint_ignores_child_order() {
        let a = OrderTree::from_parent_slots(&[0, 0, 0, 1, 1, 2]).unwrap();
        let b = OrderTree::from_parent_slots(&[0, 0, 0, 2, 2, 1]).unwrap();
        assert_eq!(tree_fingerprint(&a), tree_fingerprint(&b));
        let chain = OrderTree::from_parent_slots(&[0, 0, 1, 2]).unwrap();
        let star = OrderTree::from_parent_slots(&[0, 0, 0, 0]).unwrap();
        assert_ne!(tree_fingerprint(&chain), tree_fingerprint(&star));
    }

    #[test]
    fn marked_fingerprint_tracks_position() {
        // root with a leaf and a one-child node: marking the leaf vs the middle differs
        let t = OrderTree::from_parent_slots(&[0, 0, 0, 2]).unwrap();
        assert_ne!(marked_fingerprint(&t, 1), marked_fingerprint(&t, 2));
        let u = OrderTree::from_parent_slots(&[0, 0, 0, 1]).unwrap();
        assert_eq!(marked_fingerprint(&t, 1), marked_fingerprint(&u, 2));
    }

    #[test]
    fn exports() {
        let t = toy_tree();
        let json = t.to_json();
        assert_eq!(json.as_object().unwrap().len(), 6);
        assert!(t.to_dot().starts_with("digraph"));
    }
}
