//! Social graphs, invitation profiles and the invitation graph they induce.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;

use crate::error::{CimError, Result};

/// Dense index of a node in a [`SocialGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Undirected simple graph of agents, one of which is the requester.
///
/// Node ids from the source file are remapped to dense [`NodeId`]s in order
/// of first appearance; the mapping is kept in both directions.
#[derive(Clone, Debug)]
pub struct SocialGraph {
    adjacency: Vec<Vec<NodeId>>,
    original: Vec<u64>,
    index: HashMap<u64, NodeId>,
    requester: NodeId,
    edge_count: usize,
}

impl SocialGraph {
    /// Builds a graph from edges given in original ids. Self-loops are
    /// dropped and parallel edges merged. The requester defaults to the
    /// first node seen.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, u64)>,
    {
        let mut index: HashMap<u64, NodeId> = HashMap::new();
        let mut original = Vec::new();
        let mut adjacency: Vec<Vec<NodeId>> = Vec::new();
        let mut intern = |id: u64, adjacency: &mut Vec<Vec<NodeId>>| {
            *index.entry(id).or_insert_with(|| {
                original.push(id);
                adjacency.push(Vec::new());
                NodeId((original.len() - 1) as u32)
            })
        };
        let mut seen_any = false;
        for (a, b) in edges {
            seen_any = true;
            let u = intern(a, &mut adjacency);
            let v = intern(b, &mut adjacency);
            if u == v {
                continue;
            }
            adjacency[u.index()].push(v);
            adjacency[v.index()].push(u);
        }
        if !seen_any {
            return Err(CimError::EmptyInput);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Self {
            adjacency,
            original,
            index,
            requester: NodeId(0),
            edge_count: edge_count / 2,
        })
    }

    /// Builds a graph directly on dense ids `0..n`; original ids equal dense ids.
    pub fn from_dense_edges(n: usize, edges: &[(u32, u32)], requester: u32) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(CimError::UnknownNode(a.max(b) as u64));
            }
            if a != b {
                adjacency[a as usize].push(NodeId(b));
                adjacency[b as usize].push(NodeId(a));
            }
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        let original: Vec<u64> = (0..n as u64).collect();
        let index = original.iter().map(|&o| (o, NodeId(o as u32))).collect();
        let g = Self {
            adjacency,
            original,
            index,
            requester: NodeId(0),
            edge_count: edge_count / 2,
        };
        g.with_requester(requester as u64)
    }

    /// Re-targets the requester, given by original id.
    pub fn with_requester(mut self, original_id: u64) -> Result<Self> {
        self.requester = self.node(original_id)?;
        Ok(self)
    }

    pub fn requester(&self) -> NodeId {
        self.requester
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v.index()]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u.index()].binary_search(&v).is_ok()
    }

    /// Dense id for an original dataset id.
    pub fn node(&self, original_id: u64) -> Result<NodeId> {
        self.index
            .get(&original_id)
            .copied()
            .ok_or(CimError::UnknownNode(original_id))
    }

    /// Original dataset id of a dense node.
    pub fn original_id(&self, v: NodeId) -> u64 {
        self.original[v.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adjacency.len() as u32).map(NodeId)
    }

    /// Nodes reachable from the requester, in BFS order (requester first).
    pub fn reachable_from_requester(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.node_count()];
        let mut order = vec![self.requester];
        seen[self.requester.index()] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &v in self.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    order.push(v);
                }
            }
        }
        order
    }
}

/// Parses a whitespace-separated edge list. Blank lines and lines starting
/// with `#` are skipped.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<SocialGraph> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u64> {
            let tok = tok.ok_or_else(|| CimError::Parse {
                line: lineno + 1,
                message: "expected two node ids".into(),
            })?;
            tok.parse::<u64>().map_err(|e| CimError::Parse {
                line: lineno + 1,
                message: format!("bad node id {tok:?}: {e}"),
            })
        };
        let a = parse(fields.next())?;
        let b = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(CimError::Parse {
                line: lineno + 1,
                message: "trailing fields after edge".into(),
            });
        }
        edges.push((a, b));
    }
    SocialGraph::from_edges(edges)
}

/// Convenience wrapper over [`load_edge_list`] for in-memory text.
pub fn parse_edge_list(text: &str) -> Result<SocialGraph> {
    load_edge_list(text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Invites {
    All,
    Subset(Vec<NodeId>),
}

/// Who each agent invites. Nodes not set explicitly invite all neighbours;
/// the requester always does.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvitationProfile {
    invites: Vec<Invites>,
}

impl InvitationProfile {
    pub fn all_invite(g: &SocialGraph) -> Self {
        Self {
            invites: vec![Invites::All; g.node_count()],
        }
    }

    /// Restricts `node`'s invitations to `subset`, which must only contain
    /// neighbours of `node`.
    pub fn set(&mut self, g: &SocialGraph, node: NodeId, subset: &[NodeId]) -> Result<()> {
        if node == g.requester() {
            return Err(CimError::InvalidProfile(
                "the requester always invites all neighbours".into(),
            ));
        }
        let mut sorted = subset.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(bad) = sorted.iter().find(|&&v| !g.has_edge(node, v)) {
            return Err(CimError::InvalidProfile(format!(
                "{} is not a neighbour of {}",
                g.original_id(*bad),
                g.original_id(node)
            )));
        }
        self.invites[node.index()] = if sorted.len() == g.degree(node) {
            Invites::All
        } else {
            Invites::Subset(sorted)
        };
        Ok(())
    }

    /// Resets `node` to inviting every neighbour.
    pub fn set_all(&mut self, node: NodeId) {
        self.invites[node.index()] = Invites::All;
    }

    pub fn invites<'a>(&'a self, g: &'a SocialGraph, node: NodeId) -> &'a [NodeId] {
        if node == g.requester() {
            return g.neighbors(node);
        }
        match &self.invites[node.index()] {
            Invites::All => g.neighbors(node),
            Invites::Subset(s) => s,
        }
    }

    pub fn invites_all(&self, node: NodeId) -> bool {
        matches!(self.invites[node.index()], Invites::All)
    }

    /// Parses `{"node": [invited ids...]}` keyed by original ids.
    pub fn from_json(g: &SocialGraph, text: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<u64>> = serde_json::from_str(text)?;
        let mut profile = Self::all_invite(g);
        for (key, invited) in raw {
            let orig: u64 = key
                .parse()
                .map_err(|_| CimError::InvalidProfile(format!("bad node key {key:?}")))?;
            let node = g.node(orig)?;
            let subset = invited
                .iter()
                .map(|&o| g.node(o))
                .collect::<Result<Vec<_>>>()?;
            profile.set(g, node, &subset)?;
        }
        Ok(profile)
    }

    /// Serializes the nodes that do not invite everybody.
    pub fn to_json(&self, g: &SocialGraph) -> String {
        let mut out = BTreeMap::new();
        for v in g.nodes() {
            if let Invites::Subset(s) = &self.invites[v.index()] {
                let ids: Vec<u64> = s.iter().map(|&w| g.original_id(w)).collect();
                out.insert(g.original_id(v).to_string(), ids);
            }
        }
        serde_json::to_string(&out).expect("map of vectors serializes")
    }
}

/// Subgraph of invited agents plus the requester.
///
/// Nodes are addressed by local slots: slot 0 is the requester, slots
/// `1..=|U|` are invited agents in order of discovery (breadth-first
/// invitation waves).
#[derive(Clone, Debug)]
pub struct InvitationGraph {
    nodes: Vec<NodeId>,
    original: Vec<u64>,
    adjacency: Vec<Vec<u32>>,
}

impl InvitationGraph {
    pub fn requester(&self) -> NodeId {
        self.nodes[0]
    }

    /// Invited agents `U`, in discovery order.
    pub fn invited(&self) -> &[NodeId] {
        &self.nodes[1..]
    }

    pub fn invited_count(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Number of slots, requester included.
    pub fn slot_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_at(&self, slot: usize) -> NodeId {
        self.nodes[slot]
    }

    pub fn original_ids(&self) -> &[u64] {
        &self.original
    }

    pub fn slot_neighbors(&self, slot: usize) -> &[u32] {
        &self.adjacency[slot]
    }

    /// Edge set `E'` in node ids, each edge once with the smaller slot first.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (s, list) in self.adjacency.iter().enumerate() {
            for &t in list {
                if (s as u32) < t {
                    out.push((self.nodes[s], self.nodes[t as usize]));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Builds an invitation graph from slot-level data. Slot 0 is the
    /// requester. Mostly useful for tests and generators.
    pub fn from_slots(nodes: Vec<NodeId>, original: Vec<u64>, edges: &[(u32, u32)]) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            if a != b {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            nodes,
            original,
            adjacency,
        }
    }
}

/// Computes the invitation graph induced by `profile`.
///
/// An agent joins `U` once some member of `U ∪ {p}` invites it. An edge is
/// kept when one of its endpoints is in `U ∪ {p}` and invites the other.
pub fn derive_invitation_graph(g: &SocialGraph, profile: &InvitationProfile) -> InvitationGraph {
    let n = g.node_count();
    let mut slot_of = vec![u32::MAX; n];
    let p = g.requester();
    let mut nodes = vec![p];
    slot_of[p.index()] = 0;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut queue = VecDeque::from([p]);
    while let Some(u) = queue.pop_front() {
        let su = slot_of[u.index()];
        for &v in profile.invites(g, u) {
            if slot_of[v.index()] == u32::MAX {
                slot_of[v.index()] = nodes.len() as u32;
                nodes.push(v);
                queue.push_back(v);
            }
            edges.push((su, slot_of[v.index()]));
        }
    }
    let original = nodes.iter().map(|&v| g.original_id(v)).collect();
    InvitationGraph::from_slots(nodes, original, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_small_list() {
        let g = parse_edge_list("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn dedups_edges() {
        let g = parse_edge_list("0 1\n1 0\n0 1").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn skips_comments_and_remaps_ids() {
        let g = parse_edge_list("# header\n10 20\n\n20 30\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.original_id(g.node(30).unwrap()), 30);
        assert_eq!(g.node(20).unwrap(), NodeId(1));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_edge_list("0 1\n1 x\n") {
            Err(CimError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_edge_list("0 1\n3\n"),
            Err(CimError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(parse_edge_list(""), Err(CimError::EmptyInput)));
        assert!(matches!(
            parse_edge_list("# only a comment\n"),
            Err(CimError::EmptyInput)
        ));
    }

    #[test]
    fn profile_rejects_non_neighbours() {
        let g = parse_edge_list("0 1\n1 2").unwrap();
        let mut prof = InvitationProfile::all_invite(&g);
        assert!(prof.set(&g, NodeId(0), &[]).is_err());
        assert!(prof.set(&g, NodeId(2), &[NodeId(0)]).is_err());
        prof.set(&g, NodeId(1), &[NodeId(2)]).unwrap();
        assert_eq!(prof.invites(&g, NodeId(1)), &[NodeId(2)]);
    }

    #[test]
    fn profile_json_round_trip() {
        let g = fixtures::toy_social_graph();
        let prof = fixtures::toy_profile(&g);
        let text = prof.to_json(&g);
        assert_eq!(InvitationProfile::from_json(&g, &text).unwrap(), prof);
    }

    #[test]
    fn toy_profile_excludes_g_and_h() {
        let g = fixtures::toy_social_graph();
        let h = derive_invitation_graph(&g, &fixtures::toy_profile(&g));
        let mut names: Vec<&str> = h
            .invited()
            .iter()
            .map(|&v| fixtures::TOY_NAMES[g.original_id(v) as usize])
            .collect();
        names.sort_unstable();
        assert_eq!(names, ["a", "b", "c", "d", "e", "f"]);
        // a and d invite nobody, yet b-d and d-e survive through one-sided invitations
        let mut edges: Vec<(&str, &str)> = h
            .edges()
            .into_iter()
            .map(|(u, v)| {
                let mut e = [
                    fixtures::TOY_NAMES[g.original_id(u) as usize],
                    fixtures::TOY_NAMES[g.original_id(v) as usize],
                ];
                e.sort_unstable();
                (e[0], e[1])
            })
            .collect();
        edges.sort_unstable();
        let mut expected = vec![
            ("a", "p"),
            ("b", "p"),
            ("b", "c"),
            ("b", "d"),
            ("c", "e"),
            ("d", "e"),
            ("e", "f"),
        ];
        expected.sort_unstable();
        assert_eq!(edges, expected);
    }

    #[test]
    fn requester_inviting_nobody_yields_empty_set() {
        let g = SocialGraph::from_dense_edges(3, &[(1, 2)], 0).unwrap();
        let h = derive_invitation_graph(&g, &InvitationProfile::all_invite(&g));
        assert_eq!(h.invited_count(), 0);
    }

    #[test]
    fn all_invite_reaches_component() {
        let g = SocialGraph::from_dense_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4)], 0).unwrap();
        let h = derive_invitation_graph(&g, &InvitationProfile::all_invite(&g));
        assert_eq!(h.invited_count(), 2);
        assert_eq!(h.edge_count(), 3);
    }
}
