//! Checks that inviting every neighbour is a best response.
//!
//! An agent's deviation is the subset of neighbours it invites while everyone
//! else keeps inviting all. Each subset induces an invitation graph and an
//! order tree; distinct trees are solved and the deviator's payoff compared
//! against the baseline on a grid of abilities.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{integrate, AbilityDistribution, ContestParams};
use crate::equilibrium::{solve_equilibrium_typed, ThresholdProfile, UtilityEvaluator};
use crate::error::{CimError, Result};
use crate::graph::{derive_invitation_graph, InvitationProfile, NodeId, SocialGraph};
use crate::rng::task_rng;
use crate::tree::{build_order_tree, canonical_types, marked_fingerprint, OrderTree, TreeFingerprint};

/// Largest degree whose neighbour subsets are enumerated exhaustively.
pub const DEFAULT_DEGREE_CAP: usize = 12;
pub const DEFAULT_GRID: usize = 256;
/// Random subsets tried on top of single exclusions above the degree cap.
pub const SAMPLED_SUBSETS: usize = 256;
/// Utility gain counted as profitable, relative to the prize.
pub const GAIN_TOL: f64 = 1e-9;

/// One invitation choice of the deviator and the tree it induces.
#[derive(Clone, Debug)]
pub struct Deviation {
    /// Invited neighbours by original id. Among the subsets producing the
    /// same tree, the largest one (then the lexicographically smallest) is kept.
    pub invited: Vec<u64>,
    /// Fingerprint of the tree with the deviator's slot pinned.
    pub fingerprint: TreeFingerprint,
    pub tree: OrderTree,
    /// Slot of the deviator in `tree`.
    pub slot: usize,
}

#[derive(Clone, Debug)]
pub struct DeviationSet {
    pub baseline: Deviation,
    /// Distinct deviation trees other than the baseline, by fingerprint.
    pub deviations: Vec<Deviation>,
    /// Subsets were sampled rather than enumerated.
    pub partial: bool,
    pub subsets_tried: usize,
}

fn induced(
    g: &SocialGraph,
    profile: &InvitationProfile,
    agent: NodeId,
    invited: &[NodeId],
) -> Result<Deviation> {
    let mut prof = profile.clone();
    prof.set(g, agent, invited)?;
    let h = derive_invitation_graph(g, &prof);
    let tree = build_order_tree(&h)?;
    let slot = tree
        .slot_of(agent)
        .ok_or_else(|| CimError::InvalidProfile(format!("agent {} is not invited", g.original_id(agent))))?;
    let mut ids: Vec<u64> = invited.iter().map(|&v| g.original_id(v)).collect();
    ids.sort_unstable();
    Ok(Deviation {
        invited: ids,
        fingerprint: marked_fingerprint(&tree, slot),
        tree,
        slot,
    })
}

/// Distinct order trees reachable by `agent` changing its own invitations.
///
/// Up to `cap` neighbours every subset is tried. Above it the empty set,
/// every single-neighbour exclusion and [`SAMPLED_SUBSETS`] uniformly random
/// subsets drawn from `seed` are tried, and the result is marked partial.
pub fn enumerate_deviations(
    agent: NodeId,
    g: &SocialGraph,
    profile: &InvitationProfile,
    cap: usize,
    seed: u64,
) -> Result<DeviationSet> {
    let nbrs: Vec<NodeId> = g.neighbors(agent).to_vec();
    let deg = nbrs.len();
    let baseline = induced(g, profile, agent, &nbrs)?;

    let partial = deg > cap;
    let subsets: Vec<Vec<NodeId>> = if !partial {
        (0u64..(1u64 << deg))
            .map(|mask| {
                (0..deg)
                    .filter(|&k| mask >> k & 1 == 1)
                    .map(|k| nbrs[k])
                    .collect()
            })
            .collect()
    } else {
        let mut out = vec![Vec::new()];
        for skip in 0..deg {
            out.push(
                nbrs.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .map(|(_, &v)| v)
                    .collect(),
            );
        }
        let mut rng = task_rng(seed, u64::from(agent.0));
        for _ in 0..SAMPLED_SUBSETS {
            let size = rng.random_range(0..deg);
            let mut pick: Vec<usize> = sample(&mut rng, deg, size).into_vec();
            pick.sort_unstable();
            out.push(pick.into_iter().map(|k| nbrs[k]).collect());
        }
        out
    };

    let found: Vec<Deviation> = subsets
        .par_iter()
        .map(|s| induced(g, profile, agent, s))
        .collect::<Result<_>>()?;
    let subsets_tried = found.len();
    let mut distinct: BTreeMap<TreeFingerprint, Deviation> = BTreeMap::new();
    for d in found {
        if d.fingerprint == baseline.fingerprint {
            continue;
        }
        match distinct.get(&d.fingerprint) {
            Some(kept) if (kept.invited.len(), &d.invited) >= (d.invited.len(), &kept.invited) => {}
            _ => {
                distinct.insert(d.fingerprint, d);
            }
        }
    }
    Ok(DeviationSet {
        baseline,
        deviations: distinct.into_values().collect(),
        partial,
        subsets_tried,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub grid: usize,
    pub degree_cap: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            degree_cap: DEFAULT_DEGREE_CAP,
            seed: 0,
        }
    }
}

/// Result for one deviation tree.
#[derive(Clone, Debug, Serialize)]
pub struct DeviationOutcome {
    pub fingerprint: String,
    pub invited: Vec<u64>,
    pub threshold: f64,
    /// `max_q (π'(q) - π(q))` over the grid.
    pub max_gain: f64,
    /// `(node_id, r'_j - r_j)` for every competitor, by node id.
    pub competitor_deltas: Vec<(u64, f64)>,
    /// `∫ π' dF`.
    pub expected_payoff: f64,
    pub profitable: bool,
    /// The deviation tree, attached only when the deviation is profitable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tree: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationReport {
    pub agent: u64,
    pub baseline_threshold: f64,
    pub baseline_expected_payoff: f64,
    /// Baseline first, then the distinct deviations by fingerprint.
    pub deviations: Vec<DeviationOutcome>,
    pub partial: bool,
    pub no_profitable_deviation: bool,
}

impl DeviationReport {
    /// Outcome whose representative invited set is `invited`.
    pub fn outcome_for(&self, invited: &[u64]) -> Option<&DeviationOutcome> {
        let mut key = invited.to_vec();
        key.sort_unstable();
        self.deviations.iter().find(|d| d.invited == key)
    }
}

/// Payoff `∫ π dF` of always playing the threshold strategy.
fn expected_payoff(eval: &UtilityEvaluator<'_>, slot: usize, dist: &dyn AbilityDistribution) -> Result<f64> {
    let prof = eval.profile();
    let from = if prof.is_unconditional(slot) {
        0.0
    } else {
        dist.cdf(prof.threshold(slot))
    };
    let f = |u: f64| dist.quantile(u).map(|q| eval.utility(slot, q)).unwrap_or(0.0);
    integrate(&f, from, 1.0, 1e-12, 1e-9)
}

fn ability_grid(dist: &dyn AbilityDistribution, floor: f64, g: usize) -> Result<Vec<f64>> {
    let p0 = dist.cdf(floor);
    (0..g)
        .map(|k| dist.quantile(p0 + (k as f64 + 0.5) / g as f64 * (1.0 - p0)))
        .collect()
}

struct Solved<'a> {
    dev: &'a Deviation,
    profile: ThresholdProfile,
}

fn solve_deviation<'a>(dev: &'a Deviation, params: &ContestParams, dist: &dyn AbilityDistribution) -> Result<Solved<'a>> {
    let (profile, _) = solve_equilibrium_typed(&dev.tree, params, dist).map_err(|e| CimError::Deviation {
        fingerprint: dev.fingerprint.to_string(),
        source: Box::new(e),
    })?;
    Ok(Solved { dev, profile })
}

fn competitor_ids(t: &OrderTree, slot: usize) -> BTreeSet<u64> {
    t.agents()
        .filter(|&j| j != slot && !t.is_ancestor(slot, j))
        .map(|j| t.original_id(j))
        .collect()
}

/// Compares the deviator's payoff under every distinct deviation with the
/// all-invite baseline.
pub fn verify_best_response(
    agent: NodeId,
    g: &SocialGraph,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    opts: &VerifyOptions,
) -> Result<DeviationReport> {
    let profile = InvitationProfile::all_invite(g);
    let set = enumerate_deviations(agent, g, &profile, opts.degree_cap, opts.seed)?;
    let base = solve_deviation(&set.baseline, params, dist)?;
    let bt = &set.baseline.tree;
    let bi = set.baseline.slot;
    let base_eval = UtilityEvaluator::new(bt, &base.profile, *params, dist);
    let r_i = base.profile.threshold(bi);
    let comps = competitor_ids(bt, bi);
    let base_payoff = expected_payoff(&base_eval, bi, dist)?;

    let baseline_outcome = DeviationOutcome {
        fingerprint: set.baseline.fingerprint.to_string(),
        invited: set.baseline.invited.clone(),
        threshold: r_i,
        max_gain: 0.0,
        competitor_deltas: comps.iter().map(|&id| (id, 0.0)).collect(),
        expected_payoff: base_payoff,
        profitable: false,
        tree: None,
    };

    let solved: Vec<Solved<'_>> = set
        .deviations
        .par_iter()
        .map(|d| solve_deviation(d, params, dist))
        .collect::<Result<_>>()?;

    let base_slot: HashMap<u64, usize> = bt.agents().map(|s| (bt.original_id(s), s)).collect();
    let outcomes: Vec<DeviationOutcome> = solved
        .par_iter()
        .map(|s| {
            let (dt, di) = (&s.dev.tree, s.dev.slot);
            if competitor_ids(dt, di) != comps {
                return Err(CimError::InternalConsistency(format!(
                    "deviation {} changed the competitor set of agent {}",
                    s.dev.fingerprint,
                    g.original_id(agent)
                )));
            }
            let eval = UtilityEvaluator::new(dt, &s.profile, *params, dist);
            let r_dev = s.profile.threshold(di);
            let grid = ability_grid(dist, r_i.min(r_dev), opts.grid)?;
            let max_gain = grid
                .iter()
                .map(|&q| eval.payoff(di, q) - base_eval.payoff(bi, q))
                .fold(f64::NEG_INFINITY, f64::max);
            let competitor_deltas = dt
                .agents()
                .filter(|&j| j != di && !dt.is_ancestor(di, j))
                .map(|j| {
                    let id = dt.original_id(j);
                    (id, s.profile.threshold(j) - base.profile.threshold(base_slot[&id]))
                })
                .collect::<BTreeMap<_, _>>()
                .into_iter()
                .collect();
            let profitable = max_gain > GAIN_TOL * params.prize;
            Ok(DeviationOutcome {
                fingerprint: s.dev.fingerprint.to_string(),
                invited: s.dev.invited.clone(),
                threshold: r_dev,
                max_gain,
                competitor_deltas,
                expected_payoff: expected_payoff(&eval, di, dist)?,
                profitable,
                tree: profitable.then(|| dt.to_json()),
            })
        })
        .collect::<Result<_>>()?;

    let no_profitable_deviation = outcomes.iter().all(|o| !o.profitable);
    let mut deviations = vec![baseline_outcome];
    deviations.extend(outcomes);
    Ok(DeviationReport {
        agent: g.original_id(agent),
        baseline_threshold: r_i,
        baseline_expected_payoff: base_payoff,
        deviations,
        partial: set.partial,
        no_profitable_deviation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMode {
    /// One representative per type class of the all-invite order tree.
    Typed,
    /// Every invited agent.
    Exhaustive,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub mode: VerifyMode,
    pub agents_total: usize,
    pub agents_checked: usize,
    pub verified: usize,
    pub violated: usize,
    pub partial_agents: usize,
    pub counterexamples: Vec<DeviationReport>,
}

impl VerifySummary {
    pub fn all_verified(&self) -> bool {
        self.violated == 0
    }
}

/// Verifies the all-invite profile on `g`.
pub fn verify_all(
    g: &SocialGraph,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    mode: VerifyMode,
    opts: &VerifyOptions,
) -> Result<VerifySummary> {
    let h = derive_invitation_graph(g, &InvitationProfile::all_invite(g));
    let tree = build_order_tree(&h)?;
    let agents: Vec<usize> = match mode {
        VerifyMode::Exhaustive => tree.agents().collect(),
        VerifyMode::Typed => canonical_types(&tree)
            .classes()
            .into_values()
            .map(|members| members[0])
            .collect(),
    };
    let reports: Vec<DeviationReport> = agents
        .par_iter()
        .map(|&s| verify_best_response(tree.node_id(s), g, params, dist, opts))
        .collect::<Result<_>>()?;
    let violated = reports.iter().filter(|r| !r.no_profitable_deviation).count();
    Ok(VerifySummary {
        mode,
        agents_total: tree.agent_count(),
        agents_checked: reports.len(),
        verified: reports.len() - violated,
        violated,
        partial_agents: reports.iter().filter(|r| r.partial).count(),
        counterexamples: reports.into_iter().filter(|r| !r.no_profitable_deviation).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::fixtures::{deviation_example, star};
    use crate::graph::SocialGraph;

    fn exp1() -> Distribution {
        Distribution::exponential(1.0).unwrap()
    }

    fn params() -> ContestParams {
        ContestParams::new(1.0, 0.1).unwrap()
    }

    #[test]
    fn example_agent_has_three_deviation_trees() {
        let ex = deviation_example();
        let g = ex.as_social_graph();
        let prof = InvitationProfile::all_invite(&g);
        let set = enumerate_deviations(ex.node("i"), &g, &prof, DEFAULT_DEGREE_CAP, 0).unwrap();
        assert_eq!(set.deviations.len(), 3);
        assert_eq!(set.subsets_tried, 8);
        assert!(!set.partial);
    }

    #[test]
    fn leaf_has_no_deviation() {
        let ex = deviation_example();
        let g = ex.as_social_graph();
        let prof = InvitationProfile::all_invite(&g);
        let set = enumerate_deviations(ex.node("h"), &g, &prof, DEFAULT_DEGREE_CAP, 0).unwrap();
        assert!(set.deviations.is_empty());
        let rep = verify_best_response(ex.node("h"), &g, &params(), &exp1(), &VerifyOptions::default()).unwrap();
        assert!(rep.no_profitable_deviation);
        assert_eq!(rep.deviations.len(), 1);
    }

    #[test]
    fn alternate_paths_leave_tree_unchanged() {
        // 4-cycle p-a-b-c-p with a chord-free square: a's exclusion of b is
        // repaired by the path through c
        let g = SocialGraph::from_dense_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 0).unwrap();
        let prof = InvitationProfile::all_invite(&g);
        let set = enumerate_deviations(NodeId(1), &g, &prof, DEFAULT_DEGREE_CAP, 0).unwrap();
        assert!(set.deviations.is_empty());
    }

    #[test]
    fn example_report_is_clean() {
        let ex = deviation_example();
        let g = ex.as_social_graph();
        let rep = verify_best_response(ex.node("i"), &g, &params(), &exp1(), &VerifyOptions::default()).unwrap();
        assert!(rep.no_profitable_deviation);
        assert_eq!(rep.deviations.len(), 4);
        assert!(rep.deviations[0].competitor_deltas.iter().all(|&(_, d)| d == 0.0));
        for d in &rep.deviations[1..] {
            assert!(d.threshold >= rep.baseline_threshold - 1e-9);
            assert!(d.expected_payoff <= rep.baseline_expected_payoff + 1e-9);
        }
    }

    #[test]
    fn typed_checks_fewer_agents() {
        let ex = deviation_example();
        let g = ex.as_social_graph();
        let opts = VerifyOptions::default();
        let typed = verify_all(&g, &params(), &exp1(), VerifyMode::Typed, &opts).unwrap();
        let full = verify_all(&g, &params(), &exp1(), VerifyMode::Exhaustive, &opts).unwrap();
        assert!(typed.agents_checked < full.agents_checked);
        assert_eq!(typed.all_verified(), full.all_verified());
        assert!(full.all_verified());

        let t = star(5);
        let g = SocialGraph::from_dense_edges(6, &(1..6).map(|v| (0, v)).collect::<Vec<_>>(), 0).unwrap();
        let s = verify_all(&g, &params(), &exp1(), VerifyMode::Typed, &opts).unwrap();
        assert_eq!(s.agents_checked, 1);
        assert_eq!(s.agents_total, t.agent_count());
    }

    #[test]
    fn sampled_mode_above_cap() {
        let edges: Vec<(u32, u32)> = (1..6).map(|v| (0, v)).chain((6..10).map(|v| (1, v))).collect();
        let g = SocialGraph::from_dense_edges(10, &edges, 0).unwrap();
        let prof = InvitationProfile::all_invite(&g);
        let set = enumerate_deviations(NodeId(1), &g, &prof, 2, 7).unwrap();
        assert!(set.partial);
        // only the number of dropped leaves matters: at most four distinct trees
        assert!(set.deviations.len() <= 4);
        assert!(set.deviations.len() >= 2);
    }
}
