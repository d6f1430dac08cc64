//! Threshold equilibrium of the invitation contest on a fixed order tree.
//!
//! In equilibrium agent `i` contributes iff its ability exceeds a threshold
//! `r_i` (or is the single unconditional contributor). Leaves share the
//! highest threshold, leaders sit strictly below everyone they lead, and the
//! thresholds are ranked exactly like the probabilities `p_lom` that nobody
//! an agent leads contributes. [`solve_equilibrium`] exploits this ranking
//! to compute all thresholds top-down in batches.

mod brute;
mod solver;

use std::fmt::Write as _;

pub use brute::{brute_force_equilibrium, BruteForceOptions};
pub use solver::{solve_equilibrium, solve_equilibrium_typed, Batch, SolveTrace, LOM_TIE_TOL};

use crate::dist::{AbilityDistribution, ContestParams};
use crate::error::{CimError, Result};
use crate::tree::{LeadSets, OrderTree, TypeSignature};

/// Equilibrium thresholds per tree slot. Slot 0 (the requester) holds NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdProfile {
    thresholds: Vec<f64>,
    lom: Vec<f64>,
    unconditional: Option<usize>,
}

impl ThresholdProfile {
    pub(crate) fn new(thresholds: Vec<f64>, lom: Vec<f64>, unconditional: Option<usize>) -> Self {
        Self {
            thresholds,
            lom,
            unconditional,
        }
    }

    pub fn threshold(&self, slot: usize) -> f64 {
        self.thresholds[slot]
    }

    /// Per-slot thresholds, slot 0 included as NaN.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn lom(&self, slot: usize) -> f64 {
        self.lom[slot]
    }

    pub fn unconditional(&self) -> Option<usize> {
        self.unconditional
    }

    pub fn is_unconditional(&self, slot: usize) -> bool {
        self.unconditional == Some(slot)
    }

    /// Whether an agent of ability `q` contributes.
    #[inline]
    pub fn contributes(&self, slot: usize, q: f64) -> bool {
        q > self.thresholds[slot] || self.unconditional == Some(slot)
    }

    pub fn agent_count(&self) -> usize {
        self.thresholds.len() - 1
    }

    pub fn max_threshold(&self) -> f64 {
        self.thresholds[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_threshold(&self) -> f64 {
        self.thresholds[1..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV rows `node_id,threshold,p_lom,type_id,is_unconditional`, one per
    /// agent in slot order. `prelude` lines are emitted first, each prefixed
    /// with `# `.
    pub fn to_csv(&self, tree: &OrderTree, types: &TypeSignature, prelude: &[String]) -> String {
        let mut out = String::new();
        for line in prelude {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("node_id,threshold,p_lom,type_id,is_unconditional\n");
        for s in tree.agents() {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{},{}",
                tree.original_id(s),
                self.thresholds[s],
                self.lom[s],
                types.label(s),
                self.is_unconditional(s)
            );
        }
        out
    }
}

/// Common threshold of every leaf: `F^-1((c/M)^(1/(|U|-1)))`.
pub fn leaf_threshold(n_agents: usize, params: &ContestParams, dist: &dyn AbilityDistribution) -> Result<f64> {
    if n_agents < 2 {
        return Err(CimError::InvalidParams(format!(
            "leaf threshold needs at least two agents, got {n_agents}; a lone agent contributes unconditionally"
        )));
    }
    dist.quantile_ln(params.ratio().ln() / (n_agents - 1) as f64)
}

/// `p_lom` of agent `i`: the probability that nobody in `D_i` contributes,
/// `∏_{k ∈ D_i} F(r_k)`. Every threshold in `D_i` must be known.
pub fn p_lom(
    i: usize,
    thresholds: &[Option<f64>],
    lead: &LeadSets<'_>,
    dist: &dyn AbilityDistribution,
) -> Result<f64> {
    let mut ln = 0.0;
    for k in lead.descendants(i) {
        let r = thresholds[k].ok_or_else(|| {
            CimError::Precondition(format!("threshold of slot {k} (led by {i}) is unknown"))
        })?;
        ln += dist.ln_cdf(r);
    }
    Ok(ln.exp())
}

/// Expected utility of contributing with ability `q`:
/// `M ∏_{j ∈ P_i} F(max(q, r_j)) - c`. Linear in `|P_i|`; see
/// [`UtilityEvaluator`] for repeated queries.
pub fn expected_utility(
    i: usize,
    q: f64,
    profile: &ThresholdProfile,
    lead: &LeadSets<'_>,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
) -> f64 {
    let ln: f64 = lead
        .competitors(i)
        .map(|j| dist.ln_cdf(q.max(profile.threshold(j))))
        .sum();
    params.prize * ln.exp() - params.cost
}

/// Answers utility queries in `O(|{j : r_j > q}|)` by walking agents in
/// descending threshold order and skipping the querying agent's subtree.
#[derive(Clone, Debug)]
pub struct UtilityEvaluator<'a> {
    tree: &'a OrderTree,
    profile: &'a ThresholdProfile,
    params: ContestParams,
    dist: &'a dyn AbilityDistribution,
    by_threshold: Vec<(f64, f64, usize)>,
}

impl<'a> UtilityEvaluator<'a> {
    pub fn new(
        tree: &'a OrderTree,
        profile: &'a ThresholdProfile,
        params: ContestParams,
        dist: &'a dyn AbilityDistribution,
    ) -> Self {
        let mut by_threshold: Vec<(f64, f64, usize)> = tree
            .agents()
            .map(|s| {
                let r = profile.threshold(s);
                (r, dist.ln_cdf(r), s)
            })
            .collect();
        by_threshold.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)));
        Self {
            tree,
            profile,
            params,
            dist,
            by_threshold,
        }
    }

    pub fn profile(&self) -> &ThresholdProfile {
        self.profile
    }

    /// `π_i(q)`.
    pub fn utility(&self, i: usize, q: f64) -> f64 {
        let competitors = self.tree.agent_count() - self.tree.subtree_size(i);
        let mut ln = 0.0;
        let mut above = 0usize;
        for &(r, ln_f, j) in &self.by_threshold {
            if r <= q {
                break;
            }
            if j == i || self.tree.is_ancestor(i, j) {
                continue;
            }
            ln += ln_f;
            above += 1;
        }
        let rest = competitors - above;
        if rest > 0 {
            ln += rest as f64 * self.dist.ln_cdf(q);
        }
        self.params.prize * ln.exp() - self.params.cost
    }

    /// Realized expected payoff of an agent with ability `q`: `π_i(q)` when
    /// it contributes, zero otherwise.
    pub fn payoff(&self, i: usize, q: f64) -> f64 {
        if self.profile.contributes(i, q) {
            self.utility(i, q)
        } else {
            0.0
        }
    }
}
