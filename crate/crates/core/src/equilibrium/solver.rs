//! Top-down batch solver.
//!
//! Thresholds are fixed in descending order. The leaves go first with the
//! common leaf threshold; afterwards the next batch is always the set of
//! ready agents (everything they lead is solved) with the largest `p_lom`.
//! Agent `i` in a batch sees its already-solved competitors `J_i` and
//! solves `M ∏_{J_i} F(r_j) F(r_i)^{|Q_i|} = c`, since every competitor
//! still unsolved will end up at or below `r_i`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::Serialize;

use super::{leaf_threshold, ThresholdProfile};
use crate::dist::{AbilityDistribution, ContestParams};
use crate::error::{CimError, Result};
use crate::tree::{canonical_types, OrderTree, TypeSignature};

/// Agents whose `ln p_lom` values differ by at most this much are solved in
/// one batch (a relative tolerance on `p_lom`).
pub const LOM_TIE_TOL: f64 = 1e-12;

/// Slack allowed when checking a new threshold against the solved minimum.
const ORDER_SLACK: f64 = 1e-9;

/// Rounding allowed on the log-radicand before it counts as above one.
const RADICAND_SLACK: f64 = 1e-12;

/// Slack on the unconditional agent's utility at the lowest ability.
const UNCONDITIONAL_SLACK: f64 = 1e-8;

/// One step of the solver: agents solved together.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Batch {
    /// Tree slots, ascending.
    pub agents: Vec<usize>,
    /// Largest threshold in the batch; members agree up to the tie tolerance.
    pub threshold: f64,
    /// Number of distinct root-finding problems solved for this batch.
    pub root_solves: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub batches: Vec<Batch>,
    /// `|Q_i|` per slot at solve time; slot 0 unused.
    pub q_size: Vec<usize>,
    /// `|J_i|` per slot at solve time; slot 0 unused.
    pub j_size: Vec<usize>,
}

impl SolveTrace {
    pub fn total_root_solves(&self) -> usize {
        self.batches.iter().map(|b| b.root_solves).sum()
    }

    /// JSON with original node ids in place of slots.
    pub fn to_json(&self, tree: &OrderTree) -> serde_json::Value {
        let batches: Vec<_> = self
            .batches
            .iter()
            .map(|b| {
                serde_json::json!({
                    "agents": b.agents.iter().map(|&s| tree.original_id(s)).collect::<Vec<_>>(),
                    "threshold": b.threshold,
                    "root_solves": b.root_solves,
                })
            })
            .collect();
        let per_agent: Vec<_> = tree
            .agents()
            .map(|s| {
                serde_json::json!({
                    "node_id": tree.original_id(s),
                    "q_size": self.q_size[s],
                    "j_size": self.j_size[s],
                })
            })
            .collect();
        serde_json::json!({ "batches": batches, "agents": per_agent })
    }
}

/// Thresholds by the batch algorithm, one root solve per agent.
pub fn solve_equilibrium(
    t: &OrderTree,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
) -> Result<(ThresholdProfile, SolveTrace)> {
    solve(t, params, dist, None)
}

/// Same thresholds as [`solve_equilibrium`], bit for bit, but each batch
/// solves once per type class and copies the value to the other members.
pub fn solve_equilibrium_typed(
    t: &OrderTree,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
) -> Result<(ThresholdProfile, SolveTrace)> {
    let types = canonical_types(t);
    solve(t, params, dist, Some(&types))
}

/// Sum in ascending order, so equal multisets give equal sums.
fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

#[derive(PartialEq)]
struct Ready {
    log_lom: f64,
    slot: usize,
}

impl Eq for Ready {}

impl PartialOrd for Ready {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ready {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_lom
            .total_cmp(&other.log_lom)
            .then(other.slot.cmp(&self.slot))
    }
}

fn solve(
    t: &OrderTree,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    types: Option<&TypeSignature>,
) -> Result<(ThresholdProfile, SolveTrace)> {
    let n = t.agent_count();
    if n == 0 {
        return Err(CimError::InvalidTree("no agents besides the requester".into()));
    }
    let len = t.len();
    let l = dist.lower();
    let mut r = vec![f64::NAN; len];
    let mut ln_f = vec![0.0; len];
    let mut log_lom = vec![0.0; len];
    let mut trace = SolveTrace {
        batches: Vec::new(),
        q_size: vec![0; len],
        j_size: vec![0; len],
    };

    if n == 1 {
        r[1] = l;
        trace.batches.push(Batch {
            agents: vec![1],
            threshold: l,
            root_solves: 0,
        });
        let lom = vec![f64::NAN, 1.0];
        return Ok((ThresholdProfile::new(r, lom, Some(1)), trace));
    }

    let ln_ratio = params.ratio().ln();
    let r_leaf = leaf_threshold(n, params, dist)?;
    let ln_f_leaf = dist.ln_cdf(r_leaf);

    let mut pending: Vec<usize> = (0..len).map(|s| t.children(s).len()).collect();
    let mut heap = BinaryHeap::new();
    let mut solved = 0usize;
    let mut s_a: f64 = 0.0;
    let mut min_a = f64::INFINITY;
    let mut unconditional = None;

    let leaves: Vec<usize> = t.agents().filter(|&s| t.is_leaf(s)).collect();
    let mut batch = leaves;
    let mut first = true;
    loop {
        if !first {
            let head: Ready = heap.pop().expect("a ready agent exists while some remain unsolved");
            let floor = head.log_lom - LOM_TIE_TOL;
            batch.clear();
            batch.push(head.slot);
            while heap.peek().is_some_and(|x: &Ready| x.log_lom >= floor) {
                batch.push(heap.pop().unwrap().slot);
            }
            batch.sort_unstable();
            if let Some(ty) = types {
                // same-type agents carry bit-identical log_lom, so they are all ready
                // and within tolerance by now; anything else is a solver bug
                let labels: HashSet<u32> = batch.iter().map(|&s| ty.label(s)).collect();
                if heap.iter().any(|x| labels.contains(&ty.label(x.slot))) {
                    return Err(CimError::InternalConsistency(
                        "agents of one type were split across batches".into(),
                    ));
                }
            }
        }

        let q = n - 1 - solved;
        let mut cache: HashMap<u32, f64> = HashMap::new();
        let mut root_solves = 0usize;
        for &i in &batch {
            trace.q_size[i] = q;
            trace.j_size[i] = solved - (t.subtree_size(i) - 1);
            let ri = if first {
                if types.is_none() || root_solves == 0 {
                    root_solves += 1;
                }
                r_leaf
            } else if let Some(&v) = types.and_then(|ty| cache.get(&ty.label(i))) {
                v
            } else {
                root_solves += 1;
                let ln_j = s_a - log_lom[i];
                let v = if q == 0 {
                    let slack = params.prize * ln_j.exp() - params.cost;
                    if slack < -UNCONDITIONAL_SLACK * params.prize {
                        return Err(CimError::InternalConsistency(format!(
                            "last agent (slot {i}) has negative utility {slack:e} at the lowest ability"
                        )));
                    }
                    if solved != n - 1 {
                        return Err(CimError::InternalConsistency(format!(
                            "slot {i} has no unsolved competitors but is not the last agent"
                        )));
                    }
                    unconditional = Some(i);
                    l
                } else {
                    let ln_rad = (ln_ratio - ln_j) / q as f64;
                    if ln_rad > RADICAND_SLACK {
                        return Err(CimError::InternalConsistency(format!(
                            "radicand exp({ln_rad:e}) above one for slot {i} with {q} unsolved competitors"
                        )));
                    }
                    dist.quantile_ln(ln_rad.min(0.0))?
                };
                if v > min_a + ORDER_SLACK {
                    return Err(CimError::InternalConsistency(format!(
                        "threshold {v} of slot {i} exceeds the solved minimum {min_a}"
                    )));
                }
                if let Some(ty) = types {
                    cache.insert(ty.label(i), v);
                }
                v
            };
            r[i] = ri;
            ln_f[i] = if first { ln_f_leaf } else { dist.ln_cdf(ri) };
        }

        let mut terms: Vec<f64> = batch.iter().map(|&i| ln_f[i]).collect();
        s_a += sorted_sum(&mut terms);
        solved += batch.len();
        let top = batch.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
        min_a = batch.iter().map(|&i| r[i]).fold(min_a, f64::min);
        trace.batches.push(Batch {
            agents: batch.clone(),
            threshold: top,
            root_solves,
        });
        first = false;

        for &i in &batch {
            let par = t.parent(i).expect("agents have parents");
            pending[par] -= 1;
            if par != 0 && pending[par] == 0 {
                let mut terms: Vec<f64> = t
                    .children(par)
                    .iter()
                    .map(|&c| ln_f[c as usize] + log_lom[c as usize])
                    .collect();
                log_lom[par] = sorted_sum(&mut terms);
                heap.push(Ready {
                    log_lom: log_lom[par],
                    slot: par,
                });
            }
        }
        if solved == n {
            break;
        }
    }

    let lom: Vec<f64> = log_lom
        .iter()
        .enumerate()
        .map(|(s, &x)| if s == 0 { f64::NAN } else { x.exp() })
        .collect();
    Ok((ThresholdProfile::new(r, lom, unconditional), trace))
}
