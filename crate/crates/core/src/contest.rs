//! Award rule, Monte Carlo task batches, the no-invitation baseline and
//! population dynamics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{expected_max, AbilityDistribution, ContestParams};
use crate::equilibrium::{leaf_threshold, ThresholdProfile};
use crate::error::Result;
use crate::fixtures::star;
use crate::rng::{task_rng, RNG_ALGORITHM};
use crate::tree::OrderTree;

/// Realized abilities of one task, per tree slot (slot 0 unused).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub abilities: Vec<f64>,
    pub contributed: Vec<bool>,
}

impl TaskSample {
    pub fn from_abilities(profile: &ThresholdProfile, abilities: Vec<f64>) -> Self {
        let contributed = abilities
            .iter()
            .enumerate()
            .map(|(s, &q)| s != 0 && profile.contributes(s, q))
            .collect();
        Self {
            abilities,
            contributed,
        }
    }

    /// Draws one ability per agent in slot order.
    pub fn draw(
        t: &OrderTree,
        profile: &ThresholdProfile,
        dist: &dyn AbilityDistribution,
        rng: &mut dyn rand::RngCore,
    ) -> Self {
        let mut abilities = Vec::with_capacity(t.len());
        abilities.push(f64::NAN);
        abilities.extend((1..t.len()).map(|_| dist.sample(rng)));
        Self::from_abilities(profile, abilities)
    }

    fn contributed_quality(&self, slot: usize) -> f64 {
        if self.contributed[slot] {
            self.abilities[slot]
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContestOutcome {
    /// Winning slots, ascending.
    pub winners: Vec<usize>,
    pub best_quality: Option<f64>,
    /// Slot of the best contributor.
    pub top: Option<usize>,
    pub n_contributors: usize,
    pub payout: f64,
    /// Contributors that lost only because of an exact quality tie.
    pub ties: usize,
}

/// Agent `i` wins iff it contributed and its quality strictly exceeds every
/// contributed quality outside its own subtree. Runs in linear time from
/// prefix and suffix maxima over the preorder.
pub fn run_award(t: &OrderTree, sample: &TaskSample, prize: f64) -> ContestOutcome {
    let pre = t.preorder();
    let m = pre.len();
    // prefix[k] = max over preorder positions 1..k, suffix[k] = max over k..m
    let mut prefix = vec![f64::NEG_INFINITY; m + 1];
    for k in 1..m {
        prefix[k + 1] = prefix[k].max(sample.contributed_quality(pre[k] as usize));
    }
    let mut suffix = vec![f64::NEG_INFINITY; m + 1];
    for k in (1..m).rev() {
        suffix[k] = suffix[k + 1].max(sample.contributed_quality(pre[k] as usize));
    }

    let mut winners = Vec::new();
    let mut ties = 0;
    let mut n_contributors = 0;
    let mut top: Option<usize> = None;
    for i in t.agents() {
        if !sample.contributed[i] {
            continue;
        }
        n_contributors += 1;
        let q = sample.abilities[i];
        if top.is_none_or(|b| q > sample.abilities[b]) {
            top = Some(i);
        }
        let start = t.preorder_position(i);
        let end = start + t.subtree_size(i);
        let rival = prefix[start].max(suffix[end]);
        if q > rival {
            winners.push(i);
        } else if q == rival {
            ties += 1;
        }
    }
    ContestOutcome {
        payout: winners.len() as f64 * prize,
        winners,
        best_quality: top.map(|s| sample.abilities[s]),
        top,
        n_contributors,
        ties,
    }
}

/// Per-task row of a batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskRecord {
    pub task_id: u64,
    pub best_quality: Option<f64>,
    pub n_contributors: usize,
    pub n_winners: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub tasks: Vec<TaskRecord>,
    pub no_contributor_count: usize,
    /// Number of tasks per winner count.
    pub winner_histogram: BTreeMap<usize, usize>,
    pub mean_payout: f64,
    pub ties: usize,
    pub master_seed: u64,
    pub rng: &'static str,
}

/// Equal-width histogram of best qualities, with tasks lacking any
/// contributor counted separately.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub none: usize,
}

impl BatchStats {
    fn collect(records: Vec<(TaskRecord, f64, usize)>, master_seed: u64) -> Self {
        let mut winner_histogram = BTreeMap::new();
        let mut payout = 0.0;
        let mut ties = 0;
        let mut tasks = Vec::with_capacity(records.len());
        for (rec, pay, t) in records {
            *winner_histogram.entry(rec.n_winners).or_insert(0) += 1;
            payout += pay;
            ties += t;
            tasks.push(rec);
        }
        let n = tasks.len();
        Self {
            no_contributor_count: tasks.iter().filter(|r| r.best_quality.is_none()).count(),
            mean_payout: if n == 0 { 0.0 } else { payout / n as f64 },
            winner_histogram,
            ties,
            tasks,
            master_seed,
            rng: RNG_ALGORITHM,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn tasks_with_winners(&self, k: usize) -> usize {
        self.winner_histogram.get(&k).copied().unwrap_or(0)
    }

    pub fn max_winners(&self) -> usize {
        self.winner_histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// Best qualities of tasks that had a contributor, ascending.
    pub fn sorted_best(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.tasks.iter().filter_map(|r| r.best_quality).collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    /// Median best quality, counting tasks without contributors as `floor`.
    pub fn median_best(&self, floor: f64) -> Option<f64> {
        let mut v: Vec<f64> = self.tasks.iter().map(|r| r.best_quality.unwrap_or(floor)).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_unstable_by(f64::total_cmp);
        let m = v.len();
        Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
    }

    pub fn quality_histogram(&self, bins: usize) -> QualityHistogram {
        let best = self.sorted_best();
        let none = self.n_tasks() - best.len();
        if best.is_empty() || bins == 0 {
            return QualityHistogram {
                edges: Vec::new(),
                counts: Vec::new(),
                none,
            };
        }
        let (lo, hi) = (best[0], best[best.len() - 1]);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for q in best {
            let k = (((q - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        QualityHistogram { edges, counts, none }
    }

    /// One row per task: `task_id,best_quality,n_contributors,n_winners`.
    /// An empty `best_quality` field means nobody contributed.
    pub fn to_csv(&self, prelude: &[String]) -> String {
        let mut out = String::new();
        for line in prelude {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("task_id,best_quality,n_contributors,n_winners\n");
        for r in &self.tasks {
            let q = r.best_quality.map(|q| format!("{q:.17e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.task_id, q, r.n_contributors, r.n_winners);
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_tasks": self.n_tasks(),
            "no_contributor_count": self.no_contributor_count,
            "winner_histogram": self.winner_histogram,
            "best_quality_histogram": self.quality_histogram(20),
            "median_best_quality": self.median_best(f64::NAN),
            "mean_payout": self.mean_payout,
            "ties": self.ties,
            "master_seed": self.master_seed,
            "rng": self.rng,
        })
    }
}

/// Runs `n_tasks` independent contests. Task `k` draws from its own rng
/// stream, so the result does not depend on scheduling.
pub fn simulate_batch(
    t: &OrderTree,
    profile: &ThresholdProfile,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    n_tasks: u64,
    master_seed: u64,
) -> BatchStats {
    let records: Vec<(TaskRecord, f64, usize)> = (0..n_tasks)
        .into_par_iter()
        .map(|task| {
            let mut rng = task_rng(master_seed, task);
            let sample = TaskSample::draw(t, profile, dist, &mut rng);
            let out = run_award(t, &sample, params.prize);
            (
                TaskRecord {
                    task_id: task,
                    best_quality: out.best_quality,
                    n_contributors: out.n_contributors,
                    n_winners: out.winners.len(),
                },
                out.payout,
                out.ties,
            )
        })
        .collect();
    BatchStats::collect(records, master_seed)
}

/// Common threshold when only the requester's `d` neighbours compete.
pub fn mn_threshold(d: usize, params: &ContestParams, dist: &dyn AbilityDistribution) -> Result<f64> {
    if d <= 1 {
        Ok(dist.lower())
    } else {
        leaf_threshold(d, params, dist)
    }
}

/// No-invitation baseline: a symmetric contest among `d` agents, won by the
/// unique best contributor.
pub fn mn_baseline(
    d: usize,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    n_tasks: u64,
    master_seed: u64,
) -> Result<BatchStats> {
    let r = mn_threshold(d, params, dist)?;
    let tree = star(d);
    let mut thresholds = vec![r; d + 1];
    thresholds[0] = f64::NAN;
    let mut lom = vec![1.0; d + 1];
    lom[0] = f64::NAN;
    let unconditional = (d == 1).then_some(1);
    let profile = ThresholdProfile::new(thresholds, lom, unconditional);
    Ok(simulate_batch(&tree, &profile, params, dist, n_tasks, master_seed))
}

/// Mean running maximum of contributed quality as agents join in slot order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicsCurve {
    /// `mean_best[k]` is the average best contributed quality among the
    /// first `k + 1` agents.
    pub mean_best: Vec<f64>,
    /// Expected maximum ability of all `|U|` agents.
    pub reference: f64,
    pub repetitions: u64,
    /// Repetitions whose final best quality stayed below `reference`.
    pub endpoints_below_reference: u64,
    pub master_seed: u64,
    pub rng: &'static str,
}

impl DynamicsCurve {
    pub fn endpoint(&self) -> f64 {
        self.mean_best.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self, prelude: &[String]) -> String {
        let mut out = String::new();
        for line in prelude {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("agents,mean_best_quality,reference\n");
        for (k, v) in self.mean_best.iter().enumerate() {
            let _ = writeln!(out, "{},{:.17e},{:.17e}", k + 1, v, self.reference);
        }
        out
    }
}

/// Agents join in slot order, which for trees built from an invitation
/// graph is the order in which breadth-first invitation waves reach them.
/// Prefixes without a contributor count as the lowest ability.
pub fn population_dynamics(
    t: &OrderTree,
    profile: &ThresholdProfile,
    dist: &dyn AbilityDistribution,
    n_repetitions: u64,
    master_seed: u64,
) -> Result<DynamicsCurve> {
    let n = t.agent_count();
    let reference = expected_max(dist, n.max(1))?;
    let floor = dist.lower();
    let curves: Vec<Vec<f64>> = (0..n_repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(master_seed, rep);
            let sample = TaskSample::draw(t, profile, dist, &mut rng);
            let mut best = floor;
            (1..t.len())
                .map(|s| {
                    if sample.contributed[s] {
                        best = best.max(sample.abilities[s]);
                    }
                    best
                })
                .collect()
        })
        .collect();
    let mut mean_best = vec![0.0; n];
    let mut below = 0;
    for c in &curves {
        for (acc, v) in mean_best.iter_mut().zip(c) {
            *acc += v;
        }
        below += u64::from(c.last().is_some_and(|&e| e < reference));
    }
    if n_repetitions > 0 {
        for v in &mut mean_best {
            *v /= n_repetitions as f64;
        }
    }
    Ok(DynamicsCurve {
        mean_best,
        reference,
        repetitions: n_repetitions,
        endpoints_below_reference: below,
        master_seed,
        rng: RNG_ALGORITHM,
    })
}
