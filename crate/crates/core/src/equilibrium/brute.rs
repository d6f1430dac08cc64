//! Best-response iteration, used as an oracle for the batch solver. It
//! knows nothing about batches or `p_lom`; it only solves each agent's
//! indifference condition against the current thresholds of its competitors.

use super::ThresholdProfile;
use crate::dist::{AbilityDistribution, ContestParams};
use crate::error::{CimError, Result};
use crate::tree::{LeadSets, OrderTree};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteForceOptions {
    pub max_rounds: usize,
    /// Stop once no threshold moves by more than this.
    pub tol: f64,
    /// Rounds without the residual halving before synchronous updates give
    /// way to in-place sweeps.
    pub stall_rounds: usize,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            max_rounds: 10_000,
            tol: 1e-10,
            stall_rounds: 50,
        }
    }
}

/// Competitor cdf values sorted descending with prefix sums of their logs,
/// so `∏ max(x, F_j)` costs one binary search.
struct Competitors {
    desc: Vec<f64>,
    prefix_ln: Vec<f64>,
}

impl Competitors {
    fn new(mut values: Vec<f64>) -> Self {
        values.sort_unstable_by(|a, b| b.total_cmp(a));
        let mut prefix_ln = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        prefix_ln.push(acc);
        for &v in &values {
            acc += v.ln();
            prefix_ln.push(acc);
        }
        Self {
            desc: values,
            prefix_ln,
        }
    }

    /// `ln ∏_j max(x, F_j)`.
    fn ln_product(&self, x: f64) -> f64 {
        let above = self.desc.partition_point(|&v| v > x);
        let rest = (self.desc.len() - above) as f64;
        let tail = if rest > 0.0 { rest * x.ln() } else { 0.0 };
        self.prefix_ln[above] + tail
    }
}

/// Below every competitor threshold the utility is flat, so an agent that is
/// exactly indifferent there would have a whole interval of best responses.
/// Log-excess within this slack (well above the rounding in a product of a
/// few hundred cdf values) counts as zero and the largest indifferent
/// ability is taken. Bisection aims at half the slack so that a tied
/// partner's own overshoot never pushes this agent past the clamp.
const FLAT_SLACK: f64 = 1e-9;

/// Best-response iteration from the per-agent upper bounds
/// `F^-1((c/M)^(1/|P_i|))`.
pub fn brute_force_equilibrium(
    t: &OrderTree,
    params: &ContestParams,
    dist: &dyn AbilityDistribution,
    opts: BruteForceOptions,
) -> Result<ThresholdProfile> {
    let len = t.len();
    let lead = LeadSets::new(t);
    let ratio = params.ratio();
    let ln_ratio = ratio.ln();
    let l = dist.lower();

    let competitors: Vec<Vec<usize>> = (0..len)
        .map(|i| if i == 0 { Vec::new() } else { lead.competitors(i).collect() })
        .collect();
    let bound: Vec<f64> = (0..len)
        .map(|i| {
            let k = competitors[i].len();
            if i == 0 {
                Ok(f64::NAN)
            } else if k == 0 {
                Ok(l)
            } else {
                dist.quantile(ratio.powf(1.0 / k as f64))
            }
        })
        .collect::<Result<_>>()?;

    let best_response = |i: usize, r: &[f64], cdf: &[f64]| -> f64 {
        let comp = &competitors[i];
        if comp.is_empty() {
            return l;
        }
        let c = Competitors::new(comp.iter().map(|&j| cdf[j]).collect());
        let excess = |x: f64| c.ln_product(dist.cdf(x)) - ln_ratio;
        let at_floor = excess(l);
        if at_floor > FLAT_SLACK {
            return l;
        }
        if at_floor >= -FLAT_SLACK {
            // indifferent on the whole flat stretch, which ends at the lowest
            // competitor threshold
            return comp.iter().map(|&j| r[j]).fold(f64::INFINITY, f64::min);
        }
        let (mut lo, mut hi) = (l, bound[i]);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut r = bound.clone();
    let mut cdf: Vec<f64> = r.iter().map(|&x| if x.is_nan() { 0.0 } else { dist.cdf(x) }).collect();
    let mut next = r.clone();
    let mut residual = f64::INFINITY;
    // Jacobi can lock into a 2-cycle when two agents take turns being the
    // one who always contributes. Once progress stalls, switch to in-place
    // sweeps, which break the symmetry.
    let mut in_place = false;
    let (mut best, mut best_round) = (f64::INFINITY, 0usize);
    for round in 0..opts.max_rounds {
        residual = 0.0f64;
        if in_place {
            for i in 1..len {
                let x = best_response(i, &r, &cdf);
                residual = residual.max((x - r[i]).abs());
                r[i] = x;
                cdf[i] = dist.cdf(x);
            }
        } else {
            for i in 1..len {
                next[i] = best_response(i, &r, &cdf);
                residual = residual.max((next[i] - r[i]).abs());
            }
            std::mem::swap(&mut r, &mut next);
            for i in 1..len {
                cdf[i] = dist.cdf(r[i]);
            }
        }
        if residual < opts.tol {
            return Ok(profile_from(t, &lead, dist, params, r));
        }
        if residual < 0.5 * best {
            (best, best_round) = (residual, round);
        } else if !in_place && round - best_round >= opts.stall_rounds {
            in_place = true;
        }
    }
    Err(CimError::NonConvergence {
        rounds: opts.max_rounds,
        residual,
    })
}

fn profile_from(
    t: &OrderTree,
    lead: &LeadSets<'_>,
    dist: &dyn AbilityDistribution,
    params: &ContestParams,
    r: Vec<f64>,
) -> ThresholdProfile {
    let l = dist.lower();
    let mut lom = vec![f64::NAN; t.len()];
    for i in t.agents() {
        lom[i] = lead.descendants(i).map(|k| dist.ln_cdf(r[k])).sum::<f64>().exp();
    }
    let unconditional = t.agents().find(|&i| {
        r[i] == l && {
            let ln: f64 = lead.competitors(i).map(|j| dist.ln_cdf(r[j].max(l))).sum();
            params.prize * ln.exp() > params.cost
        }
    });
    ThresholdProfile::new(r, lom, unconditional)
}
