//! Ability distributions, contest parameters and the largest order statistic.

use std::collections::BinaryHeap;
use std::fmt::Debug;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};

/// Absolute tolerance of the generic bisection quantile.
pub const QUANTILE_TOL: f64 = 1e-12;

/// Continuous i.i.d. ability law on `[lower, upper]`, `upper` possibly +inf.
///
/// Implementors must provide `cdf` and `pdf`; `quantile` falls back to
/// bisection. `cdf` must be continuous and strictly increasing on the
/// support with `cdf(lower) = 0`.
pub trait AbilityDistribution: Debug + Send + Sync {
    fn lower(&self) -> f64;
    fn upper(&self) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn pdf(&self, x: f64) -> f64;

    /// `ln F(x)`; override when a more accurate form exists.
    fn ln_cdf(&self, x: f64) -> f64 {
        self.cdf(x).ln()
    }

    /// Inverse cdf for `p` in `[0, 1]`. `p = 1` is an error on unbounded support.
    fn quantile(&self, p: f64) -> Result<f64> {
        bisect_quantile(self, p)
    }

    /// Quantile of `exp(ln_p)`; lets callers keep probabilities close to 1
    /// in log form.
    fn quantile_ln(&self, ln_p: f64) -> Result<f64> {
        self.quantile(ln_p.exp())
    }

    /// Inverse-transform draw.
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
            .expect("quantile is finite below probability one")
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CimError::InvalidDistribution(format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Bisection inverse of `d.cdf`, accurate to [`QUANTILE_TOL`].
pub fn bisect_quantile<D: AbilityDistribution + ?Sized>(d: &D, p: f64) -> Result<f64> {
    check_probability(p)?;
    let lo0 = d.lower();
    if p == 0.0 {
        return Ok(lo0);
    }
    let upper = d.upper();
    if p == 1.0 {
        return if upper.is_finite() {
            Ok(upper)
        } else {
            Err(CimError::UnboundedQuantile(p))
        };
    }
    let mut lo = lo0;
    let mut hi = if upper.is_finite() {
        upper
    } else {
        let mut hi = lo0 + 1.0;
        while d.cdf(hi) < p {
            hi = lo0 + 2.0 * (hi - lo0);
            if !hi.is_finite() {
                return Err(CimError::UnboundedQuantile(p));
            }
        }
        hi
    };
    while hi - lo > QUANTILE_TOL * hi.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Built-in distributions, serialized as `{"kind": "exponential", "lambda": 1.0}`
/// or `{"kind": "uniform", "l": 0, "u": 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Uniform { l: f64, u: f64 },
    Exponential { lambda: f64 },
}

impl Distribution {
    pub fn uniform(l: f64, u: f64) -> Result<Self> {
        Self::Uniform { l, u }.validated()
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        Self::Exponential { lambda }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Uniform { l, u } => {
                if !(l.is_finite() && u.is_finite() && l >= 0.0 && u > l) {
                    return Err(CimError::InvalidDistribution(format!(
                        "uniform needs 0 <= l < u < inf, got l={l}, u={u}"
                    )));
                }
            }
            Self::Exponential { lambda } => {
                if !(lambda.is_finite() && lambda > 0.0) {
                    return Err(CimError::InvalidDistribution(format!(
                        "exponential rate must be positive and finite, got {lambda}"
                    )));
                }
            }
        }
        Ok(self)
    }
}

impl AbilityDistribution for Distribution {
    fn lower(&self) -> f64 {
        match *self {
            Self::Uniform { l, .. } => l,
            Self::Exponential { .. } => 0.0,
        }
    }

    fn upper(&self) -> f64 {
        match *self {
            Self::Uniform { u, .. } => u,
            Self::Exponential { .. } => f64::INFINITY,
        }
    }

    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { l, u } => ((x - l) / (u - l)).clamp(0.0, 1.0),
            Self::Exponential { lambda } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-lambda * x).exp_m1()
                }
            }
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { l, u } => {
                if (l..=u).contains(&x) {
                    1.0 / (u - l)
                } else {
                    0.0
                }
            }
            Self::Exponential { lambda } => {
                if x < 0.0 {
                    0.0
                } else {
                    lambda * (-lambda * x).exp()
                }
            }
        }
    }

    fn ln_cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { .. } => self.cdf(x).ln(),
            Self::Exponential { lambda } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (-(-lambda * x).exp_m1()).ln()
                }
            }
        }
    }

    fn quantile(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        match *self {
            Self::Uniform { l, u } => Ok(l + p * (u - l)),
            Self::Exponential { lambda } => {
                if p == 1.0 {
                    Err(CimError::UnboundedQuantile(p))
                } else {
                    Ok(-(-p).ln_1p() / lambda)
                }
            }
        }
    }

    fn quantile_ln(&self, ln_p: f64) -> Result<f64> {
        match *self {
            Self::Exponential { lambda } => {
                if ln_p > 0.0 || ln_p.is_nan() {
                    return Err(CimError::InvalidDistribution(format!(
                        "log-probability {ln_p} above zero"
                    )));
                }
                if ln_p == 0.0 {
                    return Err(CimError::UnboundedQuantile(1.0));
                }
                // 1 - p = -expm1(ln p), exact for p near one
                Ok(-(-ln_p.exp_m1()).ln() / lambda)
            }
            Self::Uniform { .. } => self.quantile(ln_p.exp()),
        }
    }
}

/// Prize and participation cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContestParams {
    pub prize: f64,
    pub cost: f64,
}

impl ContestParams {
    /// Validated constructor: `0 < cost < prize`.
    pub fn new(prize: f64, cost: f64) -> Result<Self> {
        let p = Self { prize, cost };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cost > 0.0 && self.prize.is_finite() && self.cost < self.prize) {
            return Err(CimError::InvalidParams(format!(
                "need 0 < cost < prize, got prize={}, cost={}",
                self.prize, self.cost
            )));
        }
        Ok(())
    }

    /// `c / M`.
    pub fn ratio(&self) -> f64 {
        self.cost / self.prize
    }
}

/// Expected value of the largest of `n` i.i.d. draws,
/// `∫ n x F(x)^(n-1) f(x) dx` over the support.
///
/// Substituting `v = F(x)^n` turns this into `∫_0^1 F^-1(v^(1/n)) dv`, whose
/// integrand is monotone on a fixed interval however concentrated the
/// density of the maximum becomes for large `n`.
pub fn expected_max(d: &dyn AbilityDistribution, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(CimError::Integration("expected_max needs n >= 1".into()));
    }
    let nf = n as f64;
    let upper = d.upper();
    let integrand = |v: f64| -> f64 {
        // v^(1/n) kept in log form so values near one survive
        d.quantile_ln(v.ln() / nf).unwrap_or(upper)
    };
    let value = integrate(&integrand, 0.0, 1.0, 1e-11, 1e-10)?;
    if !value.is_finite() {
        return Err(CimError::Integration(format!(
            "non-finite expected maximum for n={n}"
        )));
    }
    Ok(value)
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_SEGMENTS: usize = 20_000;

/// Globally adaptive Gauss-Kronrod quadrature: keep splitting the segment
/// with the largest error estimate until the total error is within
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (value, error) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let (mut total, mut total_err) = (value, error);
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(CimError::Integration("integrand is not finite".into()));
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(CimError::Integration(format!(
                "no convergence after {MAX_SEGMENTS} segments (error {total_err:e})"
            )));
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval exhausted at machine precision; accept its estimate
            heap.push(Segment { error: 0.0, ..seg });
            total_err = heap.iter().map(|s| s.error).sum();
            continue;
        }
        let (v1, e1) = gk15(f, seg.a, mid);
        let (v2, e2) = gk15(f, mid, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
    }
    // re-sum to shed accumulated rounding from the running updates
    Ok(heap.iter().map(|s| s.value).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    /// Exponential(1) exposing only cdf/pdf, to exercise the generic paths.
    #[derive(Debug)]
    struct BareExp;

    impl AbilityDistribution for BareExp {
        fn lower(&self) -> f64 {
            0.0
        }
        fn upper(&self) -> f64 {
            f64::INFINITY
        }
        fn cdf(&self, x: f64) -> f64 {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (-x).exp()
            }
        }
        fn pdf(&self, x: f64) -> f64 {
            if x < 0.0 {
                0.0
            } else {
                (-x).exp()
            }
        }
    }

    fn exp1() -> Distribution {
        Distribution::exponential(1.0).unwrap()
    }

    fn unit() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_quantiles() {
        assert_eq!(unit().quantile(0.1).unwrap(), 0.1);
        assert!((exp1().quantile(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((exp1().cdf(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(unit().quantile(1.0).unwrap(), 1.0);
    }

    #[test]
    fn unbounded_quantile_at_one() {
        assert!(matches!(exp1().quantile(1.0), Err(CimError::UnboundedQuantile(_))));
        assert!(matches!(BareExp.quantile(1.0), Err(CimError::UnboundedQuantile(_))));
        assert!(exp1().quantile(1.5).is_err());
    }

    #[test]
    fn bisection_fallback_matches_closed_form() {
        for &p in &[1e-9, 0.1, 0.5, 0.9, 0.999_999] {
            let a = BareExp.quantile(p).unwrap();
            let b = exp1().quantile(p).unwrap();
            // the bare cdf loses digits as p -> 1 (no expm1), so allow for its conditioning
            assert!((a - b).abs() <= 1e-12 * b.max(1.0) / (1.0 - p), "p={p}: {a} vs {b}");
        }
    }

    #[test]
    fn quantile_ln_agrees() {
        for &p in &[0.01, 0.5, 0.99, 1.0 - 1e-6] {
            let a = exp1().quantile_ln(f64::ln(p)).unwrap();
            let b = exp1().quantile(p).unwrap();
            assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::uniform(-1.0, 1.0).is_err());
        assert!(Distribution::exponential(0.0).is_err());
        assert!(ContestParams::new(1.0, 1.0).is_err());
        assert!(ContestParams::new(1.0, 0.0).is_err());
        assert!(ContestParams::new(1.0, 0.1).is_ok());
    }

    #[test]
    fn json_shapes() {
        let d: Distribution = serde_json::from_str(r#"{"kind": "exponential", "lambda": 1.0}"#).unwrap();
        assert_eq!(d, exp1());
        let d: Distribution = serde_json::from_str(r#"{"kind": "uniform", "l": 0, "u": 1}"#).unwrap();
        assert_eq!(d, unit());
    }

    #[test]
    fn sampling_replays_and_matches_law() {
        let d = exp1();
        let draw = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..16).map(|_| unit().sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));

        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let n = 1_000_000;
        let (mut sum, mut below) = (0.0, 0usize);
        for _ in 0..n {
            let x = d.sample(&mut rng);
            sum += x;
            below += usize::from(x <= 1.0);
        }
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
        assert!((below as f64 / n as f64 - (1.0 - (-1.0f64).exp())).abs() < 0.005);
    }

    #[test]
    fn expected_max_known_values() {
        assert!((expected_max(&exp1(), 1).unwrap() - 1.0).abs() < 1e-8);
        let h3 = 1.0 + 0.5 + 1.0 / 3.0;
        assert!((expected_max(&exp1(), 3).unwrap() - h3).abs() < 1e-8);
        assert!((expected_max(&unit(), 9).unwrap() - 0.9).abs() < 1e-10);
        assert!(expected_max(&exp1(), 0).is_err());
    }

    #[test]
    fn expected_max_generic_distribution() {
        let h = (1..=50).map(|k| 1.0 / k as f64).sum::<f64>();
        assert!((expected_max(&BareExp, 50).unwrap() - h).abs() < 1e-6);
    }

    #[test]
    fn expected_max_harmonic_up_to_ten_thousand() {
        let d = exp1();
        let mut h = 0.0;
        let mut prev = 0.0;
        for n in 1..=10_000usize {
            h += 1.0 / n as f64;
            if n.is_power_of_two() || n % 2500 == 0 || n < 20 {
                let e = expected_max(&d, n).unwrap();
                assert!((e - h).abs() < 1e-6, "n={n}: {e} vs {h}");
                assert!(e > prev);
                prev = e;
            }
        }
    }

    #[test]
    fn integrate_polynomial() {
        let v = integrate(&|x| x * x, 0.0, 3.0, 1e-12, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(x in 0.0f64..40.0, lambda in 0.1f64..5.0) {
            let d = Distribution::exponential(lambda).unwrap();
            let p = d.cdf(x);
            // conditioning of the inverse grows like 1/(1-p); 1e-9 holds below 1 - 1e-6
            prop_assume!(p < 1.0 - 1e-6);
            let back = d.quantile(p).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
        }

        #[test]
        fn uniform_quantile_inverts_cdf(x in 0.0f64..1.0, l in 0.0f64..3.0, w in 0.1f64..10.0) {
            let d = Distribution::uniform(l, l + w).unwrap();
            let y = l + x * w;
            prop_assert!((d.quantile(d.cdf(y)).unwrap() - y).abs() <= 1e-9 * y.abs().max(1.0));
        }

        #[test]
        fn generic_quantile_inverts_cdf(x in 0.0f64..12.0) {
            let back = BareExp.quantile(BareExp.cdf(x)).unwrap();
            prop_assert!((back - x).abs() <= 1e-9 * x.max(1.0));
        }
    }
}
