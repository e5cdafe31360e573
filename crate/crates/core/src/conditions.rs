//! Sampled checks of the structural conditions an operator must satisfy for
//! the flow to exist and converge: symmetry, monotonicity, two-sided trace
//! bounds on `Γ⁺_{]μ₁,μ₂[}`, concavity of `F` and `F*(A) = −F(A⁻¹)`, and the
//! monotone envelope with its mean-value inversion.
//!
//! Every sample `i` draws from its own ChaCha8 stream (key = seed, stream =
//! `i`), so reports depend only on `(operator, region, samples, seed)` and
//! not on how samples are spread over threads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::operator::{EnvelopeBounds, OperatorDescriptor, SpectralOperator, TraceBounds, CONE_FLOOR};
use crate::{Error, Result};

/// Lower end of the `λ₁` sampling interval.
pub const SAMPLE_FLOOR: f64 = 1e-3;
/// Witnesses kept per check, lowest sample index first.
pub const MAX_WITNESSES: usize = 16;
/// Random permutations tried per sample by the symmetry check.
pub const PERMUTATIONS_PER_SAMPLE: usize = 4;

const SYMMETRY_TOL: f64 = 1e-12;
const CHAIN_TOL: f64 = 1e-12;
const CONCAVITY_TOL: f64 = 1e-10;
const SANDWICH_TOL: f64 = 1e-12;
const INVERSION_TOL: f64 = 1e-10;
const PROBE_STEP: f64 = 1e-6;

/// Spectra with `0 < λ₁ ≤ μ₁` and `λₙ ≥ μ₂`, capped above at `lambda_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeRegion {
    pub mu1: f64,
    pub mu2: f64,
    pub n: usize,
    pub lambda_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub sample: usize,
    pub spectrum: Vec<f64>,
    pub detail: String,
}

/// Pass/fail outcome of a single check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub violations: usize,
    /// Worst observed value of the check's own metric.
    pub worst: f64,
    pub witnesses: Vec<Witness>,
}

/// Observed and closed-form ranges of `Σ ∂F/∂λᵢ` and `Σ ∂F/∂λᵢ·λᵢ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub passed: bool,
    pub samples: usize,
    pub empirical_min_sum_f: f64,
    pub empirical_max_sum_f: f64,
    pub empirical_min_sum_fl2: f64,
    pub empirical_max_sum_fl2: f64,
    /// Per-inequality closed forms, when the branch has them.
    pub theoretical: Option<TraceBounds>,
    /// Single pair `(λ, Λ)` serving both inequalities: min of the lower
    /// bounds and max of the upper bounds.
    pub theoretical_lambda: Option<f64>,
    #[serde(rename = "theoretical_Lambda")]
    pub theoretical_cap_lambda: Option<f64>,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
}

/// Values along both inequality chains for one spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainValues {
    pub sum_f: f64,
    pub first_term: f64,
    pub sum_fl2: f64,
    pub last_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub operator: OperatorDescriptor,
    pub region: ConeRegion,
    pub samples: usize,
    pub seed: u64,
    pub directions: usize,
    pub symmetry: CheckOutcome,
    pub monotonicity: CheckOutcome,
    pub trace_bounds: BoundsReport,
    pub concavity: CheckOutcome,
    pub envelope: CheckOutcome,
    pub passed: bool,
}

impl ConeRegion {
    pub fn new(mu1: f64, mu2: f64, n: usize, lambda_cap: f64) -> Result<Self> {
        if !(mu1 > SAMPLE_FLOOR && mu2 > 0.0 && mu1.is_finite() && mu2.is_finite()) {
            return Err(Error::Precondition(format!(
                "region needs mu1 > {SAMPLE_FLOOR} and mu2 > 0, got ({mu1}, {mu2})"
            )));
        }
        if n == 0 {
            return Err(Error::Precondition("dimension must be positive".into()));
        }
        if !(lambda_cap >= mu1.max(mu2) && lambda_cap.is_finite()) {
            return Err(Error::Precondition(format!(
                "lambda_cap {lambda_cap} must be at least max(mu1, mu2)"
            )));
        }
        Ok(Self {
            mu1,
            mu2,
            n,
            lambda_cap,
        })
    }

    /// Membership in `Γ⁺_{]μ₁,μ₂[}`: sorted, positive, `λ₁ ≤ μ₁`, `λₙ ≥ μ₂`.
    pub fn contains(&self, lambdas: &[f64]) -> bool {
        lambdas.len() == self.n
            && lambdas[0] > 0.0
            && lambdas.windows(2).all(|w| w[0] <= w[1])
            && lambdas[0] <= self.mu1
            && lambdas[self.n - 1] >= self.mu2
    }

    /// `λ₁ ~ U(ε, μ₁]`, `λₙ ~ U[max(μ₂, λ₁), cap]`, interior entries uniform
    /// between them, sorted.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let first = SAMPLE_FLOOR + (self.mu1 - SAMPLE_FLOOR) * (1.0 - rng.random::<f64>());
        if self.n == 1 {
            // A single eigenvalue must serve as both λ₁ and λₙ.
            let lo = self.mu2.max(SAMPLE_FLOOR);
            return vec![lo + (self.mu1.max(lo) - lo) * rng.random::<f64>()];
        }
        let lo = self.mu2.max(first);
        let last = lo + (self.lambda_cap - lo) * rng.random::<f64>();
        let mut out = Vec::with_capacity(self.n);
        out.push(first);
        for _ in 1..self.n - 1 {
            out.push(first + (last - first) * rng.random::<f64>());
        }
        out.push(last);
        out.sort_by(f64::total_cmp);
        out
    }
}

/// The generator for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Per-sample verdict folded into a [`CheckOutcome`] in index order.
struct SampleVerdict {
    metric: f64,
    failure: Option<Witness>,
}

fn fold_outcome(name: &str, verdicts: Vec<SampleVerdict>, worst_is_min: bool) -> CheckOutcome {
    let samples = verdicts.len();
    let mut worst = if worst_is_min { f64::INFINITY } else { f64::NEG_INFINITY };
    let mut witnesses = Vec::new();
    let mut violations = 0;
    for v in verdicts {
        worst = if worst_is_min {
            worst.min(v.metric)
        } else {
            worst.max(v.metric)
        };
        if let Some(w) = v.failure {
            violations += 1;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(w);
            }
        }
    }
    CheckOutcome {
        name: name.to_string(),
        passed: violations == 0,
        samples,
        violations,
        worst,
        witnesses,
    }
}

fn par_samples<T: Send>(samples: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..samples).into_par_iter().map(f).collect()
}

fn witness(sample: usize, spectrum: &[f64], detail: String) -> Option<Witness> {
    Some(Witness {
        sample,
        spectrum: spectrum.to_vec(),
        detail,
    })
}

/// Evaluates on random permutations of each sample; the metric is the largest
/// absolute discrepancy from the sorted evaluation.
pub fn check_symmetry(op: &dyn SpectralOperator, region: &ConeRegion, samples: usize, seed: u64) -> CheckOutcome {
    let verdicts = par_samples(samples, |i| {
        let mut rng = sample_rng(seed, i);
        let s = region.sample(&mut rng);
        let base = op.value(&s);
        let mut perm = s.clone();
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for _ in 0..PERMUTATIONS_PER_SAMPLE {
            perm.shuffle(&mut rng);
            let d = (op.value(&perm) - base).abs();
            worst = worst.max(d);
            if failure.is_none() && !(d <= SYMMETRY_TOL * (1.0 + base.abs())) {
                failure = witness(i, &perm, format!("permuted value differs by {d:e}"));
            }
        }
        SampleVerdict { metric: worst, failure }
    });
    fold_outcome("symmetry", verdicts, false)
}

/// Every `∂F/∂λᵢ` must be strictly positive; the metric is the smallest one.
pub fn check_monotonicity(op: &dyn SpectralOperator, region: &ConeRegion, samples: usize, seed: u64) -> CheckOutcome {
    let verdicts = par_samples(samples, |i| {
        let s = region.sample(&mut sample_rng(seed, i));
        let grad = op.gradient(&s);
        let min = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let failure = if min > 0.0 && min.is_finite() {
            None
        } else {
            witness(i, &s, format!("derivative {min:e} is not positive"))
        };
        SampleVerdict { metric: min, failure }
    });
    fold_outcome("monotonicity", verdicts, true)
}

/// Chain values for a spectrum submitted directly; rejects spectra outside
/// the region.
pub fn evaluate_chains(op: &dyn SpectralOperator, region: &ConeRegion, lambdas: &[f64]) -> Result<ChainValues> {
    if !region.contains(lambdas) {
        return Err(Error::Precondition(format!(
            "spectrum {lambdas:?} lies outside the region (mu1 = {}, mu2 = {}, n = {})",
            region.mu1, region.mu2, region.n
        )));
    }
    Ok(chain_values(op, lambdas))
}

fn chain_values(op: &dyn SpectralOperator, lambdas: &[f64]) -> ChainValues {
    let grad = op.gradient(lambdas);
    let n = lambdas.len();
    ChainValues {
        sum_f: grad.iter().sum(),
        first_term: grad[0],
        sum_fl2: grad.iter().zip(lambdas).map(|(g, l)| g * l * l).sum(),
        last_term: grad[n - 1] * lambdas[n - 1] * lambdas[n - 1],
    }
}

/// `x ≥ y` up to relative round-off.
fn geq(x: f64, y: f64) -> bool {
    x >= y - CHAIN_TOL * (x.abs() + y.abs())
}

/// Checks which links of the two chains fail; empty when all hold.
pub fn chain_failures(values: &ChainValues, bounds: Option<&TraceBounds>) -> Vec<String> {
    let mut out = Vec::new();
    let v = values;
    if !(v.sum_f > 0.0 && v.sum_f.is_finite()) {
        out.push(format!("sum of derivatives {:e} is not positive", v.sum_f));
    }
    if !(v.sum_fl2 > 0.0 && v.sum_fl2.is_finite()) {
        out.push(format!("weighted sum {:e} is not positive", v.sum_fl2));
    }
    if let Some(b) = bounds {
        let links = [
            ("sum_upper >= sum_f", b.sum_upper, v.sum_f),
            ("sum_f >= first_term", v.sum_f, v.first_term),
            ("first_term >= sum_lower", v.first_term, b.sum_lower),
            ("weighted_upper >= sum_fl2", b.weighted_upper, v.sum_fl2),
            ("sum_fl2 >= last_term", v.sum_fl2, v.last_term),
            ("last_term >= weighted_lower", v.last_term, b.weighted_lower),
        ];
        for (name, big, small) in links {
            if !geq(big, small) {
                out.push(format!("{name} fails: {big:e} < {small:e}"));
            }
        }
    }
    out
}

/// Samples the region and checks both inequality chains on every spectrum.
/// Branches without closed forms get empirical ranges and positivity only.
pub fn check_trace_bounds(op: &dyn SpectralOperator, region: &ConeRegion, samples: usize, seed: u64) -> BoundsReport {
    let bounds = op.trace_bounds(region.mu1, region.mu2, region.n);
    let rows = par_samples(samples, |i| {
        let s = region.sample(&mut sample_rng(seed, i));
        let values = chain_values(op, &s);
        let failures = chain_failures(&values, bounds.as_ref());
        let failure = (!failures.is_empty()).then(|| Witness {
            sample: i,
            spectrum: s,
            detail: failures.join("; "),
        });
        (values, failure)
    });
    let mut report = BoundsReport {
        passed: true,
        samples,
        empirical_min_sum_f: f64::INFINITY,
        empirical_max_sum_f: f64::NEG_INFINITY,
        empirical_min_sum_fl2: f64::INFINITY,
        empirical_max_sum_fl2: f64::NEG_INFINITY,
        theoretical: bounds,
        theoretical_lambda: bounds.map(|b| b.sum_lower.min(b.weighted_lower)),
        theoretical_cap_lambda: bounds.map(|b| b.sum_upper.max(b.weighted_upper)),
        violations: 0,
        witnesses: Vec::new(),
    };
    for (v, failure) in rows {
        report.empirical_min_sum_f = report.empirical_min_sum_f.min(v.sum_f);
        report.empirical_max_sum_f = report.empirical_max_sum_f.max(v.sum_f);
        report.empirical_min_sum_fl2 = report.empirical_min_sum_fl2.min(v.sum_fl2);
        report.empirical_max_sum_fl2 = report.empirical_max_sum_fl2.max(v.sum_fl2);
        if let Some(w) = failure {
            report.violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(w);
            }
        }
    }
    report.passed = report.violations == 0;
    report
}

fn dual_value(op: &dyn SpectralOperator, lambdas: &[f64]) -> f64 {
    let inv: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    -op.value(&inv)
}

/// Second central differences of `F` and `F*` along random unit directions
/// must not exceed `1e-10·(1 + |F|)`. The metric is the largest normalised
/// second difference seen.
pub fn check_concavity(
    op: &dyn SpectralOperator,
    region: &ConeRegion,
    samples: usize,
    directions: usize,
    seed: u64,
) -> CheckOutcome {
    let verdicts = par_samples(samples, |i| {
        let mut rng = sample_rng(seed, i);
        let s = region.sample(&mut rng);
        let n = s.len();
        let norm_inf = s.iter().copied().fold(0.0, f64::max);
        let mut worst = f64::NEG_INFINITY;
        let mut failure = None;
        let (mut plus, mut minus) = (vec![0.0; n], vec![0.0; n]);
        for _ in 0..directions {
            let mut xi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len < 1e-8 {
                continue;
            }
            xi.iter_mut().for_each(|x| *x /= len);
            let mut h = 1e-3 * (1.0 + norm_inf);
            loop {
                for k in 0..n {
                    plus[k] = s[k] + h * xi[k];
                    minus[k] = s[k] - h * xi[k];
                }
                if plus.iter().chain(&minus).all(|&x| x > CONE_FLOOR) {
                    break;
                }
                h *= 0.5;
            }
            for (label, f) in [
                ("F", &(|x: &[f64]| op.value(x)) as &dyn Fn(&[f64]) -> f64),
                ("F*", &(|x: &[f64]| dual_value(op, x)) as &dyn Fn(&[f64]) -> f64),
            ] {
                let centre = f(&s);
                let d2 = f(&plus) + f(&minus) - 2.0 * centre;
                let scaled = d2 / (1.0 + centre.abs());
                worst = worst.max(scaled);
                if failure.is_none() && !(d2 <= CONCAVITY_TOL * (1.0 + centre.abs())) {
                    failure = witness(
                        i,
                        &s,
                        format!("{label} second difference {d2:e} along {xi:?} with h = {h:e}"),
                    );
                }
            }
        }
        SampleVerdict { metric: worst, failure }
    });
    fold_outcome("concavity", verdicts, false)
}

/// Envelope sandwich `f(λ₁) ≤ F ≤ f(λₙ)`, existence of the mean-value point
/// `t₁ ∈ [λ₁, λₙ]` with `f(t₁) = F`, and the implication `f(t) ≤ F ⇒ t ≤ t₁`
/// probed just above and below `t₁`. The metric is the worst inversion
/// residual.
pub fn check_envelope_and_inversion(
    op: &dyn SpectralOperator,
    region: &ConeRegion,
    samples: usize,
    seed: u64,
) -> CheckOutcome {
    let verdicts = par_samples(samples, |i| {
        let s = region.sample(&mut sample_rng(seed, i));
        envelope_verdict(op, i, &s)
    });
    fold_outcome("envelope", verdicts, false)
}

fn envelope_verdict(op: &dyn SpectralOperator, i: usize, s: &[f64]) -> SampleVerdict {
    let n = s.len();
    let env = EnvelopeBounds::new(op, n);
    let value = op.value(s);
    let (lo, hi) = (s[0], s[n - 1]);
    let slack = SANDWICH_TOL * (1.0 + value.abs());
    let fail = |detail: String, metric: f64| SampleVerdict {
        metric,
        failure: witness(i, s, detail),
    };
    let (f_lo, f_hi) = (env.f1(lo), env.f2(hi));
    if !(f_lo <= value + slack && value <= f_hi + slack) {
        return fail(
            format!("sandwich fails: f1(l1) = {f_lo}, F = {value}, f2(ln) = {f_hi}"),
            f64::INFINITY,
        );
    }
    let t1 = match env.invert(value, lo, hi) {
        Ok(t) => t,
        Err(e) => return fail(format!("inversion failed: {e}"), f64::INFINITY),
    };
    let residual = (env.eval(t1) - value).abs();
    if !(lo..=hi).contains(&t1) || !(residual <= INVERSION_TOL) {
        return fail(
            format!("mean-value point {t1} has residual {residual:e} in [{lo}, {hi}]"),
            residual,
        );
    }
    if hi > lo {
        let below = env.eval(t1 * (1.0 - PROBE_STEP));
        let above = env.eval(t1 * (1.0 + PROBE_STEP));
        if !(below < value && above > value) {
            return fail(
                format!("envelope not separated at t1 = {t1}: f(t1-) = {below}, f(t1+) = {above}, F = {value}"),
                residual,
            );
        }
    }
    SampleVerdict {
        metric: residual,
        failure: None,
    }
}

/// Runs all checks with the same sample streams.
pub fn verify_all(
    op: &dyn SpectralOperator,
    region: &ConeRegion,
    samples: usize,
    directions: usize,
    seed: u64,
) -> ConditionsReport {
    let symmetry = check_symmetry(op, region, samples, seed);
    let monotonicity = check_monotonicity(op, region, samples, seed);
    let trace_bounds = check_trace_bounds(op, region, samples, seed);
    let concavity = check_concavity(op, region, samples, directions, seed);
    let envelope = check_envelope_and_inversion(op, region, samples, seed);
    let passed = symmetry.passed && monotonicity.passed && trace_bounds.passed && concavity.passed && envelope.passed;
    ConditionsReport {
        operator: op.descriptor(),
        region: *region,
        samples,
        seed,
        directions,
        symmetry,
        monotonicity,
        trace_bounds,
        concavity,
        envelope,
        passed,
    }
}
