//! Acceptance criteria, run in order. Each prints one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use lagflow::analysis::compare_mod_constant;
use lagflow::conditions::{verify_all, ConeRegion};
use lagflow::{OperatorTau, SpectralOperator, Spectrum};

const SEED: u64 = 42;
const LAMBDA_CAP: f64 = 100.0;
const DIRECTIONS: usize = 4;
const BENCHMARK_CELLS: usize = 64;
const BENCHMARK_TAUS: [f64; 4] = [FRAC_PI_6, FRAC_PI_4, 3.0 * PI / 8.0, FRAC_PI_2];

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Profiles from the disk benchmark, reused by later criteria.
#[derive(Default)]
struct Shared {
    disk_profiles: BTreeMap<u64, Vec<f64>>,
    disk_errors: BTreeMap<u64, f64>,
}

fn key(tau: f64) -> u64 {
    tau.to_bits()
}

fn structural_suite() -> Outcome {
    let taus = [
        0.0,
        0.3,
        FRAC_PI_6,
        FRAC_PI_4 - 0.05,
        FRAC_PI_4,
        FRAC_PI_4 + 0.05,
        3.0 * PI / 8.0,
        FRAC_PI_2 - 0.05,
        FRAC_PI_2,
    ];
    let start = Instant::now();
    let mut failures = Vec::new();
    for &tau in &taus {
        let op = OperatorTau::new(tau).unwrap();
        for n in [2, 3, 5] {
            let region = ConeRegion::new(1.0, 2.0, n, LAMBDA_CAP).unwrap();
            let report = verify_all(&op, &region, 10_000, DIRECTIONS, SEED);
            if !report.passed {
                let failed: Vec<&str> = [
                    (&report.symmetry.name, report.symmetry.passed),
                    (&report.monotonicity.name, report.monotonicity.passed),
                    (&report.concavity.name, report.concavity.passed),
                    (&report.envelope.name, report.envelope.passed),
                ]
                .into_iter()
                .filter(|(_, ok)| !ok)
                .map(|(name, _)| name.as_str())
                .chain((!report.trace_bounds.passed).then_some("trace_bounds"))
                .collect();
                failures.push(format!("tau={tau:.4} n={n}: {}", failed.join(",")));
            }
        }
    }
    let elapsed = start.elapsed();
    let in_time = elapsed <= Duration::from_secs(60);
    Outcome::new(
        failures.is_empty() && in_time,
        format!(
            "{} of {} cases failed, {:.1} s{}",
            failures.len(),
            taus.len() * 3,
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" [{}]", failures.join("; "))
            }
        ),
    )
}

/// Sorted spectrum with entries log-uniform in [lo, hi].
fn random_spectrum(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n)
        .map(|_| (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp())
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

fn derivative_oracle() -> Outcome {
    let branches = [0.0, 0.3, FRAC_PI_4, 3.0 * PI / 8.0, FRAC_PI_2];
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for (b, &tau) in branches.iter().enumerate() {
        let op = OperatorTau::new(tau).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + b as u64);
        for k in 0..1000 {
            let n = [2, 3, 5][k % 3];
            let lambdas = random_spectrum(&mut rng, n, 0.1, 10.0);
            let s = Spectrum::new(lambdas.clone()).unwrap();
            let grad = op.grad_spectrum(&s);
            let hess = op.hess_spectrum_diag(&s);
            for i in 0..n {
                let at = |d: f64| {
                    let mut l = lambdas.clone();
                    l[i] += d;
                    op.value(&l)
                };
                let e1 = 1e-5 * lambdas[i];
                let fd1 = (at(e1) - at(-e1)) / (2.0 * e1);
                worst_grad = worst_grad.max((fd1 - grad[i]).abs() / grad[i].abs());
                let e2 = 1e-3 * lambdas[i];
                let fd2 = (at(e2) - 2.0 * at(0.0) + at(-e2)) / (e2 * e2);
                worst_hess = worst_hess.max((fd2 - hess[i]).abs() / hess[i].abs());
            }
        }
    }
    Outcome::new(
        worst_grad <= 1e-6 && worst_hess <= 1e-4,
        format!("max relative error: gradient {worst_grad:.2e}, second derivative {worst_hess:.2e}"),
    )
}

fn branch_limit() -> Outcome {
    let op = OperatorTau::new(FRAC_PI_2 - 1e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = [2, 3, 5][k % 3];
        let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=10.0)).collect();
        let limit: f64 = lambdas.iter().map(|l| l.atan()).sum::<f64>() - n as f64 * FRAC_PI_4;
        worst = worst.max((op.value(&lambdas) - limit).abs());
    }
    Outcome::new(worst <= 1e-3, format!("max deviation {worst:.2e}"))
}

fn disk_benchmark(shared: &mut Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for &tau in &BENCHMARK_TAUS {
        let op = OperatorTau::new(tau).unwrap();
        let start = Instant::now();
        let (state, r, _) = solve(&unit_disk_config(tau, BENCHMARK_CELLS, radial()));
        let elapsed = start.elapsed();
        let err = (r.C_inf - op.value(&[1.0, 1.0])).abs();
        let ok = r.converged
            && r.osc_ut <= 1e-6
            && err <= 2e-2
            && r.residual_sup <= 5e-2
            && r.image_hausdorff <= 3.0 * r.spacing
            && elapsed <= Duration::from_secs(300);
        passed &= ok;
        lines.push(format!(
            "tau={tau:.4}: steps {} |C-F(I)| {err:.1e} residual {:.1e} hausdorff {:.1e} {:.1} s",
            r.steps,
            r.residual_sup,
            r.image_hausdorff,
            elapsed.as_secs_f64()
        ));
        shared.disk_profiles.insert(key(tau), state.active_values());
        shared.disk_errors.insert(key(tau), err);
    }
    Outcome::new(passed, lines.join("; "))
}

fn scaled_disk() -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for &tau in &BENCHMARK_TAUS {
        let op = OperatorTau::new(tau).unwrap();
        let cfg = config(
            tau,
            disk([0.0, 0.0], 1.0),
            disk([0.0, 0.0], 2.0),
            BENCHMARK_CELLS,
            radial(),
        );
        let (_, r, _) = solve(&cfg);
        let err = (r.C_inf - op.value(&[2.0, 2.0])).abs();
        passed &= r.converged && err <= 2e-2;
        lines.push(format!("tau={tau:.4}: steps {} |C-F(2I)| {err:.1e}", r.steps));
    }
    Outcome::new(passed, lines.join("; "))
}

fn ellipse_benchmark() -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for &tau in &BENCHMARK_TAUS {
        let op = OperatorTau::new(tau).unwrap();
        let cfg = config(
            tau,
            ellipse([0.0, 0.0], [1.0, 2.0]),
            ellipse([0.0, 0.0], [3.0, 1.0]),
            BENCHMARK_CELLS,
            bump(),
        );
        let (_, r, _) = solve(&cfg);
        let err = (r.C_inf - op.value(&[0.5, 3.0])).abs();
        passed &= r.converged && err <= 3e-2;
        lines.push(format!("tau={tau:.4}: steps {} |C-F(diag(3,1/2))| {err:.1e}", r.steps));
    }
    Outcome::new(passed, lines.join("; "))
}

fn uniqueness(shared: &Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for &tau in &BENCHMARK_TAUS {
        let (state, r, _) = solve(&unit_disk_config(tau, BENCHMARK_CELLS, bump()));
        let radial_profile = &shared.disk_profiles[&key(tau)];
        let d = compare_mod_constant(radial_profile, &state.active_values()).unwrap();
        passed &= r.converged && d <= 5e-3;
        lines.push(format!("tau={tau:.4}: radial vs bump {d:.1e}"));
    }
    Outcome::new(passed, lines.join("; "))
}

fn refinement(shared: &Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut passed = true;
    for &tau in &BENCHMARK_TAUS {
        let op = OperatorTau::new(tau).unwrap();
        let exact = op.value(&[1.0, 1.0]);
        let mut errors: Vec<f64> = [BENCHMARK_CELLS / 4, BENCHMARK_CELLS / 2]
            .iter()
            .map(|&cells| {
                let (_, r, _) = solve(&unit_disk_config(tau, cells, radial()));
                (r.C_inf - exact).abs()
            })
            .collect();
        errors.push(shared.disk_errors[&key(tau)]);
        let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let ok = errors.windows(2).all(|w| w[1] < w[0]) && orders.iter().all(|&p| p >= 1.0);
        passed &= ok;
        lines.push(format!(
            "tau={tau:.4}: errors {:.1e} {:.1e} {:.1e} orders {:.2} {:.2}",
            errors[0], errors[1], errors[2], orders[0], orders[1]
        ));
    }
    Outcome::new(passed, format!("cells 16/32/64; {}", lines.join("; ")))
}

fn determinism() -> Outcome {
    let cfg = unit_disk_config(FRAC_PI_4, BENCHMARK_CELLS, radial());
    let one = in_pool(1, || solve(&cfg).2);
    let four = in_pool(4, || solve(&cfg).2);
    let region = ConeRegion::new(1.0, 2.0, 3, LAMBDA_CAP).unwrap();
    let op = OperatorTau::new(0.3).unwrap();
    let conditions = |threads| {
        in_pool(threads, || {
            serde_json::to_string(&verify_all(&op, &region, 10_000, DIRECTIONS, SEED)).unwrap()
        })
    };
    let flow_same = one == four;
    let conditions_same = conditions(1) == conditions(4);
    Outcome::new(
        flow_same && conditions_same,
        format!("disk flow report identical: {flow_same}; conditions report identical: {conditions_same}"),
    )
}

fn main() -> ExitCode {
    let mut shared = Shared::default();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {n} {name}: {} ({:.1} s) {}",
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    };
    report(1, "structural hypotheses", &mut structural_suite);
    report(2, "derivative oracle", &mut derivative_oracle);
    report(3, "branch limit", &mut branch_limit);
    report(4, "disk benchmark", &mut || disk_benchmark(&mut shared));
    report(5, "scaled disk", &mut scaled_disk);
    report(6, "ellipse benchmark", &mut ellipse_benchmark);
    report(7, "uniqueness up to constants", &mut || uniqueness(&shared));
    report(8, "refinement order", &mut || refinement(&shared));
    report(9, "determinism", &mut determinism);
    println!("{} of 9 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
