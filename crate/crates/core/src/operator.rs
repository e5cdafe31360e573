//! The five-branch family of special Lagrangian operators.
//!
//! For an angle `τ ∈ [0, π/2]` with `a = cot τ` and `b = √|cot²τ − 1|`, the
//! operator acts on the eigenvalues `λᵢ` of a positive definite matrix as a sum
//! of one scalar function per eigenvalue:
//!
//! | branch      | angle           | scalar function `g(λ)`                 |
//! |-------------|-----------------|----------------------------------------|
//! | `Log`       | `τ = 0`         | `ln λ`                                 |
//! | `TauLog`    | `0 < τ < π/4`   | `ln((λ + a − b)/(λ + a + b))`          |
//! | `Harmonic`  | `τ = π/4`       | `−1/(1 + λ)`                           |
//! | `TauArctan` | `π/4 < τ < π/2` | `arctan((λ + a − b)/(λ + a + b))`      |
//! | `Arctan`    | `τ = π/2`       | `arctan λ`                             |

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::linalg::SymMatrix;
use crate::{Error, Result};

/// Smallest eigenvalue accepted as lying in the positive cone.
pub const CONE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Log,
    TauLog,
    Harmonic,
    TauArctan,
    Arctan,
}

/// A member of the operator family, fixed by its angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorTau {
    tau: f64,
    branch: Branch,
    a: f64,
    b: f64,
}

/// Eigenvalues of a matrix in the positive cone, kept in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    lambdas: Vec<f64>,
}

/// Closed-form constants bounding `Σ ∂F/∂λᵢ` and `Σ ∂F/∂λᵢ·λᵢ²` on the
/// region `λ₁ ≤ μ₁, λₙ ≥ μ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceBounds {
    pub sum_lower: f64,
    pub sum_upper: f64,
    pub weighted_lower: f64,
    pub weighted_upper: f64,
}

/// JSON-friendly description of an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDescriptor {
    pub tau: Option<f64>,
    pub branch: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modifier: Option<String>,
}

/// Anything that can be evaluated as a symmetric function of eigenvalues.
///
/// The structural checks and the flow solver work against this trait, so that
/// negative controls and shifted operators can be fed through the same code.
pub trait SpectralOperator: Send + Sync {
    /// Value on eigenvalues given in any order. No cone validation.
    fn value(&self, lambdas: &[f64]) -> f64;

    /// `∂F/∂λᵢ`, in the order of `lambdas`.
    fn gradient(&self, lambdas: &[f64]) -> Vec<f64>;

    /// `Σ ∂F/∂λᵢ`, the trace of the matrix derivative.
    fn derivative_sum(&self, lambdas: &[f64]) -> f64 {
        self.gradient(lambdas).iter().sum()
    }

    /// The envelope `f₁ = f₂`, taken as the value on the constant spectrum.
    fn envelope(&self, t: f64, n: usize) -> f64 {
        self.value(&vec![t; n])
    }

    fn trace_bounds(&self, _mu1: f64, _mu2: f64, _n: usize) -> Option<TraceBounds> {
        None
    }

    fn descriptor(&self) -> OperatorDescriptor;
}

impl Branch {
    pub fn name(self) -> &'static str {
        match self {
            Branch::Log => "log",
            Branch::TauLog => "tau_log",
            Branch::Harmonic => "harmonic",
            Branch::TauArctan => "tau_arctan",
            Branch::Arctan => "arctan",
        }
    }
}

impl OperatorTau {
    /// Selects the branch by exact comparison of `tau` against `0`, `π/4`
    /// and `π/2`.
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&tau) {
            return Err(Error::AngleOutOfRange { tau });
        }
        let branch = if tau == 0.0 {
            Branch::Log
        } else if tau < FRAC_PI_4 {
            Branch::TauLog
        } else if tau == FRAC_PI_4 {
            Branch::Harmonic
        } else if tau < FRAC_PI_2 {
            Branch::TauArctan
        } else {
            Branch::Arctan
        };
        let (a, b) = match branch {
            Branch::Log => (f64::NAN, f64::NAN),
            _ => {
                let a = tau.cos() / tau.sin();
                (a, (a * a - 1.0).abs().sqrt())
            }
        };
        Ok(Self { tau, branch, a, b })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    /// `cot τ`; `None` for the logarithmic branch.
    pub fn a(&self) -> Option<f64> {
        (self.branch != Branch::Log).then_some(self.a)
    }

    /// `√|cot²τ − 1|`; only meaningful on the two open intervals.
    pub fn b(&self) -> Option<f64> {
        matches!(self.branch, Branch::TauLog | Branch::TauArctan).then_some(self.b)
    }

    /// The scalar branch function `g`.
    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.branch {
            Branch::Log => t.ln(),
            Branch::TauLog => (t + a - b).ln() - (t + a + b).ln(),
            Branch::Harmonic => -1.0 / (1.0 + t),
            Branch::TauArctan => ((t + a - b) / (t + a + b)).atan(),
            Branch::Arctan => t.atan(),
        }
    }

    #[inline]
    pub fn g_prime(&self, t: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.branch {
            Branch::Log => 1.0 / t,
            Branch::TauLog => 2.0 * b / ((t + a - b) * (t + a + b)),
            Branch::Harmonic => 1.0 / ((1.0 + t) * (1.0 + t)),
            Branch::TauArctan => {
                let (p, q) = (t + a - b, t + a + b);
                2.0 * b / (p * p + q * q)
            }
            Branch::Arctan => 1.0 / (1.0 + t * t),
        }
    }

    #[inline]
    pub fn g_second(&self, t: f64) -> f64 {
        let (a, b) = (self.a, self.b);
        match self.branch {
            Branch::Log => -1.0 / (t * t),
            Branch::TauLog => {
                let (p, q) = (t + a - b, t + a + b);
                1.0 / (q * q) - 1.0 / (p * p)
            }
            Branch::Harmonic => -2.0 / (1.0 + t).powi(3),
            Branch::TauArctan => {
                let (p, q) = (t + a - b, t + a + b);
                let s = p * p + q * q;
                -8.0 * (t + a) * b / (s * s)
            }
            Branch::Arctan => {
                let s = 1.0 + t * t;
                -2.0 * t / (s * s)
            }
        }
    }

    pub fn eval_spectrum(&self, s: &Spectrum) -> f64 {
        self.value(s.values())
    }

    /// Evaluates on the eigenvalues of `a`; closed form for `n = 2`.
    pub fn eval_matrix(&self, a: &SymMatrix) -> Result<f64> {
        let s = Spectrum::new(a.eigenvalues())?;
        Ok(self.eval_spectrum(&s))
    }

    pub fn grad_spectrum(&self, s: &Spectrum) -> Vec<f64> {
        s.values().iter().map(|&l| self.g_prime(l)).collect()
    }

    /// Diagonal of the Hessian in eigenvalue coordinates (the operator is
    /// separable, so off-diagonal terms vanish).
    pub fn hess_spectrum_diag(&self, s: &Spectrum) -> Vec<f64> {
        s.values().iter().map(|&l| self.g_second(l)).collect()
    }

    /// `F*(A) = −F(A⁻¹)` on the spectrum.
    pub fn dual_eval(&self, s: &Spectrum) -> f64 {
        -s.values().iter().rev().map(|&l| self.g(1.0 / l)).sum::<f64>()
    }

    /// Matrix derivative `Q · diag(g'(λᵢ)) · Qᵀ`. Any orthonormal eigenbasis
    /// works, repeated eigenvalues included.
    pub fn df_da(&self, a: &SymMatrix) -> Result<SymMatrix> {
        let e = a.eigen();
        Spectrum::new(e.values.clone())?;
        let d: Vec<f64> = e.values.iter().map(|&l| self.g_prime(l)).collect();
        Ok(SymMatrix::from_spectral(&d, &e.vectors))
    }

    pub fn envelope_bounds(&self, n: usize) -> EnvelopeBounds<'_, Self> {
        EnvelopeBounds::new(self, n)
    }
}

impl SpectralOperator for OperatorTau {
    fn value(&self, lambdas: &[f64]) -> f64 {
        lambdas.iter().map(|&l| self.g(l)).sum()
    }

    fn gradient(&self, lambdas: &[f64]) -> Vec<f64> {
        lambdas.iter().map(|&l| self.g_prime(l)).collect()
    }

    fn derivative_sum(&self, lambdas: &[f64]) -> f64 {
        lambdas.iter().map(|&l| self.g_prime(l)).sum()
    }

    fn envelope(&self, t: f64, n: usize) -> f64 {
        n as f64 * self.g(t)
    }

    /// The chains bounding the trace terms on the two open intervals. The
    /// remaining branches have no closed form here.
    fn trace_bounds(&self, mu1: f64, mu2: f64, n: usize) -> Option<TraceBounds> {
        let (a, b, n) = (self.a, self.b, n as f64);
        match self.branch {
            Branch::TauLog => Some(TraceBounds {
                sum_upper: 2.0 * n * b / ((a - b) * (a + b)),
                sum_lower: 2.0 * b / ((mu1 + a - b) * (mu1 + a + b)),
                weighted_upper: 2.0 * n * b,
                weighted_lower: 2.0 * b * mu2 * mu2 / ((mu2 + a - b) * (mu2 + a + b)),
            }),
            Branch::TauArctan => {
                let sq = |x: f64| (x + a - b).powi(2) + (x + a + b).powi(2);
                Some(TraceBounds {
                    sum_upper: 2.0 * n * b / sq(0.0),
                    sum_lower: 2.0 * b / sq(mu1),
                    weighted_upper: n * b,
                    weighted_lower: 2.0 * b * mu2 * mu2 / sq(mu2),
                })
            }
            _ => None,
        }
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            tau: Some(self.tau),
            branch: self.branch.name().to_string(),
            a: self.a(),
            b: self.b(),
            modifier: None,
        }
    }
}

impl Spectrum {
    /// Sorts ascending and requires `λ₁ > CONE_FLOOR`.
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Precondition("spectrum must be non-empty".into()));
        }
        if let Some(&bad) = lambdas.iter().find(|l| !l.is_finite()) {
            return Err(Error::ConeViolation { eigenvalue: bad });
        }
        lambdas.sort_by(f64::total_cmp);
        if lambdas[0] <= CONE_FLOOR {
            return Err(Error::ConeViolation { eigenvalue: lambdas[0] });
        }
        Ok(Self { lambdas })
    }

    pub fn values(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn max(&self) -> f64 {
        self.lambdas[self.lambdas.len() - 1]
    }

    /// Reciprocal spectrum, re-sorted.
    pub fn reciprocal(&self) -> Self {
        Self {
            lambdas: self.lambdas.iter().rev().map(|l| 1.0 / l).collect(),
        }
    }
}

/// The monotone envelope `f₁ = f₂ = F(t, …, t)` of an operator in dimension
/// `n`, with its inverse.
pub struct EnvelopeBounds<'a, O: SpectralOperator + ?Sized> {
    op: &'a O,
    n: usize,
}

impl<'a, O: SpectralOperator + ?Sized> EnvelopeBounds<'a, O> {
    pub fn new(op: &'a O, n: usize) -> Self {
        Self { op, n }
    }

    pub fn f1(&self, t: f64) -> f64 {
        self.eval(t)
    }

    pub fn f2(&self, t: f64) -> f64 {
        self.eval(t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.op.envelope(t, self.n)
    }

    /// The unique `t ∈ [lo, hi]` with `eval(t) = v`, by bisection.
    ///
    /// Iterates until the bracket is narrower than `1e-12` and the residual is
    /// below `1e-12·(1 + |v|)`, or until the bracket cannot be split further
    /// in floating point.
    pub fn invert(&self, v: f64, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Precondition(format!(
                "inversion bracket [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        let (f_lo, f_hi) = (self.eval(lo), self.eval(hi));
        let slack = 1e-12 * (1.0 + v.abs());
        if !(v >= f_lo - slack && v <= f_hi + slack) {
            return Err(Error::OutOfRange {
                value: v,
                low: f_lo,
                high: f_hi,
            });
        }
        if v <= f_lo {
            return Ok(lo);
        }
        if v >= f_hi {
            return Ok(hi);
        }
        let (mut lo, mut hi) = (lo, hi);
        for _ in 0..2048 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = self.eval(mid);
            if f_mid < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 && (f_mid - v).abs() <= 1e-12 * (1.0 + v.abs()) {
                break;
            }
        }
        let (e_lo, e_hi) = ((self.eval(lo) - v).abs(), (self.eval(hi) - v).abs());
        Ok(if e_lo <= e_hi { lo } else { hi })
    }
}

/// `−F`, used as a negative control for monotonicity and concavity.
#[derive(Debug, Clone)]
pub struct Negated<O>(pub O);

impl<O: SpectralOperator> SpectralOperator for Negated<O> {
    fn value(&self, lambdas: &[f64]) -> f64 {
        -self.0.value(lambdas)
    }

    fn gradient(&self, lambdas: &[f64]) -> Vec<f64> {
        self.0.gradient(lambdas).into_iter().map(|g| -g).collect()
    }

    fn derivative_sum(&self, lambdas: &[f64]) -> f64 {
        -self.0.derivative_sum(lambdas)
    }

    fn envelope(&self, t: f64, n: usize) -> f64 {
        -self.0.envelope(t, n)
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            modifier: Some("negated".into()),
            ..self.0.descriptor()
        }
    }
}

/// `F + c`. The flow of `F + c` differs from that of `F` only by the
/// translation rate.
#[derive(Debug, Clone)]
pub struct Shifted<O> {
    pub inner: O,
    pub shift: f64,
}

impl<O: SpectralOperator> SpectralOperator for Shifted<O> {
    fn value(&self, lambdas: &[f64]) -> f64 {
        self.inner.value(lambdas) + self.shift
    }

    fn gradient(&self, lambdas: &[f64]) -> Vec<f64> {
        self.inner.gradient(lambdas)
    }

    fn derivative_sum(&self, lambdas: &[f64]) -> f64 {
        self.inner.derivative_sum(lambdas)
    }

    fn envelope(&self, t: f64, n: usize) -> f64 {
        self.inner.envelope(t, n) + self.shift
    }

    fn descriptor(&self) -> OperatorDescriptor {
        OperatorDescriptor {
            modifier: Some(format!("shifted by {}", self.shift)),
            ..self.inner.descriptor()
        }
    }
}
