//! Radar merit functions `f(SINR_1, …, SINR_K)`, their derivatives and
//! concave minorizers.
//!
//! Every variant is increasing in each argument. Concave variants minorize
//! themselves; the others come with a separable quadratic (or linear)
//! surrogate that touches `f` at the expansion point and lies below it on
//! the non-negative orthant.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type RVector = DVector<f64>;
pub type RMatrix = DMatrix<f64>;

/// Exponents with `|p|` below this are treated as the geometric mean.
pub const GEOMETRIC_P_TOL: f64 = 1e-8;
const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Relative tolerance of the midpoint-convexity check in [`mean_concavity_test`].
pub const CONCAVITY_TEST_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeritError {
    #[error("weights must be positive and sum to 1 (got sum {sum})")]
    InvalidWeights { sum: f64 },
    #[error("expected {expected} per-subcarrier values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("generator {0} does not yield a concave mean: {1}")]
    NotConcave(String, String),
    #[error("not differentiable at x[{index}] = {value}")]
    Domain { index: usize, value: f64 },
}

/// Value, gradient and Hessian of a smooth function on `R^K`.
pub trait SmoothOracle {
    fn dim(&self) -> usize;
    fn value(&self, x: &RVector) -> f64;
    fn gradient(&self, x: &RVector) -> RVector;
    fn hessian(&self, x: &RVector) -> RMatrix;
}

/// A scalar generator `γ` for quasi-arithmetic means.
pub trait GammaFunction: Send + Sync {
    fn name(&self) -> String;
    fn value(&self, x: f64) -> f64;
    fn inverse(&self, y: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    /// `γ'/γ''`; override when a cancellation-free form exists.
    fn ratio(&self, x: f64) -> f64 {
        self.d1(x) / self.d2(x)
    }
}

/// Built-in generators, evaluated in numerically stable closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum BuiltinGamma {
    /// `a^x`, `a ∈ (0, 1)`: exponential mean.
    ExpMean { a: f64 },
    /// `a^(1/x)`, `a > 1`: radical mean.
    RadicalMean { a: f64 },
    /// `ln x`: geometric mean.
    Log,
    /// `x^p`: power mean.
    Power { p: f64 },
}

impl GammaFunction for BuiltinGamma {
    fn name(&self) -> String {
        match self {
            BuiltinGamma::ExpMean { a } => format!("exp-mean(a={a})"),
            BuiltinGamma::RadicalMean { a } => format!("radical-mean(a={a})"),
            BuiltinGamma::Log => "log".into(),
            BuiltinGamma::Power { p } => format!("power(p={p})"),
        }
    }

    fn value(&self, x: f64) -> f64 {
        match *self {
            BuiltinGamma::ExpMean { a } => a.powf(x),
            BuiltinGamma::RadicalMean { a } => a.powf(1.0 / x),
            BuiltinGamma::Log => x.ln(),
            BuiltinGamma::Power { p } => x.powf(p),
        }
    }

    fn inverse(&self, y: f64) -> f64 {
        match *self {
            BuiltinGamma::ExpMean { a } => y.ln() / a.ln(),
            BuiltinGamma::RadicalMean { a } => a.ln() / y.ln(),
            BuiltinGamma::Log => y.exp(),
            BuiltinGamma::Power { p } => y.powf(1.0 / p),
        }
    }

    fn d1(&self, x: f64) -> f64 {
        match *self {
            BuiltinGamma::ExpMean { a } => a.ln() * a.powf(x),
            BuiltinGamma::RadicalMean { a } => -a.ln() * a.powf(1.0 / x) / (x * x),
            BuiltinGamma::Log => 1.0 / x,
            BuiltinGamma::Power { p } => p * x.powf(p - 1.0),
        }
    }

    fn d2(&self, x: f64) -> f64 {
        match *self {
            BuiltinGamma::ExpMean { a } => a.ln().powi(2) * a.powf(x),
            BuiltinGamma::RadicalMean { a } => {
                let c = a.ln();
                a.powf(1.0 / x) * (c * c / x.powi(4) + 2.0 * c / x.powi(3))
            }
            BuiltinGamma::Log => -1.0 / (x * x),
            BuiltinGamma::Power { p } => p * (p - 1.0) * x.powf(p - 2.0),
        }
    }

    fn ratio(&self, x: f64) -> f64 {
        match *self {
            BuiltinGamma::ExpMean { a } => 1.0 / a.ln(),
            BuiltinGamma::RadicalMean { a } => -x * x / (a.ln() + 2.0 * x),
            BuiltinGamma::Log => -x,
            BuiltinGamma::Power { p } => x / (p - 1.0),
        }
    }
}

/// Generator of a quasi-arithmetic mean: a built-in or caller-supplied one.
#[derive(Clone)]
pub enum Generator {
    Builtin(BuiltinGamma),
    Custom(Arc<dyn GammaFunction>),
}

impl Generator {
    fn as_gamma(&self) -> &dyn GammaFunction {
        match self {
            Generator::Builtin(b) => b,
            Generator::Custom(c) => c.as_ref(),
        }
    }
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Generator({})", self.as_gamma().name())
    }
}

#[derive(Debug, Clone)]
pub enum MeritKind {
    /// `(Σ μ_k x_k^p)^(1/p)`, `p ≤ 1`.
    PowerMean { p: f64 },
    /// `γ⁻¹(Σ μ_k γ(x_k))`; only generators certified concave are accepted.
    QuasiArithmetic { generator: Generator },
    /// `Σ μ_k ln(1 + x_k)`.
    MutualInformation,
    /// `Σ μ_k x_k² / (1 + x_k)`.
    FisherInformation,
    /// `Σ μ_k P_fa,k^(1/(1+x_k))`.
    DetectionProbability { pfa: Vec<f64> },
    /// `Σ μ_k f_k(x_k)` with the two-sided relative-entropy term.
    RelativeEntropy { omega: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct MeritFunction {
    kind: MeritKind,
    weights: Vec<f64>,
    /// Per-term curvature of the quadratic minorizer (already halved, not weighted).
    curvature: Vec<f64>,
}

fn check_weights(weights: &[f64]) -> Result<(), MeritError> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty()
        || weights.iter().any(|&w| !(w > 0.0 && w.is_finite()))
        || (sum - 1.0).abs() > WEIGHT_SUM_TOL
    {
        return Err(MeritError::InvalidWeights { sum });
    }
    Ok(())
}

pub fn uniform_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Curvature `c` with `h'' ≥ −2c` for `h(x) = P^(1/(1+x))` on `x ≥ 0`.
pub fn detection_curvature(pfa: f64) -> f64 {
    let s3 = 3f64.sqrt();
    (s3 - 3.0).powi(4) * (s3 - 3.0).exp() / (2.0 * s3 * pfa.ln().powi(2))
}

/// Curvature `c` with `f_k'' ≥ −2c` for the relative-entropy term on `x ≥ 0`.
pub fn entropy_curvature(omega: f64) -> f64 {
    if omega < 0.5 {
        (1.0 - 2.0 * omega).powi(3) / (54.0 * (1.0 - omega).powi(2))
    } else {
        0.0
    }
}

/// Numerically stable `ln Σ exp(l_i)`; `-inf` entries are skipped.
fn log_sum_exp(l: &[f64]) -> f64 {
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + l.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// `diag(π) − ππᵀ`, with the diagonal written as `π_i Σ_{j≠i} π_j` so the
/// result stays PSD under rounding even when `π` is nearly one-hot.
fn softmax_covariance(pi: &[f64]) -> RMatrix {
    let k = pi.len();
    RMatrix::from_fn(k, k, |i, j| {
        if i == j {
            pi[i] * (0..k).filter(|&m| m != i).map(|m| pi[m]).sum::<f64>()
        } else {
            -pi[i] * pi[j]
        }
    })
}

fn softmax(l: &[f64]) -> (f64, Vec<f64>) {
    let s = log_sum_exp(l);
    (s, l.iter().map(|&v| (v - s).exp()).collect())
}

impl MeritFunction {
    pub fn power_mean(p: f64, weights: Vec<f64>) -> Result<Self, MeritError> {
        if !(p <= 1.0 && p.is_finite()) {
            return Err(MeritError::InvalidParameter {
                name: "p",
                value: p,
                reason: "power mean requires p <= 1",
            });
        }
        Self::build(MeritKind::PowerMean { p }, weights)
    }

    /// Quasi-arithmetic mean. The generator must pass [`mean_concavity_test`]
    /// on [`default_concavity_grid`]; otherwise no minorizer is available.
    pub fn quasi_arithmetic(generator: Generator, weights: Vec<f64>) -> Result<Self, MeritError> {
        if let Generator::Builtin(b) = &generator {
            let bad = match *b {
                BuiltinGamma::ExpMean { a } => !(a > 0.0 && a < 1.0),
                BuiltinGamma::RadicalMean { a } => !(a > 1.0 && a.is_finite()),
                BuiltinGamma::Power { p } => !(p <= 1.0 && p != 0.0),
                BuiltinGamma::Log => false,
            };
            if bad {
                return Err(MeritError::InvalidParameter {
                    name: "generator",
                    value: match *b {
                        BuiltinGamma::ExpMean { a } | BuiltinGamma::RadicalMean { a } => a,
                        BuiltinGamma::Power { p } => p,
                        BuiltinGamma::Log => 0.0,
                    },
                    reason: "parameter outside the generator's admissible range",
                });
            }
        }
        match mean_concavity_test(generator.as_gamma(), &default_concavity_grid()) {
            ConcavityVerdict::Concave => {}
            other => {
                return Err(MeritError::NotConcave(
                    generator.as_gamma().name(),
                    other.to_string(),
                ))
            }
        }
        Self::build(MeritKind::QuasiArithmetic { generator }, weights)
    }

    pub fn mutual_information(weights: Vec<f64>) -> Result<Self, MeritError> {
        Self::build(MeritKind::MutualInformation, weights)
    }

    pub fn fisher_information(weights: Vec<f64>) -> Result<Self, MeritError> {
        Self::build(MeritKind::FisherInformation, weights)
    }

    pub fn detection_probability(pfa: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeritError> {
        if let Some(&bad) = pfa.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(MeritError::InvalidParameter {
                name: "pfa",
                value: bad,
                reason: "false-alarm probability must lie in (0, 1)",
            });
        }
        Self::build(MeritKind::DetectionProbability { pfa }, weights)
    }

    pub fn relative_entropy(omega: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeritError> {
        if let Some(&bad) = omega.iter().find(|&&w| !(0.0..=1.0).contains(&w)) {
            return Err(MeritError::InvalidParameter {
                name: "omega",
                value: bad,
                reason: "must lie in [0, 1]",
            });
        }
        Self::build(MeritKind::RelativeEntropy { omega }, weights)
    }

    fn build(kind: MeritKind, weights: Vec<f64>) -> Result<Self, MeritError> {
        check_weights(&weights)?;
        let k = weights.len();
        let per_k = match &kind {
            MeritKind::DetectionProbability { pfa } => Some(pfa.len()),
            MeritKind::RelativeEntropy { omega } => Some(omega.len()),
            _ => None,
        };
        if let Some(n) = per_k {
            if n != k {
                return Err(MeritError::DimensionMismatch {
                    expected: k,
                    found: n,
                });
            }
        }
        let curvature = match &kind {
            MeritKind::DetectionProbability { pfa } => {
                pfa.iter().map(|&p| detection_curvature(p)).collect()
            }
            MeritKind::RelativeEntropy { omega } => {
                omega.iter().map(|&w| entropy_curvature(w)).collect()
            }
            _ => vec![0.0; k],
        };
        Ok(Self {
            kind,
            weights,
            curvature,
        })
    }

    pub fn kind(&self) -> &MeritKind {
        &self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_subcarriers(&self) -> usize {
        self.weights.len()
    }

    pub fn is_concave(&self) -> bool {
        matches!(
            self.kind,
            MeritKind::PowerMean { .. }
                | MeritKind::QuasiArithmetic { .. }
                | MeritKind::MutualInformation
        )
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            MeritKind::PowerMean { p } => format!("power-mean(p={p})"),
            MeritKind::QuasiArithmetic { generator } => {
                format!("quasi-arithmetic({})", generator.as_gamma().name())
            }
            MeritKind::MutualInformation => "mutual-info".into(),
            MeritKind::FisherInformation => "fisher-info".into(),
            MeritKind::DetectionProbability { .. } => "detection-prob".into(),
            MeritKind::RelativeEntropy { .. } => "relative-entropy".into(),
        }
    }

    /// Errors if the gradient is undefined at `x` (outside the domain or on
    /// a boundary where a power mean with `p < 1` has infinite slope).
    pub fn check_differentiable(&self, x: &RVector) -> Result<(), MeritError> {
        let interior = match &self.kind {
            MeritKind::PowerMean { p } => *p < 1.0,
            MeritKind::QuasiArithmetic { generator } => !matches!(
                generator,
                Generator::Builtin(BuiltinGamma::ExpMean { .. })
            ),
            _ => false,
        };
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || (interior && v == 0.0) {
                return Err(MeritError::Domain { index: i, value: v });
            }
        }
        Ok(())
    }

    pub fn try_gradient(&self, x: &RVector) -> Result<RVector, MeritError> {
        self.check_differentiable(x)?;
        Ok(self.gradient(x))
    }

    pub fn try_hessian(&self, x: &RVector) -> Result<RMatrix, MeritError> {
        self.check_differentiable(x)?;
        Ok(self.hessian(x))
    }

    /// Per-term value, slope and curvature for the separable variants.
    fn term(&self, k: usize, x: f64) -> (f64, f64, f64) {
        match &self.kind {
            MeritKind::MutualInformation => {
                let d = 1.0 + x;
                (x.ln_1p(), 1.0 / d, -1.0 / (d * d))
            }
            MeritKind::FisherInformation => {
                let d = 1.0 + x;
                (x * x / d, (2.0 * x + x * x) / (d * d), 2.0 / (d * d * d))
            }
            MeritKind::DetectionProbability { pfa } => {
                let l = pfa[k].ln();
                let t = 1.0 / (1.0 + x);
                let h = (l * t).exp();
                (h, -h * l * t * t, h * (l * l * t.powi(4) + 2.0 * l * t.powi(3)))
            }
            MeritKind::RelativeEntropy { omega } => {
                let w = omega[k];
                let b = 1.0 - 2.0 * w;
                let d = 1.0 + x;
                (
                    b * x.ln_1p() + x * (w * x - b) / d,
                    x * (1.0 + w * x) / (d * d),
                    (1.0 - b * x) / (d * d * d),
                )
            }
            _ => unreachable!("not a separable merit"),
        }
    }

    /// Concave surrogate touching `f` at `x0`.
    pub fn minorizer_at(&self, x0: &RVector) -> Surrogate {
        if self.is_concave() {
            return Surrogate::Exact(self.clone());
        }
        let k = self.num_subcarriers();
        let mut value = Vec::with_capacity(k);
        let mut slope = Vec::with_capacity(k);
        let mut curvature = Vec::with_capacity(k);
        for i in 0..k {
            let (v, d, _) = self.term(i, x0[i]);
            let mu = self.weights[i];
            value.push(mu * v);
            slope.push(mu * d);
            curvature.push(mu * self.curvature[i]);
        }
        Surrogate::Separable(SeparableQuadratic {
            center: x0.clone(),
            value,
            slope,
            curvature,
        })
    }

    fn power_mean_parts(&self, p: f64, x: &RVector) -> Option<(f64, Vec<f64>)> {
        // Returns (f, π) with π_k = μ_k x_k^p / Σ μ x^p.
        if p <= GEOMETRIC_P_TOL && x.iter().any(|&v| v == 0.0) {
            return None;
        }
        if p.abs() < GEOMETRIC_P_TOL {
            let lf: f64 = self
                .weights
                .iter()
                .zip(x.iter())
                .map(|(m, v)| m * v.ln())
                .sum();
            return Some((lf.exp(), self.weights.clone()));
        }
        let l: Vec<f64> = self
            .weights
            .iter()
            .zip(x.iter())
            .map(|(m, &v)| m.ln() + p * v.ln())
            .collect();
        let (s, pi) = softmax(&l);
        if s == f64::NEG_INFINITY {
            return None;
        }
        Some(((s / p).exp(), pi))
    }
}

impl SmoothOracle for MeritFunction {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, x: &RVector) -> f64 {
        match &self.kind {
            MeritKind::PowerMean { p } => {
                if *p == 1.0 {
                    return self.weights.iter().zip(x.iter()).map(|(m, v)| m * v).sum();
                }
                self.power_mean_parts(*p, x).map_or(0.0, |(f, _)| f)
            }
            MeritKind::QuasiArithmetic { generator } => quasi_value(generator, &self.weights, x),
            _ => (0..self.dim())
                .map(|i| self.weights[i] * self.term(i, x[i]).0)
                .sum(),
        }
    }

    fn gradient(&self, x: &RVector) -> RVector {
        match &self.kind {
            MeritKind::PowerMean { p } => {
                if *p == 1.0 {
                    return RVector::from_vec(self.weights.clone());
                }
                match self.power_mean_parts(*p, x) {
                    Some((f, pi)) => RVector::from_fn(x.len(), |i, _| f * pi[i] / x[i]),
                    None => RVector::from_element(x.len(), f64::NAN),
                }
            }
            MeritKind::QuasiArithmetic { generator } => {
                quasi_derivatives(generator, &self.weights, x).1
            }
            _ => RVector::from_fn(self.dim(), |i, _| self.weights[i] * self.term(i, x[i]).1),
        }
    }

    fn hessian(&self, x: &RVector) -> RMatrix {
        let k = self.dim();
        match &self.kind {
            MeritKind::PowerMean { p } => {
                if *p == 1.0 {
                    return RMatrix::zeros(k, k);
                }
                match self.power_mean_parts(*p, x) {
                    Some((f, pi)) => {
                        let c = softmax_covariance(&pi);
                        RMatrix::from_fn(k, k, |i, j| -(1.0 - p) * f * c[(i, j)] / (x[i] * x[j]))
                    }
                    None => RMatrix::from_element(k, k, f64::NAN),
                }
            }
            MeritKind::QuasiArithmetic { generator } => {
                quasi_derivatives(generator, &self.weights, x).2
            }
            _ => RMatrix::from_diagonal(&RVector::from_fn(k, |i, _| {
                self.weights[i] * self.term(i, x[i]).2
            })),
        }
    }
}

fn quasi_value(generator: &Generator, mu: &[f64], x: &RVector) -> f64 {
    quasi_derivatives(generator, mu, x).0
}

/// Value, gradient and Hessian of a quasi-arithmetic mean.
fn quasi_derivatives(generator: &Generator, mu: &[f64], x: &RVector) -> (f64, RVector, RMatrix) {
    let k = mu.len();
    match generator {
        Generator::Builtin(BuiltinGamma::ExpMean { a }) => {
            // f = (1/c) ln Σ μ e^{c x}, c = ln a < 0.
            let c = a.ln();
            let l: Vec<f64> = (0..k).map(|i| mu[i].ln() + c * x[i]).collect();
            let (s, pi) = softmax(&l);
            let g = RVector::from_vec(pi.clone());
            let h = softmax_covariance(&pi).scale(c);
            (s / c, g, h)
        }
        Generator::Builtin(BuiltinGamma::RadicalMean { a }) => {
            // With y = 1/x and h(y) = (1/c) ln Σ μ e^{c y}, f = 1/h.
            let c = a.ln();
            let y: Vec<f64> = x.iter().map(|v| 1.0 / v).collect();
            let l: Vec<f64> = (0..k).map(|i| mu[i].ln() + c * y[i]).collect();
            let (s, pi) = softmax(&l);
            let f = c / s;
            let g = RVector::from_fn(k, |i, _| f * f * pi[i] * y[i] * y[i]);
            let h = RMatrix::from_fn(k, k, |i, j| {
                let yi2 = y[i] * y[i];
                let yj2 = y[j] * y[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                2.0 * f * g[j] * pi[i] * yi2 - c * f * f * yi2 * pi[i] * (delta - pi[j]) * yj2
                    - 2.0 * delta * f * f * pi[i] * yi2 * y[i]
            });
            (f, g, h)
        }
        Generator::Builtin(BuiltinGamma::Log) => {
            let lf: f64 = (0..k).map(|i| mu[i] * x[i].ln()).sum();
            let f = lf.exp();
            let g = RVector::from_fn(k, |i, _| f * mu[i] / x[i]);
            let h = RMatrix::from_fn(k, k, |i, j| {
                let d = if i == j { mu[i] / (x[i] * x[i]) } else { 0.0 };
                f * (mu[i] * mu[j] / (x[i] * x[j]) - d)
            });
            (f, g, h)
        }
        _ => {
            let gamma = generator.as_gamma();
            let s: f64 = (0..k).map(|i| mu[i] * gamma.value(x[i])).sum();
            let f = gamma.inverse(s);
            let d1f = gamma.d1(f);
            let d2f = gamma.d2(f);
            let g = RVector::from_fn(k, |i, _| mu[i] * gamma.d1(x[i]) / d1f);
            let h = RMatrix::from_fn(k, k, |i, j| {
                let d = if i == j { mu[i] * gamma.d2(x[i]) } else { 0.0 };
                (d - d2f * g[i] * g[j]) / d1f
            });
            (f, g, h)
        }
    }
}

/// `Σ_k [v_k + s_k (x_k − c_k) − q_k (x_k − c_k)²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub center: RVector,
    pub value: Vec<f64>,
    pub slope: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl SmoothOracle for SeparableQuadratic {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn value(&self, x: &RVector) -> f64 {
        (0..self.dim())
            .map(|i| {
                let d = x[i] - self.center[i];
                self.value[i] + self.slope[i] * d - self.curvature[i] * d * d
            })
            .sum()
    }

    fn gradient(&self, x: &RVector) -> RVector {
        RVector::from_fn(self.dim(), |i, _| {
            self.slope[i] - 2.0 * self.curvature[i] * (x[i] - self.center[i])
        })
    }

    fn hessian(&self, _x: &RVector) -> RMatrix {
        RMatrix::from_diagonal(&RVector::from_fn(self.dim(), |i, _| {
            -2.0 * self.curvature[i]
        }))
    }
}

/// Concave minorizer `ζ(·|x0)` of a merit function.
#[derive(Debug, Clone)]
pub enum Surrogate {
    Exact(MeritFunction),
    Separable(SeparableQuadratic),
}

impl SmoothOracle for Surrogate {
    fn dim(&self) -> usize {
        match self {
            Surrogate::Exact(f) => f.dim(),
            Surrogate::Separable(q) => q.dim(),
        }
    }
    fn value(&self, x: &RVector) -> f64 {
        match self {
            Surrogate::Exact(f) => f.value(x),
            Surrogate::Separable(q) => q.value(x),
        }
    }
    fn gradient(&self, x: &RVector) -> RVector {
        match self {
            Surrogate::Exact(f) => f.gradient(x),
            Surrogate::Separable(q) => q.gradient(x),
        }
    }
    fn hessian(&self, x: &RVector) -> RMatrix {
        match self {
            Surrogate::Exact(f) => f.hessian(x),
            Surrogate::Separable(q) => q.hessian(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConcavityVerdict {
    Concave,
    NotConcave {
        /// Grid triple where midpoint convexity of `γ'/γ''` fails.
        triple: (f64, f64, f64),
        excess: f64,
    },
    Inconclusive {
        reason: String,
    },
}

impl fmt::Display for ConcavityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcavityVerdict::Concave => write!(f, "concave"),
            ConcavityVerdict::NotConcave { triple, excess } => write!(
                f,
                "not concave: γ'/γ'' fails convexity on ({}, {}, {}) by {excess:e}",
                triple.0, triple.1, triple.2
            ),
            ConcavityVerdict::Inconclusive { reason } => write!(f, "inconclusive: {reason}"),
        }
    }
}

/// Log-spaced grid on `[1e-2, 1e2]` used to certify generators at
/// construction. The range stays narrow enough that `a^x` does not underflow
/// for moderate `a`.
pub fn default_concavity_grid() -> Vec<f64> {
    let n = 61;
    (0..n)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (n - 1) as f64))
        .collect()
}

/// Numerical concavity test for `γ⁻¹(Σ μ γ(x))`.
///
/// The generator must be strictly increasing and concave, or strictly
/// decreasing and convex, at every grid point; otherwise the verdict is
/// inconclusive. The mean is then concave iff `γ'/γ''` is convex, which is
/// checked on every ordered grid triple with relative tolerance
/// [`CONCAVITY_TEST_TOL`].
pub fn mean_concavity_test(gamma: &dyn GammaFunction, grid: &[f64]) -> ConcavityVerdict {
    let mut pts: Vec<f64> = grid.to_vec();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 3 {
        return ConcavityVerdict::Inconclusive {
            reason: "grid needs at least three distinct points".into(),
        };
    }
    let first_sign = gamma.d1(pts[0]).signum();
    for &x in &pts {
        let (g1, g2) = (gamma.d1(x), gamma.d2(x));
        let ok = g1.is_finite()
            && g2.is_finite()
            && g1 != 0.0
            && g2 != 0.0
            && g1.signum() == first_sign
            && g1.signum() != g2.signum();
        if !ok {
            return ConcavityVerdict::Inconclusive {
                reason: format!(
                    "sign pattern violated at x = {x}: γ' = {g1:e}, γ'' = {g2:e}"
                ),
            };
        }
    }
    let r: Vec<f64> = pts.iter().map(|&x| gamma.ratio(x)).collect();
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tol = CONCAVITY_TEST_TOL * scale;
    let n = pts.len();
    for a in 0..n {
        for c in a + 2..n {
            let span = pts[c] - pts[a];
            for b in a + 1..c {
                let chord = ((pts[c] - pts[b]) * r[a] + (pts[b] - pts[a]) * r[c]) / span;
                let excess = r[b] - chord;
                if excess > tol {
                    return ConcavityVerdict::NotConcave {
                        triple: (pts[a], pts[b], pts[c]),
                        excess,
                    };
                }
            }
        }
    }
    ConcavityVerdict::Concave
}

/// Serializable merit selection, as used in config files and on the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MeritSpec {
    PowerMean {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    QuasiArithmetic {
        generator: BuiltinGamma,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    MutualInfo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    FisherInfo {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    DetectionProb {
        /// Scalar or per-subcarrier false-alarm probability.
        pfa: crate::scenario::config::PerSubcarrier,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    RelativeEntropy {
        omega: crate::scenario::config::PerSubcarrier,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl Default for MeritSpec {
    fn default() -> Self {
        MeritSpec::PowerMean {
            p: 1.0,
            weights: None,
        }
    }
}

impl MeritSpec {
    pub fn build(&self, k: usize) -> Result<MeritFunction, MeritError> {
        use crate::scenario::config::PerSubcarrier;
        let w = |weights: &Option<Vec<f64>>| weights.clone().unwrap_or_else(|| uniform_weights(k));
        let per_k = |v: &PerSubcarrier| -> Result<Vec<f64>, MeritError> {
            match v {
                PerSubcarrier::Scalar(x) => Ok(vec![*x; k]),
                PerSubcarrier::List(l) if l.len() == k => Ok(l.clone()),
                PerSubcarrier::List(l) => Err(MeritError::DimensionMismatch {
                    expected: k,
                    found: l.len(),
                }),
            }
        };
        let f = match self {
            MeritSpec::PowerMean { p, weights } => MeritFunction::power_mean(*p, w(weights))?,
            MeritSpec::QuasiArithmetic { generator, weights } => {
                MeritFunction::quasi_arithmetic(Generator::Builtin(*generator), w(weights))?
            }
            MeritSpec::MutualInfo { weights } => MeritFunction::mutual_information(w(weights))?,
            MeritSpec::FisherInfo { weights } => MeritFunction::fisher_information(w(weights))?,
            MeritSpec::DetectionProb { pfa, weights } => {
                MeritFunction::detection_probability(per_k(pfa)?, w(weights))?
            }
            MeritSpec::RelativeEntropy { omega, weights } => {
                MeritFunction::relative_entropy(per_k(omega)?, w(weights))?
            }
        };
        if f.num_subcarriers() != k {
            return Err(MeritError::DimensionMismatch {
                expected: k,
                found: f.num_subcarriers(),
            });
        }
        Ok(f)
    }
}
