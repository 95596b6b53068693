//! Parametric risk measures `R(Z) = inf_θ E[Ψ(Z, θ)]` on finite-support distributions.
//!
//! Four generating functions are supported:
//!
//! * expectation, `Ψ(z) = z`;
//! * convex combinations of the expectation and Average Value-at-Risk terms,
//!   `Ψ(z, θ) = λ₀ z + Σᵢ λᵢ (θᵢ + αᵢ⁻¹ [z − θᵢ]₊)`;
//! * the Kullback-Leibler ambiguity set of radius `ε`,
//!   `Ψ(z, μ, λ) = λε − λ + μ + λ exp((z − μ)/λ)`;
//! * optimized certainty equivalents built from a concave piecewise-linear
//!   utility `u`, `Ψ(z, θ) = θ − u(θ − z)` (losses convention, so that `Ψ` is
//!   nondecreasing in `z` and `R(Z + c) = R(Z) + c`).
//!
//! Everything in here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by risk-measure evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid risk measure: {0}")]
    InvalidMeasure(String),
    #[error("parameter outside its domain: {0}")]
    Domain(String),
    #[error("scalar search stopped after {iterations} iterations (best lambda {best}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        best: f64,
        residual: f64,
    },
}

/// A random variable with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Tolerance on `Σ p = 1`.
    pub const PROB_TOL: f64 = 1e-12;

    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::InvalidDistribution("no atoms".into()));
        }
        if values.len() != probs.len() {
            return Err(RiskError::InvalidDistribution(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(RiskError::InvalidDistribution(format!("non-finite value {v}")));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(RiskError::InvalidDistribution(format!(
                "probability {p} is not strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::PROB_TOL {
            return Err(RiskError::InvalidDistribution(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { values, probs })
    }

    /// Equal weights `1/N` on every value.
    pub fn uniform(values: Vec<f64>) -> Result<Self, RiskError> {
        let n = values.len().max(1);
        let probs = vec![1.0 / n as f64; values.len()];
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(z, p)| p * z).sum()
    }

    /// Same probabilities, values mapped through `f`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&z| f(z)).collect(),
            probs: self.probs.clone(),
        }
    }
}

/// Tolerances of the one-dimensional convex search used by the KL measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSearch {
    /// Stop when the bracket objective spread is below `rel_tol · (1 + |f|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

/// `λ₀ E[Z] + Σ λᵢ AV@R_{αᵢ}(Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanAvar {
    /// `λ₀, λ₁, …, λ_k`, nonnegative and summing to one.
    pub weights: Vec<f64>,
    /// `α₁, …, α_k`.
    pub levels: Vec<f64>,
}

impl MeanAvar {
    pub fn new(weights: Vec<f64>, levels: Vec<f64>) -> Result<Self, RiskError> {
        let m = Self { weights, levels };
        m.validate()?;
        Ok(m)
    }

    /// `(1 − λ) E + λ AV@R_α`.
    pub fn convex_combination(lambda: f64, alpha: f64) -> Result<Self, RiskError> {
        Self::new(vec![1.0 - lambda, lambda], vec![alpha])
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.weights.len() != self.levels.len() + 1 {
            return Err(RiskError::InvalidMeasure(format!(
                "mean-avar needs {} weights for {} levels, got {}",
                self.levels.len() + 1,
                self.levels.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(RiskError::InvalidMeasure("mean-avar weights must be >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(RiskError::InvalidMeasure(format!(
                "mean-avar weights sum to {total}, expected 1"
            )));
        }
        // α = 1 is admitted: AV@R₁ is the expectation.
        if let Some(a) = self.levels.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(RiskError::InvalidMeasure(format!(
                "avar level {a} outside (0, 1]"
            )));
        }
        Ok(())
    }

    pub fn expectation_weight(&self) -> f64 {
        self.weights[0]
    }

    /// `(λᵢ, αᵢ)` pairs, one per AV@R term.
    pub fn avar_terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights[1..].iter().copied().zip(self.levels.iter().copied())
    }
}

/// Kullback-Leibler ambiguity set of radius `ε` around the reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlDivergence {
    pub epsilon: f64,
    #[serde(skip)]
    pub search: ScalarSearch,
}

impl KlDivergence {
    pub fn new(epsilon: f64) -> Result<Self, RiskError> {
        let k = Self {
            epsilon,
            search: ScalarSearch::default(),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(RiskError::InvalidMeasure(format!(
                "kl radius must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Concave, nondecreasing, piecewise-linear utility.
///
/// `slopes[k]` is the slope between `breakpoints[k-1]` and `breakpoints[k]`
/// (`slopes[0]` extends to −∞ and the last slope to +∞) and `anchor` is
/// `u(breakpoints[0])`, or `u(0)` when there are no breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OceUtility {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    #[serde(default)]
    pub anchor: f64,
}

impl OceUtility {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, anchor: f64) -> Result<Self, RiskError> {
        let u = Self {
            breakpoints,
            slopes,
            anchor,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let bad = |m: &str| Err(RiskError::InvalidMeasure(format!("oce utility: {m}")));
        if self.slopes.len() != self.breakpoints.len() + 1 {
            return bad("need one more slope than breakpoints");
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("breakpoints must be strictly increasing");
        }
        if self
            .breakpoints
            .iter()
            .chain(&self.slopes)
            .chain(std::iter::once(&self.anchor))
            .any(|v| !v.is_finite())
        {
            return bad("non-finite coefficient");
        }
        if self.slopes.iter().any(|s| *s < 0.0) {
            return bad("slopes must be nonnegative");
        }
        if self.slopes.windows(2).any(|w| w[1] > w[0]) {
            return bad("slopes must be nonincreasing (concavity)");
        }
        // Finite infimum over θ needs the first slope >= 1 >= last slope.
        let first = self.slopes[0];
        let last = *self.slopes.last().unwrap();
        if first < 1.0 || last > 1.0 {
            return bad("slopes must bracket 1 (first >= 1 >= last)");
        }
        Ok(())
    }

    /// Affine pieces `(s_k, d_k)` with `u(x) = min_k s_k x + d_k`.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        if self.breakpoints.is_empty() {
            return vec![(self.slopes[0], self.anchor)];
        }
        let mut out = Vec::with_capacity(self.slopes.len());
        let mut value = self.anchor;
        out.push((self.slopes[0], value - self.slopes[0] * self.breakpoints[0]));
        for (k, &b) in self.breakpoints.iter().enumerate() {
            if k > 0 {
                value += self.slopes[k] * (b - self.breakpoints[k - 1]);
            }
            out.push((self.slopes[k + 1], value - self.slopes[k + 1] * b));
        }
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.breakpoints.is_empty() {
            return self.anchor + self.slopes[0] * x;
        }
        let b = &self.breakpoints;
        if x <= b[0] {
            return self.anchor + self.slopes[0] * (x - b[0]);
        }
        let mut value = self.anchor;
        for k in 1..b.len() {
            if x <= b[k] {
                return value + self.slopes[k] * (x - b[k - 1]);
            }
            value += self.slopes[k] * (b[k] - b[k - 1]);
        }
        value + self.slopes[b.len()] * (x - b[b.len() - 1])
    }

    /// Right derivative `u'(x+)`.
    pub fn right_slope(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        self.slopes[k]
    }
}

/// A generating function `Ψ` together with its parameter set `Θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskMeasure {
    Expectation,
    MeanAvar(MeanAvar),
    Kl(KlDivergence),
    Oce(OceUtility),
}

/// A point of `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    /// Expectation has no parameter.
    Empty,
    /// One threshold per AV@R term.
    Levels(Vec<f64>),
    /// KL dual variables; `lambda > 0`.
    Kl { mu: f64, lambda: f64 },
    /// OCE shift.
    Scalar(f64),
}

impl Theta {
    /// Flattened coordinates, `(μ, λ)` order for KL.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Theta::Empty => Vec::new(),
            Theta::Levels(v) => v.clone(),
            Theta::Kl { mu, lambda } => vec![*mu, *lambda],
            Theta::Scalar(s) => vec![*s],
        }
    }
}

impl RiskMeasure {
    pub fn mean_avar(weights: Vec<f64>, levels: Vec<f64>) -> Result<Self, RiskError> {
        MeanAvar::new(weights, levels).map(RiskMeasure::MeanAvar)
    }

    pub fn kl(epsilon: f64) -> Result<Self, RiskError> {
        KlDivergence::new(epsilon).map(RiskMeasure::Kl)
    }

    pub fn oce(breakpoints: Vec<f64>, slopes: Vec<f64>, anchor: f64) -> Result<Self, RiskError> {
        OceUtility::new(breakpoints, slopes, anchor).map(RiskMeasure::Oce)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        match self {
            RiskMeasure::Expectation => Ok(()),
            RiskMeasure::MeanAvar(m) => m.validate(),
            RiskMeasure::Kl(k) => k.validate(),
            RiskMeasure::Oce(u) => u.validate(),
        }
    }

    /// Whether the stage problems are linear programs.
    pub fn is_polyhedral(&self) -> bool {
        !matches!(self, RiskMeasure::Kl(_))
    }

    /// Dimension of `Θ`.
    pub fn theta_dim(&self) -> usize {
        match self {
            RiskMeasure::Expectation => 0,
            RiskMeasure::MeanAvar(m) => m.levels.len(),
            RiskMeasure::Kl(_) => 2,
            RiskMeasure::Oce(_) => 1,
        }
    }

    /// Rebuild a `Θ` point from flattened coordinates.
    pub fn theta_from_slice(&self, v: &[f64]) -> Result<Theta, RiskError> {
        if v.len() != self.theta_dim() {
            return Err(RiskError::Domain(format!(
                "expected {} theta coordinates, got {}",
                self.theta_dim(),
                v.len()
            )));
        }
        let theta = match self {
            RiskMeasure::Expectation => Theta::Empty,
            RiskMeasure::MeanAvar(_) => Theta::Levels(v.to_vec()),
            RiskMeasure::Kl(_) => Theta::Kl {
                mu: v[0],
                lambda: v[1],
            },
            RiskMeasure::Oce(_) => Theta::Scalar(v[0]),
        };
        self.check_theta(&theta)?;
        Ok(theta)
    }

    fn check_theta(&self, theta: &Theta) -> Result<(), RiskError> {
        match (self, theta) {
            (RiskMeasure::Expectation, Theta::Empty) => Ok(()),
            (RiskMeasure::MeanAvar(m), Theta::Levels(t)) if t.len() == m.levels.len() => Ok(()),
            (RiskMeasure::Kl(_), Theta::Kl { lambda, .. }) => {
                if *lambda > 0.0 {
                    Ok(())
                } else {
                    Err(RiskError::Domain(format!("kl lambda must be > 0, got {lambda}")))
                }
            }
            (RiskMeasure::Oce(_), Theta::Scalar(_)) => Ok(()),
            _ => Err(RiskError::Domain(format!(
                "theta {theta:?} does not belong to this measure"
            ))),
        }
    }

    /// `Ψ(z, θ)`.
    pub fn psi(&self, z: f64, theta: &Theta) -> Result<f64, RiskError> {
        self.check_theta(theta)?;
        Ok(self.psi_raw(z, theta))
    }

    pub(crate) fn psi_raw(&self, z: f64, theta: &Theta) -> f64 {
        match (self, theta) {
            (RiskMeasure::Expectation, _) => z,
            (RiskMeasure::MeanAvar(m), Theta::Levels(t)) => {
                let mut acc = m.expectation_weight() * z;
                for ((w, a), th) in m.avar_terms().zip(t) {
                    acc += w * (th + (z - th).max(0.0) / a);
                }
                acc
            }
            (RiskMeasure::Kl(k), Theta::Kl { mu, lambda }) => {
                lambda * k.epsilon + mu + lambda * ((z - mu) / lambda).exp_m1()
            }
            (RiskMeasure::Oce(u), Theta::Scalar(th)) => th - u.eval(th - z),
            _ => unreachable!("theta checked by caller"),
        }
    }

    /// An element of `∂_z Ψ(z, θ)`; the left one at kinks.
    pub fn psi_subgrad(&self, z: f64, theta: &Theta) -> Result<f64, RiskError> {
        self.check_theta(theta)?;
        Ok(self.psi_subgrad_raw(z, theta))
    }

    pub(crate) fn psi_subgrad_raw(&self, z: f64, theta: &Theta) -> f64 {
        match (self, theta) {
            (RiskMeasure::Expectation, _) => 1.0,
            (RiskMeasure::MeanAvar(m), Theta::Levels(t)) => {
                let mut g = m.expectation_weight();
                for ((w, a), th) in m.avar_terms().zip(t) {
                    if z > *th {
                        g += w / a;
                    }
                }
                g
            }
            (RiskMeasure::Kl(_), Theta::Kl { mu, lambda }) => ((z - mu) / lambda).exp(),
            (RiskMeasure::Oce(u), Theta::Scalar(th)) => u.right_slope(th - z),
            _ => unreachable!("theta checked by caller"),
        }
    }

    /// The `θ` block of a joint subgradient of `Ψ` at `(z, θ)`, consistent
    /// with [`RiskMeasure::psi_subgrad`].
    pub fn psi_grad_theta(&self, z: f64, theta: &Theta) -> Result<Vec<f64>, RiskError> {
        self.check_theta(theta)?;
        Ok(match (self, theta) {
            (RiskMeasure::Expectation, _) => Vec::new(),
            (RiskMeasure::MeanAvar(m), Theta::Levels(t)) => m
                .avar_terms()
                .zip(t)
                .map(|((w, a), th)| if z > *th { w * (1.0 - 1.0 / a) } else { w })
                .collect(),
            (RiskMeasure::Kl(k), Theta::Kl { mu, lambda }) => {
                let d = (z - mu) / lambda;
                let e = d.exp();
                vec![1.0 - e, k.epsilon + d.exp_m1() - d * e]
            }
            (RiskMeasure::Oce(u), Theta::Scalar(th)) => vec![1.0 - u.right_slope(th - z)],
            _ => unreachable!(),
        })
    }

    /// `E[Ψ(Z, θ)]`.
    pub fn objective(&self, dist: &DiscreteDistribution, theta: &Theta) -> Result<f64, RiskError> {
        self.check_theta(theta)?;
        Ok(self.objective_raw(dist.values(), dist.probs(), theta))
    }

    pub(crate) fn objective_raw(&self, values: &[f64], probs: &[f64], theta: &Theta) -> f64 {
        values
            .iter()
            .zip(probs)
            .map(|(&z, &p)| p * self.psi_raw(z, theta))
            .sum()
    }

    /// A minimizer of `θ ↦ E[Ψ(Z, θ)]`.
    ///
    /// AV@R thresholds are left empirical `(1 − α)`-quantiles, the OCE shift
    /// is the left end of its optimal interval, and the KL pair comes from the
    /// scalar program in `λ` with `μ = λ ln E[exp(Z/λ)]`.
    pub fn argmin_theta(&self, dist: &DiscreteDistribution) -> Result<Theta, RiskError> {
        self.argmin_theta_raw(dist.values(), dist.probs())
    }

    pub(crate) fn argmin_theta_raw(&self, values: &[f64], probs: &[f64]) -> Result<Theta, RiskError> {
        match self {
            RiskMeasure::Expectation => Ok(Theta::Empty),
            RiskMeasure::MeanAvar(m) => {
                let order = sorted_order(values);
                Ok(Theta::Levels(
                    m.levels
                        .iter()
                        .map(|a| left_quantile_sorted(values, probs, &order, 1.0 - a))
                        .collect(),
                ))
            }
            RiskMeasure::Kl(k) => {
                let (mu, lambda) = kl_minimizer(values, probs, k.epsilon, &k.search)?;
                Ok(Theta::Kl { mu, lambda })
            }
            RiskMeasure::Oce(u) => Ok(Theta::Scalar(oce_minimizer(values, probs, u))),
        }
    }

    /// `R(Z)` evaluated at the minimizer from [`RiskMeasure::argmin_theta`].
    pub fn risk_eval(&self, dist: &DiscreteDistribution) -> Result<f64, RiskError> {
        self.risk_eval_raw(dist.values(), dist.probs())
    }

    pub(crate) fn risk_eval_raw(&self, values: &[f64], probs: &[f64]) -> Result<f64, RiskError> {
        let theta = self.argmin_theta_raw(values, probs)?;
        Ok(self.objective_raw(values, probs, &theta))
    }

    /// `R(Z)`, the minimizing `θ`, and the gradient weights `pⱼ Ψ'(zⱼ, θ)`.
    pub(crate) fn risk_with_weights(
        &self,
        values: &[f64],
        probs: &[f64],
    ) -> Result<(f64, Theta, Vec<f64>), RiskError> {
        let theta = self.argmin_theta_raw(values, probs)?;
        let value = self.objective_raw(values, probs, &theta);
        let weights = values
            .iter()
            .zip(probs)
            .map(|(&z, &p)| p * self.psi_subgrad_raw(z, &theta))
            .collect();
        Ok((value, theta, weights))
    }
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Smallest `z` with `P(Z ≤ z) ≥ level`.
fn left_quantile_sorted(values: &[f64], probs: &[f64], order: &[usize], level: f64) -> f64 {
    let mut cum = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        cum += probs[i];
        // Equal values share one atom of the cdf.
        if pos + 1 < order.len() && values[order[pos + 1]] == values[i] {
            continue;
        }
        if cum >= level - 1e-12 {
            return values[i];
        }
    }
    values[*order.last().expect("nonempty distribution")]
}

/// Left `level`-quantile of a finite distribution.
pub fn left_quantile(dist: &DiscreteDistribution, level: f64) -> f64 {
    let order = sorted_order(dist.values());
    left_quantile_sorted(dist.values(), dist.probs(), &order, level)
}

/// `λ ln E[exp(Z/λ)]`, shifted by `max Z` for stability.
pub fn scaled_log_mean_exp(values: &[f64], probs: &[f64], lambda: f64) -> f64 {
    let zmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values
        .iter()
        .zip(probs)
        .map(|(&z, &p)| p * ((z - zmax) / lambda).exp_m1())
        .sum();
    zmax + lambda * s.max(-1.0).ln_1p()
}

/// Dual objective of the KL measure in `λ` after eliminating `μ`.
pub fn kl_dual_objective(values: &[f64], probs: &[f64], epsilon: f64, lambda: f64) -> f64 {
    lambda * epsilon + scaled_log_mean_exp(values, probs, lambda)
}

/// Bracketed golden-section search in `ln λ`; returns `(μ̂, λ̂)`.
fn kl_minimizer(
    values: &[f64],
    probs: &[f64],
    epsilon: f64,
    search: &ScalarSearch,
) -> Result<(f64, f64), RiskError> {
    let zmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = zmax - zmin;
    let lo = 1e-10 * range + 1e-12;
    if range == 0.0 {
        return Ok((zmax, lo));
    }
    let f = |s: f64| kl_dual_objective(values, probs, epsilon, s.exp());
    let mut hi = (1e3 * range).max(1.0);
    // The optimum sits near sqrt(Var / 2ε), far beyond the initial bracket
    // for tiny radii; grow the upper end while the objective still decreases.
    let cap = 1e18 * range.max(1e-300);
    while hi < cap && f(hi.ln()) < f((hi / 4.0).ln()) {
        hi *= 1e3;
    }
    let hi = hi.min(cap);

    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (mut fa, mut fb) = (f(a), f(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..search.max_iter {
        let best = fa.min(fb).min(fc).min(fd);
        let spread = fa.max(fb).max(fc).max(fd) - best;
        if spread <= search.rel_tol * (1.0 + best.abs()) || (b - a) < 1e-13 {
            let s = best_of(&[(a, fa), (c, fc), (d, fd), (b, fb)]);
            let lambda = s.exp();
            return Ok((scaled_log_mean_exp(values, probs, lambda), lambda));
        }
        if fc <= fd {
            b = d;
            fb = fd;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            fa = fc;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let best = fa.min(fb).min(fc).min(fd);
    Err(RiskError::NoConvergence {
        iterations: search.max_iter,
        best: best_of(&[(a, fa), (c, fc), (d, fd), (b, fb)]).exp(),
        residual: fa.max(fb).max(fc).max(fd) - best,
    })
}

fn best_of(points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|p| p.0)
        .unwrap()
}

/// Left minimizer of `θ ↦ θ − E[u(θ − Z)]`, found among the kinks `zᵢ + b_k`.
fn oce_minimizer(values: &[f64], probs: &[f64], u: &OceUtility) -> f64 {
    if u.breakpoints.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = values
        .iter()
        .flat_map(|z| u.breakpoints.iter().map(move |b| z + b))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // The derivative is constant between consecutive kinks; sampling it
    // mid-interval avoids rounding in `c − z` landing on the wrong side.
    for (i, &c) in candidates.iter().enumerate() {
        let probe = candidates.get(i + 1).map_or(c + 1.0, |next| 0.5 * (c + next));
        let right_derivative: f64 =
            1.0 - values.iter().zip(probs).map(|(&z, &p)| p * u.right_slope(probe - z)).sum::<f64>();
        if right_derivative >= -1e-12 {
            return c;
        }
    }
    *candidates.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn avar(lambda: Vec<f64>, alpha: Vec<f64>) -> RiskMeasure {
        RiskMeasure::mean_avar(lambda, alpha).unwrap()
    }

    #[test]
    fn psi_examples() {
        let e = RiskMeasure::Expectation;
        assert_eq!(e.psi(3.7, &Theta::Empty).unwrap(), 3.7);

        let m = avar(vec![0.0, 1.0], vec![0.5]);
        assert_eq!(m.psi(4.0, &Theta::Levels(vec![2.0])).unwrap(), 6.0);

        let k = RiskMeasure::kl(0.1).unwrap();
        let v = k.psi(0.0, &Theta::Kl { mu: 0.0, lambda: 1.0 }).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kl_rejects_nonpositive_lambda() {
        let k = RiskMeasure::kl(0.1).unwrap();
        let err = k.psi(0.0, &Theta::Kl { mu: 0.0, lambda: 0.0 }).unwrap_err();
        assert!(matches!(err, RiskError::Domain(_)));
        assert!(k.psi_subgrad(0.0, &Theta::Kl { mu: 0.0, lambda: -1.0 }).is_err());
    }

    #[test]
    fn theta_kind_mismatch_is_rejected() {
        let m = avar(vec![0.5, 0.5], vec![0.1]);
        assert!(m.psi(1.0, &Theta::Scalar(0.0)).is_err());
        assert!(m.psi(1.0, &Theta::Levels(vec![0.0, 1.0])).is_err());
    }

    #[test]
    fn subgrad_examples() {
        let m = avar(vec![0.5, 0.5], vec![0.05]);
        let th = Theta::Levels(vec![10.0]);
        assert_eq!(m.psi_subgrad(9.0, &th).unwrap(), 0.5);
        assert!((m.psi_subgrad(11.0, &th).unwrap() - 10.5).abs() < 1e-12);
        // left element at the kink
        assert_eq!(m.psi_subgrad(10.0, &th).unwrap(), 0.5);

        let k = RiskMeasure::kl(0.3).unwrap();
        assert_eq!(k.psi_subgrad(1.0, &Theta::Kl { mu: 1.0, lambda: 2.0 }).unwrap(), 1.0);
        assert_eq!(RiskMeasure::Expectation.psi_subgrad(-4.0, &Theta::Empty).unwrap(), 1.0);
    }

    #[test]
    fn avar_quantile_is_left_endpoint() {
        let m = avar(vec![0.0, 1.0], vec![0.5]);
        let d = DiscreteDistribution::uniform(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(m.argmin_theta(&d).unwrap(), Theta::Levels(vec![2.0]));
        assert!((m.risk_eval(&d).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn avar_level_one_is_the_mean() {
        let m = avar(vec![0.0, 1.0], vec![1.0]);
        let d = DiscreteDistribution::new(vec![1.0, 5.0, -2.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert!((m.risk_eval(&d).unwrap() - d.mean()).abs() < 1e-12);
    }

    #[test]
    fn expectation_risk_is_weighted_mean() {
        let d = DiscreteDistribution::new(vec![1.0, 2.0, 3.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert!((RiskMeasure::Expectation.risk_eval(&d).unwrap() - 2.3).abs() < 1e-12);
        assert_eq!(RiskMeasure::Expectation.argmin_theta(&d).unwrap(), Theta::Empty);
    }

    #[test]
    fn kl_constant_distribution() {
        let k = RiskMeasure::kl(0.5).unwrap();
        let d = DiscreteDistribution::uniform(vec![7.0, 7.0, 7.0]).unwrap();
        match k.argmin_theta(&d).unwrap() {
            Theta::Kl { mu, lambda } => {
                assert_eq!(mu, 7.0);
                assert!(lambda <= 1e-12 + 1e-18);
            }
            other => panic!("{other:?}"),
        }
        assert!((k.risk_eval(&d).unwrap() - 7.0).abs() < 1e-11);
    }

    #[test]
    fn kl_mu_closed_form_matches() {
        let k = RiskMeasure::kl(0.1).unwrap();
        let d = DiscreteDistribution::uniform(vec![0.0, 1.0]).unwrap();
        let Theta::Kl { mu, lambda } = k.argmin_theta(&d).unwrap() else { panic!() };
        let direct = lambda * (0.5 * (0.0f64 / lambda).exp() + 0.5 * (1.0 / lambda).exp()).ln();
        assert!((mu - direct).abs() < 1e-12);
        // value equals the λ-program objective
        let r = k.risk_eval(&d).unwrap();
        assert!((r - kl_dual_objective(d.values(), d.probs(), 0.1, lambda)).abs() < 1e-12);
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![1.0], vec![0.98]).is_err());
        assert!(DiscreteDistribution::new(vec![1.0, 2.0], vec![1.0, 0.0]).is_err());
        assert!(DiscreteDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(DiscreteDistribution::new(vec![], vec![]).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(RiskMeasure::mean_avar(vec![0.5, 0.6], vec![0.1]).is_err());
        assert!(RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.0]).is_err());
        assert!(RiskMeasure::mean_avar(vec![1.0], vec![0.5]).is_err());
        assert!(RiskMeasure::kl(0.0).is_err());
        assert!(RiskMeasure::oce(vec![0.0], vec![0.5, 1.0], 0.0).is_err());
        assert!(RiskMeasure::oce(vec![0.0], vec![2.0, -0.1], 0.0).is_err());
        assert!(RiskMeasure::oce(vec![0.0], vec![0.9, 0.5], 0.0).is_err());
        assert!(RiskMeasure::oce(vec![0.0], vec![2.0, 0.5], 0.0).is_ok());
    }

    #[test]
    fn oce_pieces_agree_with_eval() {
        let u = OceUtility::new(vec![-1.0, 0.5, 2.0], vec![3.0, 1.5, 0.7, 0.0], 0.25).unwrap();
        for i in 0..200 {
            let x = -4.0 + 0.037 * i as f64;
            let min = u
                .pieces()
                .iter()
                .map(|(s, d)| s * x + d)
                .fold(f64::INFINITY, f64::min);
            assert!((min - u.eval(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn oce_with_avar_utility_reproduces_avar() {
        // u(x) = min(x, 0)/α turns θ − u(θ − z) into θ + [z − θ]₊/α.
        let alpha = 0.25;
        let oce = RiskMeasure::oce(vec![0.0], vec![1.0 / alpha, 0.0], 0.0).unwrap();
        let av = avar(vec![0.0, 1.0], vec![alpha]);
        let d = DiscreteDistribution::new(vec![3.0, -1.0, 8.0, 2.5], vec![0.1, 0.4, 0.2, 0.3]).unwrap();
        assert!((oce.risk_eval(&d).unwrap() - av.risk_eval(&d).unwrap()).abs() < 1e-12);
        assert_eq!(
            oce.argmin_theta(&d).unwrap().to_vec(),
            av.argmin_theta(&d).unwrap().to_vec()
        );
    }

    #[test]
    fn serde_tags() {
        let m: RiskMeasure =
            serde_json::from_str(r#"{"kind":"mean_avar","weights":[0.5,0.5],"levels":[0.1]}"#).unwrap();
        assert_eq!(m, avar(vec![0.5, 0.5], vec![0.1]));
        let k: RiskMeasure = serde_json::from_str(r#"{"kind":"kl","epsilon":0.01}"#).unwrap();
        assert_eq!(k, RiskMeasure::kl(0.01).unwrap());
        assert!(serde_json::from_str::<RiskMeasure>(r#"{"kind":"kl","epsilon":0.01,"x":1}"#).is_err());
    }
}
