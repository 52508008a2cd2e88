//! Increment distributions and their Laplace transforms.
//!
//! Two families are supported: finitely supported (atomic) laws and the
//! isotropic Gaussian `N(m, I)`. Both have every exponential moment, so the
//! Laplace transform `L(t) = E exp<t, X>` is finite on all of `R^d`.

use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pyramid;
use crate::linalg::{add, dot, is_finite, CompensatedSum};

/// Probabilities must sum to one within this tolerance.
pub const PROBABILITY_TOL: f64 = 1e-12;
/// Atoms with `<x, u> >= -SUPPORT_TOL` count as inside `D_u`.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Step cap for the reachability search behind hypothesis A3.
pub const REACH_MAX_STEPS: usize = 20;
const REACH_MAX_STATES: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("distribution needs at least one atom")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("atom #{index} has a non-positive or non-finite probability")]
    BadProbability { index: usize },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("atom #{index} duplicates an earlier atom")]
    DuplicateAtom { index: usize },
    #[error("non-finite coordinates")]
    NonFinite,
}

/// A finitely supported law `Σ p_j δ_{x_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicDistribution {
    dim: usize,
    points: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl AtomicDistribution {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        let dim = points.first().ok_or(DistributionError::Empty)?.len();
        if points.len() != probs.len() {
            return Err(DistributionError::DimensionMismatch {
                expected: points.len(),
                found: probs.len(),
            });
        }
        for (index, (x, &p)) in points.iter().zip(&probs).enumerate() {
            if x.len() != dim {
                return Err(DistributionError::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if !is_finite(x) {
                return Err(DistributionError::NonFinite);
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(DistributionError::BadProbability { index });
            }
            if points[..index].iter().any(|y| y == x) {
                return Err(DistributionError::DuplicateAtom { index });
            }
        }
        let sum = probs.iter().copied().collect::<CompensatedSum>().value();
        if (sum - 1.0).abs() > PROBABILITY_TOL {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(AtomicDistribution { dim, points, probs })
    }

    /// Equal weight on every point.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, DistributionError> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Accepts unnormalized positive weights; zero-weight atoms are dropped.
    pub fn from_weights(points: Vec<Vec<f64>>, weights: &[f64]) -> Result<Self, DistributionError> {
        let total: f64 = weights.iter().sum();
        let (pts, ps): (Vec<_>, Vec<_>) = points
            .into_iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(x, &w)| (x, w / total))
            .unzip();
        Self::new(pts, ps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(Vec::as_slice)
            .zip(self.probs.iter().copied())
    }

    /// Tilting weights `p_j e^{<t, x_j>}` divided by `L(t)`, together with
    /// `log L(t)`. Computed with a max-exponent shift.
    fn softmax(&self, t: &[f64]) -> (Vec<f64>, f64) {
        let expo: Vec<f64> = self.atoms().map(|(x, p)| p.ln() + dot(t, x)).collect();
        let shift = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = expo.iter().map(|e| (e - shift).exp()).collect();
        let total: f64 = w.iter().sum();
        (
            w.into_iter().map(|v| v / total).collect(),
            shift + total.ln(),
        )
    }
}

/// `N(mean, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDistribution {
    mean: Vec<f64>,
}

impl GaussianDistribution {
    pub fn new(mean: Vec<f64>) -> Result<Self, DistributionError> {
        if mean.is_empty() {
            return Err(DistributionError::Empty);
        }
        if !is_finite(&mean) {
            return Err(DistributionError::NonFinite);
        }
        Ok(GaussianDistribution { mean })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Distribution {
    Atomic(AtomicDistribution),
    Gaussian(GaussianDistribution),
}

impl From<AtomicDistribution> for Distribution {
    fn from(d: AtomicDistribution) -> Self {
        Distribution::Atomic(d)
    }
}

impl From<GaussianDistribution> for Distribution {
    fn from(d: GaussianDistribution) -> Self {
        Distribution::Gaussian(d)
    }
}

impl Distribution {
    pub fn dim(&self) -> usize {
        match self {
            Distribution::Atomic(a) => a.dim,
            Distribution::Gaussian(g) => g.mean.len(),
        }
    }

    pub fn as_atomic(&self) -> Option<&AtomicDistribution> {
        match self {
            Distribution::Atomic(a) => Some(a),
            Distribution::Gaussian(_) => None,
        }
    }

    /// `log L(t)`.
    pub fn log_laplace(&self, t: &[f64]) -> f64 {
        match self {
            Distribution::Atomic(a) => a.softmax(t).1,
            Distribution::Gaussian(g) => dot(t, &g.mean) + 0.5 * dot(t, t),
        }
    }

    /// `L(t) = E exp<t, X>`.
    pub fn laplace(&self, t: &[f64]) -> f64 {
        self.log_laplace(t).exp()
    }

    /// `∇L(t) = E[X exp<t, X>]`.
    pub fn grad_laplace(&self, t: &[f64]) -> Vec<f64> {
        let (l, mean) = self.tilted_moments(t);
        mean.into_iter().map(|v| v * l).collect()
    }

    /// Hessian `E[X X^T exp<t, X>]`.
    pub fn hessian_laplace(&self, t: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        match self {
            Distribution::Atomic(a) => {
                let (w, log_l) = a.softmax(t);
                let l = log_l.exp();
                DMatrix::from_fn(d, d, |i, j| {
                    l * a
                        .points
                        .iter()
                        .zip(&w)
                        .map(|(x, wk)| wk * x[i] * x[j])
                        .sum::<f64>()
                })
            }
            Distribution::Gaussian(g) => {
                let l = self.laplace(t);
                let c = add(t, &g.mean);
                DMatrix::from_fn(d, d, |i, j| {
                    l * (c[i] * c[j] + if i == j { 1.0 } else { 0.0 })
                })
            }
        }
    }

    /// `(L(t), ∇L(t)/L(t))`: the Laplace value and the mean of the
    /// `t`-changed law.
    fn tilted_moments(&self, t: &[f64]) -> (f64, Vec<f64>) {
        match self {
            Distribution::Atomic(a) => {
                let (w, log_l) = a.softmax(t);
                let mut mean = vec![0.0; a.dim];
                for (x, wk) in a.points.iter().zip(&w) {
                    for (m, xi) in mean.iter_mut().zip(x) {
                        *m += wk * xi;
                    }
                }
                (log_l.exp(), mean)
            }
            Distribution::Gaussian(g) => (self.laplace(t), add(t, &g.mean)),
        }
    }

    /// `m = E X = ∇L(0)`.
    pub fn drift(&self) -> Vec<f64> {
        match self {
            Distribution::Atomic(a) => {
                let mut m = vec![0.0; a.dim];
                for (x, p) in a.atoms() {
                    for (mi, xi) in m.iter_mut().zip(x) {
                        *mi += p * xi;
                    }
                }
                m
            }
            Distribution::Gaussian(g) => g.mean.clone(),
        }
    }

    /// Whether the support lies in the closed half-space `D_u`. Never true for
    /// a Gaussian.
    pub fn support_in_halfspace(&self, u: &[f64]) -> bool {
        match self {
            Distribution::Atomic(a) => a.points.iter().all(|x| dot(x, u) >= -SUPPORT_TOL),
            Distribution::Gaussian(_) => false,
        }
    }

    /// Whether some support point has `<x, v> > SUPPORT_TOL`, i.e. the support
    /// is not contained in `-D_v`.
    pub fn charges_open_halfspace(&self, v: &[f64]) -> bool {
        match self {
            Distribution::Atomic(a) => a.points.iter().any(|x| dot(x, v) > SUPPORT_TOL),
            Distribution::Gaussian(_) => true,
        }
    }

    /// The `t0`-changed law `e^{<t0, y>} μ(dy) / L(t0)`.
    pub fn tilt(&self, t0: &[f64]) -> TiltedDistribution {
        let laplace_at_t0 = self.laplace(t0);
        let tilted = match self {
            Distribution::Atomic(a) => {
                let (w, _) = a.softmax(t0);
                Distribution::Atomic(AtomicDistribution {
                    dim: a.dim,
                    points: a.points.clone(),
                    probs: w,
                })
            }
            Distribution::Gaussian(g) => Distribution::Gaussian(GaussianDistribution {
                mean: add(&g.mean, t0),
            }),
        };
        TiltedDistribution {
            t0: t0.to_vec(),
            laplace_at_t0,
            tilted,
        }
    }

    /// One increment. Atomic laws use inverse-CDF over the fixed atom order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Distribution::Atomic(a) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (x, p) in a.atoms() {
                    acc += p;
                    if u < acc {
                        return x.to_vec();
                    }
                }
                a.points.last().expect("non-empty").clone()
            }
            Distribution::Gaussian(g) => g
                .mean
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// A distribution together with the tilt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedDistribution {
    pub t0: Vec<f64>,
    /// `L(t0)` of the base law.
    pub laplace_at_t0: f64,
    tilted: Distribution,
}

impl TiltedDistribution {
    pub fn distribution(&self) -> &Distribution {
        &self.tilted
    }

    pub fn into_distribution(self) -> Distribution {
        self.tilted
    }

    pub fn drift(&self) -> Vec<f64> {
        self.tilted.drift()
    }
}

/// Outcome of checking hypotheses A1-A5 for a walk in a pyramid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// The cone is a pyramid with non-empty interior.
    pub a1_cone: bool,
    /// The walk is truly `d`-dimensional.
    pub a2_dimension: bool,
    /// The walk started at 0 can reach the interior without leaving `K`.
    pub a3_reach_interior: bool,
    /// Steps needed for A3, when found.
    pub a3_steps: Option<usize>,
    /// Set when the A3 search gave up (step or state cap) without success.
    pub a3_search_exhausted: bool,
    /// All exponential moments exist.
    pub a4_exponential_moments: bool,
    /// The walk is not trapped in `K`.
    pub a5_not_trapped: bool,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.a1_cone {
            out.push("A1");
        }
        if !self.a2_dimension {
            out.push("A2");
        }
        if !self.a3_reach_interior {
            out.push("A3");
        }
        if !self.a4_exponential_moments {
            out.push("A4");
        }
        if !self.a5_not_trapped {
            out.push("A5");
        }
        out
    }
}

/// Checks A1-A5. A1 holds for every constructed [`Pyramid`]; A4 holds for
/// both supported families.
pub fn validate_hypotheses(d: &Distribution, p: &Pyramid) -> HypothesisReport {
    let dim_ok = d.dim() == p.dim();
    let mut report = HypothesisReport {
        a1_cone: dim_ok,
        a2_dimension: true,
        a3_reach_interior: true,
        a3_steps: None,
        a3_search_exhausted: false,
        a4_exponential_moments: true,
        a5_not_trapped: true,
    };
    let Distribution::Atomic(a) = d else {
        report.a3_steps = Some(1);
        return report;
    };
    if !dim_ok {
        return report;
    }

    let m = DMatrix::from_fn(a.points.len(), a.dim, |i, j| a.points[i][j]);
    report.a2_dimension = m.rank(1e-9) == a.dim;
    report.a5_not_trapped = !a.points.iter().all(|x| p.contains(x, SUPPORT_TOL));

    let reach = reach_interior(a, p);
    report.a3_reach_interior = reach.steps.is_some();
    report.a3_steps = reach.steps;
    report.a3_search_exhausted = reach.steps.is_none() && reach.exhausted;
    report
}

struct Reach {
    steps: Option<usize>,
    exhausted: bool,
}

/// Breadth-first search over positions reachable from the origin while
/// staying in the closed cone.
fn reach_interior(a: &AtomicDistribution, p: &Pyramid) -> Reach {
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v * 1e9).round() as i64).collect() };
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let origin = vec![0.0; a.dim];
    seen.insert(key(&origin));
    let mut frontier: VecDeque<Vec<f64>> = VecDeque::from([origin]);
    for step in 1..=REACH_MAX_STEPS {
        let mut next = VecDeque::new();
        for x in &frontier {
            for y in &a.points {
                let z = add(x, y);
                if !p.contains(&z, SUPPORT_TOL) {
                    continue;
                }
                if p.contains_interior(&z, SUPPORT_TOL) {
                    return Reach {
                        steps: Some(step),
                        exhausted: false,
                    };
                }
                if seen.insert(key(&z)) {
                    next.push_back(z);
                }
            }
        }
        if next.is_empty() {
            return Reach {
                steps: None,
                exhausted: false,
            };
        }
        if seen.len() > REACH_MAX_STATES {
            break;
        }
        frontier = next;
    }
    Reach {
        steps: None,
        exhausted: true,
    }
}
