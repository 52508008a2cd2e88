//! Exponential rate of `P^x(τ > n) -> P^x(τ = ∞)`.
//!
//! With the drift `m` inside the cone, the rate is
//!
//! ```text
//! ρ = max_{u ∈ S'} min_{z ∈ K*} L(t_u + z),    t_u = s_u u,
//! ```
//!
//! where `S'` collects the normals `u` for which `s -> L(s u)` has a second
//! root `s_u < 0` (exactly those with `P(X ∈ D_u) < 1`). When the drift is
//! not interior, `P^x(τ > n)` itself decays and the rate is `min_{K*} L`.

mod closed_form;

pub use closed_form::{
    closed_form_gaussian, closed_form_weighted, gaussian_sector_model, ClosedFormError,
    GaussianSector, WeightedSteps,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{validate_hypotheses, Distribution, HypothesisReport};
use crate::geometry::{extremal_directions, GeneratedCone, GeometryError, Pyramid};
use crate::linalg::{add, dot, norm, scale};
use crate::optim::{minimize_nonnegative, Objective, SolverOptions};

/// Relative threshold separating interior, boundary and exterior drift.
pub const DRIFT_TOL: f64 = 1e-10;
/// Root residual target `|L(s_u u) - 1|`.
pub const ROOT_TOL: f64 = 1e-12;
/// KKT residual bound for reported minimizers.
pub const KKT_TOL: f64 = 1e-8;
/// Agreement required between the max over `S'` and over its extremal part.
pub const EXTREMAL_AGREEMENT_TOL: f64 = 1e-9;
/// Per-direction values this close to the maximum count as ties.
pub const TIE_TOL: f64 = 1e-10;
const BISECTION_STEPS: usize = 200;
const NEWTON_POLISH_STEPS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("hypotheses violated: {}", .0.join(", "))]
    HypothesisViolation(Vec<&'static str>),
    #[error("dimension mismatch: distribution is {distribution}-dimensional, cone is {cone}-dimensional")]
    DimensionMismatch { distribution: usize, cone: usize },
    #[error("drift has non-positive component {value} along the normal; no negative root to find")]
    DriftNotInward { value: f64 },
    #[error("failed to bracket the negative root of s -> L(s u) - 1")]
    BracketFailure,
    #[error("Laplace transform is not coercive on the dual cone (support inside -D_v for generator #{generator})")]
    NotCoercive { generator: usize },
    #[error(
        "minimization stopped after {iterations} iterations with projected gradient {residual:e}"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no normal admits a negative root although the drift is interior")]
    EmptyDirectionSet,
    #[error("internal consistency check failed: {what} (discrepancy {discrepancy:e})")]
    Inconsistent {
        what: &'static str,
        discrepancy: f64,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    /// Projected-gradient target for the dual-cone minimization.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// A3 only asks that the walk enter the interior from the origin. Walks
    /// started deeper inside the cone may not need it; clearing this flag
    /// records an A3 failure in the report instead of rejecting the model.
    pub require_reach_from_origin: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            tolerance: 1e-10,
            max_iterations: 100_000,
            require_reach_from_origin: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftClass {
    Interior,
    Boundary,
    Exterior,
}

/// Which formula produced the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Interior drift: max over `S'` of the per-direction dual minima.
    MaxOverDirections,
    /// Boundary or exterior drift: plain minimum of `L` over `K*`.
    DualConeMinimum,
}

pub fn classify_drift(m: &[f64], p: &Pyramid) -> DriftClass {
    let scale_tol = DRIFT_TOL * norm(m);
    let products: Vec<f64> = p.normals().iter().map(|u| dot(m, u)).collect();
    if products.iter().all(|&v| v > scale_tol) {
        DriftClass::Interior
    } else if products.iter().all(|&v| v >= -DRIFT_TOL) {
        DriftClass::Boundary
    } else {
        DriftClass::Exterior
    }
}

/// The negative root `s_u` of `L(s u) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub s: f64,
    /// `|L(s u) - 1|`.
    pub residual: f64,
    /// `d/ds L(s u) = <∇L(s u), u>`, negative at the root.
    pub derivative: f64,
}

/// Finds `s_u < 0` with `L(s_u u) = 1`, or `None` when the support lies in
/// `D_u` and no such root exists.
pub fn solve_su(d: &Distribution, u: &[f64]) -> Result<Option<Root>, RateError> {
    let slope = dot(&d.drift(), u);
    if !(slope > 0.0) {
        return Err(RateError::DriftNotInward { value: slope });
    }
    if d.support_in_halfspace(u) {
        return Ok(None);
    }
    // φ(s) - 1 without cancellation.
    let excess = |s: f64| d.log_laplace(&scale(u, s)).exp_m1();

    // [lo, hi] with φ(lo) > 1 > φ(hi), both strictly negative.
    let (mut lo, mut hi);
    if excess(-1.0) < 0.0 {
        hi = -1.0;
        lo = -2.0;
        while excess(lo) <= 0.0 {
            hi = lo;
            lo *= 2.0;
            if lo < -1e300 {
                return Err(RateError::BracketFailure);
            }
        }
    } else {
        lo = -1.0;
        hi = -0.5;
        let mut halvings = 0;
        while excess(hi) >= 0.0 {
            lo = hi;
            hi *= 0.5;
            halvings += 1;
            if halvings > 1000 {
                return Err(RateError::BracketFailure);
            }
        }
    }

    let mut s = 0.5 * (lo + hi);
    for _ in 0..BISECTION_STEPS {
        s = 0.5 * (lo + hi);
        if s <= lo || s >= hi {
            break;
        }
        if excess(s) > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
    }
    for _ in 0..NEWTON_POLISH_STEPS {
        let f = excess(s);
        let df = dot(&d.grad_laplace(&scale(u, s)), u);
        if f == 0.0 || df == 0.0 {
            break;
        }
        let next = s - f / df;
        if next < lo || next > hi || excess(next).abs() >= f.abs() {
            break;
        }
        s = next;
    }

    let residual = excess(s).abs();
    if residual > ROOT_TOL {
        return Err(RateError::BracketFailure);
    }
    Ok(Some(Root {
        s,
        residual,
        derivative: dot(&d.grad_laplace(&scale(u, s)), u),
    }))
}

/// First-order optimality residuals at a reported minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// `min_i <∇L(t + z*), g_i>`; should be `>= -KKT_TOL`.
    pub min_directional_derivative: f64,
    /// `max_i |λ_i <∇L(t + z*), g_i>|`; should be `<= KKT_TOL`.
    pub max_complementarity: f64,
    pub projected_gradient_norm: f64,
}

impl KktCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_directional_derivative >= -tol && self.max_complementarity <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMinimum {
    /// `min_{z ∈ K*} L(t + z)`.
    pub value: f64,
    pub zstar: Vec<f64>,
    /// Coefficients of `z*` on the cone generators.
    pub lambda: Vec<f64>,
    pub kkt: KktCertificate,
    pub iterations: usize,
}

struct LaplaceOnCone<'a> {
    d: &'a Distribution,
    t: &'a [f64],
    cone: &'a GeneratedCone,
}

impl LaplaceOnCone<'_> {
    fn point(&self, lambda: &[f64]) -> Vec<f64> {
        add(self.t, &self.cone.point(lambda))
    }
}

impl Objective for LaplaceOnCone<'_> {
    fn value(&self, lambda: &[f64]) -> f64 {
        self.d.laplace(&self.point(lambda))
    }

    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let g = self.d.grad_laplace(&self.point(lambda));
        self.cone.generators().iter().map(|v| dot(v, &g)).collect()
    }

    fn hessian(&self, lambda: &[f64]) -> Option<DMatrix<f64>> {
        let h = self.d.hessian_laplace(&self.point(lambda));
        let gens = self.cone.generators();
        let n = gens.len();
        Some(DMatrix::from_fn(n, n, |i, j| {
            let hv: Vec<f64> = (0..h.nrows())
                .map(|r| (0..h.ncols()).map(|c| h[(r, c)] * gens[j][c]).sum())
                .collect();
            dot(&gens[i], &hv)
        }))
    }
}

/// `min_{z ∈ cone} L(t + z)` over `z = Σ λ_i g_i`, `λ >= 0`, starting from
/// `λ = 0`.
pub fn minimize_over_dual(
    d: &Distribution,
    t: &[f64],
    cone: &GeneratedCone,
    opts: &RateOptions,
) -> Result<DualMinimum, RateError> {
    if let Some(generator) = cone
        .generators()
        .iter()
        .position(|v| !d.charges_open_halfspace(v))
    {
        return Err(RateError::NotCoercive { generator });
    }
    let objective = LaplaceOnCone { d, t, cone };
    let solver = SolverOptions {
        tolerance: opts.tolerance,
        max_iterations: opts.max_iterations,
        ..SolverOptions::default()
    };
    let sol = minimize_nonnegative(&objective, &vec![0.0; cone.len()], &solver);
    if !sol.converged {
        return Err(RateError::NoConvergence {
            iterations: sol.iterations,
            residual: sol.projected_gradient_norm,
        });
    }
    let kkt = KktCertificate {
        min_directional_derivative: sol.gradient.iter().copied().fold(f64::INFINITY, f64::min),
        max_complementarity: sol
            .x
            .iter()
            .zip(&sol.gradient)
            .map(|(l, g)| (l * g).abs())
            .fold(0.0, f64::max),
        projected_gradient_norm: sol.projected_gradient_norm,
    };
    Ok(DualMinimum {
        value: sol.value,
        zstar: cone.point(&sol.x),
        lambda: sol.x,
        kkt,
        iterations: sol.iterations,
    })
}

/// Per-normal outcome of the interior-drift computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub index: usize,
    pub u: Vec<f64>,
    /// Whether `u` is an extremal ray of `K*`.
    pub extremal: bool,
    pub in_s_prime: bool,
    pub root: Option<Root>,
    pub t_u: Option<Vec<f64>>,
    /// `<∇L(t_u), u>`: the drift component along `u` after tilting by `t_u`.
    pub tilted_drift_along_u: Option<f64>,
    pub minimum: Option<DualMinimum>,
}

impl DirectionRecord {
    pub fn s_u(&self) -> Option<f64> {
        self.root.map(|r| r.s)
    }

    pub fn rho_u(&self) -> Option<f64> {
        self.minimum.as_ref().map(|m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub drift: Vec<f64>,
    pub drift_class: DriftClass,
    pub branch: Branch,
    pub records: Vec<DirectionRecord>,
    pub rho: f64,
    /// Lowest-index maximizing normal (interior drift only).
    pub argmax: Option<usize>,
    /// Every normal attaining the maximum within [`TIE_TOL`].
    pub maximizers: Vec<usize>,
    /// The max recomputed over extremal normals only.
    pub rho_extremal: Option<f64>,
    /// The dual-cone minimum, for boundary or exterior drift.
    pub dual_minimum: Option<DualMinimum>,
    /// Whether `ρ < 1`.
    pub rho_below_one: bool,
    pub hypotheses: HypothesisReport,
}

impl RateReport {
    pub fn record_for(&self, u: &[f64]) -> Option<&DirectionRecord> {
        self.records
            .iter()
            .find(|r| crate::linalg::distance(&r.u, u) < 1e-12)
    }

    pub fn s_prime(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.in_s_prime)
            .map(|r| r.index)
            .collect()
    }
}

pub fn compute_rate(d: &Distribution, p: &Pyramid) -> Result<RateReport, RateError> {
    compute_rate_with(d, p, &RateOptions::default())
}

pub fn compute_rate_with(
    d: &Distribution,
    p: &Pyramid,
    opts: &RateOptions,
) -> Result<RateReport, RateError> {
    if d.dim() != p.dim() {
        return Err(RateError::DimensionMismatch {
            distribution: d.dim(),
            cone: p.dim(),
        });
    }
    let hypotheses = validate_hypotheses(d, p);
    let blocking: Vec<&'static str> = hypotheses
        .failures()
        .into_iter()
        .filter(|&h| h != "A3" || opts.require_reach_from_origin)
        .collect();
    if !blocking.is_empty() {
        return Err(RateError::HypothesisViolation(blocking));
    }
    let drift = d.drift();
    let drift_class = classify_drift(&drift, p);
    let dual = p.dual();
    let extremal = extremal_directions(&dual)?;
    // Same cone, without redundant generators.
    let minimal_dual = dual.restrict(&extremal.indices);

    let mut records: Vec<DirectionRecord> = p
        .normals()
        .iter()
        .enumerate()
        .map(|(index, u)| DirectionRecord {
            index,
            u: u.clone(),
            extremal: extremal.contains(index),
            in_s_prime: false,
            root: None,
            t_u: None,
            tilted_drift_along_u: None,
            minimum: None,
        })
        .collect();

    if drift_class != DriftClass::Interior {
        let minimum = minimize_over_dual(d, &vec![0.0; p.dim()], &minimal_dual, opts)?;
        check_kkt(&minimum, opts)?;
        let rho = minimum.value;
        return Ok(RateReport {
            drift,
            drift_class,
            branch: Branch::DualConeMinimum,
            records,
            rho,
            argmax: None,
            maximizers: Vec::new(),
            rho_extremal: None,
            rho_below_one: drift_class == DriftClass::Exterior,
            dual_minimum: Some(minimum),
            hypotheses,
        });
    }

    for record in records.iter_mut() {
        let Some(root) = solve_su(d, &record.u)? else {
            continue;
        };
        let t_u = scale(&record.u, root.s);
        let tilted = dot(&d.grad_laplace(&t_u), &record.u);
        if !(tilted < -1e-12) {
            return Err(RateError::Inconsistent {
                what: "tilted drift does not leave the half-space",
                discrepancy: tilted,
            });
        }
        let minimum = minimize_over_dual(d, &t_u, &minimal_dual, opts)?;
        check_kkt(&minimum, opts)?;
        record.in_s_prime = true;
        record.root = Some(root);
        record.t_u = Some(t_u);
        record.tilted_drift_along_u = Some(tilted);
        record.minimum = Some(minimum);
    }

    let values: Vec<(usize, f64)> = records
        .iter()
        .filter_map(|r| r.rho_u().map(|v| (r.index, v)))
        .collect();
    if values.is_empty() {
        return Err(RateError::EmptyDirectionSet);
    }
    let rho = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let maximizers: Vec<usize> = values
        .iter()
        .filter(|v| v.1 >= rho - TIE_TOL)
        .map(|v| v.0)
        .collect();
    let rho_extremal = records
        .iter()
        .filter(|r| r.extremal)
        .filter_map(DirectionRecord::rho_u)
        .fold(f64::NEG_INFINITY, f64::max);
    if !((rho - rho_extremal).abs() <= EXTREMAL_AGREEMENT_TOL) {
        return Err(RateError::Inconsistent {
            what: "maximum over extremal normals differs from maximum over all normals",
            discrepancy: (rho - rho_extremal).abs(),
        });
    }

    Ok(RateReport {
        drift,
        drift_class,
        branch: Branch::MaxOverDirections,
        records,
        rho,
        argmax: maximizers.first().copied(),
        maximizers,
        rho_extremal: Some(rho_extremal),
        dual_minimum: None,
        rho_below_one: rho < 1.0,
        hypotheses,
    })
}

/// The certificate cannot be tighter than the solver's own stopping rule.
fn check_kkt(m: &DualMinimum, opts: &RateOptions) -> Result<(), RateError> {
    if m.kkt.holds(KKT_TOL.max(10.0 * opts.tolerance)) {
        Ok(())
    } else {
        Err(RateError::Inconsistent {
            what: "KKT certificate",
            discrepancy: m
                .kkt
                .max_complementarity
                .max(-m.kkt.min_directional_derivative),
        })
    }
}
