//! Polyhedral cones.
//!
//! A [`Pyramid`] is the intersection of closed half-spaces
//! `D_u = {y : <y, u> >= 0}` over a finite set of unit inner normals. Its dual
//! cone is the conic hull of those normals, represented as a
//! [`GeneratedCone`]. Everything here reduces to non-negative least squares
//! over generator coefficients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{combine, dot, is_finite, norm, scale, sub};
use crate::optim::{minimize_nonnegative, Objective, SolverOptions};
use nalgebra::DMatrix;

/// Rays closer than this (after normalization) are merged.
pub const DUPLICATE_TOL: f64 = 1e-10;
/// Stationarity target for the NNLS workhorse, relative to `max(1, |x|)`.
pub const NNLS_TOL: f64 = 1e-12;
/// Residual under which a conic-membership test succeeds in
/// [`extremal_directions`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Interior certificate threshold.
pub const INTERIOR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("a cone needs at least one normal or generator")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector #{index} is zero or not finite")]
    Degenerate { index: usize },
    #[error("the half-space intersection has empty interior")]
    Infeasible,
    #[error("the generated cone is not salient (its dual has empty interior)")]
    NotSalient,
}

/// Normalizes every ray to unit length and merges near-duplicates, keeping
/// the first occurrence.
pub fn normalize_rays(rays: &[Vec<f64>]) -> Result<(usize, Vec<Vec<f64>>), GeometryError> {
    let dim = rays.first().ok_or(GeometryError::Empty)?.len();
    if dim == 0 {
        return Err(GeometryError::Degenerate { index: 0 });
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(rays.len());
    for (index, r) in rays.iter().enumerate() {
        if r.len() != dim {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        let n = norm(r);
        if !is_finite(r) || !(n > 0.0) {
            return Err(GeometryError::Degenerate { index });
        }
        let u = scale(r, 1.0 / n);
        if out
            .iter()
            .all(|v| crate::linalg::distance(v, &u) > DUPLICATE_TOL)
        {
            out.push(u);
        }
    }
    Ok((dim, out))
}

/// A closed polyhedral cone `K = ∩_{u ∈ S} D_u` with non-empty interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pyramid {
    dim: usize,
    normals: Vec<Vec<f64>>,
    interior: Vec<f64>,
}

impl Pyramid {
    /// Builds a pyramid from inner normals. Normals are unit-normalized and
    /// de-duplicated; the result must have non-empty interior.
    pub fn new(normals: &[Vec<f64>]) -> Result<Self, GeometryError> {
        let (dim, normals) = normalize_rays(normals)?;
        let interior = interior_point(&normals)?;
        Ok(Pyramid {
            dim,
            normals,
            interior,
        })
    }

    /// The closed orthant `R^d_+`.
    pub fn orthant(dim: usize) -> Self {
        let normals: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Pyramid::new(&normals).expect("orthant is a valid pyramid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    /// A point `y` with `<y, u> >= 1` for every normal.
    pub fn interior_point(&self) -> &[f64] {
        &self.interior
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.normals.iter().all(|u| dot(x, u) >= -tol)
    }

    pub fn contains_interior(&self, x: &[f64], tol: f64) -> bool {
        self.normals.iter().all(|u| dot(x, u) > tol)
    }

    pub fn dual(&self) -> GeneratedCone {
        dual_cone(self)
    }

    /// Euclidean projection onto `K`, through Moreau's decomposition
    /// `x = P_K(x) + P_{-K*}(x)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let polar_part = project_onto_cone(&self.dual(), &scale(x, -1.0));
        crate::linalg::add(x, &polar_part)
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        crate::linalg::norm(&project_onto_cone(&self.dual(), &scale(x, -1.0)))
    }
}

/// The conic hull of a finite set of unit rays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCone {
    dim: usize,
    generators: Vec<Vec<f64>>,
}

impl GeneratedCone {
    pub fn new(generators: &[Vec<f64>]) -> Result<Self, GeometryError> {
        let (dim, generators) = normalize_rays(generators)?;
        Ok(GeneratedCone { dim, generators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// The point `Σ λ_i g_i`.
    pub fn point(&self, coefficients: &[f64]) -> Vec<f64> {
        combine(&self.generators, coefficients, self.dim)
    }

    /// The sub-cone spanned by the listed generators.
    pub fn restrict(&self, indices: &[usize]) -> GeneratedCone {
        GeneratedCone {
            dim: self.dim,
            generators: indices
                .iter()
                .map(|&i| self.generators[i].clone())
                .collect(),
        }
    }

    /// Gram matrix `G^T G`.
    pub(crate) fn gram(&self) -> DMatrix<f64> {
        let n = self.generators.len();
        DMatrix::from_fn(n, n, |i, j| dot(&self.generators[i], &self.generators[j]))
    }
}

/// Indices into a [`GeneratedCone`]'s generators forming its extremal rays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremalSet {
    pub indices: Vec<usize>,
}

impl ExtremalSet {
    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }
}

/// `K* = cone(S)` for `K = ∩ D_u`.
pub fn dual_cone(p: &Pyramid) -> GeneratedCone {
    GeneratedCone {
        dim: p.dim,
        generators: p.normals.clone(),
    }
}

/// Result of a non-negative least-squares fit of `x` by cone generators.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub coefficients: Vec<f64>,
    /// `min_{λ >= 0} |Σ λ_i g_i - x|`.
    pub residual: f64,
}

struct LeastSquares<'a> {
    cone: &'a GeneratedCone,
    target: &'a [f64],
    gram: DMatrix<f64>,
}

impl Objective for LeastSquares<'_> {
    fn value(&self, lambda: &[f64]) -> f64 {
        let r = sub(&self.cone.point(lambda), self.target);
        0.5 * dot(&r, &r)
    }

    fn gradient(&self, lambda: &[f64]) -> Vec<f64> {
        let r = sub(&self.cone.point(lambda), self.target);
        self.cone.generators.iter().map(|g| dot(g, &r)).collect()
    }

    fn hessian(&self, _lambda: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.gram.clone())
    }
}

/// Non-negative least squares: `argmin_{λ >= 0} |Σ λ_i g_i - x|`.
pub fn nnls(c: &GeneratedCone, x: &[f64]) -> Vec<f64> {
    let objective = LeastSquares {
        cone: c,
        target: x,
        gram: c.gram(),
    };
    let opts = SolverOptions {
        tolerance: NNLS_TOL * norm(x).max(1.0),
        ..SolverOptions::default()
    };
    minimize_nonnegative(&objective, &vec![0.0; c.len()], &opts).x
}

pub fn conic_membership(c: &GeneratedCone, x: &[f64], tol: f64) -> Membership {
    let coefficients = nnls(c, x);
    let residual = crate::linalg::distance(&c.point(&coefficients), x);
    Membership {
        member: residual <= tol,
        coefficients,
        residual,
    }
}

/// Extremal rays of `c`. Generators are examined in ascending index order;
/// one is dropped when it lies in the cone spanned by the generators still
/// retained.
pub fn extremal_directions(c: &GeneratedCone) -> Result<ExtremalSet, GeometryError> {
    interior_point(&c.generators).map_err(|_| GeometryError::NotSalient)?;
    let mut kept: Vec<usize> = (0..c.len()).collect();
    for i in 0..c.len() {
        let others: Vec<usize> = kept.iter().copied().filter(|&j| j != i).collect();
        if others.is_empty() {
            continue;
        }
        if conic_membership(&c.restrict(&others), &c.generators[i], MEMBERSHIP_TOL).member {
            kept = others;
        }
    }
    Ok(ExtremalSet { indices: kept })
}

/// A point `y` with `<y, u> >= 1` for every `u` in `normals`, or
/// [`GeometryError::Infeasible`] when `∩ D_u` has empty interior.
///
/// Subgradient ascent on `y -> min_u <y, u>` over balls of doubling radius
/// finds a point in the easy cases. When it does not, the min-norm point of
/// the convex hull of the normals decides: by Gordan's alternative the
/// interior is empty exactly when that hull contains the origin.
pub fn interior_point(normals: &[Vec<f64>]) -> Result<Vec<f64>, GeometryError> {
    let dim = normals.first().ok_or(GeometryError::Empty)?.len();
    let worst = |y: &[f64]| {
        normals
            .iter()
            .enumerate()
            .map(|(i, u)| (i, dot(y, u)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    };

    let mean = combine(normals, &vec![1.0; normals.len()], dim);
    let start = if norm(&mean) > 1e-12 {
        scale(&mean, 1.0 / norm(&mean))
    } else {
        normals[0].clone()
    };

    let mut radius = 1.0;
    while radius <= 1024.0 {
        let mut y = scale(&start, radius);
        let mut best = (y.clone(), worst(&y).1);
        for k in 0..2000 {
            let (idx, val) = worst(&y);
            if val > best.1 {
                best = (y.clone(), val);
            }
            if best.1 > INTERIOR_TOL {
                break;
            }
            let step = radius / ((k + 1) as f64).sqrt();
            y = crate::linalg::add(&y, &scale(&normals[idx], step));
            let n = norm(&y);
            if n > radius {
                y = scale(&y, radius / n);
            }
        }
        if best.1 > INTERIOR_TOL {
            return Ok(scale(&best.0, 1.0 / best.1));
        }
        radius *= 2.0;
    }

    // Min-norm point of conv(S) via NNLS on the lifted rays (u, 1) against
    // the target (0, ..., 0, 1).
    let lifted: Vec<Vec<f64>> = normals
        .iter()
        .map(|u| {
            let mut v = u.clone();
            v.push(1.0);
            v
        })
        .collect();
    let cone = GeneratedCone {
        dim: dim + 1,
        generators: lifted,
    };
    let mut target = vec![0.0; dim];
    target.push(1.0);
    let membership = conic_membership(&cone, &target, INTERIOR_TOL);
    if membership.member {
        return Err(GeometryError::Infeasible);
    }
    let y = combine(normals, &membership.coefficients, dim);
    let (_, val) = worst(&y);
    if val > INTERIOR_TOL * norm(&y).max(1.0) {
        Ok(scale(&y, 1.0 / val))
    } else {
        Err(GeometryError::Infeasible)
    }
}

/// Euclidean projection of `x` onto `c`.
pub fn project_onto_cone(c: &GeneratedCone, x: &[f64]) -> Vec<f64> {
    c.point(&nnls(c, x))
}

pub fn distance_to_cone(c: &GeneratedCone, x: &[f64]) -> f64 {
    crate::linalg::distance(x, &project_onto_cone(c, x))
}
