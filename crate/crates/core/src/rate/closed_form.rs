//! Closed-form rates for two families: the weighted five-step quadrant walk
//! and the Gaussian walk in a planar sector.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{AtomicDistribution, Distribution, GaussianDistribution};
use crate::geometry::Pyramid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("walk is trapped in the quadrant (both corner weights vanish)")]
    Trapped,
    #[error("drift is not in the interior of the quadrant")]
    DriftNotInterior,
    #[error("walk is not truly two-dimensional")]
    NotTwoDimensional,
    #[error("parameters outside 0 < beta < alpha <= pi, r > 0")]
    DomainError,
}

/// Weights of the quadrant walk with steps
/// `(-1,1), (0,1), (1,1), (1,0), (1,-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSteps {
    /// `(-1, 1)`
    pub north_west: f64,
    /// `(0, 1)`
    pub north: f64,
    /// `(1, 1)`
    pub north_east: f64,
    /// `(1, 0)`
    pub east: f64,
    /// `(1, -1)`
    pub south_east: f64,
}

impl WeightedSteps {
    pub const STEPS: [[f64; 2]; 5] = [[-1.0, 1.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [1.0, -1.0]];

    pub fn weights(&self) -> [f64; 5] {
        [
            self.north_west,
            self.north,
            self.north_east,
            self.east,
            self.south_east,
        ]
    }

    /// The step law, with zero-weight steps removed.
    pub fn distribution(&self) -> Distribution {
        let points = Self::STEPS.iter().map(|s| s.to_vec()).collect();
        AtomicDistribution::from_weights(points, &self.weights())
            .expect("validated weights")
            .into()
    }
}

/// The rate of the weighted five-step walk in the quadrant, from the
/// one-dimensional minima `b + 2 sqrt(a c)` of `a e^{-x} + b + c e^{x}`.
pub fn closed_form_weighted(w: &WeightedSteps) -> Result<f64, ClosedFormError> {
    let ws = w.weights();
    if ws.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
        || (ws.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(ClosedFormError::InvalidWeights);
    }
    let WeightedSteps {
        north_west: nw,
        north: n,
        north_east: ne,
        east: e,
        south_east: se,
    } = *w;
    if nw == 0.0 && se == 0.0 {
        return Err(ClosedFormError::Trapped);
    }
    if !(nw < ne + e + se && se < nw + n + ne) {
        return Err(ClosedFormError::DriftNotInterior);
    }
    if !(n + ne + e > 0.0) {
        return Err(ClosedFormError::NotTwoDimensional);
    }
    let horizontal = n + 2.0 * (nw * (ne + e + se)).sqrt();
    let vertical = e + 2.0 * (se * (nw + n + ne)).sqrt();
    Ok(match (nw > 0.0, se > 0.0) {
        (true, true) => horizontal.max(vertical),
        (false, _) => vertical,
        (_, false) => horizontal,
    })
}

/// Closed form for `N(m, I)` with `m = r (cos β, sin β)` in the sector
/// `{θ ∈ [0, α]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSector {
    pub rho: f64,
    /// `r min(sin β, sin(α - β))`.
    pub distance: f64,
    /// `t_u + m` for `u = (0, 1)`.
    pub z_u: [f64; 2],
    /// `t_v + m` for `v = (sin α, -cos α)`.
    pub z_v: [f64; 2],
}

fn check_sector(alpha: f64, beta: f64, r: f64) -> Result<(), ClosedFormError> {
    let ok =
        0.0 < beta && beta < alpha && alpha <= std::f64::consts::PI && r > 0.0 && r.is_finite();
    if ok {
        Ok(())
    } else {
        Err(ClosedFormError::DomainError)
    }
}

pub fn closed_form_gaussian(
    alpha: f64,
    beta: f64,
    r: f64,
) -> Result<GaussianSector, ClosedFormError> {
    check_sector(alpha, beta, r)?;
    let distance = r * beta.sin().min((alpha - beta).sin());
    Ok(GaussianSector {
        rho: (-0.5 * distance * distance).exp(),
        distance,
        z_u: [r * beta.cos(), -r * beta.sin()],
        z_v: [
            r * (2.0 * alpha - beta).cos(),
            r * (2.0 * alpha - beta).sin(),
        ],
    })
}

/// The sector cone `D_u ∩ D_v` and the Gaussian step law for the same
/// parameters.
pub fn gaussian_sector_model(
    alpha: f64,
    beta: f64,
    r: f64,
) -> Result<(Pyramid, Distribution), ClosedFormError> {
    check_sector(alpha, beta, r)?;
    let cone = Pyramid::new(&[vec![0.0, 1.0], vec![alpha.sin(), -alpha.cos()]])
        .map_err(|_| ClosedFormError::DomainError)?;
    let law = GaussianDistribution::new(vec![r * beta.cos(), r * beta.sin()])
        .map_err(|_| ClosedFormError::DomainError)?;
    Ok((cone, law.into()))
}
