//! Monte Carlo survival curves for models outside the reach of the lattice
//! DP (Gaussian steps, large step bounds).
//!
//! Chain `i` draws from the ChaCha8 stream number `i` under a key derived
//! from the seed, so results do not depend on how chains are split across
//! threads. Per-batch exit-time histograms are integer counts, summed in
//! batch order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Distribution;
use crate::geometry::Pyramid;
use crate::linalg::dot;
use crate::oracle_dp::{CurveMethod, SurvivalCurve};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;
/// Slack on `⟨S_n, u⟩ ≥ 0` absorbing round-off in non-integer normals.
pub const BOUNDARY_TOL: f64 = 1e-9;
const BATCH: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("need at least one chain")]
    NoChains,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("dimension mismatch: distribution {distribution}, cone {cone}, start {start}")]
    DimensionMismatch {
        distribution: usize,
        cone: usize,
        start: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub chains: u64,
    pub horizon: usize,
    pub seed: u64,
    pub start: Vec<f64>,
}

impl McConfig {
    fn check(&self, d: &Distribution, dim: usize) -> Result<(), McError> {
        if self.chains == 0 {
            return Err(McError::NoChains);
        }
        if self.horizon == 0 {
            return Err(McError::ZeroHorizon);
        }
        if d.dim() != dim || self.start.len() != dim {
            return Err(McError::DimensionMismatch {
                distribution: d.dim(),
                cone: dim,
                start: self.start.len(),
            });
        }
        Ok(())
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The bounds are exactly 0 and 1 at the extremes; avoid round-off there.
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Counts per batch, reduced in batch order.
fn run_chains<F>(chains: u64, slots: usize, seed: u64, chain: F) -> Vec<u64>
where
    F: Fn(&mut ChaCha8Rng) -> usize + Sync,
{
    let batches: Vec<u64> = (0..chains.div_ceil(BATCH)).collect();
    batches
        .par_iter()
        .map(|&b| {
            let mut counts = vec![0u64; slots];
            for i in b * BATCH..((b + 1) * BATCH).min(chains) {
                counts[chain(&mut chain_rng(seed, i))] += 1;
            }
            counts
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0u64; slots], |mut acc, c| {
            acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
            acc
        })
}

/// An estimated survival curve with per-point Wilson 95% intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCurve {
    pub curve: SurvivalCurve,
    pub intervals: Vec<(f64, f64)>,
    /// Chains alive after `n` steps.
    pub survivors: Vec<u64>,
    pub chains: u64,
}

impl McCurve {
    pub fn to_csv(&self) -> String {
        self.curve.to_csv(Some(&self.intervals))
    }
}

/// Simulates `cfg.chains` walks until exit or the horizon.
pub fn survival_mc(d: &Distribution, p: &Pyramid, cfg: &McConfig) -> Result<McCurve, McError> {
    cfg.check(d, p.dim())?;
    let n_max = cfg.horizon;
    // Slot n < n_max + 1 holds chains exiting at step n; the last slot holds
    // chains still inside at the horizon.
    let counts = run_chains(cfg.chains, n_max + 2, cfg.seed, |rng| {
        let mut x = cfg.start.clone();
        if !p.contains(&x, BOUNDARY_TOL) {
            return 0;
        }
        for n in 1..=n_max {
            for (xi, si) in x.iter_mut().zip(d.sample(rng)) {
                *xi += si;
            }
            if !p.contains(&x, BOUNDARY_TOL) {
                return n;
            }
        }
        n_max + 1
    });

    let mut survivors = Vec::with_capacity(n_max + 1);
    let mut alive = cfg.chains;
    for exits in counts.iter().take(n_max + 1) {
        alive -= exits;
        survivors.push(alive);
    }
    let total = cfg.chains as f64;
    let values = survivors.iter().map(|&s| s as f64 / total).collect();
    let mut exits: Vec<f64> = counts[..=n_max].iter().map(|&c| c as f64 / total).collect();
    exits[0] = 0.0;
    let intervals = survivors
        .iter()
        .map(|&s| wilson_interval(s, cfg.chains, Z_95))
        .collect();
    Ok(McCurve {
        curve: SurvivalCurve {
            method: CurveMethod::Mc,
            start: cfg.start.clone(),
            values,
            exits: Some(exits),
        },
        intervals,
        survivors,
        chains: cfg.chains,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceEstimate {
    /// Fraction of chains with `⟨S_n, u⟩ < 0` for some `n ≤ horizon`.
    pub probability: f64,
    pub interval: (f64, f64),
    pub horizon: usize,
}

/// Estimates `P^x(σ_u < ∞)` by exit before the horizon.
///
/// Chains still inside at the horizon may leave later, so this is biased
/// low for `P(σ_u < ∞)`, equivalently biased high for survival. When the
/// drift points out of `D_u` the bias decays exponentially in the horizon.
pub fn halfspace_exit_prob(
    d: &Distribution,
    u: &[f64],
    cfg: &McConfig,
) -> Result<HalfspaceEstimate, McError> {
    cfg.check(d, u.len())?;
    let start_level = dot(&cfg.start, u);
    let counts = run_chains(cfg.chains, 2, cfg.seed, |rng| {
        let mut level = start_level;
        if level < -BOUNDARY_TOL {
            return 1;
        }
        for _ in 0..cfg.horizon {
            level += dot(&d.sample(rng), u);
            if level < -BOUNDARY_TOL {
                return 1;
            }
        }
        0
    });
    Ok(HalfspaceEstimate {
        probability: counts[1] as f64 / cfg.chains as f64,
        interval: wilson_interval(counts[1], cfg.chains, Z_95),
        horizon: cfg.horizon,
    })
}
