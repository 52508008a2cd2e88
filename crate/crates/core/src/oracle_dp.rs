//! Exact survival probabilities for lattice walks by forward dynamic
//! programming, and rate extraction from survival curves.
//!
//! The sub-probability mass of walks still inside the closed cone evolves by
//!
//! ```text
//! q_0 = δ_x,    q_{n+1}(y) = [y ∈ K] Σ_a p_a q_n(y - a)
//! ```
//!
//! and `P^x(τ > n)` is the total mass of `q_n`. Because the limit
//! `P^x(τ = ∞)` is unknown, rates are read off the exit masses
//! `δ_n = P(τ > n-1) - P(τ > n)`, which decay like `ρ^n` up to a
//! subexponential factor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Distribution;
use crate::geometry::Pyramid;
use crate::linalg::CompensatedSum;

/// Largest supported horizon.
pub const MAX_HORIZON: usize = 2000;
/// Largest state box, in cells.
pub const MAX_CELLS: usize = 100_000_000;
/// Exit masses below this are treated as zero.
pub const UNDERFLOW: f64 = 1e-300;
const INTEGER_TOL: f64 = 1e-9;
const MAX_DENOMINATOR: i64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dp requires a lattice model: {0}")]
    NotLattice(String),
    #[error("start point {0:?} is not an integer point of the cone")]
    StartOutsideCone(Vec<f64>),
    #[error("state box of {cells} cells exceeds the capacity of {MAX_CELLS}")]
    CapacityExceeded { cells: u128 },
    #[error("horizon {0} exceeds the maximum of {MAX_HORIZON}")]
    HorizonTooLarge(usize),
    #[error("degenerate survival curve: {0}")]
    Degenerate(String),
}

/// An integer-step walk in a cone with integer normals.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    dim: usize,
    steps: Vec<Vec<i64>>,
    probs: Vec<f64>,
    normals: Vec<Vec<i64>>,
    bound: i64,
}

fn integer_vector(v: &[f64]) -> Option<Vec<i64>> {
    v.iter()
        .map(|x| {
            let r = x.round();
            ((x - r).abs() <= INTEGER_TOL).then_some(r as i64)
        })
        .collect()
}

/// The smallest integer vector on the ray of `u`, searched over
/// denominators up to [`MAX_DENOMINATOR`].
fn integer_ray(u: &[f64]) -> Option<Vec<i64>> {
    let top = u.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let v: Vec<f64> = u.iter().map(|x| x / top).collect();
    (1..=MAX_DENOMINATOR).find_map(|q| {
        let scaled: Vec<f64> = v.iter().map(|x| x * q as f64).collect();
        integer_vector(&scaled)
    })
}

impl LatticeModel {
    pub fn new(d: &Distribution, p: &Pyramid) -> Result<Self, OracleError> {
        let a = d
            .as_atomic()
            .ok_or_else(|| OracleError::NotLattice("distribution is not atomic".into()))?;
        let steps = a
            .points()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                integer_vector(x)
                    .ok_or_else(|| OracleError::NotLattice(format!("atom #{i} is not integer")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let normals = p
            .normals()
            .iter()
            .enumerate()
            .map(|(i, u)| {
                integer_ray(u)
                    .ok_or_else(|| OracleError::NotLattice(format!("normal #{i} is not rational")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bound = steps
            .iter()
            .flat_map(|s| s.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0);
        Ok(LatticeModel {
            dim: a.dim(),
            steps,
            probs: a.probs().to_vec(),
            normals,
            bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest step coordinate in absolute value.
    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn steps(&self) -> impl Iterator<Item = (&[i64], f64)> {
        self.steps
            .iter()
            .map(Vec::as_slice)
            .zip(self.probs.iter().copied())
    }

    /// Integer inner normals, one per cone normal.
    pub fn normals(&self) -> &[Vec<i64>] {
        &self.normals
    }

    pub fn contains(&self, y: &[i64]) -> bool {
        self.normals
            .iter()
            .all(|u| u.iter().zip(y).map(|(a, b)| a * b).sum::<i64>() >= 0)
    }
}

/// Forward DP over a dense box of lattice cells.
///
/// The box spans `x ± (N + 1) B` in every coordinate; after `n` steps all
/// mass lies within `x ± n B`, which bounds the cells visited per step.
/// Cone membership is tabulated once for the whole box.
pub struct DpWalker<'a> {
    model: &'a LatticeModel,
    origin: Vec<i64>,
    start: Vec<i64>,
    strides: Vec<usize>,
    inside: Vec<bool>,
    /// `(flat offset, probability)` per step.
    offsets: Vec<(isize, f64)>,
    current: Vec<f64>,
    next: Vec<f64>,
    step: usize,
    horizon: usize,
}

impl<'a> DpWalker<'a> {
    pub fn new(model: &'a LatticeModel, x: &[i64], horizon: usize) -> Result<Self, OracleError> {
        if horizon > MAX_HORIZON {
            return Err(OracleError::HorizonTooLarge(horizon));
        }
        if x.len() != model.dim || !model.contains(x) {
            return Err(OracleError::StartOutsideCone(
                x.iter().map(|&v| v as f64).collect(),
            ));
        }
        let reach = (horizon as i64 + 1) * model.bound.max(1);
        let width = (2 * reach + 1) as usize;
        let cells = (width as u128).pow(model.dim as u32);
        if cells > MAX_CELLS as u128 {
            return Err(OracleError::CapacityExceeded { cells });
        }
        let cells = cells as usize;
        let mut strides = vec![1usize; model.dim];
        for i in (0..model.dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * width;
        }
        let offsets = model
            .steps()
            .map(|(a, p)| {
                let off: isize = a
                    .iter()
                    .zip(&strides)
                    .map(|(ai, s)| *ai as isize * *s as isize)
                    .sum();
                (off, p)
            })
            .collect();
        let mut walker = DpWalker {
            model,
            origin: x.iter().map(|v| v - reach).collect(),
            start: x.to_vec(),
            strides,
            inside: vec![false; cells],
            offsets,
            current: vec![0.0; cells],
            next: vec![0.0; cells],
            step: 0,
            horizon,
        };
        let mut inside = std::mem::take(&mut walker.inside);
        walker.for_box(reach, |y, idx| inside[idx] = model.contains(y));
        walker.inside = inside;
        let idx = walker.index(x);
        walker.current[idx] = 1.0;
        Ok(walker)
    }

    fn index(&self, y: &[i64]) -> usize {
        y.iter()
            .zip(&self.origin)
            .zip(&self.strides)
            .map(|((v, o), s)| (v - o) as usize * s)
            .sum()
    }

    /// Steps taken so far.
    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Visits every lattice point in the box `start ± radius`, in
    /// lexicographic order.
    fn for_box(&self, radius: i64, mut f: impl FnMut(&[i64], usize)) {
        let lo: Vec<i64> = self.start.iter().map(|v| v - radius).collect();
        let mut y = lo.clone();
        loop {
            let idx = self.index(&y);
            f(&y, idx);
            if !self.bump(&mut y, &lo, radius, self.model.dim) {
                return;
            }
        }
    }

    /// Calls `f` on each contiguous run of flat indices covering the box
    /// `start ± radius`: one run per value of the leading coordinates.
    fn for_rows(&self, radius: i64, mut f: impl FnMut(std::ops::Range<usize>)) {
        let d = self.model.dim;
        let lo: Vec<i64> = self.start.iter().map(|v| v - radius).collect();
        let len = (2 * radius + 1) as usize;
        let mut y = lo.clone();
        loop {
            let first = self.index(&y);
            f(first..first + len);
            if !self.bump(&mut y, &lo, radius, d - 1) {
                return;
            }
        }
    }

    /// Advances the odometer over the first `k` coordinates.
    fn bump(&self, y: &mut [i64], lo: &[i64], radius: i64, k: usize) -> bool {
        let mut i = k;
        while i > 0 {
            i -= 1;
            if y[i] < self.start[i] + radius {
                y[i] += 1;
                return true;
            }
            y[i] = lo[i];
        }
        false
    }

    fn radius(&self, step: usize) -> i64 {
        step as i64 * self.model.bound.max(1)
    }

    /// Current surviving mass `P(τ > n)`.
    pub fn mass(&self) -> f64 {
        let mut sum = CompensatedSum::default();
        self.for_rows(self.radius(self.step), |run| {
            for &q in &self.current[run] {
                sum.add(q);
            }
        });
        sum.value()
    }

    /// Mass that leaves the cone on the next step.
    pub fn exit_mass(&self) -> f64 {
        let mut sum = CompensatedSum::default();
        self.for_rows(self.radius(self.step), |run| {
            for idx in run {
                let q = self.current[idx];
                if q == 0.0 {
                    continue;
                }
                let out: f64 = self
                    .offsets
                    .iter()
                    .filter(|(off, _)| !self.inside[(idx as isize + off) as usize])
                    .map(|(_, p)| p)
                    .sum();
                if out > 0.0 {
                    sum.add(q * out);
                }
            }
        });
        sum.value()
    }

    /// Advances one step.
    pub fn advance(&mut self) {
        assert!(self.step < self.horizon, "walker horizon exhausted");
        let radius = self.radius(self.step + 1);
        let mut next = std::mem::take(&mut self.next);
        // Every cell of the larger box is rewritten, which clears the layer
        // left over from two steps ago.
        self.for_rows(radius, |run| {
            for idx in run {
                next[idx] = if self.inside[idx] {
                    self.offsets
                        .iter()
                        .map(|&(off, p)| self.current[(idx as isize - off) as usize] * p)
                        .sum()
                } else {
                    0.0
                };
            }
        });
        self.next = std::mem::replace(&mut self.current, next);
        self.step += 1;
    }

    /// Calls `f(point, mass)` for every cell carrying mass.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[i64], f64)) {
        self.for_box(self.radius(self.step), |y, idx| {
            let q = self.current[idx];
            if q != 0.0 {
                f(y, q);
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMethod {
    Dp,
    Mc,
}

/// `P^x(τ > n)` for `n = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub method: CurveMethod,
    pub start: Vec<f64>,
    pub values: Vec<f64>,
    /// `P(τ = n)` for `n = 0..=N` when known directly (entry 0 is 0).
    pub exits: Option<Vec<f64>>,
}

impl SurvivalCurve {
    pub fn horizon(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// `δ_n = P(τ > n-1) - P(τ > n)`, with `δ_0 = 0`.
    pub fn deltas(&self) -> Vec<f64> {
        if let Some(e) = &self.exits {
            return e.clone();
        }
        let mut out = vec![0.0; self.values.len()];
        for (d, w) in out[1..].iter_mut().zip(self.values.windows(2)) {
            *d = (w[0] - w[1]).max(0.0);
        }
        out
    }

    /// Ratios `δ_{n+1} / δ_n`, undefined where `δ_n` vanishes.
    pub fn ratios(&self) -> Vec<Option<f64>> {
        let d = self.deltas();
        (0..d.len())
            .map(|n| (n + 1 < d.len() && d[n] > UNDERFLOW && n > 0).then(|| d[n + 1] / d[n]))
            .collect()
    }

    /// CSV with columns `n,survival,delta,ratio`, plus `ci_low,ci_high` when
    /// intervals are given.
    pub fn to_csv(&self, intervals: Option<&[(f64, f64)]>) -> String {
        let deltas = self.deltas();
        let ratios = self.ratios();
        let mut out = String::from("n,survival,delta,ratio");
        if intervals.is_some() {
            out.push_str(",ci_low,ci_high");
        }
        out.push('\n');
        for n in 0..self.values.len() {
            let ratio = ratios[n].map(|r| format!("{r:.17e}")).unwrap_or_default();
            out.push_str(&format!(
                "{n},{:.17e},{:.17e},{ratio}",
                self.values[n], deltas[n]
            ));
            if let Some(ci) = intervals {
                out.push_str(&format!(",{:.17e},{:.17e}", ci[n].0, ci[n].1));
            }
            out.push('\n');
        }
        out
    }
}

/// Exact survival curve up to horizon `n_max` from the integer start `x`.
pub fn survival_dp(
    model: &LatticeModel,
    x: &[i64],
    n_max: usize,
) -> Result<SurvivalCurve, OracleError> {
    let mut walker = DpWalker::new(model, x, n_max)?;
    let mut values = Vec::with_capacity(n_max + 1);
    let mut exits = Vec::with_capacity(n_max + 1);
    values.push(1.0);
    exits.push(0.0);
    for _ in 0..n_max {
        let exited = walker.exit_mass();
        walker.advance();
        let prev = *values.last().expect("non-empty");
        // Summation round-off must not move the curve when nothing exits.
        let v = if exited == 0.0 {
            prev
        } else {
            walker.mass().min(prev).clamp(0.0, 1.0)
        };
        values.push(v);
        exits.push(exited);
    }
    Ok(SurvivalCurve {
        method: CurveMethod::Dp,
        start: x.iter().map(|&v| v as f64).collect(),
        values,
        exits: Some(exits),
    })
}

/// Rate read off a survival curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Two-point extrapolation removing a `1/n` drift of `log r_n`.
    pub rho_hat: f64,
    /// The last per-step ratio in the window.
    pub rho_raw: f64,
    /// Exits only occur on a sublattice of times with this period.
    pub period: usize,
    /// `(n, r_n)` for the last ten ratios in the window.
    pub last_ratios: Vec<(usize, f64)>,
    /// Whether those ratios are monotone.
    pub ratios_monotone: bool,
    pub window: (usize, usize),
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Extracts `ρ` from the exit masses on `window = (n1, n2)`.
///
/// Per-step ratios are `r_n = (δ_{n+p} / δ_n)^{1/p}` where `p` is the period
/// of the exit times (1 for aperiodic walks). Assuming
/// `log r_n ≈ log ρ - c / n`, the two ratios at `n_a ≈ n2 / 2` and
/// `n_b ≈ n2` combine into `(n_b log r_b - n_a log r_a) / (n_b - n_a)`,
/// which is `2 log r_{2k} - log r_k` when `n_b = 2 n_a = 2k`.
pub fn extract_rate(
    curve: &SurvivalCurve,
    window: (usize, usize),
) -> Result<RateEstimate, OracleError> {
    let (n1, n2) = window;
    let deltas = curve.deltas();
    if n1 == 0 || n1 >= n2 || n2 >= deltas.len() {
        return Err(OracleError::Degenerate(format!(
            "window {window:?} does not fit a curve of horizon {}",
            curve.horizon()
        )));
    }
    let support: Vec<usize> = (n1..=n2).filter(|&n| deltas[n] > UNDERFLOW).collect();
    if support.len() < 4 {
        return Err(OracleError::Degenerate(
            "curve is flat on the window (trapped walk or underflow)".into(),
        ));
    }
    let period = support.windows(2).fold(0, |g, w| gcd(g, w[1] - w[0]));
    let phase = support[0] % period;
    if (n1..=n2).any(|n| n % period == phase && deltas[n] <= UNDERFLOW) {
        return Err(OracleError::Degenerate(
            "exit masses vanish inside the window".into(),
        ));
    }

    let ratio = |n: usize| (deltas[n + period] / deltas[n]).powf(1.0 / period as f64);
    let ratio_points: Vec<usize> = support
        .iter()
        .copied()
        .filter(|&n| n + period <= n2)
        .collect();
    if ratio_points.len() < 2 {
        return Err(OracleError::Degenerate(
            "window too short for ratios".into(),
        ));
    }
    let n_b = *ratio_points.last().expect("non-empty");
    let n_a = *ratio_points
        .iter()
        .min_by_key(|&&n| (2 * n).abs_diff(n_b))
        .expect("non-empty");
    let (r_a, r_b) = (ratio(n_a), ratio(n_b));
    let rho_hat = if n_a < n_b {
        ((n_b as f64 * r_b.ln() - n_a as f64 * r_a.ln()) / (n_b - n_a) as f64).exp()
    } else {
        r_b
    };

    let last_ratios: Vec<(usize, f64)> = ratio_points
        .iter()
        .rev()
        .take(10)
        .rev()
        .map(|&n| (n, ratio(n)))
        .collect();
    let increasing = last_ratios.windows(2).all(|w| w[1].1 >= w[0].1);
    let decreasing = last_ratios.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(RateEstimate {
        rho_hat,
        rho_raw: r_b,
        period,
        last_ratios,
        ratios_monotone: increasing || decreasing,
        window,
    })
}

/// Bounds on `P^x(τ = ∞)` from a finite curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    /// `P(τ > N)`, an upper bound.
    pub upper: f64,
    /// `P(τ > N)` minus a geometric tail fitted to the last exit masses.
    pub corrected: f64,
}

pub fn survival_limit_estimate(curve: &SurvivalCurve) -> Result<LimitEstimate, OracleError> {
    let upper = *curve
        .values
        .last()
        .ok_or_else(|| OracleError::Degenerate("empty curve".into()))?;
    let n = curve.horizon();
    let corrected = if n >= 8 {
        match extract_rate(curve, (n / 2, n)) {
            Ok(est) => {
                let deltas = curve.deltas();
                let last = (0..=n)
                    .rev()
                    .find(|&k| deltas[k] > UNDERFLOW)
                    .expect("extract_rate saw exits");
                let q = est.rho_raw.powi(est.period as i32);
                let tail = if q < 1.0 {
                    deltas[last] * q / (1.0 - q)
                } else {
                    0.0
                };
                (upper - tail).max(0.0)
            }
            Err(_) => upper,
        }
    } else {
        upper
    };
    Ok(LimitEstimate { upper, corrected })
}

/// `P^ℓ(σ < ∞)` for the walk projected on an integer normal `u`, started at
/// levels `0..=max_level`, approximated by exit before `horizon`.
pub fn halfspace_exit_probabilities(
    model: &LatticeModel,
    u: &[i64],
    max_level: usize,
    horizon: usize,
) -> Vec<f64> {
    let mut jumps: Vec<(i64, f64)> = Vec::new();
    for (a, p) in model.steps() {
        let c: i64 = a.iter().zip(u).map(|(x, y)| x * y).sum();
        match jumps.iter_mut().find(|j| j.0 == c) {
            Some(j) => j.1 += p,
            None => jumps.push((c, p)),
        }
    }
    let up = jumps.iter().map(|j| j.0.max(0)).max().unwrap_or(0) as usize;
    // survive[ℓ] = P^ℓ(σ > k) after k sweeps; levels beyond the reachable
    // range never matter.
    let top = max_level + horizon * up + 1;
    let mut survive = vec![1.0; top + 1];
    let mut next = vec![0.0; top + 1];
    for k in 0..horizon {
        let limit = max_level + (horizon - k - 1) * up;
        for (l, slot) in next.iter_mut().enumerate().take(limit.min(top) + 1) {
            let mut acc = 0.0;
            for &(c, p) in &jumps {
                let target = l as i64 + c;
                if target >= 0 {
                    acc += p * survive[(target as usize).min(top)];
                }
            }
            *slot = acc;
        }
        std::mem::swap(&mut survive, &mut next);
    }
    survive[..=max_level].iter().map(|s| 1.0 - s).collect()
}

/// One point of the two-sided bound
/// `max_u H_u(n) <= Δ_n <= Σ_u H_u(n)`, `H_u(n) = P(n < τ, σ_u < ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichPoint {
    pub n: usize,
    /// `P(τ > n) - P̂(τ = ∞)`.
    pub delta_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Evaluates the half-space sandwich at `n = 0..=n_max`.
///
/// `H_u(n) = Σ_y q_n(y) P^y(σ_u < ∞)` by the Markov property at time `n`,
/// and `P̂(τ = ∞)` comes from a curve of horizon `limit_horizon`.
pub fn sandwich_bounds(
    model: &LatticeModel,
    x: &[i64],
    n_max: usize,
    limit_horizon: usize,
) -> Result<Vec<SandwichPoint>, OracleError> {
    let limit = survival_limit_estimate(&survival_dp(model, x, limit_horizon)?)?.corrected;
    let active: Vec<&Vec<i64>> = model
        .normals()
        .iter()
        .filter(|u| {
            model
                .steps()
                .any(|(a, _)| a.iter().zip(u.iter()).map(|(p, q)| p * q).sum::<i64>() < 0)
        })
        .collect();
    let level_of = |u: &[i64], y: &[i64]| -> usize {
        u.iter().zip(y).map(|(a, b)| a * b).sum::<i64>() as usize
    };
    let max_level = active
        .iter()
        .map(|u| {
            let start = level_of(u, x);
            let per_step = model
                .steps()
                .map(|(a, _)| {
                    a.iter()
                        .zip(u.iter())
                        .map(|(p, q)| p * q)
                        .sum::<i64>()
                        .max(0)
                })
                .max()
                .unwrap_or(0) as usize;
            start + n_max * per_step
        })
        .max()
        .unwrap_or(0);
    let exit_tables: Vec<Vec<f64>> = active
        .iter()
        .map(|u| halfspace_exit_probabilities(model, u, max_level, limit_horizon.max(n_max)))
        .collect();

    let mut walker = DpWalker::new(model, x, n_max)?;
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut h = vec![CompensatedSum::default(); active.len()];
        walker.for_each_cell(|y, q| {
            for (k, u) in active.iter().enumerate() {
                h[k].add(q * exit_tables[k][level_of(u, y)]);
            }
        });
        let hs: Vec<f64> = h.iter().map(CompensatedSum::value).collect();
        out.push(SandwichPoint {
            n,
            delta_hat: walker.mass() - limit,
            lower: hs.iter().copied().fold(0.0, f64::max),
            upper: hs.iter().sum(),
        });
        if n < n_max {
            walker.advance();
        }
    }
    Ok(out)
}
