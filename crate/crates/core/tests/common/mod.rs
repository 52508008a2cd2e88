//! Brute-force oracles and random model generators shared by the
//! integration tests.

#![allow(dead_code)]

use conewalk::distributions::{AtomicDistribution, Distribution};
use conewalk::linalg::CompensatedSum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every length-`k` sequence of atom indices with its probability.
pub fn paths(d: &AtomicDistribution, k: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|(path, p)| {
                d.probs().iter().enumerate().map(move |(i, q)| {
                    let mut next = path.clone();
                    next.push(i);
                    (next, p * q)
                })
            })
            .collect();
    }
    out
}

/// Positions `S_1..S_k` visited along an index path.
pub fn positions(d: &AtomicDistribution, x: &[f64], path: &[usize]) -> Vec<Vec<f64>> {
    let mut s = x.to_vec();
    path.iter()
        .map(|&i| {
            for (a, b) in s.iter_mut().zip(&d.points()[i]) {
                *a += b;
            }
            s.clone()
        })
        .collect()
}

/// `P^x(τ > n)` by summing over all paths, for integer normals.
pub fn survival_by_enumeration(
    d: &AtomicDistribution,
    normals: &[Vec<f64>],
    x: &[f64],
    n: usize,
) -> f64 {
    let inside = |y: &[f64]| {
        normals
            .iter()
            .all(|u| u.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() >= 0.0)
    };
    paths(d, n)
        .into_iter()
        .filter(|(path, _)| positions(d, x, path).iter().all(|y| inside(y)))
        .map(|(_, p)| p)
        .collect::<CompensatedSum>()
        .value()
}

/// Random law on `atoms` distinct integer points of `[-b, b]^dim`.
pub fn random_lattice_law(r: &mut ChaCha8Rng, dim: usize, atoms: usize, b: i64) -> Distribution {
    let mut points: Vec<Vec<f64>> = Vec::new();
    while points.len() < atoms {
        let p: Vec<f64> = (0..dim).map(|_| r.random_range(-b..=b) as f64).collect();
        if !points.contains(&p) {
            points.push(p);
        }
    }
    let w: Vec<f64> = (0..atoms).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    AtomicDistribution::new(points, w.iter().map(|v| v / total).collect())
        .unwrap()
        .into()
}

/// Probabilities on the simplex, uniformly distributed.
pub fn dirichlet(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n)
        .map(|_| -r.random::<f64>().max(1e-300).ln())
        .collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}
