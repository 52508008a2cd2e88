//! Built-in models: the twelve uniform small-step quadrant walks with drift
//! in the open quadrant, with their published closed forms, and two planar
//! models used as regression cases.

use std::f64::consts::{LN_2, SQRT_2};

use crate::distributions::{AtomicDistribution, Distribution};
use crate::geometry::Pyramid;
use crate::model::{ConeSection, DistributionSection, ModelFile};

/// A published value with its closed-form expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Published {
    pub value: f64,
    pub formula: &'static str,
}

/// One quadrant model with its published `s_(1,0), ρ_(1,0), s_(0,1),
/// ρ_(0,1), ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantModel {
    /// 1-based row number.
    pub row: usize,
    pub steps: Vec<[i64; 2]>,
    pub s10: Published,
    pub rho10: Published,
    pub s01: Published,
    pub rho01: Published,
    pub rho: Published,
}

impl QuadrantModel {
    pub fn distribution(&self) -> Distribution {
        uniform(&self.steps)
    }

    pub fn pyramid(&self) -> Pyramid {
        Pyramid::orthant(2)
    }

    pub fn model_file(&self) -> ModelFile {
        quadrant_file(format!("quadrant model {}", self.row), &self.steps)
    }

    /// Published values in column order.
    pub fn columns(&self) -> [Published; 5] {
        [self.s10, self.rho10, self.s01, self.rho01, self.rho]
    }
}

/// Column headers matching [`QuadrantModel::columns`].
pub const COLUMNS: [&str; 5] = ["s_(1,0)", "rho_(1,0)", "s_(0,1)", "rho_(0,1)", "rho"];

fn uniform(steps: &[[i64; 2]]) -> Distribution {
    AtomicDistribution::uniform(
        steps
            .iter()
            .map(|s| vec![s[0] as f64, s[1] as f64])
            .collect(),
    )
    .expect("distinct steps")
    .into()
}

fn quadrant_file(name: String, steps: &[[i64; 2]]) -> ModelFile {
    ModelFile {
        name: Some(name),
        dim: 2,
        start: None,
        cone: ConeSection {
            normals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        distribution: DistributionSection::Atomic {
            atoms: steps
                .iter()
                .map(|s| vec![s[0] as f64, s[1] as f64])
                .collect(),
            probabilities: None,
        },
    }
}

macro_rules! published {
    ($value:expr, $formula:literal) => {
        Published {
            value: $value,
            formula: $formula,
        }
    };
}

pub fn table1() -> Vec<QuadrantModel> {
    let sqrt3 = 3f64.sqrt();
    let sqrt6 = 6f64.sqrt();
    let log2 = published!(-LN_2, "-log 2");
    let log3 = published!(-(3f64.ln()), "-log 3");
    let log23 = published!((2.0f64 / 3.0).ln(), "log(2/3)");
    let a = published!(2.0 * SQRT_2 / 3.0, "2sqrt(2)/3");
    let a8 = published!(8f64.sqrt() / 3.0, "sqrt(8)/3");
    let b = published!((1.0 + 2.0 * SQRT_2) / 4.0, "(1+2sqrt(2))/4");
    let c = published!((1.0 + 2.0 * sqrt3) / 5.0, "(1+2sqrt(3))/5");
    let d = published!(sqrt3 / 2.0, "sqrt(3)/2");
    let e = published!((2.0 + 2.0 * SQRT_2) / 5.0, "(2+2sqrt(2))/5");
    let f = published!(2.0 * sqrt6 / 5.0, "2sqrt(6)/5");
    let g = published!((1.0 + 2.0 * sqrt6) / 6.0, "(1+2sqrt(6))/6");
    let h = published!((1.0 + sqrt3) / 3.0, "(1+sqrt(3))/3");
    let k = published!((2.0 + 2.0 * sqrt6) / 7.0, "(2+2sqrt(6))/7");

    let row = |row, steps: &[[i64; 2]], cols: [Published; 5]| QuadrantModel {
        row,
        steps: steps.to_vec(),
        s10: cols[0],
        rho10: cols[1],
        s01: cols[2],
        rho01: cols[3],
        rho: cols[4],
    };
    vec![
        row(1, &[[-1, 1], [1, -1], [1, 1]], [log2, a, log2, a8, a8]),
        row(
            2,
            &[[-1, 1], [1, -1], [1, 0], [0, 1]],
            [log2, b, log2, b, b],
        ),
        row(
            3,
            &[[-1, 1], [1, -1], [1, 0], [0, 1], [1, 1]],
            [log3, c, log3, c, c],
        ),
        row(
            4,
            &[[-1, 1], [1, -1], [0, 1], [1, 1]],
            [log2, b, log3, d, b],
        ),
        row(
            5,
            &[[1, 0], [0, 1], [-1, -1], [1, 1]],
            [log2, a8, log2, a8, a8],
        ),
        row(
            6,
            &[[1, 1], [1, -1], [-1, 0], [0, 1]],
            [log2, b, log2, b, b],
        ),
        row(
            7,
            &[[1, 1], [-1, 1], [0, 1], [1, 0], [0, -1]],
            [log2, e, log3, c, e],
        ),
        row(
            8,
            &[[1, 1], [-1, 1], [0, 1], [1, -1], [0, -1]],
            [log2, e, log23, f, f],
        ),
        row(
            9,
            &[[1, 1], [-1, 0], [0, 1], [1, 0], [0, -1]],
            [log2, e, log2, e, e],
        ),
        row(
            10,
            &[[1, 1], [-1, 1], [1, -1], [1, 0], [0, 1], [-1, 0]],
            [log23, g, log3, h, g],
        ),
        row(
            11,
            &[[1, 1], [-1, 1], [1, -1], [1, 0], [0, 1], [-1, -1]],
            [log23, g, log23, g, g],
        ),
        row(
            12,
            &[[1, 1], [-1, 1], [1, -1], [1, 0], [0, 1], [-1, 0], [0, -1]],
            [log23, k, log23, k, k],
        ),
    ]
}

/// A half-plane-supported quadrant walk with no root in direction `(1,0)`:
/// uniform on `(1,0), (0,-1), (1,1), (0,1)`.
pub fn half_plane_example() -> (Pyramid, Distribution) {
    (
        Pyramid::orthant(2),
        uniform(&[[1, 0], [0, -1], [1, 1], [0, 1]]),
    )
}

/// The quadrant walk with `L(x, y) = e^{-x}/6 + e^{-y}/2 + e^{x+2y}/3`,
/// drift `(1/6, 1/6)`, whose rate is not set by the nearer boundary.
pub fn drift_location_example() -> (Pyramid, Distribution) {
    let law = AtomicDistribution::new(
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 2.0]],
        vec![1.0 / 6.0, 0.5, 1.0 / 3.0],
    )
    .expect("valid weights");
    (Pyramid::orthant(2), law.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_distinct_interior_drift_models() {
        let rows = table1();
        assert_eq!(rows.len(), 12);
        for r in &rows {
            let m = r.distribution().drift();
            assert!(m[0] > 0.0 && m[1] > 0.0, "row {}", r.row);
            assert!(r.steps.iter().all(|s| s[0].abs() <= 1 && s[1].abs() <= 1));
        }
    }

    #[test]
    fn rho_column_is_the_larger_direction_rate() {
        for r in table1() {
            let m = r.rho10.value.max(r.rho01.value);
            assert!((r.rho.value - m).abs() < 1e-15, "row {}", r.row);
        }
    }

    #[test]
    fn model_files_build() {
        for r in table1() {
            let spec = r.model_file().build().unwrap();
            assert_eq!(spec.distribution, r.distribution());
        }
    }
}
