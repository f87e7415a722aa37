use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::GroupId;

/// Per-(group, label) instance weights, indexed `[group][label]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    pub w: [[f64; 2]; 2],
}

impl WeightTable {
    pub fn uniform() -> Self {
        Self { w: [[1.0; 2]; 2] }
    }

    pub fn get(&self, g: GroupId, y: bool) -> f64 {
        self.w[g.index()][y as usize]
    }

    pub fn weights_for(&self, groups: &[GroupId], labels: &[bool]) -> Vec<f64> {
        groups.iter().zip(labels).map(|(&g, &y)| self.get(g, y)).collect()
    }
}

/// w(g, y) = P(y) P(g) / P(g, y) from empirical frequencies. Every cell must
/// be populated.
pub fn kamiran_calders_weights(groups: &[GroupId], labels: &[bool]) -> Result<WeightTable> {
    let mut c = [[0usize; 2]; 2];
    for (&g, &y) in groups.iter().zip(labels) {
        c[g.index()][y as usize] += 1;
    }
    if c.iter().flatten().any(|&v| v == 0) {
        return Err(Error::DegenerateCell { a0: c[0][0], a1: c[0][1], b0: c[1][0], b1: c[1][1] });
    }
    let n = groups.len() as f64;
    let pg = [(c[0][0] + c[0][1]) as f64 / n, (c[1][0] + c[1][1]) as f64 / n];
    let py = [(c[0][0] + c[1][0]) as f64 / n, (c[0][1] + c[1][1]) as f64 / n];
    let mut w = [[0.0; 2]; 2];
    for g in 0..2 {
        for y in 0..2 {
            w[g][y] = py[y] * pg[g] / (c[g][y] as f64 / n);
        }
    }
    Ok(WeightTable { w })
}

/// Label-independent group weights.
pub fn manual_weights(a: f64, b: f64) -> Result<WeightTable> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::Invalid(format!("manual weights must be positive, got A={a} B={b}")));
    }
    Ok(WeightTable { w: [[a, a], [b, b]] })
}
