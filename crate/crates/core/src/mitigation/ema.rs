//! Streaming reweigher driven by exponentially weighted frequency estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaReweigher {
    pub lambda: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// EMA of the indicator y = 1.
    pub p_pos: f64,
    /// EMA of the indicator g = A.
    pub p_a: f64,
    /// EMA of the joint indicators, `[group][label]`.
    pub p_joint: [[f64; 2]; 2],
    seen: [[u64; 2]; 2],
    pub count: u64,
}

impl Default for EmaReweigher {
    fn default() -> Self {
        Self::new(0.01, 0.1, 10.0).expect("defaults are valid")
    }
}

impl EmaReweigher {
    pub fn new(lambda: f64, w_min: f64, w_max: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Invalid(format!("EMA decay must be in (0,1), got {lambda}")));
        }
        if !(w_min > 0.0 && w_min <= w_max) {
            return Err(Error::Invalid(format!("need 0 < w_min <= w_max, got {w_min}, {w_max}")));
        }
        Ok(Self { lambda, w_min, w_max, p_pos: 0.5, p_a: 0.5, p_joint: [[0.25; 2]; 2], seen: [[0; 2]; 2], count: 0 })
    }

    fn warm(&self) -> bool {
        self.seen.iter().flatten().all(|&c| c > 0)
    }

    /// Current weight for a (group, label) cell. It stays 1 until every
    /// cell has been observed at least once.
    pub fn weight(&self, g: GroupId, y: bool) -> f64 {
        if !self.warm() {
            return 1.0;
        }
        let py = if y { self.p_pos } else { 1.0 - self.p_pos };
        let pg = if g == GroupId::A { self.p_a } else { 1.0 - self.p_a };
        let pj = self.p_joint[g.index()][y as usize];
        if pj <= 0.0 {
            return self.w_max;
        }
        (py * pg / pj).clamp(self.w_min, self.w_max)
    }

    /// Folds one observation into the estimates and returns its weight.
    pub fn update(&mut self, g: GroupId, y: bool) -> f64 {
        let l = self.lambda;
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        self.p_pos = (1.0 - l) * self.p_pos + l * ind(y);
        self.p_a = (1.0 - l) * self.p_a + l * ind(g == GroupId::A);
        for (gi, row) in self.p_joint.iter_mut().enumerate() {
            for (yi, p) in row.iter_mut().enumerate() {
                *p = (1.0 - l) * *p + l * ind(gi == g.index() && yi == y as usize);
            }
        }
        self.seen[g.index()][y as usize] += 1;
        self.count += 1;
        self.weight(g, y)
    }
}
