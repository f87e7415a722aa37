use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batch z-score scaler. Zero-variance features keep a unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let first = x.first().ok_or_else(|| Error::Invalid("cannot fit a scaler on an empty batch".into()))?;
        let d = first.len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| unit_if_zero((s / n).sqrt())).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }

    pub fn fit_transform(x: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Self)> {
        let s = Self::fit(x)?;
        Ok((s.transform(x), s))
    }
}

fn unit_if_zero(std: f64) -> f64 {
    if std > 0.0 && std.is_finite() {
        std
    } else {
        1.0
    }
}

/// One-pass running scaler (Welford's update).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamingScaler {
    pub count: u64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StreamingScaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn learn_one(&mut self, x: &[f64]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.mean.len()];
        }
        self.m2.iter().map(|s| s / self.count as f64).collect()
    }

    pub fn transform_one(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return x.to_vec();
        }
        x.iter()
            .zip(&self.mean)
            .zip(self.variance())
            .map(|((v, m), var)| (v - m) / unit_if_zero(var.sqrt()))
            .collect()
    }

    /// Learns `x` then standardizes it with the updated statistics.
    pub fn update(&mut self, x: &[f64]) -> Vec<f64> {
        self.learn_one(x);
        self.transform_one(x)
    }
}
