//! Isotonic probability calibration by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

/// Monotone map from raw scores to probabilities. Between breakpoints the
/// map is linear, outside them it is flat. No breakpoints means identity
/// (clamped to `[0, 1]`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IsotonicCalibrator {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicCalibrator {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn transform(&self, s: f64) -> f64 {
        let (b, v) = (&self.breakpoints, &self.values);
        if b.is_empty() {
            return s.clamp(0.0, 1.0);
        }
        if s <= b[0] {
            return v[0];
        }
        if s >= b[b.len() - 1] {
            return v[v.len() - 1];
        }
        let hi = b.partition_point(|&x| x <= s);
        let lo = hi - 1;
        let t = (s - b[lo]) / (b[hi] - b[lo]);
        v[lo] + t * (v[hi] - v[lo])
    }
}

pub fn isotonic_fit(scores: &[f64], labels: &[bool]) -> IsotonicCalibrator {
    isotonic_fit_weighted(scores, labels, None)
}

/// Weighted least-squares monotone regression of labels on scores. Fewer
/// than two usable pairs give the identity calibrator.
pub fn isotonic_fit_weighted(scores: &[f64], labels: &[bool], weights: Option<&[f64]>) -> IsotonicCalibrator {
    let mut pts: Vec<(f64, f64, f64)> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (&s, &y))| (s, if y { 1.0 } else { 0.0 }, weights.map_or(1.0, |w| w[i])))
        .filter(|&(s, _, w)| s.is_finite() && w > 0.0)
        .collect();
    if pts.len() < 2 {
        return IsotonicCalibrator::identity();
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Merge tied scores into one weighted point.
    let mut xs: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for (s, y, w) in pts {
        if xs.last() == Some(&s) {
            let last = sums.last_mut().unwrap();
            last.0 += w * y;
            last.1 += w;
        } else {
            xs.push(s);
            sums.push((w * y, w));
        }
    }

    // Blocks of (weighted label sum, weight, number of unique points).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(sums.len());
    for (sy, w) in sums {
        blocks.push((sy, w, 1));
        while blocks.len() >= 2 {
            let n = blocks.len();
            let (a, b) = (blocks[n - 2], blocks[n - 1]);
            if a.0 / a.1 > b.0 / b.1 {
                blocks[n - 2] = (a.0 + b.0, a.1 + b.1, a.2 + b.2);
                blocks.pop();
            } else {
                break;
            }
        }
    }

    let mut fitted = Vec::with_capacity(xs.len());
    for (sy, w, len) in blocks {
        fitted.extend(std::iter::repeat_n((sy / w).clamp(0.0, 1.0), len));
    }

    // Keep only the ends of each flat run.
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    for i in 0..xs.len() {
        let interior = i > 0 && i + 1 < xs.len() && fitted[i - 1] == fitted[i] && fitted[i + 1] == fitted[i];
        if !interior {
            breakpoints.push(xs[i]);
            values.push(fitted[i]);
        }
    }
    IsotonicCalibrator { breakpoints, values }
}
