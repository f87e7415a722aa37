//! Sliding-window calibration buffer for the online pipeline.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::isotonic::{isotonic_fit, IsotonicCalibrator};

/// Keeps the most recent `interval` (raw score, label) pairs and the
/// calibrator fitted on them. Until the window first fills, the calibrator
/// is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBuffer {
    pub interval: usize,
    /// Pairs pushed between refits once the window is full.
    pub refit_every: usize,
    scores: VecDeque<f64>,
    labels: VecDeque<bool>,
    since_refit: usize,
    fitted_once: bool,
    pub calibrator: IsotonicCalibrator,
}

impl CalibrationBuffer {
    pub const DEFAULT_INTERVAL: usize = 500;

    pub fn new(interval: usize, refit_every: usize) -> Self {
        let interval = interval.max(2);
        Self {
            interval,
            refit_every: refit_every.max(1),
            scores: VecDeque::with_capacity(interval + 1),
            labels: VecDeque::with_capacity(interval + 1),
            since_refit: 0,
            fitted_once: false,
            calibrator: IsotonicCalibrator::identity(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.scores.iter().copied().collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.labels.iter().copied().collect()
    }

    pub fn calibrate(&self, raw: f64) -> f64 {
        self.calibrator.transform(raw)
    }

    /// Adds a pair and refits when the cadence says so. Returns whether a
    /// refit happened.
    pub fn push(&mut self, score: f64, label: bool) -> bool {
        self.scores.push_back(score);
        self.labels.push_back(label);
        while self.scores.len() > self.interval {
            self.scores.pop_front();
            self.labels.pop_front();
        }
        self.since_refit += 1;
        if self.len() < self.interval || (self.fitted_once && self.since_refit < self.refit_every) {
            return false;
        }
        online_calibration_cycle(self, self.interval);
        true
    }
}

/// Refits the calibrator on the buffer once it holds at least `interval`
/// pairs; below that the calibrator is left alone.
pub fn online_calibration_cycle(buffer: &mut CalibrationBuffer, interval: usize) -> &IsotonicCalibrator {
    if buffer.len() >= interval.max(2) {
        let skip = buffer.len() - interval.max(2);
        let s: Vec<f64> = buffer.scores.iter().skip(skip).copied().collect();
        let y: Vec<bool> = buffer.labels.iter().skip(skip).copied().collect();
        buffer.calibrator = isotonic_fit(&s, &y);
        buffer.since_refit = 0;
        buffer.fitted_once = true;
    }
    &buffer.calibrator
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::mean_log_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn below_interval_keeps_identity() {
        let mut b = CalibrationBuffer::new(10, 5);
        for i in 0..9 {
            assert!(!b.push(i as f64 / 10.0, i % 2 == 0));
        }
        assert!(b.calibrator.is_identity());
        let before = b.calibrator.clone();
        assert_eq!(online_calibration_cycle(&mut b, 10), &before);
    }

    #[test]
    fn full_window_fits_on_its_contents_and_slides() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = CalibrationBuffer::new(50, 10);
        let mut refits = 0;
        for _ in 0..200 {
            let s: f64 = rng.random();
            let refit = b.push(s, rng.random::<f64>() < s * s);
            assert!(b.len() <= 50);
            if refit {
                refits += 1;
                assert_eq!(b.calibrator, isotonic_fit(&b.scores(), &b.labels()));
                let cal: Vec<f64> = b.scores().iter().map(|&v| b.calibrate(v)).collect();
                assert!(mean_log_loss(&cal, &b.labels(), None) <= mean_log_loss(&b.scores(), &b.labels(), None) + 1e-12);
            }
        }
        // First fill at 50, then every 10 pushes.
        assert_eq!(refits, 1 + 15);
    }
}
