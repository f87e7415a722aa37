//! From-scratch classifiers and the pieces of the offline and online
//! training pipelines.

mod gbt;
mod hoeffding;
mod isotonic;
mod online;
mod scaler;
mod search;
mod tree;

pub use gbt::{gbt_append, gbt_fit, weighted_log_loss, GbtModel, GbtParams, GbtSpace};
pub use hoeffding::{hoeffding_bound, HoeffdingParams, HoeffdingSpace, HoeffdingTree};
pub use isotonic::{isotonic_fit, isotonic_fit_weighted, IsotonicCalibrator};
pub use online::{online_calibration_cycle, CalibrationBuffer};
pub use scaler::{StandardScaler, StreamingScaler};
pub use search::{random_search, validation_split, SearchOutcome, SearchSpec};
pub use tree::RegressionTree;

/// A binary classifier producing P(y = 1 | x).
pub trait Classifier {
    fn predict_proba(&self, x: &[f64]) -> f64;

    fn predict_proba_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        (**self).predict_proba(x)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        (**self).predict_proba(x)
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) const PROB_EPS: f64 = 1e-15;

/// Binary cross-entropy of one prediction, with probabilities clamped to
/// `[1e-15, 1 - 1e-15]`.
pub fn log_loss_one(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean clamped log loss, optionally weighted.
pub fn mean_log_loss(probs: &[f64], labels: &[bool], weights: Option<&[f64]>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (&p, &y)) in probs.iter().zip(labels).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        num += w * log_loss_one(p, y);
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}
