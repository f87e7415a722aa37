//! Gradient-boosted trees on the logistic loss.
//!
//! A fitted model doubles as a booster cache: [`gbt_append`] grows extra
//! rounds on new data on top of the existing ensemble without touching the
//! trees already in it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{GrowParams, RegressionTree};
use super::{log_loss_one, logit, sigmoid, Classifier};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 3, learning_rate: 0.1, min_samples_leaf: 1 }
    }
}

/// Random-search space for [`GbtParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtSpace {
    pub depth: (usize, usize),
    pub learning_rate: (f64, f64),
    pub n_trees: (usize, usize),
}

impl Default for GbtSpace {
    fn default() -> Self {
        Self { depth: (2, 5), learning_rate: (0.05, 0.3), n_trees: (50, 200) }
    }
}

impl GbtSpace {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GbtParams {
        GbtParams {
            n_trees: rng.random_range(self.n_trees.0..=self.n_trees.1),
            max_depth: rng.random_range(self.depth.0..=self.depth.1),
            learning_rate: rng.random_range(self.learning_rate.0..=self.learning_rate.1),
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    /// Initial margin (log-odds of the weighted positive rate).
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
}

/// Smallest rate used for the base score of a single-class fit.
const RATE_EPS: f64 = 1e-12;

impl GbtModel {
    pub fn constant(rate: f64, params: GbtParams) -> Self {
        Self { params, base_score: logit(rate.clamp(RATE_EPS, 1.0 - RATE_EPS)), trees: Vec::new() }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Probability using only the first `k` trees.
    pub fn predict_proba_prefix(&self, x: &[f64], k: usize) -> f64 {
        sigmoid(self.base_score + self.trees.iter().take(k).map(|t| t.predict(x)).sum::<f64>())
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn grow_rounds(&mut self, x: &[Vec<f64>], y: &[bool], w: &[f64], rounds: usize) {
        let grow = GrowParams {
            max_depth: self.params.max_depth,
            min_samples_leaf: self.params.min_samples_leaf,
            learning_rate: self.params.learning_rate,
        };
        let mut margin: Vec<f64> = x.iter().map(|r| self.margin(r)).collect();
        for _ in 0..rounds {
            let tree = RegressionTree::grow(x, y, w, &margin, &grow);
            for (m, r) in margin.iter_mut().zip(x) {
                *m += tree.predict(r);
            }
            self.trees.push(tree);
        }
    }
}

impl Classifier for GbtModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

fn check_inputs(x: &[Vec<f64>], y: &[bool], w: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::Invalid("x, y and weights must have equal length".into()));
    }
    if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Invalid("sample weights must be finite and non-negative".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(total)
}

/// Fits a boosted ensemble with weighted logistic loss. Data holding a
/// single class (by weight) yields a constant model at that class's rate.
pub fn gbt_fit(x: &[Vec<f64>], y: &[bool], w: &[f64], params: &GbtParams) -> Result<GbtModel> {
    let total = check_inputs(x, y, w)?;
    let pos: f64 = y.iter().zip(w).filter(|(&l, _)| l).map(|(_, &wi)| wi).sum();
    let rate = pos / total;
    let mut model = GbtModel::constant(rate, params.clone());
    if pos > 0.0 && pos < total {
        model.grow_rounds(x, y, w, params.n_trees);
    }
    Ok(model)
}

/// Returns `model` extended by `n_new_trees` rounds fitted on the new
/// batch, starting from the current ensemble's margins.
pub fn gbt_append(model: &GbtModel, x: &[Vec<f64>], y: &[bool], w: &[f64], n_new_trees: usize) -> Result<GbtModel> {
    let mut next = model.clone();
    if x.is_empty() || n_new_trees == 0 {
        return Ok(next);
    }
    check_inputs(x, y, w)?;
    next.grow_rounds(x, y, w, n_new_trees);
    Ok(next)
}

/// Weighted mean log loss of `model` on the given data.
pub fn weighted_log_loss<C: Classifier + ?Sized>(model: &C, x: &[Vec<f64>], y: &[bool], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((r, &l), &wi) in x.iter().zip(y).zip(w) {
        num += wi * log_loss_one(model.predict_proba(r), l);
        den += wi;
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn separable(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            x.push(vec![a, b]);
            y.push(a + 0.5 * b > 0.1);
        }
        (x, y)
    }

    fn noisy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, _) = separable(n, seed);
        let y = x.iter().map(|r| rng.random::<f64>() < sigmoid(3.0 * r[0] - 2.0 * r[1] * r[1])).collect();
        let w = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        (x, y, w)
    }

    #[test]
    fn single_class_gives_constant_model() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let m = gbt_fit(&x, &[true, true, true], &[1.0; 3], &GbtParams::default()).unwrap();
        assert!(m.trees.is_empty());
        assert!((m.predict_proba(&[5.0]) - 1.0).abs() < 1e-9);
        let m = gbt_fit(&x, &[false, true, false], &[1.0, 0.0, 1.0], &GbtParams::default()).unwrap();
        assert!(m.trees.is_empty());
        assert!(m.predict_proba(&[1.0]) < 1e-9);
    }

    #[test]
    fn zero_weights_are_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(gbt_fit(&x, &[true, false], &[0.0, 0.0], &GbtParams::default()), Err(Error::ZeroWeights)));
        assert!(gbt_fit(&x, &[true, false], &[-1.0, 2.0], &GbtParams::default()).is_err());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (x, y) = separable(200, 1);
        let m = gbt_fit(&x, &y, &vec![1.0; 200], &GbtParams::default()).unwrap();
        let acc = x.iter().zip(&y).filter(|(r, &l)| (m.predict_proba(r) >= 0.5) == l).count() as f64 / 200.0;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn doubling_weights_changes_nothing() {
        let (x, y, w) = noisy(300, 2);
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let p = GbtParams { n_trees: 30, ..Default::default() };
        let a = gbt_fit(&x, &y, &w, &p).unwrap();
        let b = gbt_fit(&x, &y, &w2, &p).unwrap();
        for r in &x {
            assert_eq!(a.predict_proba(r), b.predict_proba(r));
        }
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y, w) = noisy(400, 3);
        let m = gbt_fit(&x, &y, &w, &GbtParams { n_trees: 60, max_depth: 4, learning_rate: 0.3, min_samples_leaf: 1 })
            .unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=m.n_trees() {
            let loss = x
                .iter()
                .zip(&y)
                .zip(&w)
                .map(|((r, &l), &wi)| wi * log_loss_one(m.predict_proba_prefix(r, k), l))
                .sum::<f64>();
            assert!(loss <= prev + 1e-9 * prev.abs().max(1.0), "round {k}: {loss} > {prev}");
            prev = loss;
        }
    }

    #[test]
    fn append_zero_trees_is_identity_and_prefix_is_untouched() {
        let (x, y, w) = noisy(200, 4);
        let m = gbt_fit(&x, &y, &w, &GbtParams { n_trees: 20, ..Default::default() }).unwrap();
        assert_eq!(gbt_append(&m, &x, &y, &w, 0).unwrap(), m);
        assert_eq!(gbt_append(&m, &[], &[], &[], 5).unwrap(), m);
        let (x2, y2, w2) = noisy(150, 5);
        let m2 = gbt_append(&m, &x2, &y2, &w2, 10).unwrap();
        assert_eq!(m2.n_trees(), 30);
        assert_eq!(&m2.trees[..20], &m.trees[..]);
        for r in &x {
            assert_eq!(m.predict_proba(r), m2.predict_proba_prefix(r, 20));
        }
    }

    #[test]
    fn append_on_training_batch_does_not_raise_loss() {
        let (x, y, w) = noisy(300, 6);
        let m = gbt_fit(&x, &y, &w, &GbtParams { n_trees: 10, ..Default::default() }).unwrap();
        let before = weighted_log_loss(&m, &x, &y, &w);
        let m2 = gbt_append(&m, &x, &y, &w, 15).unwrap();
        assert!(weighted_log_loss(&m2, &x, &y, &w) <= before + 1e-12);
    }

    #[test]
    fn search_space_samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = GbtSpace::default();
        for _ in 0..100 {
            let p = s.sample(&mut rng);
            assert!((2..=5).contains(&p.max_depth));
            assert!((50..=200).contains(&p.n_trees));
            assert!((0.05..=0.3).contains(&p.learning_rate));
        }
    }
}
