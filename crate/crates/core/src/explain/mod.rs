//! Exact order-2 Shapley–Taylor attributions and the interaction network
//! built from them.
//!
//! With d features, every coalition value v(S) is computed once (2^d
//! evaluations of an interventional expectation), then
//!
//! * φ_i = v({i}) − v(∅)
//! * φ_ij = (2/d) Σ_{T ⊆ N∖{i,j}} δ_ij v(T) / C(d−1, |T|)
//!
//! where δ_ij v(T) = v(T∪{i,j}) − v(T∪{i}) − v(T∪{j}) + v(T). The indices
//! sum to v(N) − v(∅).

mod graph;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Classifier;

pub use graph::{build_interaction_graph, GraphEdge, GraphNode, InteractionGraph};

pub const MAX_EXACT_FEATURES: usize = 15;
pub const DEFAULT_BACKGROUND_SIZE: usize = 100;

/// Interventional value function: v(S) averages the model over background
/// rows whose features in S are replaced by the instance's.
pub struct ValueFunction<'a, C: ?Sized> {
    pub model: &'a C,
    pub background: &'a [Vec<f64>],
    pub instance: &'a [f64],
}

impl<'a, C: Classifier + Sync + ?Sized> ValueFunction<'a, C> {
    pub fn new(model: &'a C, background: &'a [Vec<f64>], instance: &'a [f64]) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::EmptyBackground);
        }
        Ok(Self { model, background, instance })
    }

    pub fn n_features(&self) -> usize {
        self.instance.len()
    }

    /// v(S) for the coalition encoded as a bit mask.
    pub fn eval(&self, mask: u32) -> f64 {
        let mut row = vec![0.0; self.instance.len()];
        let mut total = 0.0;
        for b in self.background {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if mask & (1 << j) != 0 { self.instance[j] } else { b[j] };
            }
            total += self.model.predict_proba(&row);
        }
        total / self.background.len() as f64
    }

    /// All 2^d coalition values, indexed by mask.
    pub fn all_values(&self) -> Result<Vec<f64>> {
        let d = self.n_features();
        if d > MAX_EXACT_FEATURES {
            return Err(Error::TooManyFeatures { got: d, max: MAX_EXACT_FEATURES });
        }
        Ok((0..1u32 << d).into_par_iter().map(|m| self.eval(m)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAttribution {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyExplanation {
    pub features: Vec<String>,
    pub phi: Vec<f64>,
    /// One entry per unordered pair with i < j, in lexicographic order.
    pub phi_pair: Vec<PairAttribution>,
    pub baseline: f64,
    pub prediction: f64,
}

impl ShapleyExplanation {
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.phi_pair.iter().find(|p| p.i == a && p.j == b).map_or(0.0, |p| p.value)
    }

    /// Σφ_i + Σφ_ij − (v(N) − v(∅)); zero up to rounding.
    pub fn efficiency_residual(&self) -> f64 {
        self.phi.iter().sum::<f64>() + self.phi_pair.iter().map(|p| p.value).sum::<f64>() - (self.prediction - self.baseline)
    }

    /// max |φ_i| / Σ |φ_i|, 0 when every φ_i is 0.
    pub fn hub_concentration(&self) -> f64 {
        let total: f64 = self.phi.iter().map(|v| v.abs()).sum();
        if total > 0.0 {
            self.phi.iter().fold(0.0f64, |m, v| m.max(v.abs())) / total
        } else {
            0.0
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Order-2 Shapley–Taylor indices from precomputed coalition values.
pub fn shapley_taylor_from_values(values: &[f64], d: usize, features: Vec<String>) -> ShapleyExplanation {
    let full = (1u32 << d) - 1;
    let v0 = values[0];
    let phi: Vec<f64> = (0..d).map(|i| values[1 << i] - v0).collect();
    let mut phi_pair = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let (bi, bj) = (1u32 << i, 1u32 << j);
            let rest = full & !bi & !bj;
            let mut acc = 0.0;
            // Enumerate subsets T of `rest`.
            let mut t = rest;
            loop {
                let delta = values[(t | bi | bj) as usize] - values[(t | bi) as usize] - values[(t | bj) as usize] + values[t as usize];
                acc += delta / binomial(d - 1, t.count_ones() as usize);
                if t == 0 {
                    break;
                }
                t = (t - 1) & rest;
            }
            phi_pair.push(PairAttribution { i, j, value: 2.0 / d as f64 * acc });
        }
    }
    ShapleyExplanation { features, phi, phi_pair, baseline: v0, prediction: values[full as usize] }
}

/// Exact explanation of `vf.instance`. `features` names the columns.
pub fn shapley_order2<C: Classifier + Sync + ?Sized>(vf: &ValueFunction<'_, C>, features: Vec<String>) -> Result<ShapleyExplanation> {
    let d = vf.n_features();
    if features.len() != d {
        return Err(Error::Invalid(format!("{} feature names for {d} features", features.len())));
    }
    let values = vf.all_values()?;
    Ok(shapley_taylor_from_values(&values, d, features))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fun<F>(F);
    impl<F: Fn(&[f64]) -> f64> Classifier for Fun<F> {
        fn predict_proba(&self, x: &[f64]) -> f64 {
            (self.0)(x)
        }
    }

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    /// Möbius coefficients of every coalition, then each coefficient of a
    /// coalition S with |S| >= 2 split evenly over its C(|S|, 2) pairs.
    fn mobius_oracle(values: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = 1usize << d;
        let mut m = vec![0.0; n];
        for s in 0..n {
            for t in 0..n {
                if t & !s == 0 {
                    let sign = if (s.count_ones() - (t as u32).count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
                    m[s] += sign * values[t];
                }
            }
        }
        let phi = (0..d).map(|i| m[1 << i]).collect();
        let mut pair = vec![vec![0.0; d]; d];
        for s in 0..n {
            let k = s.count_ones() as usize;
            if k < 2 {
                continue;
            }
            for i in 0..d {
                for j in i + 1..d {
                    if s & (1 << i) != 0 && s & (1 << j) != 0 {
                        pair[i][j] += m[s] / (k * (k - 1) / 2) as f64;
                    }
                }
            }
        }
        (phi, pair)
    }

    fn random_background(rng: &mut ChaCha8Rng, rows: usize, d: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn endpoints_of_the_value_function() {
        let model = Fun(|x: &[f64]| x[0] * 2.0 + x[1]);
        let bg = vec![vec![1.0, 0.0], vec![3.0, 2.0]];
        let inst = [5.0, 7.0];
        let vf = ValueFunction::new(&model, &bg, &inst).unwrap();
        assert_eq!(vf.eval(0b11), 17.0);
        assert_eq!(vf.eval(0), (2.0 + 8.0) / 2.0);
        // Additive closed form: instance on S, background mean elsewhere.
        assert_eq!(vf.eval(0b01), 10.0 + 1.0);
    }

    #[test]
    fn empty_background_and_too_many_features() {
        let model = Fun(|_: &[f64]| 0.0);
        assert!(matches!(ValueFunction::new(&model, &[], &[1.0]), Err(Error::EmptyBackground)));
        let bg = vec![vec![0.0; 16]];
        let inst = vec![0.0; 16];
        let vf = ValueFunction::new(&model, &bg, &inst).unwrap();
        assert!(matches!(shapley_order2(&vf, names(16)), Err(Error::TooManyFeatures { got: 16, .. })));
    }

    #[test]
    fn additive_model_has_no_interactions() {
        let model = Fun(|x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bg = random_background(&mut rng, 30, 5);
        let inst = [0.3, -0.2, 0.9, 0.5, -0.7];
        let e = shapley_order2(&ValueFunction::new(&model, &bg, &inst).unwrap(), names(5)).unwrap();
        for p in &e.phi_pair {
            assert!(p.value.abs() < 1e-12);
        }
        for i in 0..5 {
            let mean: f64 = bg.iter().map(|r| r[i]).sum::<f64>() / 30.0;
            assert!((e.phi[i] - (i + 1) as f64 * (inst[i] - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_model_puts_mass_on_the_pair() {
        let model = Fun(|x: &[f64]| x[0] * x[1]);
        let bg = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        let inst = [2.0, 3.0];
        let vf = ValueFunction::new(&model, &bg, &inst).unwrap();
        let e = shapley_order2(&vf, names(2)).unwrap();
        assert_eq!(e.phi, vec![0.0, 0.0]);
        assert_eq!(e.pair(0, 1), 6.0);
        // Direct definition over the 4 subsets.
        let direct = vf.eval(0b11) - vf.eval(0b01) - vf.eval(0b10) + vf.eval(0);
        assert_eq!(e.pair(1, 0), direct);
    }

    #[test]
    fn symmetric_and_null_features() {
        // x0 and x1 are exchangeable, x2 is never read.
        let model = Fun(|x: &[f64]| 1.0 / (1.0 + (-(x[0] + x[1] + x[0] * x[1] + x[3])).exp()));
        let bg = vec![vec![0.1, 0.1, 5.0, -0.3], vec![-0.4, -0.4, 2.0, 0.2], vec![0.7, 0.7, -1.0, 0.0]];
        let inst = [0.5, 0.5, 9.0, 1.0];
        let e = shapley_order2(&ValueFunction::new(&model, &bg, &inst).unwrap(), names(4)).unwrap();
        assert!((e.phi[0] - e.phi[1]).abs() < 1e-15);
        assert!((e.pair(0, 3) - e.pair(1, 3)).abs() < 1e-15);
        assert_eq!(e.phi[2], 0.0);
        for k in [0, 1, 3] {
            assert_eq!(e.pair(2, k), 0.0);
        }
    }

    #[test]
    fn hub_concentration_bounds() {
        let e = ShapleyExplanation { features: names(3), phi: vec![0.5, -0.25, 0.25], phi_pair: vec![], baseline: 0.0, prediction: 0.5 };
        assert_eq!(e.hub_concentration(), 0.5);
        let z = ShapleyExplanation { phi: vec![0.0; 3], ..e };
        assert_eq!(z.hub_concentration(), 0.0);
    }

    proptest! {
        #[test]
        fn matches_mobius_oracle_and_is_efficient(
            d in 1usize..=4,
            coefs in proptest::collection::vec(-2.0f64..2.0, 16),
            seed in 0u64..1000,
        ) {
            // A random multilinear-plus-squash model.
            let model = Fun(move |x: &[f64]| {
                let mut z = 0.0;
                for (k, c) in coefs.iter().enumerate() {
                    let mut term = *c;
                    for (j, v) in x.iter().enumerate() {
                        if k & (1 << j) != 0 { term *= v; }
                    }
                    z += term;
                }
                1.0 / (1.0 + (-z).exp())
            });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bg = random_background(&mut rng, 7, d);
            let inst: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vf = ValueFunction::new(&model, &bg, &inst).unwrap();
            let e = shapley_order2(&vf, names(d)).unwrap();
            let (phi, pair) = mobius_oracle(&vf.all_values().unwrap(), d);
            for i in 0..d {
                prop_assert!((e.phi[i] - phi[i]).abs() < 1e-12);
                for j in i + 1..d {
                    prop_assert!((e.pair(i, j) - pair[i][j]).abs() < 1e-12);
                }
            }
            prop_assert!(e.efficiency_residual().abs() < 1e-9);
        }
    }
}
