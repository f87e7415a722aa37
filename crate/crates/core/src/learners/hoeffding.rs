//! Very fast decision tree for binary streams.
//!
//! Leaves keep per-class weights and, for every feature, a weighted
//! Gaussian estimator per class. Candidate thresholds are spread evenly over
//! the observed range and scored by information gain computed from the
//! Gaussian class-conditional CDFs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Classifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingParams {
    /// Observations a leaf must see between split attempts. `usize::MAX`
    /// disables splitting.
    pub grace_period: usize,
    pub delta: f64,
    pub tau: f64,
    pub n_split_candidates: usize,
    pub max_depth: usize,
}

impl Default for HoeffdingParams {
    fn default() -> Self {
        Self { grace_period: 200, delta: 1e-7, tau: 0.05, n_split_candidates: 10, max_depth: 20 }
    }
}

/// Random-search space for [`HoeffdingParams`]. `delta` is sampled on a log
/// scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingSpace {
    pub grace_period: (usize, usize),
    pub delta: (f64, f64),
    pub tau: (f64, f64),
}

impl Default for HoeffdingSpace {
    fn default() -> Self {
        Self { grace_period: (50, 400), delta: (1e-9, 1e-5), tau: (0.01, 0.1) }
    }
}

impl HoeffdingSpace {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HoeffdingParams {
        let ld = rng.random_range(self.delta.0.ln()..=self.delta.1.ln());
        HoeffdingParams {
            grace_period: rng.random_range(self.grace_period.0..=self.grace_period.1),
            delta: ld.exp(),
            tau: rng.random_range(self.tau.0..=self.tau.1),
            ..Default::default()
        }
    }
}

/// Weighted running mean and variance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Gaussian {
    weight: f64,
    mean: f64,
    m2: f64,
}

impl Gaussian {
    fn update(&mut self, x: f64, w: f64) {
        self.weight += w;
        let delta = x - self.mean;
        self.mean += delta * w / self.weight;
        self.m2 += w * delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.weight > 0.0 {
            (self.m2 / self.weight).max(0.0).sqrt()
        } else {
            0.0
        }
    }

    /// Estimated weight at or below `t`.
    fn weight_below(&self, t: f64) -> f64 {
        if self.weight <= 0.0 {
            return 0.0;
        }
        let sd = self.std();
        let frac = if sd <= 0.0 {
            if self.mean <= t {
                1.0
            } else {
                0.0
            }
        } else {
            0.5 * (1.0 + libm::erf((t - self.mean) / (sd * std::f64::consts::SQRT_2)))
        };
        self.weight * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureObserver {
    class: [Gaussian; 2],
    min: f64,
    max: f64,
}

impl FeatureObserver {
    fn new() -> Self {
        Self { class: Default::default(), min: f64::INFINITY, max: f64::NEG_INFINITY }
    }

    fn update(&mut self, x: f64, y: bool, w: f64) {
        self.class[y as usize].update(x, w);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LeafStats {
    class_weight: [f64; 2],
    seen: u64,
    seen_at_last_attempt: u64,
    observers: Vec<FeatureObserver>,
}

impl LeafStats {
    fn new(class_weight: [f64; 2]) -> Self {
        Self { class_weight, seen: 0, seen_at_last_attempt: 0, observers: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum HNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(LeafStats),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingTree {
    pub params: HoeffdingParams,
    nodes: Vec<HNode>,
    depth: Vec<usize>,
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: [f64; 2],
    right: [f64; 2],
}

fn entropy(c: [f64; 2]) -> f64 {
    let t = c[0] + c[1];
    if t <= 0.0 {
        return 0.0;
    }
    c.iter().filter(|&&v| v > 0.0).map(|&v| -(v / t) * (v / t).log2()).sum()
}

fn info_gain(parent: [f64; 2], left: [f64; 2], right: [f64; 2]) -> f64 {
    let t = parent[0] + parent[1];
    let (tl, tr) = (left[0] + left[1], right[0] + right[1]);
    if t <= 0.0 {
        return 0.0;
    }
    entropy(parent) - (tl / t) * entropy(left) - (tr / t) * entropy(right)
}

/// Hoeffding bound for a quantity with range `r` after `n` observations.
pub fn hoeffding_bound(r: f64, delta: f64, n: f64) -> f64 {
    (r * r * (1.0 / delta).ln() / (2.0 * n)).sqrt()
}

impl HoeffdingTree {
    pub fn new(params: HoeffdingParams) -> Self {
        Self { params, nodes: vec![HNode::Leaf(LeafStats::new([0.0, 0.0]))], depth: vec![0] }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, HNode::Leaf(_))).count()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let HNode::Split { feature, threshold, left, right } = &self.nodes[i] {
            i = if x[*feature] <= *threshold { *left } else { *right };
        }
        i
    }

    pub fn learn_one(&mut self, x: &[f64], y: bool, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        let i = self.leaf_index(x);
        let HNode::Leaf(leaf) = &mut self.nodes[i] else { unreachable!() };
        leaf.class_weight[y as usize] += weight;
        leaf.seen += 1;
        if leaf.observers.is_empty() {
            leaf.observers = (0..x.len()).map(|_| FeatureObserver::new()).collect();
        }
        for (o, &v) in leaf.observers.iter_mut().zip(x) {
            o.update(v, y, weight);
        }
        let grace = self.params.grace_period as u64;
        if self.params.grace_period == usize::MAX || leaf.seen - leaf.seen_at_last_attempt < grace {
            return;
        }
        leaf.seen_at_last_attempt = leaf.seen;
        if self.depth[i] < self.params.max_depth {
            self.attempt_split(i);
        }
    }

    fn attempt_split(&mut self, i: usize) {
        let HNode::Leaf(leaf) = &self.nodes[i] else { return };
        let parent = leaf.class_weight;
        if parent[0] <= 0.0 || parent[1] <= 0.0 {
            return;
        }
        // Best candidate per feature; the null split (gain 0) competes too.
        let mut per_feature: Vec<SplitCandidate> = Vec::new();
        for (f, o) in leaf.observers.iter().enumerate() {
            if o.max <= o.min {
                continue;
            }
            let k = self.params.n_split_candidates.max(1);
            let mut best: Option<SplitCandidate> = None;
            for j in 1..=k {
                let t = o.min + (o.max - o.min) * j as f64 / (k + 1) as f64;
                let mut left = [0.0; 2];
                for c in 0..2 {
                    left[c] = o.class[c].weight_below(t).min(parent[c]);
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                let gain = info_gain(parent, left, right);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate { gain, feature: f, threshold: t, left, right });
                }
            }
            per_feature.extend(best);
        }
        per_feature.sort_by(|a, b| b.gain.total_cmp(&a.gain));
        let Some(best) = per_feature.first() else { return };
        let second = per_feature.get(1).map_or(0.0, |c| c.gain);
        let eps = hoeffding_bound(1.0, self.params.delta, leaf.seen as f64);
        if best.gain <= 0.0 || !(best.gain - second > eps || eps < self.params.tau) {
            return;
        }
        let (feature, threshold) = (best.feature, best.threshold);
        let (lw, rw) = (best.left, best.right);
        let d = self.depth[i] + 1;
        let left = self.nodes.len();
        self.nodes.push(HNode::Leaf(LeafStats::new(lw)));
        self.nodes.push(HNode::Leaf(LeafStats::new(rw)));
        self.depth.extend([d, d]);
        self.nodes[i] = HNode::Split { feature, threshold, left, right: left + 1 };
    }
}

impl Classifier for HoeffdingTree {
    /// Class-1 share of the reached leaf's weight, 0.5 on an empty leaf.
    fn predict_proba(&self, x: &[f64]) -> f64 {
        let HNode::Leaf(leaf) = &self.nodes[self.leaf_index(x)] else { unreachable!() };
        let t = leaf.class_weight[0] + leaf.class_weight[1];
        if t > 0.0 {
            leaf.class_weight[1] / t
        } else {
            0.5
        }
    }
}
