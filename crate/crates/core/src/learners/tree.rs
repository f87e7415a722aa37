//! Second-order regression trees used as boosting rounds.

use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

/// Largest absolute leaf margin before shrinkage.
const MAX_LEAF: f64 = 20.0;
const BISECTION_STEPS: usize = 60;

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Grows one boosting round on the logistic loss. Splits maximize the
    /// second-order gain; each leaf value is the exact minimizer of the
    /// weighted loss restricted to the leaf, shrunk by the learning rate.
    pub(crate) fn grow(x: &[Vec<f64>], y: &[bool], w: &[f64], margin: &[f64], params: &GrowParams) -> Self {
        let n = y.len();
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = w[i] * (p - if y[i] { 1.0 } else { 0.0 });
            hess[i] = w[i] * p * (1.0 - p);
        }
        let idx: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let ctx = Ctx { x, y, w, margin, grad: &grad, hess: &hess, params };
        let mut tree = RegressionTree { nodes: Vec::new() };
        ctx.build(&mut tree, idx, 0);
        tree
    }
}

struct Ctx<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    w: &'a [f64],
    margin: &'a [f64],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GrowParams,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Ctx<'_> {
    fn build(&self, tree: &mut RegressionTree, idx: Vec<usize>, depth: usize) -> usize {
        let at = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.params.max_depth { self.best_split(&idx) } else { None };
        match split {
            Some(c) => {
                let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[i][c.feature] <= c.threshold);
                let left = self.build(tree, l, depth + 1);
                let right = self.build(tree, r, depth + 1);
                tree.nodes[at] = Node::Split { feature: c.feature, threshold: c.threshold, left, right };
            }
            None => {
                tree.nodes[at] = Node::Leaf { value: self.params.learning_rate * self.leaf_value(&idx) };
            }
        }
        at
    }

    fn best_split(&self, idx: &[usize]) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        if idx.len() < 2 * min_leaf {
            return None;
        }
        let g_tot: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h_tot: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        if h_tot <= 0.0 {
            return None;
        }
        let parent = g_tot * g_tot / h_tot;
        let d = self.x[idx[0]].len();
        let mut best: Option<Candidate> = None;
        let mut order = idx.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let (v, next) = (self.x[i][f], self.x[order[k + 1]][f]);
                if v == next || k + 1 < min_leaf || order.len() - k - 1 < min_leaf {
                    continue;
                }
                let (gr, hr) = (g_tot - gl, h_tot - hl);
                if hl <= 0.0 || hr <= 0.0 {
                    continue;
                }
                let gain = gl * gl / hl + gr * gr / hr - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate { gain, feature: f, threshold: v + (next - v) / 2.0 });
                }
            }
        }
        best
    }

    /// Minimizer of sum_i w_i * logloss(margin_i + v) over v in
    /// [-MAX_LEAF, MAX_LEAF], by bisection on the (monotone) derivative.
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let deriv = |v: f64| -> f64 {
            idx.iter()
                .map(|&i| self.w[i] * (sigmoid(self.margin[i] + v) - if self.y[i] { 1.0 } else { 0.0 }))
                .sum()
        };
        if idx.is_empty() {
            return 0.0;
        }
        if deriv(-MAX_LEAF) >= 0.0 {
            return -MAX_LEAF;
        }
        if deriv(MAX_LEAF) <= 0.0 {
            return MAX_LEAF;
        }
        let (mut lo, mut hi) = (-MAX_LEAF, MAX_LEAF);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if deriv(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
