//! Interaction network: features are nodes sized by |φ_i|, the strongest
//! pairs are edges sized by |φ_ij|. Negative interactions are redundant
//! and drawn blue; positive ones are synergistic and drawn red.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ShapleyExplanation;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub feature: String,
    pub magnitude: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: String,
    pub b: String,
    pub magnitude: f64,
    pub sign: i8,
    pub redundant: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Keeps every feature as a node and the `top_k` largest non-zero
/// interactions as edges (ties broken by pair order).
pub fn build_interaction_graph(expl: &ShapleyExplanation, top_k: usize) -> InteractionGraph {
    let nodes = expl
        .features
        .iter()
        .zip(&expl.phi)
        .map(|(f, &v)| GraphNode { feature: f.clone(), magnitude: v.abs(), sign: sign(v) })
        .collect();
    let mut pairs: Vec<_> = expl.phi_pair.iter().filter(|p| p.value != 0.0).collect();
    pairs.sort_by(|x, y| y.value.abs().total_cmp(&x.value.abs()).then((x.i, x.j).cmp(&(y.i, y.j))));
    let edges = pairs
        .into_iter()
        .take(top_k)
        .map(|p| GraphEdge {
            a: expl.features[p.i].clone(),
            b: expl.features[p.j].clone(),
            magnitude: p.value.abs(),
            sign: sign(p.value),
            redundant: p.value < 0.0,
        })
        .collect();
    InteractionGraph { nodes, edges }
}

impl InteractionGraph {
    /// max node magnitude / total node magnitude.
    pub fn hub_concentration(&self) -> f64 {
        let total: f64 = self.nodes.iter().map(|n| n.magnitude).sum();
        if total > 0.0 {
            self.nodes.iter().fold(0.0f64, |m, n| m.max(n.magnitude)) / total
        } else {
            0.0
        }
    }

    /// Graphviz document. Node width and edge pen width scale with
    /// magnitude relative to the largest one.
    pub fn to_dot(&self) -> String {
        let node_max = self.nodes.iter().fold(0.0f64, |m, n| m.max(n.magnitude));
        let edge_max = self.edges.iter().fold(0.0f64, |m, e| m.max(e.magnitude));
        let rel = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };
        let mut s = String::from("graph interactions {\n  node [shape=circle, fixedsize=true];\n");
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  \"{}\" [width={:.4}, label=\"{}\\n{:+.4}\"];",
                n.feature,
                0.4 + 1.6 * rel(n.magnitude, node_max),
                n.feature,
                n.sign as f64 * n.magnitude
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -- \"{}\" [penwidth={:.4}, color=\"{}\", label=\"{:+.4}\"];",
                e.a,
                e.b,
                0.5 + 4.5 * rel(e.magnitude, edge_max),
                if e.redundant { "blue" } else { "red" },
                e.sign as f64 * e.magnitude
            );
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_dot(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_dot())?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }
}
