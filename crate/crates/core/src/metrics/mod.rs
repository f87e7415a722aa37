//! Performance, group-disaggregated and fairness metrics, plus the
//! composite scores and rank tables used to compare mitigation variants.
//!
//! Binary metrics are computed from per-row decisions in [0, 1]. A
//! thresholded model yields hard 0/1 decisions; a randomized ensemble can
//! instead be scored by its expected decision, which makes every rate an
//! expectation over the ensemble's coin flips.

mod rank;

use serde::{Deserialize, Serialize};

use crate::learners::mean_log_loss;
use crate::sim::GroupId;

pub use rank::{composite_scores, rank_variants, CompositeScore, RankTable};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// How probabilities become decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// 1 when p >= threshold.
    Threshold(f64),
    /// The probability itself is the expected decision.
    Expected,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule::Threshold(DEFAULT_THRESHOLD)
    }
}

impl DecisionRule {
    pub fn decide(self, p: f64) -> f64 {
        match self {
            DecisionRule::Threshold(t) => {
                if p >= t {
                    1.0
                } else {
                    0.0
                }
            }
            DecisionRule::Expected => p.clamp(0.0, 1.0),
        }
    }

    pub fn decisions(self, probs: &[f64]) -> Vec<f64> {
        probs.iter().map(|&p| self.decide(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub n: usize,
    pub accuracy: f64,
    /// 0 when nothing is predicted positive.
    pub precision: f64,
    /// 0 when there are no positive labels.
    pub recall: f64,
    pub log_loss: f64,
    /// Absent when the labels hold a single class.
    pub roc_auc: Option<f64>,
}

/// Counts of a (possibly fractional) confusion matrix.
#[derive(Debug, Clone, Copy, Default)]
struct Confusion {
    tp: f64,
    fp: f64,
    tn: f64,
    fne: f64,
}

impl Confusion {
    fn new(decisions: &[f64], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&d, &y) in decisions.iter().zip(labels) {
            if y {
                c.tp += d;
                c.fne += 1.0 - d;
            } else {
                c.fp += d;
                c.tn += 1.0 - d;
            }
        }
        c
    }

    fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fne
    }

    fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total()).unwrap_or(0.0)
    }

    fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp).unwrap_or(0.0)
    }

    fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fne)
    }

    fn approval(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

/// ROC AUC as the Mann–Whitney statistic with average ranks for ties.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && probs[idx[j + 1]] == probs[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

pub fn performance_metrics(probs: &[f64], labels: &[bool], threshold: f64) -> PerformanceReport {
    performance_metrics_with(probs, labels, DecisionRule::Threshold(threshold))
}

pub fn performance_metrics_with(probs: &[f64], labels: &[bool], rule: DecisionRule) -> PerformanceReport {
    let c = Confusion::new(&rule.decisions(probs), labels);
    PerformanceReport {
        n: labels.len(),
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall().unwrap_or(0.0),
        log_loss: mean_log_loss(probs, labels, None),
        roc_auc: roc_auc(probs, labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub approval_rate: f64,
}

/// Per-group metrics indexed by [`GroupId::index`]; empty groups are absent.
pub fn group_disaggregate(probs: &[f64], labels: &[bool], groups: &[GroupId], rule: DecisionRule) -> [Option<GroupMetrics>; 2] {
    GroupId::ALL.map(|g| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| groups[i] == g).collect();
        if idx.is_empty() {
            return None;
        }
        let d: Vec<f64> = idx.iter().map(|&i| rule.decide(probs[i])).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        let c = Confusion::new(&d, &y);
        Some(GroupMetrics {
            n: idx.len(),
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall().unwrap_or(0.0),
            approval_rate: c.approval().unwrap_or(0.0),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    /// approval(B) − approval(A); negative favors A.
    pub spd: Option<f64>,
    /// TPR(B) − TPR(A); negative favors A.
    pub eod: Option<f64>,
    pub approval_rate: [Option<f64>; 2],
    pub tpr: [Option<f64>; 2],
}

impl FairnessReport {
    pub fn from_rates(approval: [Option<f64>; 2], tpr: [Option<f64>; 2]) -> Self {
        let diff = |v: [Option<f64>; 2]| Some(v[1]? - v[0]?);
        Self { spd: diff(approval), eod: diff(tpr), approval_rate: approval, tpr }
    }

    /// Approval ratio A / B, absent when B is never approved.
    pub fn approval_ratio(&self) -> Option<f64> {
        let [a, b] = self.approval_rate;
        ratio(a?, b?)
    }
}

/// SPD and EOD from decisions in [0, 1].
pub fn fairness_metrics(decisions: &[f64], labels: &[bool], groups: &[GroupId]) -> FairnessReport {
    let per = GroupId::ALL.map(|g| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| groups[i] == g).collect();
        let d: Vec<f64> = idx.iter().map(|&i| decisions[i]).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        Confusion::new(&d, &y)
    });
    FairnessReport::from_rates(per.map(|c| c.approval()), per.map(|c| c.recall()))
}
