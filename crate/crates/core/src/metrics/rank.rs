//! Composite scores and cross-variant rankings.

use serde::{Deserialize, Serialize};

use super::{FairnessReport, PerformanceReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeScore {
    pub perf: f64,
    /// −mean(|spd|, |eod|) over the present components; 0 is best.
    pub fair: f64,
    /// Set when fewer than two variants were available, so raw values
    /// stand in for min-max normalized ones.
    pub degenerate: bool,
}

fn raw_components(p: &PerformanceReport) -> [Option<f64>; 5] {
    [p.roc_auc, Some(p.accuracy), Some(p.precision), Some(p.recall), Some(p.log_loss)]
}

/// Scores every variant of one scenario. Performance components are
/// min-max normalized across the variants (log loss inverted) and
/// averaged with equal weights; a column with no spread scores 1.
pub fn composite_scores(reports: &[(PerformanceReport, FairnessReport)]) -> Vec<CompositeScore> {
    let degenerate = reports.len() < 2;
    let raw: Vec<[Option<f64>; 5]> = reports.iter().map(|(p, _)| raw_components(p)).collect();
    let mut perf = vec![Vec::new(); reports.len()];
    for c in 0..5 {
        let present: Vec<f64> = raw.iter().filter_map(|r| r[c]).collect();
        let (lo, hi) = present.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        for (v, r) in raw.iter().enumerate() {
            let Some(x) = r[c] else { continue };
            let is_loss = c == 4;
            let score = if degenerate {
                if is_loss {
                    (-x).exp()
                } else {
                    x
                }
            } else if hi > lo {
                let t = (x - lo) / (hi - lo);
                if is_loss {
                    1.0 - t
                } else {
                    t
                }
            } else {
                1.0
            };
            perf[v].push(score);
        }
    }
    reports
        .iter()
        .zip(perf)
        .map(|((_, f), s)| {
            let gaps: Vec<f64> = [f.spd, f.eod].into_iter().flatten().map(f64::abs).collect();
            let fair = if gaps.is_empty() { 0.0 } else { -gaps.iter().sum::<f64>() / gaps.len() as f64 };
            CompositeScore { perf: s.iter().sum::<f64>() / s.len() as f64, fair, degenerate }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// Per scenario, the rank of each variant (1 = best).
    pub ranks: Vec<Vec<usize>>,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

/// Ranks variants by descending score within each scenario. Ties share the
/// smallest rank; NaN scores rank last.
pub fn rank_variants(scores: &[Vec<f64>]) -> RankTable {
    let k = scores.iter().map(Vec::len).max().unwrap_or(0);
    let mut first = vec![0; k];
    let mut second = vec![0; k];
    let ranks: Vec<Vec<usize>> = scores
        .iter()
        .map(|row| {
            let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
            row.iter().map(|&s| 1 + row.iter().filter(|&&o| key(o) > key(s)).count()).collect::<Vec<_>>()
        })
        .collect();
    for row in &ranks {
        for (v, &r) in row.iter().enumerate() {
            match r {
                1 => first[v] += 1,
                2 => second[v] += 1,
                _ => {}
            }
        }
    }
    RankTable { ranks, first, second }
}
