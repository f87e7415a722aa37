//! Aggregation of cell records into composite scores, rank tables and the
//! flat CSV exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Pipeline, RunRecord, Scenario};
use crate::error::Result;
use crate::metrics::{composite_scores, rank_variants, CompositeScore, FairnessReport, PerformanceReport, RankTable};
use crate::mitigation::Mitigation;
use crate::sim::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub pipeline: Pipeline,
    pub scenarios: Vec<Scenario>,
    pub variants: Vec<Mitigation>,
    /// Per scenario, per variant; absent when every seed of the cell failed.
    pub scores: Vec<Vec<Option<CompositeScore>>>,
    pub perf_ranks: RankTable,
    pub fair_ranks: RankTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub pipelines: Vec<PipelineSummary>,
    pub n_cells: usize,
    pub n_failed: usize,
}

impl PlanSummary {
    pub fn pipeline(&self, p: Pipeline) -> Option<&PipelineSummary> {
        self.pipelines.iter().find(|s| s.pipeline == p)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean(v.into_iter()))
}

/// Seed-averaged reports of the successful records.
fn average(records: &[&RunRecord]) -> Option<(PerformanceReport, FairnessReport)> {
    let ok: Vec<(&PerformanceReport, &FairnessReport)> =
        records.iter().filter_map(|r| Some((r.performance.as_ref()?, r.fairness.as_ref()?))).collect();
    if ok.is_empty() {
        return None;
    }
    let perf = PerformanceReport {
        n: ok.iter().map(|(p, _)| p.n).sum(),
        accuracy: mean(ok.iter().map(|(p, _)| p.accuracy)),
        precision: mean(ok.iter().map(|(p, _)| p.precision)),
        recall: mean(ok.iter().map(|(p, _)| p.recall)),
        log_loss: mean(ok.iter().map(|(p, _)| p.log_loss)),
        roc_auc: mean_opt(ok.iter().map(|(p, _)| p.roc_auc)),
    };
    let rate = |f: &dyn Fn(&FairnessReport) -> Option<f64>| mean_opt(ok.iter().map(|(_, fr)| f(fr)));
    let fair = FairnessReport {
        spd: rate(&|f| f.spd),
        eod: rate(&|f| f.eod),
        approval_rate: [rate(&|f| f.approval_rate[0]), rate(&|f| f.approval_rate[1])],
        tpr: [rate(&|f| f.tpr[0]), rate(&|f| f.tpr[1])],
    };
    Some((perf, fair))
}

fn distinct_scenarios(records: &[RunRecord]) -> Vec<Scenario> {
    let mut out: Vec<Scenario> = Vec::new();
    for r in records {
        if !out.contains(&r.scenario) {
            out.push(r.scenario);
        }
    }
    out
}

/// Averages each (scenario, variant) over seeds, scores the variants of
/// each scenario and ranks them. Variants with no successful seed get NaN
/// scores and rank last.
pub fn aggregate(records: &[RunRecord], variants: &[Mitigation]) -> PlanSummary {
    let scenarios = distinct_scenarios(records);
    let mut pipelines = Vec::new();
    for p in Pipeline::ALL {
        if !records.iter().any(|r| r.pipeline == p) {
            continue;
        }
        let mut scores = Vec::new();
        for s in &scenarios {
            let avg: Vec<Option<(PerformanceReport, FairnessReport)>> = variants
                .iter()
                .map(|&v| {
                    let cell: Vec<&RunRecord> =
                        records.iter().filter(|r| r.pipeline == p && r.scenario == *s && r.variant == v).collect();
                    average(&cell)
                })
                .collect();
            let present: Vec<(PerformanceReport, FairnessReport)> = avg.iter().flatten().cloned().collect();
            let mut composite = composite_scores(&present).into_iter();
            scores.push(avg.iter().map(|a| a.as_ref().and_then(|_| composite.next())).collect::<Vec<_>>());
        }
        let column = |f: fn(&CompositeScore) -> f64| -> Vec<Vec<f64>> {
            scores.iter().map(|row| row.iter().map(|c| c.as_ref().map_or(f64::NAN, f)).collect()).collect()
        };
        let perf_ranks = rank_variants(&column(|c| c.perf));
        let fair_ranks = rank_variants(&column(|c| c.fair));
        pipelines.push(PipelineSummary {
            pipeline: p,
            scenarios: scenarios.clone(),
            variants: variants.to_vec(),
            scores,
            perf_ranks,
            fair_ranks,
        });
    }
    PlanSummary { pipelines, n_cells: records.len(), n_failed: records.iter().filter(|r| !r.is_ok()).count() }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes the per-group results, composite scores, rank counts and the
/// JSON summary under `results_tables/`.
pub(crate) fn write_tables(out: &Path, records: &[RunRecord], summary: &PlanSummary) -> Result<()> {
    let dir = out.join("results_tables");
    std::fs::create_dir_all(&dir)?;
    for p in Pipeline::ALL {
        let rows: Vec<&RunRecord> = records.iter().filter(|r| r.pipeline == p).collect();
        if rows.is_empty() {
            continue;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join(format!("{p}_results.csv")))?;
        let mut header = vec!["scenario".to_string(), "seed".into(), "variant".into(), "status".into()];
        for g in GroupId::ALL {
            for m in ["accuracy", "recall", "precision", "approval"] {
                header.push(format!("{m}_{}", g.as_str()));
            }
        }
        header.extend(["accuracy", "precision", "recall", "log_loss", "roc_auc", "spd", "eod"].map(String::from));
        w.write_record(&header)?;
        for r in rows {
            let mut row = vec![
                r.scenario.name(),
                r.seed.to_string(),
                r.variant.to_string(),
                if r.is_ok() { "ok".into() } else { "failed".into() },
            ];
            for g in &r.groups {
                match g {
                    Some(m) => row.extend([m.accuracy, m.recall, m.precision, m.approval_rate].map(|v| format!("{v:.6}"))),
                    None => row.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            match &r.performance {
                Some(pr) => row.extend([
                    fmt_opt(Some(pr.accuracy)),
                    fmt_opt(Some(pr.precision)),
                    fmt_opt(Some(pr.recall)),
                    fmt_opt(Some(pr.log_loss)),
                    fmt_opt(pr.roc_auc),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row.push(fmt_opt(r.fairness.as_ref().and_then(|f| f.spd)));
            row.push(fmt_opt(r.fairness.as_ref().and_then(|f| f.eod)));
            w.write_record(&row)?;
        }
        w.flush()?;
    }

    let mut scores =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join("composite_scores.csv"))?;
    scores.write_record(["pipeline", "scenario", "variant", "perf", "fair", "perf_rank", "fair_rank"])?;
    let mut counts = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join("rank_counts.csv"))?;
    counts.write_record(["pipeline", "variant", "perf_first", "perf_second", "fair_first", "fair_second"])?;
    for ps in &summary.pipelines {
        for (si, s) in ps.scenarios.iter().enumerate() {
            for (vi, v) in ps.variants.iter().enumerate() {
                let c = ps.scores[si][vi].as_ref();
                scores.write_record([
                    ps.pipeline.to_string(),
                    s.name(),
                    v.to_string(),
                    fmt_opt(c.map(|c| c.perf)),
                    fmt_opt(c.map(|c| c.fair)),
                    ps.perf_ranks.ranks[si][vi].to_string(),
                    ps.fair_ranks.ranks[si][vi].to_string(),
                ])?;
            }
        }
        for (vi, v) in ps.variants.iter().enumerate() {
            counts.write_record([
                ps.pipeline.to_string(),
                v.to_string(),
                ps.perf_ranks.first[vi].to_string(),
                ps.perf_ranks.second[vi].to_string(),
                ps.fair_ranks.first[vi].to_string(),
                ps.fair_ranks.second[vi].to_string(),
            ])?;
        }
    }
    scores.flush()?;
    counts.flush()?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}

/// Reads every `metrics.json` under `out/results`, in path order.
pub fn load_records(out: &Path) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    let mut stack = vec![out.join("results")];
    while let Some(dir) = stack.pop() {
        if !dir.is_dir() {
            continue;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "metrics.json") {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths.into_iter().map(|p| Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?)).collect()
}

/// Re-aggregates the records persisted under `out` and rewrites the tables.
pub fn report(out: &Path) -> Result<(Vec<RunRecord>, PlanSummary)> {
    let records = load_records(out)?;
    let mut variants: Vec<Mitigation> = Mitigation::ALL.into_iter().filter(|v| records.iter().any(|r| r.variant == *v)).collect();
    if variants.is_empty() {
        variants = Mitigation::ALL.to_vec();
    }
    let summary = aggregate(&records, &variants);
    write_tables(out, &records, &summary)?;
    Ok((records, summary))
}
