//! Experiment orchestration: the scenario grid, per-cell training and
//! evaluation for both pipelines, persisted artifacts and result tables.
//!
//! Output layout under the plan's output directory:
//!
//! ```text
//! datasets/<scenario>_seed_<s>.csv
//! results/<scenario>/seed_<s>/<pipeline>/<variant>/{metrics.json, model.json}
//! results_tables/{offline,online}_results.csv
//! results_tables/composite_scores.csv
//! results_tables/summary.json
//! results_tables/rank_counts.csv
//! explain/<scenario>/seed_<s>/<pipeline>/<variant>.{dot,json,shapley.json}
//! ```

mod cells;
mod explain_cell;
mod models;
mod tables;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::dataset::write_csv;
use crate::dataset::{DatasetRow, MaskedDataset, VisibilityMask};
use crate::error::{Error, Result};
use crate::learners::{GbtParams, GbtSpace, HoeffdingSpace};
use crate::metrics::{
    fairness_metrics, group_disaggregate, performance_metrics_with, DecisionRule, FairnessReport, GroupMetrics,
    PerformanceReport,
};
use crate::mitigation::{EgParams, Mitigation};
use crate::sim::run_simulation;

pub use explain_cell::{explain_cell, ExplainOutcome, ExplainRequest, ExplainedModel, InstanceSelector};
pub use models::{PersistedModel, TrainedModel, MODEL_SCHEMA};
pub use tables::{aggregate, load_records, report, PipelineSummary, PlanSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Offline,
    Online,
}

impl Pipeline {
    pub const ALL: [Pipeline; 2] = [Pipeline::Offline, Pipeline::Online];

    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Offline => "offline",
            Pipeline::Online => "online",
        }
    }

    pub fn parse(s: &str) -> Option<Pipeline> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (prejudice, representation) setting of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub lbl: f64,
    pub rep: f64,
}

impl Scenario {
    pub fn name(&self) -> String {
        format!("rep{:.1}_lbl{:.1}", self.rep, self.lbl)
    }
}

/// Knobs of the training pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub mask: VisibilityMask,
    pub train_fraction: f64,
    pub offline_candidates: usize,
    pub online_candidates: usize,
    pub gbt_space: GbtSpace,
    pub hoeffding_space: HoeffdingSpace,
    pub calibrate_interval: usize,
    pub update_interval: usize,
    pub warmup: usize,
    pub eg: EgParams,
    /// Booster fitted on the first window of the online reduction.
    pub online_eg_gbt: GbtParams,
    /// Trees appended per window afterwards.
    pub eg_new_trees: usize,
    pub manual_weights: (f64, f64),
    pub ema_lambda: f64,
    pub ema_clip: (f64, f64),
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            mask: VisibilityMask::default(),
            train_fraction: 0.8,
            offline_candidates: 3,
            online_candidates: 10,
            gbt_space: GbtSpace::default(),
            hoeffding_space: HoeffdingSpace::default(),
            calibrate_interval: 500,
            update_interval: 100,
            warmup: 500,
            eg: EgParams::default(),
            online_eg_gbt: GbtParams { n_trees: 50, ..GbtParams::default() },
            eg_new_trees: 10,
            manual_weights: (0.5, 1.5),
            ema_lambda: 0.01,
            ema_clip: (0.1, 10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub lbl_values: Vec<f64>,
    pub rep_values: Vec<f64>,
    pub variants: Vec<Mitigation>,
    pub pipelines: Vec<Pipeline>,
    pub seeds: Vec<u64>,
    pub n_steps: u64,
    /// Every other simulation parameter.
    pub base: ScenarioConfig,
    pub settings: PipelineSettings,
    pub out_dir: Option<PathBuf>,
    pub persist_models: bool,
}

pub const DESK_STEPS: u64 = 2_000;
pub const FULL_STEPS: u64 = 10_000;

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentPlan {
    /// Full grid at desk scale: 2000 steps, seeds 0 and 1.
    pub fn desk() -> Self {
        Self {
            lbl_values: vec![0.0, 0.4, 0.5, 0.6],
            rep_values: vec![0.5, 0.6, 0.7, 0.8],
            variants: Mitigation::ALL.to_vec(),
            pipelines: Pipeline::ALL.to_vec(),
            seeds: vec![0, 1],
            n_steps: DESK_STEPS,
            base: ScenarioConfig::default(),
            settings: PipelineSettings::default(),
            out_dir: None,
            persist_models: true,
        }
    }

    pub fn full() -> Self {
        Self { n_steps: FULL_STEPS, ..Self::desk() }
    }

    /// A plan over a single scenario.
    pub fn single(lbl: f64, rep: f64) -> Self {
        Self { lbl_values: vec![lbl], rep_values: vec![rep], ..Self::desk() }
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.rep_values.iter().flat_map(|&rep| self.lbl_values.iter().map(move |&lbl| Scenario { lbl, rep })).collect()
    }

    pub fn scenario_config(&self, s: Scenario, seed: u64) -> ScenarioConfig {
        ScenarioConfig { lbl_beta: s.lbl, rep_alpha: s.rep, n_steps: self.n_steps, rng_seed: seed, ..self.base.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios().is_empty() || self.seeds.is_empty() || self.variants.is_empty() || self.pipelines.is_empty() {
            return Err(Error::Config("plan needs at least one scenario, seed, variant and pipeline".into()));
        }
        for s in self.scenarios() {
            self.scenario_config(s, 0).validate()?;
        }
        self.settings.mask.visible()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn n_cells(&self) -> usize {
        self.scenarios().len() * self.seeds.len() * self.variants.len() * self.pipelines.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

/// Outcome of one (scenario, seed, pipeline, variant) cell. Timings are
/// logged, not stored, so records of identical plans compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub seed: u64,
    pub pipeline: Pipeline,
    pub variant: Mitigation,
    /// SHA-256 of the generated dataset's CSV export.
    pub fingerprint: String,
    pub status: CellStatus,
    pub n_train: usize,
    pub n_eval: usize,
    pub decision_rule: DecisionRule,
    pub performance: Option<PerformanceReport>,
    pub groups: [Option<GroupMetrics>; 2],
    pub fairness: Option<FairnessReport>,
    pub eg_converged: Option<bool>,
    pub params: serde_json::Value,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn cell_dir(&self) -> PathBuf {
        cell_dir(self.scenario, self.seed, self.pipeline, self.variant)
    }
}

pub(crate) fn cell_dir(s: Scenario, seed: u64, p: Pipeline, v: Mitigation) -> PathBuf {
    Path::new("results").join(s.name()).join(format!("seed_{seed}")).join(p.as_str()).join(v.as_str())
}

pub(crate) fn dataset_path(s: Scenario, seed: u64) -> PathBuf {
    Path::new("datasets").join(format!("{}_seed_{seed}.csv", s.name()))
}

/// Everything a cell produced besides the record.
pub(crate) struct CellEval {
    pub probs: Vec<f64>,
    pub labels: Vec<bool>,
    pub groups: Vec<crate::sim::GroupId>,
    pub rule: DecisionRule,
    pub n_train: usize,
    pub eg_converged: Option<bool>,
    pub params: serde_json::Value,
    pub model: TrainedModel,
}

pub struct PlanOutcome {
    pub records: Vec<RunRecord>,
    pub summary: PlanSummary,
    /// Generated datasets keyed like the records, kept for inspection.
    pub fingerprints: Vec<(Scenario, u64, String)>,
}

impl PlanOutcome {
    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }
}

pub fn dataset_fingerprint(rows: &[DatasetRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf, true)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// Per-cell search seed: shared by every variant and pipeline of a
/// (scenario, seed) so they draw the same candidates.
fn search_seed(scenario_index: usize, seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (scenario_index as u64 + 1)
}

struct Generated {
    scenario: Scenario,
    index: usize,
    seed: u64,
    data: Result<(Vec<DatasetRow>, String)>,
}

fn generate_all(plan: &ExperimentPlan) -> Result<Vec<Generated>> {
    let scenarios = plan.scenarios();
    let jobs: Vec<(usize, Scenario, u64)> =
        scenarios.iter().enumerate().flat_map(|(i, &s)| plan.seeds.iter().map(move |&seed| (i, s, seed))).collect();

    let generated: Vec<Generated> = jobs
        .par_iter()
        .map(|&(index, scenario, seed)| {
            let started = std::time::Instant::now();
            let data = run_simulation(&plan.scenario_config(scenario, seed)).and_then(|rows| {
                let fp = dataset_fingerprint(&rows)?;
                Ok((rows, fp))
            });
            log::info!("generated {} seed {seed} in {:.2?}", scenario.name(), started.elapsed());
            Generated { scenario, index, seed, data }
        })
        .collect();

    if let Some(out) = &plan.out_dir {
        for g in &generated {
            if let Ok((rows, _)) = &g.data {
                let path = out.join(dataset_path(g.scenario, g.seed));
                std::fs::create_dir_all(path.parent().expect("dataset path has a parent"))?;
                crate::dataset::export_csv(rows, &path, true)?;
            }
        }
    }
    Ok(generated)
}

/// Generates (and, with an output directory, exports) every dataset of the
/// plan without training anything. Returns the fingerprint of each
/// (scenario, seed); a failed simulation is an error.
pub fn generate_datasets(plan: &ExperimentPlan) -> Result<Vec<(Scenario, u64, String)>> {
    plan.validate()?;
    generate_all(plan)?
        .into_iter()
        .map(|g| {
            let (_, fp) = g.data?;
            Ok((g.scenario, g.seed, fp))
        })
        .collect()
}

/// Runs every cell of the plan. Cell failures, including panics, are
/// recorded and never abort the grid.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutcome> {
    plan.validate()?;
    let generated = generate_all(plan)?;

    let mut cells = Vec::new();
    for gi in 0..generated.len() {
        for &p in &plan.pipelines {
            for &v in &plan.variants {
                cells.push((gi, p, v));
            }
        }
    }

    let records: Vec<RunRecord> = cells
        .par_iter()
        .map(|&(gi, pipeline, variant)| {
            let g = &generated[gi];
            let started = std::time::Instant::now();
            let record = run_cell(plan, g, pipeline, variant);
            log::info!(
                "{} seed {} {pipeline}/{variant}: {:?} in {:.2?}",
                g.scenario.name(),
                g.seed,
                record.0.status,
                started.elapsed()
            );
            if let (Some(out), Some(model)) = (&plan.out_dir, &record.1) {
                if let Err(e) = persist_cell(out, &record.0, model, &plan.settings.mask, plan.persist_models) {
                    log::error!("could not persist {}: {e}", record.0.cell_dir().display());
                }
            } else if let Some(out) = &plan.out_dir {
                if let Err(e) = persist_cell_record(out, &record.0) {
                    log::error!("could not persist {}: {e}", record.0.cell_dir().display());
                }
            }
            record.0
        })
        .collect();

    let summary = aggregate(&records, &plan.variants);
    if let Some(out) = &plan.out_dir {
        tables::write_tables(out, &records, &summary)?;
    }
    let fingerprints = generated
        .iter()
        .filter_map(|g| g.data.as_ref().ok().map(|(_, fp)| (g.scenario, g.seed, fp.clone())))
        .collect();
    Ok(PlanOutcome { records, summary, fingerprints })
}

fn failed_record(g: &Generated, pipeline: Pipeline, variant: Mitigation, fingerprint: String, error: String) -> RunRecord {
    RunRecord {
        scenario: g.scenario,
        seed: g.seed,
        pipeline,
        variant,
        fingerprint,
        status: CellStatus::Failed { error },
        n_train: 0,
        n_eval: 0,
        decision_rule: DecisionRule::default(),
        performance: None,
        groups: [None, None],
        fairness: None,
        eg_converged: None,
        params: serde_json::Value::Null,
    }
}

fn run_cell(plan: &ExperimentPlan, g: &Generated, pipeline: Pipeline, variant: Mitigation) -> (RunRecord, Option<TrainedModel>) {
    let (rows, fingerprint) = match &g.data {
        Ok(d) => d,
        Err(e) => return (failed_record(g, pipeline, variant, String::new(), format!("simulation failed: {e}")), None),
    };
    let seed = search_seed(g.index, g.seed);
    let attempt = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| -> Result<CellEval> {
        let ds = MaskedDataset::from_rows(rows, &plan.settings.mask)?;
        match pipeline {
            Pipeline::Offline => cells::run_offline(&ds, variant, &plan.settings, seed),
            Pipeline::Online => cells::run_online(&ds, variant, &plan.settings, seed),
        }
    }));
    let eval = match attempt {
        Ok(Ok(e)) => e,
        Ok(Err(e)) => return (failed_record(g, pipeline, variant, fingerprint.clone(), e.to_string()), None),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            return (failed_record(g, pipeline, variant, fingerprint.clone(), format!("panic: {msg}")), None);
        }
    };
    let decisions = eval.rule.decisions(&eval.probs);
    let record = RunRecord {
        scenario: g.scenario,
        seed: g.seed,
        pipeline,
        variant,
        fingerprint: fingerprint.clone(),
        status: CellStatus::Ok,
        n_train: eval.n_train,
        n_eval: eval.labels.len(),
        decision_rule: eval.rule,
        performance: Some(performance_metrics_with(&eval.probs, &eval.labels, eval.rule)),
        groups: group_disaggregate(&eval.probs, &eval.labels, &eval.groups, eval.rule),
        fairness: Some(fairness_metrics(&decisions, &eval.labels, &eval.groups)),
        eg_converged: eval.eg_converged,
        params: eval.params,
    };
    (record, Some(eval.model))
}

fn persist_cell_record(out: &Path, record: &RunRecord) -> Result<()> {
    let dir = out.join(record.cell_dir());
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(record)? + "\n")?;
    Ok(())
}

fn persist_cell(out: &Path, record: &RunRecord, model: &TrainedModel, mask: &VisibilityMask, with_model: bool) -> Result<()> {
    persist_cell_record(out, record)?;
    if with_model {
        let features = mask.visible()?.into_iter().map(|f| f.name().to_string()).collect();
        let persisted = PersistedModel::new(features, model.clone());
        std::fs::write(out.join(record.cell_dir()).join("model.json"), serde_json::to_string(&persisted)?)?;
    }
    Ok(())
}
