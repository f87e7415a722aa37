//! Second-order explanations of persisted cell models.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cell_dir, dataset_path, Pipeline, PersistedModel, Scenario};
use crate::dataset::{import_csv, DatasetRow, Feature};
use crate::error::{Error, Result};
use crate::explain::{build_interaction_graph, shapley_order2, InteractionGraph, ShapleyExplanation, ValueFunction, DEFAULT_BACKGROUND_SIZE};
use crate::mitigation::Mitigation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSelector {
    /// Uniform draw from the held-out tail with this seed.
    Random(u64),
    /// The application of this entity (its latest one if there are several).
    Id(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub scenario: Scenario,
    pub seed: u64,
    pub pipeline: Pipeline,
    /// The mitigated variant explained next to the unmitigated baseline.
    pub variant: Mitigation,
    pub instance: InstanceSelector,
    pub top_k: usize,
    pub background_size: usize,
}

impl ExplainRequest {
    pub fn new(scenario: Scenario, seed: u64, pipeline: Pipeline, variant: Mitigation) -> Self {
        Self {
            scenario,
            seed,
            pipeline,
            variant,
            instance: InstanceSelector::Random(seed),
            top_k: 10,
            background_size: DEFAULT_BACKGROUND_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedModel {
    pub variant: Mitigation,
    pub explanation: ShapleyExplanation,
    pub graph: InteractionGraph,
    /// Files written for this model.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutcome {
    pub entity_id: u64,
    pub row_index: usize,
    pub baseline: ExplainedModel,
    pub mitigated: ExplainedModel,
}

fn load_model(out: &Path, req: &ExplainRequest, v: Mitigation) -> Result<PersistedModel> {
    let dir = cell_dir(req.scenario, req.seed, req.pipeline, v);
    let path = out.join(&dir).join("model.json");
    if !path.is_file() {
        return Err(Error::MissingModel(dir.display().to_string()));
    }
    PersistedModel::load(&path)
}

fn feature_rows(rows: &[DatasetRow], features: &[Feature]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| features.iter().map(|&f| r.features.get(f)).collect()).collect()
}

/// Explains one instance of a cell's dataset under the baseline model and
/// under `req.variant`, writing a DOT graph, the graph JSON and the raw
/// indices for each. The background is a seeded sample of the training
/// part (first 80% of rows).
pub fn explain_cell(out: &Path, req: &ExplainRequest) -> Result<ExplainOutcome> {
    let baseline = load_model(out, req, Mitigation::None)?;
    let mitigated = load_model(out, req, req.variant)?;
    if baseline.features != mitigated.features {
        return Err(Error::Invalid("baseline and variant were trained on different feature sets".into()));
    }
    let features: Vec<Feature> = baseline.features.iter().map(|n| Feature::parse(n)).collect::<Result<_>>()?;
    let rows = import_csv(out.join(dataset_path(req.scenario, req.seed)))?;
    if rows.len() < 2 {
        return Err(Error::Invalid("dataset has fewer than two rows".into()));
    }
    let x = feature_rows(&rows, &features);
    let cut = ((rows.len() as f64) * 0.8).round() as usize;
    let cut = cut.clamp(1, rows.len() - 1);

    let row_index = match req.instance {
        InstanceSelector::Random(s) => ChaCha8Rng::seed_from_u64(s).random_range(cut..rows.len()),
        InstanceSelector::Id(id) => rows
            .iter()
            .rposition(|r| r.entity_id == id)
            .ok_or_else(|| Error::Invalid(format!("no application from entity {id}")))?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed ^ 0xB4C6_0000);
    let k = req.background_size.clamp(1, cut);
    let background: Vec<Vec<f64>> = sample(&mut rng, cut, k).into_iter().map(|i| x[i].clone()).collect();

    let dir = out.join("explain").join(req.scenario.name()).join(format!("seed_{}", req.seed)).join(req.pipeline.as_str());
    std::fs::create_dir_all(&dir)?;
    let explain = |m: &PersistedModel, v: Mitigation| -> Result<ExplainedModel> {
        let vf = ValueFunction::new(&m.model, &background, &x[row_index])?;
        let explanation = shapley_order2(&vf, m.features.clone())?;
        let graph = build_interaction_graph(&explanation, req.top_k);
        let files = vec![
            dir.join(format!("{v}.dot")),
            dir.join(format!("{v}.json")),
            dir.join(format!("{v}.shapley.json")),
        ];
        graph.write_dot(&files[0])?;
        graph.write_json(&files[1])?;
        std::fs::write(&files[2], explanation.to_json()? + "\n")?;
        Ok(ExplainedModel { variant: v, explanation, graph, files })
    };
    Ok(ExplainOutcome {
        entity_id: rows[row_index].entity_id,
        row_index,
        baseline: explain(&baseline, Mitigation::None)?,
        mitigated: explain(&mitigated, req.variant)?,
    })
}
