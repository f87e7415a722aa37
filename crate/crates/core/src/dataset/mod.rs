//! Tabular schema of the generated datasets, the leakage mask and
//! mini-batch streaming.

mod io;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::GroupId;

pub use io::{export_csv, export_json, import_csv, import_json, read_csv, write_csv, DATASET_SCHEMA};

/// Schema features in their fixed column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Wealth,
    Education,
    Trust,
    FinLit,
    CreditScore,
    LoanHist,
    LoanAmount,
    HasJob,
    HasCar,
    HasHouse,
}

impl Feature {
    pub const ALL: [Feature; 10] = [
        Feature::Wealth,
        Feature::Education,
        Feature::Trust,
        Feature::FinLit,
        Feature::CreditScore,
        Feature::LoanHist,
        Feature::LoanAmount,
        Feature::HasJob,
        Feature::HasCar,
        Feature::HasHouse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Wealth => "wealth",
            Feature::Education => "education",
            Feature::Trust => "trust",
            Feature::FinLit => "fin_lit",
            Feature::CreditScore => "credit_score",
            Feature::LoanHist => "loan_hist",
            Feature::LoanAmount => "loan_amount",
            Feature::HasJob => "has_job",
            Feature::HasCar => "has_car",
            Feature::HasHouse => "has_house",
        }
    }

    pub fn parse(name: &str) -> Result<Feature> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}`")))
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, Feature::HasJob | Feature::HasCar | Feature::HasHouse)
    }
}

impl std::fmt::Display for Feature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub wealth: f64,
    pub education: u8,
    pub trust: f64,
    pub fin_lit: f64,
    pub credit_score: f64,
    pub loan_hist: u32,
    pub loan_amount: f64,
    pub has_job: bool,
    pub has_car: bool,
    pub has_house: bool,
}

impl Features {
    pub fn get(&self, f: Feature) -> f64 {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match f {
            Feature::Wealth => self.wealth,
            Feature::Education => self.education as f64,
            Feature::Trust => self.trust,
            Feature::FinLit => self.fin_lit,
            Feature::CreditScore => self.credit_score,
            Feature::LoanHist => self.loan_hist as f64,
            Feature::LoanAmount => self.loan_amount,
            Feature::HasJob => flag(self.has_job),
            Feature::HasCar => flag(self.has_car),
            Feature::HasHouse => flag(self.has_house),
        }
    }
}

/// Scores behind the label. Never visible to learners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDiagnostics {
    pub raw_score: f64,
    pub biased_score: f64,
}

/// One labeled loan application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub entity_id: u64,
    pub timestep: u64,
    pub group: GroupId,
    pub features: Features,
    pub qualified: bool,
    /// The target label.
    pub loan_approved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<ScoreDiagnostics>,
}

impl DatasetRow {
    pub fn label(&self) -> bool {
        self.loan_approved
    }
}

/// Features withheld from learners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityMask {
    hidden: BTreeSet<Feature>,
}

impl Default for VisibilityMask {
    /// Hides the features that leak socio-economic class or the outcome.
    fn default() -> Self {
        Self::hiding([Feature::Wealth, Feature::CreditScore, Feature::Education, Feature::Trust])
    }
}

impl VisibilityMask {
    pub fn none() -> Self {
        Self { hidden: BTreeSet::new() }
    }

    pub fn hiding(features: impl IntoIterator<Item = Feature>) -> Self {
        Self { hidden: features.into_iter().collect() }
    }

    pub fn from_names<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let hidden = names.into_iter().map(|n| Feature::parse(n.as_ref())).collect::<Result<_>>()?;
        Ok(Self { hidden })
    }

    pub fn hidden(&self) -> impl Iterator<Item = Feature> + '_ {
        self.hidden.iter().copied()
    }

    pub fn is_hidden(&self, f: Feature) -> bool {
        self.hidden.contains(&f)
    }

    /// Visible features in schema order. Fails when everything is hidden.
    pub fn visible(&self) -> Result<Vec<Feature>> {
        let v: Vec<Feature> = Feature::ALL.into_iter().filter(|f| !self.hidden.contains(f)).collect();
        if v.is_empty() {
            return Err(Error::Schema("mask hides every feature; nothing left to train on".into()));
        }
        Ok(v)
    }
}

/// Model-visible feature vector of one row, in `mask.visible()` order.
pub fn mask_features(row: &DatasetRow, mask: &VisibilityMask) -> Result<Vec<f64>> {
    Ok(mask.visible()?.into_iter().map(|f| row.features.get(f)).collect())
}

/// Learner-facing view of a dataset: masked feature matrix, labels and
/// group tags. The only way to build one is through a [`VisibilityMask`],
/// so hidden features and score diagnostics cannot reach a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedDataset {
    features: Vec<Feature>,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    groups: Vec<GroupId>,
}

impl MaskedDataset {
    pub fn from_rows(rows: &[DatasetRow], mask: &VisibilityMask) -> Result<Self> {
        let features = mask.visible()?;
        let x = rows.iter().map(|r| features.iter().map(|&f| r.features.get(f)).collect()).collect();
        Ok(Self {
            features,
            x,
            y: rows.iter().map(DatasetRow::label).collect(),
            groups: rows.iter().map(|r| r.group).collect(),
        })
    }

    /// Builds a dataset from already-masked vectors, e.g. synthetic fixtures.
    pub fn from_parts(features: Vec<Feature>, x: Vec<Vec<f64>>, y: Vec<bool>, groups: Vec<GroupId>) -> Result<Self> {
        if x.len() != y.len() || x.len() != groups.len() {
            return Err(Error::Schema("x, y and groups must have equal length".into()));
        }
        if x.iter().any(|r| r.len() != features.len()) {
            return Err(Error::Schema("row width does not match feature list".into()));
        }
        Ok(Self { features, x, y, groups })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[bool] {
        &self.y
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            features: self.features.clone(),
            x: self.x[range.clone()].to_vec(),
            y: self.y[range.clone()].to_vec(),
            groups: self.groups[range].to_vec(),
        }
    }

    /// Time-ordered split: the first `round(n * train_fraction)` rows and the rest.
    pub fn split_at_fraction(&self, train_fraction: f64) -> (Self, Self) {
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let cut = cut.min(self.len());
        (self.slice(0..cut), self.slice(cut..self.len()))
    }
}

/// Contiguous run of rows delivered to an online learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiniBatch<'a> {
    pub index: usize,
    pub rows: &'a [DatasetRow],
}

impl MiniBatch<'_> {
    pub fn size(&self) -> usize {
        self.rows.len()
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 100;

/// Splits `rows` into consecutive batches of `batch_size`; the last batch may be short.
pub fn stream_batches(rows: &[DatasetRow], batch_size: usize) -> Result<impl Iterator<Item = MiniBatch<'_>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    Ok(rows.chunks(batch_size).enumerate().map(|(index, rows)| MiniBatch { index, rows }))
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_shows_everything() {
        let row = &fixtures::rows(1)[0];
        let v = mask_features(row, &VisibilityMask::none()).unwrap();
        assert_eq!(v.len(), Feature::ALL.len());
        assert_eq!(v[0], row.features.wealth);
    }

    #[test]
    fn default_mask_hides_leaky_features() {
        let mask = VisibilityMask::default();
        let visible = mask.visible().unwrap();
        for f in [Feature::Wealth, Feature::CreditScore, Feature::Education, Feature::Trust] {
            assert!(!visible.contains(&f));
        }
        assert_eq!(
            visible,
            vec![Feature::FinLit, Feature::LoanHist, Feature::LoanAmount, Feature::HasJob, Feature::HasCar, Feature::HasHouse]
        );
        let row = &fixtures::rows(2)[1];
        let v = mask_features(row, &mask).unwrap();
        assert_eq!(v, vec![row.features.fin_lit, 1.0, row.features.loan_amount, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn all_hidden_and_unknown_names_are_errors() {
        let mask = VisibilityMask::hiding(Feature::ALL);
        assert!(matches!(mask_features(&fixtures::rows(1)[0], &mask), Err(Error::Schema(_))));
        assert!(VisibilityMask::from_names(["wealth", "zodiac"]).is_err());
        assert_eq!(VisibilityMask::from_names(["wealth"]).unwrap(), VisibilityMask::hiding([Feature::Wealth]));
    }

    #[test]
    fn masked_dataset_carries_labels_and_groups() {
        let rows = fixtures::rows(6);
        let ds = MaskedDataset::from_rows(&rows, &VisibilityMask::default()).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.n_features(), 6);
        assert_eq!(ds.groups()[0], GroupId::B);
        assert!(ds.y()[1]);
        let (tr, te) = ds.split_at_fraction(0.8);
        assert_eq!((tr.len(), te.len()), (5, 1));
    }

    #[test]
    fn batch_sizes() {
        let rows = fixtures::rows(250);
        let sizes: Vec<usize> = stream_batches(&rows, 100).unwrap().map(|b| b.size()).collect();
        assert_eq!(sizes, vec![100, 100, 50]);
        let one = fixtures::rows(1);
        assert_eq!(stream_batches(&one, 100).unwrap().count(), 1);
        assert!(stream_batches(&rows, 0).is_err());
    }

    #[test]
    fn batches_preserve_order() {
        let rows = fixtures::rows(10_000);
        for size in [1, 7, 100, 9_999, 10_000, 20_000] {
            let ids: Vec<u64> =
                stream_batches(&rows, size).unwrap().flat_map(|b| b.rows.iter().map(|r| r.entity_id)).collect();
            let oracle: Vec<u64> = (0..10_000).map(|i| 1000 + i as u64).collect();
            assert_eq!(ids, oracle);
            assert_eq!(stream_batches(&rows, size).unwrap().count(), 10_000usize.div_ceil(size));
        }
    }
}
