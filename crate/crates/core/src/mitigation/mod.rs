//! Bias mitigation: pre-processing reweighers and the exponentiated-gradient
//! reduction for fairness-constrained classification.

mod ema;
mod eg;
mod moments;
mod reweigh;

use serde::{Deserialize, Serialize};

pub use eg::{eg_fit, eg_fit_incremental, hard_vote, EgEnsemble, EgParams, IncrementalEg};
pub use ema::EmaReweigher;
pub use moments::{constraint_violation, ConstraintMoment, Violation};
pub use reweigh::{kamiran_calders_weights, manual_weights, WeightTable};

/// Mitigation strategy of an experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    None,
    ReweightAuto,
    ReweightManual,
    EgDp,
    EgEo,
}

impl Mitigation {
    pub const ALL: [Mitigation; 5] =
        [Mitigation::None, Mitigation::ReweightAuto, Mitigation::ReweightManual, Mitigation::EgDp, Mitigation::EgEo];

    pub fn as_str(self) -> &'static str {
        match self {
            Mitigation::None => "none",
            Mitigation::ReweightAuto => "reweight_auto",
            Mitigation::ReweightManual => "reweight_manual",
            Mitigation::EgDp => "eg_dp",
            Mitigation::EgEo => "eg_eo",
        }
    }

    pub fn parse(s: &str) -> Option<Mitigation> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn moment(self) -> Option<ConstraintMoment> {
        match self {
            Mitigation::EgDp => Some(ConstraintMoment::DemographicParity),
            Mitigation::EgEo => Some(ConstraintMoment::EqualizedOdds),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mitigation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
