//! Synthetic loan-application society with controllable systemic bias,
//! plus the tooling to train offline and online classifiers on its data,
//! mitigate the bias they inherit and audit the result.
//!
//! The crate is organized bottom-up:
//!
//! * [`sim`] runs the agent-based model and emits labeled applications.
//! * [`dataset`] holds the tabular schema, the leakage mask and CSV/JSON IO.
//! * [`learners`] contains the from-scratch models and pipeline pieces.
//! * [`mitigation`] implements reweighing and exponentiated-gradient reduction.
//! * [`metrics`] computes performance, fairness, composite scores and ranks.
//! * [`explain`] computes exact second-order Shapley–Taylor attributions.
//! * [`runner`] orchestrates the scenario grid and writes result tables.

pub mod config;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod learners;
pub mod metrics;
pub mod mitigation;
pub mod runner;
pub mod sim;

pub use config::ScenarioConfig;
pub use dataset::{DatasetRow, Feature, MaskedDataset, VisibilityMask};
pub use error::{Error, Result};
pub use sim::{run_simulation, GroupId};
