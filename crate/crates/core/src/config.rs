//! Scenario configuration and its plain-text (TOML) file format.
//!
//! A config file is a flat list of `key = value` pairs plus nested tables
//! for `[score_weights]`, `[group_params.a]` and `[group_params.b]`. Every
//! key is optional; missing keys take the defaults below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::sim::GroupId;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Number of ordinal education levels (0..=4).
pub const EDUCATION_LEVELS: usize = 5;

/// Attribute distribution of one group. A group table in a config file must
/// list every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParams {
    pub wealth_min: f64,
    pub wealth_max: f64,
    pub p_job: f64,
    pub p_car: f64,
    pub p_house: f64,
    /// Categorical distribution over education levels 0..=4.
    pub education: [f64; EDUCATION_LEVELS],
    /// Poisson mean of prior loans.
    pub loan_hist_mean: f64,
}

impl GroupParams {
    pub fn privileged() -> Self {
        Self {
            wealth_min: 50.0,
            wealth_max: 89.0,
            p_job: 0.9,
            p_car: 0.8,
            p_house: 0.6,
            education: [0.10, 0.20, 0.30, 0.25, 0.15],
            loan_hist_mean: 1.5,
        }
    }

    pub fn protected() -> Self {
        Self {
            wealth_min: 30.0,
            wealth_max: 59.0,
            p_job: 0.7,
            p_car: 0.5,
            p_house: 0.3,
            education: [0.15, 0.25, 0.30, 0.20, 0.10],
            loan_hist_mean: 1.2,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.wealth_min >= 0.0 && self.wealth_min <= self.wealth_max && self.wealth_max.is_finite()) {
            return Err(config_err(format!("group {name}: wealth range must satisfy 0 <= min <= max")));
        }
        for (key, p) in [("p_job", self.p_job), ("p_car", self.p_car), ("p_house", self.p_house)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err(format!("group {name}: {key} must be in [0,1]")));
            }
        }
        let total: f64 = self.education.iter().sum();
        if self.education.iter().any(|&p| p < 0.0 || !p.is_finite()) || total <= 0.0 {
            return Err(config_err(format!("group {name}: education weights must be non-negative with positive sum")));
        }
        if !(self.loan_hist_mean >= 0.0 && self.loan_hist_mean.is_finite()) {
            return Err(config_err(format!("group {name}: loan_hist_mean must be >= 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParamsTable {
    #[serde(default = "GroupParams::privileged")]
    pub a: GroupParams,
    #[serde(default = "GroupParams::protected")]
    pub b: GroupParams,
}

impl Default for GroupParamsTable {
    fn default() -> Self {
        Self { a: GroupParams::privileged(), b: GroupParams::protected() }
    }
}

impl GroupParamsTable {
    pub fn get(&self, g: GroupId) -> &GroupParams {
        match g {
            GroupId::A => &self.a,
            GroupId::B => &self.b,
        }
    }
}

/// Weights of the qualification score. Each input is min-max normalized to
/// [0,1] before weighting; the weights are renormalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreWeights {
    pub wealth: f64,
    pub credit_score: f64,
    pub fin_lit: f64,
    pub loan_hist: f64,
    pub has_job: f64,
    pub has_car: f64,
    pub has_house: f64,
    /// Prior loans beyond this count add nothing to the score.
    pub loan_hist_cap: u32,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            wealth: 0.15,
            credit_score: 0.30,
            fin_lit: 0.15,
            loan_hist: 0.15,
            has_job: 0.10,
            has_car: 0.05,
            has_house: 0.10,
            loan_hist_cap: 5,
        }
    }
}

impl ScoreWeights {
    pub(crate) fn total(&self) -> f64 {
        self.wealth + self.credit_score + self.fin_lit + self.loan_hist + self.has_job + self.has_car + self.has_house
    }
}

/// One simulation's full contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Prejudice bias: score boost for A and penalty for B.
    pub lbl_beta: f64,
    /// Representation bias: probability that a spawned entity belongs to A.
    pub rep_alpha: f64,
    pub n_steps: u64,
    pub qualify_threshold: f64,
    pub label_flip_prob: f64,
    pub trust_join_threshold: f64,
    pub trust_adapt_rate: f64,
    pub transaction_prob: f64,
    /// Share of the poorer endpoint's wealth moved by one transaction.
    pub transaction_fraction: f64,
    /// Probability that a new entity is spawned in a step.
    pub spawn_prob: f64,
    /// An entity applies uniformly within this many steps after spawning.
    pub max_apply_delay: u64,
    /// Standard deviation of the noise term of `credit_score`.
    pub credit_noise_sd: f64,
    pub rng_seed: u64,
    pub score_weights: ScoreWeights,
    pub group_params: GroupParamsTable,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            lbl_beta: 0.0,
            rep_alpha: 0.5,
            n_steps: 10_000,
            qualify_threshold: 0.5,
            label_flip_prob: 0.05,
            trust_join_threshold: 0.6,
            trust_adapt_rate: 0.1,
            transaction_prob: 0.2,
            transaction_fraction: 0.01,
            spawn_prob: 0.6,
            max_apply_delay: 50,
            credit_noise_sd: 0.2,
            rng_seed: 0,
            score_weights: ScoreWeights::default(),
            group_params: GroupParamsTable::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn with_bias(lbl_beta: f64, rep_alpha: f64) -> Self {
        Self { lbl_beta, rep_alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_err(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        validate_beta(self.lbl_beta)?;
        validate_alpha(self.rep_alpha)?;
        let unit = |key: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(config_err(format!("{key} must be in [0,1], got {v}")))
            }
        };
        if !(self.qualify_threshold > 0.0 && self.qualify_threshold < 1.0) {
            return Err(config_err(format!("qualify_threshold must be in (0,1), got {}", self.qualify_threshold)));
        }
        unit("label_flip_prob", self.label_flip_prob)?;
        unit("trust_join_threshold", self.trust_join_threshold)?;
        unit("transaction_prob", self.transaction_prob)?;
        unit("transaction_fraction", self.transaction_fraction)?;
        unit("spawn_prob", self.spawn_prob)?;
        if !(self.trust_adapt_rate > 0.0 && self.trust_adapt_rate <= 1.0) {
            return Err(config_err(format!("trust_adapt_rate must be in (0,1], got {}", self.trust_adapt_rate)));
        }
        if self.max_apply_delay == 0 {
            return Err(config_err("max_apply_delay must be >= 1"));
        }
        if !(self.credit_noise_sd >= 0.0 && self.credit_noise_sd.is_finite()) {
            return Err(config_err("credit_noise_sd must be >= 0"));
        }
        let w = &self.score_weights;
        let parts = [w.wealth, w.credit_score, w.fin_lit, w.loan_hist, w.has_job, w.has_car, w.has_house];
        if parts.iter().any(|&x| x < 0.0 || !x.is_finite()) || w.total() <= 0.0 {
            return Err(config_err("score_weights must be non-negative with positive sum"));
        }
        if w.loan_hist_cap == 0 {
            return Err(config_err("score_weights.loan_hist_cap must be >= 1"));
        }
        self.group_params.a.validate("a")?;
        self.group_params.b.validate("b")?;
        Ok(())
    }

    /// Wealth bounds used to normalize wealth into [0,1], spanning both groups.
    pub fn wealth_bounds(&self) -> (f64, f64) {
        let a = &self.group_params.a;
        let b = &self.group_params.b;
        (a.wealth_min.min(b.wealth_min), a.wealth_max.max(b.wealth_max))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

pub fn validate_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Config(format!("lbl_beta must be in [0,1), got {beta}")))
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    // alpha = 1 is accepted as the degenerate all-A population.
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("rep_alpha must be in (0,1], got {alpha}")))
    }
}
