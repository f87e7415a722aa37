use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{Entity, EntityState, GroupId};
use crate::config::{validate_alpha, ScenarioConfig, EDUCATION_LEVELS};
use crate::error::{Error, Result};

const MAX_EDUCATION: f64 = (EDUCATION_LEVELS - 1) as f64;

/// Requested loan amount as a share of wealth, drawn log-uniformly.
const LOAN_SHARE_RANGE: (f64, f64) = (0.3, 0.36);

/// Maps raw wealth onto [0,1] using the population-wide wealth range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WealthScale {
    pub min: f64,
    pub max: f64,
}

impl WealthScale {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let (min, max) = cfg.wealth_bounds();
        Self { min, max }
    }

    pub fn normalize(&self, wealth: f64) -> f64 {
        if self.max <= self.min {
            return if wealth >= self.max { 1.0 } else { 0.0 };
        }
        ((wealth - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

fn education_norm(education: u8) -> f64 {
    (education as f64 / MAX_EDUCATION).clamp(0.0, 1.0)
}

/// Trust from education and wealth: an equal blend of both, normalized.
pub fn derive_trust(education: u8, wealth: f64, scale: WealthScale) -> f64 {
    (0.5 * education_norm(education) + 0.5 * scale.normalize(wealth)).clamp(0.0, 1.0)
}

/// Financial literacy from education, wealth and trust.
pub fn derive_finlit(education: u8, wealth: f64, trust: f64, scale: WealthScale) -> f64 {
    let v = 0.4 * education_norm(education) + 0.3 * scale.normalize(wealth) + 0.3 * trust.clamp(0.0, 1.0);
    v.clamp(0.0, 1.0)
}

/// Credit score: affine in normalized wealth, capped loan history and
/// financial literacy, plus Gaussian noise, clamped to [0,1].
pub(crate) fn derive_credit_score<R: Rng + ?Sized>(e: &Entity, cfg: &ScenarioConfig, scale: WealthScale, rng: &mut R) -> f64 {
    let cap = cfg.score_weights.loan_hist_cap as f64;
    let hist = (e.loan_hist as f64).min(cap) / cap;
    let noise = if cfg.credit_noise_sd > 0.0 {
        Normal::new(0.0, cfg.credit_noise_sd).expect("validated sd").sample(rng)
    } else {
        0.0
    };
    (0.5 * scale.normalize(e.wealth) + 0.2 * hist + 0.3 * e.fin_lit + noise).clamp(0.0, 1.0)
}

/// Draws a new entity. The group is A with probability `rep_alpha`.
pub fn spawn_entity<R: Rng + ?Sized>(id: u64, cfg: &ScenarioConfig, rng: &mut R) -> Result<Entity> {
    validate_alpha(cfg.rep_alpha)?;
    let scale = WealthScale::from_config(cfg);
    let group = if rng.random::<f64>() < cfg.rep_alpha { GroupId::A } else { GroupId::B };
    let params = cfg.group_params.get(group);

    let wealth = if params.wealth_max > params.wealth_min {
        rng.random_range(params.wealth_min..=params.wealth_max)
    } else {
        params.wealth_min
    };
    let education = WeightedIndex::new(params.education)
        .map_err(|e| Error::Config(format!("education distribution: {e}")))?
        .sample(rng) as u8;
    let has_job = rng.random_bool(params.p_job);
    let has_car = rng.random_bool(params.p_car);
    let has_house = rng.random_bool(params.p_house);
    let loan_hist = if params.loan_hist_mean > 0.0 {
        Poisson::new(params.loan_hist_mean).expect("validated mean").sample(rng) as u32
    } else {
        0
    };
    let (lo, hi) = LOAN_SHARE_RANGE;
    let share = rng.random_range(lo.ln()..=hi.ln()).exp();
    let loan_amount = wealth * share;

    let trust = derive_trust(education, wealth, scale);
    let fin_lit = derive_finlit(education, wealth, trust, scale);
    let mut e = Entity {
        id,
        group,
        wealth,
        education,
        trust,
        fin_lit,
        has_job,
        has_car,
        has_house,
        loan_hist,
        credit_score: 0.0,
        loan_amount,
        state: EntityState::Active,
    };
    e.credit_score = derive_credit_score(&e, cfg, scale, rng);
    Ok(e)
}
