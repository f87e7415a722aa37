use rand::Rng;

use super::{Entity, GroupId, WealthScale};
use crate::config::{validate_beta, ScenarioConfig};
use crate::error::Result;

/// Qualification score in [0,1]: weighted mean of normalized wealth,
/// credit score, financial literacy, capped loan history and the three
/// asset flags.
pub fn score_applicant(e: &Entity, cfg: &ScenarioConfig) -> f64 {
    let w = &cfg.score_weights;
    let scale = WealthScale::from_config(cfg);
    let cap = w.loan_hist_cap as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let sum = w.wealth * scale.normalize(e.wealth)
        + w.credit_score * e.credit_score.clamp(0.0, 1.0)
        + w.fin_lit * e.fin_lit.clamp(0.0, 1.0)
        + w.loan_hist * (e.loan_hist as f64).min(cap) / cap
        + w.has_job * flag(e.has_job)
        + w.has_car * flag(e.has_car)
        + w.has_house * flag(e.has_house);
    (sum / w.total()).clamp(0.0, 1.0)
}

/// Prejudice bias: A scores are scaled by `1 + beta`, B scores by `1 - beta`.
pub fn apply_label_bias(raw_score: f64, group: GroupId, beta: f64) -> Result<f64> {
    validate_beta(beta)?;
    let factor = match group {
        GroupId::A => 1.0 + beta,
        GroupId::B => 1.0 - beta,
    };
    Ok((raw_score * factor).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Label {
    pub qualified: bool,
    pub loan_approved: bool,
    /// Whether measurement noise flipped the thresholded decision.
    pub flipped: bool,
}

/// Thresholds the biased score and flips the decision with
/// `label_flip_prob`. One uniform draw is consumed per call.
pub fn assign_label<R: Rng + ?Sized>(biased_score: f64, cfg: &ScenarioConfig, rng: &mut R) -> Label {
    let decision = biased_score >= cfg.qualify_threshold;
    let flipped = rng.random::<f64>() < cfg.label_flip_prob;
    let label = decision != flipped;
    Label { qualified: label, loan_approved: label, flipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::spawn_entity;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corner(max: bool) -> Entity {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut e = spawn_entity(0, &cfg, &mut rng).unwrap();
        let (lo, hi) = cfg.wealth_bounds();
        e.wealth = if max { hi } else { lo };
        e.credit_score = if max { 1.0 } else { 0.0 };
        e.fin_lit = e.credit_score;
        e.loan_hist = if max { 10 } else { 0 };
        e.has_job = max;
        e.has_car = max;
        e.has_house = max;
        e
    }

    #[test]
    fn corners_of_the_score() {
        let cfg = ScenarioConfig::default();
        let lo = score_applicant(&corner(false), &cfg);
        let hi = score_applicant(&corner(true), &cfg);
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
        assert!(lo <= cfg.qualify_threshold && hi >= cfg.qualify_threshold);
    }

    #[test]
    fn score_is_monotone_in_each_input() {
        let cfg = ScenarioConfig::default();
        let base = corner(false);
        let s0 = score_applicant(&base, &cfg);
        let bumps: Vec<Box<dyn Fn(&mut Entity)>> = vec![
            Box::new(|e| e.wealth += 10.0),
            Box::new(|e| e.credit_score += 0.3),
            Box::new(|e| e.fin_lit += 0.3),
            Box::new(|e| e.loan_hist += 1),
            Box::new(|e| e.has_job = true),
            Box::new(|e| e.has_car = true),
            Box::new(|e| e.has_house = true),
        ];
        for bump in bumps {
            let mut e = base.clone();
            bump(&mut e);
            assert!(score_applicant(&e, &cfg) > s0);
        }
        assert_eq!(score_applicant(&base, &cfg), score_applicant(&base.clone(), &cfg));
    }

    #[test]
    fn label_bias_values() {
        assert_eq!(apply_label_bias(0.5, GroupId::A, 0.0).unwrap(), 0.5);
        assert_eq!(apply_label_bias(0.5, GroupId::B, 0.0).unwrap(), 0.5);
        assert!((apply_label_bias(0.5, GroupId::A, 0.4).unwrap() - 0.7).abs() < 1e-12);
        assert!((apply_label_bias(0.5, GroupId::B, 0.4).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(apply_label_bias(0.9, GroupId::A, 0.5).unwrap(), 1.0);
        assert!(apply_label_bias(0.5, GroupId::A, 1.0).is_err());
        assert!(apply_label_bias(0.5, GroupId::A, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn bias_is_monotone_in_beta(raw in 0.0f64..=1.0, b1 in 0.0f64..0.99, db in 0.0f64..0.99) {
            let b2 = (b1 + db).min(0.999);
            let a1 = apply_label_bias(raw, GroupId::A, b1).unwrap();
            let a2 = apply_label_bias(raw, GroupId::A, b2).unwrap();
            let n1 = apply_label_bias(raw, GroupId::B, b1).unwrap();
            let n2 = apply_label_bias(raw, GroupId::B, b2).unwrap();
            prop_assert!(a2 >= a1);
            prop_assert!(n2 <= n1);
            prop_assert!((0.0..=1.0).contains(&a2) && (0.0..=1.0).contains(&n2));
        }
    }

    #[test]
    fn label_flip_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ScenarioConfig { label_flip_prob: 0.0, ..Default::default() };
        assert!(assign_label(0.8, &cfg, &mut rng).loan_approved);
        assert!(!assign_label(0.2, &cfg, &mut rng).loan_approved);
        let cfg = ScenarioConfig { label_flip_prob: 1.0, ..Default::default() };
        for _ in 0..100 {
            assert!(!assign_label(0.8, &cfg, &mut rng).loan_approved);
            assert!(assign_label(0.2, &cfg, &mut rng).qualified);
        }
    }

    #[test]
    fn flip_rate_matches_noise_level() {
        let cfg = ScenarioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let flips = (0..n).filter(|i| {
            let score = if i % 2 == 0 { 0.9 } else { 0.1 };
            let l = assign_label(score, &cfg, &mut rng);
            l.loan_approved != (score >= cfg.qualify_threshold)
        });
        let rate = flips.count() as f64 / n as f64;
        assert!((rate - 0.05).abs() <= 0.005, "flip rate {rate}");
    }
}
