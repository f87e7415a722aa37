//! Fairness constraint moments. Every component is linear in the
//! predictions, which is what the reduction relies on.

use serde::{Deserialize, Serialize};

use crate::sim::GroupId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMoment {
    /// One component per group: P(ŷ=1 | g) − P(ŷ=1).
    DemographicParity,
    /// One component per (group, label): P(ŷ=1 | g, y) − P(ŷ=1 | y).
    EqualizedOdds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Signed gaps, ordered by group then label.
    pub gamma: Vec<f64>,
    /// Components whose conditioning event was empty; their gap reads 0.
    pub undefined: Vec<bool>,
    pub max_abs: f64,
}

impl Violation {
    pub fn any_undefined(&self) -> bool {
        self.undefined.iter().any(|&u| u)
    }
}

impl ConstraintMoment {
    pub fn n_components(self) -> usize {
        match self {
            ConstraintMoment::DemographicParity => 2,
            ConstraintMoment::EqualizedOdds => 4,
        }
    }

    pub fn component_names(self) -> Vec<String> {
        match self {
            ConstraintMoment::DemographicParity => GroupId::ALL.iter().map(|g| g.to_string()).collect(),
            ConstraintMoment::EqualizedOdds => {
                GroupId::ALL.iter().flat_map(|g| [format!("{g},y=0"), format!("{g},y=1")]).collect()
            }
        }
    }

    /// Row coefficients `c_k` with γ_k(h) = Σ_i c_k[i] · h_i, plus the
    /// undefined flags.
    pub fn coefficients(self, groups: &[GroupId], labels: &[bool]) -> (Vec<Vec<f64>>, Vec<bool>) {
        let n = groups.len();
        let mut coef = vec![vec![0.0; n]; self.n_components()];
        let mut undefined = vec![false; self.n_components()];
        match self {
            ConstraintMoment::DemographicParity => {
                for g in GroupId::ALL {
                    let k = g.index();
                    let ng = groups.iter().filter(|&&x| x == g).count();
                    if ng == 0 {
                        undefined[k] = true;
                        continue;
                    }
                    for i in 0..n {
                        coef[k][i] = if groups[i] == g { 1.0 / ng as f64 } else { 0.0 } - 1.0 / n as f64;
                    }
                }
            }
            ConstraintMoment::EqualizedOdds => {
                for g in GroupId::ALL {
                    for y in [false, true] {
                        let k = 2 * g.index() + y as usize;
                        let ny = labels.iter().filter(|&&l| l == y).count();
                        let ngy = groups.iter().zip(labels).filter(|&(&gg, &l)| gg == g && l == y).count();
                        if ngy == 0 {
                            undefined[k] = true;
                            continue;
                        }
                        for i in 0..n {
                            if labels[i] == y {
                                coef[k][i] = if groups[i] == g { 1.0 / ngy as f64 } else { 0.0 } - 1.0 / ny as f64;
                            }
                        }
                    }
                }
            }
        }
        (coef, undefined)
    }
}

/// Signed violation of `moment` by predictions in [0, 1] (hard 0/1 or
/// expected probabilities).
pub fn constraint_violation(moment: ConstraintMoment, preds: &[f64], groups: &[GroupId], labels: &[bool]) -> Violation {
    let (coef, undefined) = moment.coefficients(groups, labels);
    let gamma: Vec<f64> = coef.iter().map(|c| c.iter().zip(preds).map(|(a, p)| a * p).sum()).collect();
    if undefined.iter().any(|&u| u) {
        log::warn!("{moment:?}: empty conditioning event, component reported as 0");
    }
    let max_abs = gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Violation { gamma, undefined, max_abs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use GroupId::{A, B};

    #[test]
    fn equal_rates_have_no_dp_gap() {
        let g = [A, A, B, B];
        let p = [1.0, 0.0, 0.0, 1.0];
        let v = constraint_violation(ConstraintMoment::DemographicParity, &p, &g, &[true, false, true, false]);
        assert!(v.max_abs.abs() < 1e-15);
    }

    #[test]
    fn dp_gap_from_reported_rates_and_supports() {
        let mut g = vec![A; 616];
        g.extend(vec![B; 605]);
        let p: Vec<f64> = g.iter().map(|&x| if x == A { 0.718 } else { 0.055 }).collect();
        let y = vec![false; g.len()];
        let v = constraint_violation(ConstraintMoment::DemographicParity, &p, &g, &y);
        let pooled: f64 = (0.718 * 616.0 + 0.055 * 605.0) / 1221.0;
        assert!((pooled - 0.390).abs() < 1e-3);
        let want = f64::max((0.718 - pooled).abs(), (0.055 - pooled).abs());
        assert!((v.max_abs - want).abs() < 1e-12);
    }

    #[test]
    fn constant_classifier_has_no_eo_gap() {
        let g = [A, A, A, B, B, B];
        let y = [true, false, true, false, false, true];
        for c in [0.0, 0.3, 1.0] {
            let v = constraint_violation(ConstraintMoment::EqualizedOdds, &[c; 6], &g, &y);
            assert!(v.max_abs < 1e-12);
        }
    }

    #[test]
    fn empty_cell_is_flagged_as_zero() {
        let v = constraint_violation(ConstraintMoment::EqualizedOdds, &[1.0, 0.0, 1.0], &[A, A, B], &[true, false, false]);
        assert_eq!(v.undefined, vec![false, false, false, true]);
        assert_eq!(v.gamma[3], 0.0);
        let v = constraint_violation(ConstraintMoment::DemographicParity, &[1.0, 0.0], &[A, A], &[true, false]);
        assert_eq!(v.undefined, vec![false, true]);
    }

    proptest! {
        #[test]
        fn coefficients_match_direct_rates(rows in proptest::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..1.0), 1..80)) {
            let g: Vec<GroupId> = rows.iter().map(|r| if r.0 { A } else { B }).collect();
            let y: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let mean = |f: &dyn Fn(usize) -> bool| {
                let idx: Vec<usize> = (0..p.len()).filter(|&i| f(i)).collect();
                if idx.is_empty() { None } else { Some(idx.iter().map(|&i| p[i]).sum::<f64>() / idx.len() as f64) }
            };
            let dp = constraint_violation(ConstraintMoment::DemographicParity, &p, &g, &y);
            let all = mean(&|_| true).unwrap();
            for grp in GroupId::ALL {
                let want = mean(&|i| g[i] == grp).map_or(0.0, |m| m - all);
                prop_assert!((dp.gamma[grp.index()] - want).abs() < 1e-9);
            }
            let eo = constraint_violation(ConstraintMoment::EqualizedOdds, &p, &g, &y);
            for grp in GroupId::ALL {
                for lbl in [false, true] {
                    let want = match (mean(&|i| g[i] == grp && y[i] == lbl), mean(&|i| y[i] == lbl)) {
                        (Some(a), Some(b)) => a - b,
                        _ => 0.0,
                    };
                    prop_assert!((eo.gamma[2 * grp.index() + lbl as usize] - want).abs() < 1e-9);
                }
            }
        }
    }
}
