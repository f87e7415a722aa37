//! Exponentiated-gradient reduction for fairness-constrained
//! classification.
//!
//! Each constraint component γ_k gets a pair of multipliers, one per sign.
//! Multipliers live on the scaled simplex {λ ≥ 0, Σλ ≤ B} through
//! λ = B·exp(θ) / (1 + Σ exp(θ)), and θ moves by η(γ(h_t) − ε) after each
//! best response h_t. Iteration stops once the duality-gap proxy drops below
//! the slack. The returned mixture over all best responses minimizes
//! err(Q) + B·max(0, max_k |γ_k(Q)| − ε), found by a small linear program;
//! the uniform mixture of the best-gap prefix is the fallback when the
//! program fails.

use serde::{Deserialize, Serialize};

use super::moments::ConstraintMoment;
use crate::error::{Error, Result};
use crate::learners::Classifier;
use crate::sim::GroupId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgParams {
    pub eta: f64,
    pub max_iter: usize,
    /// Constraint slack. `f64::INFINITY` disables the constraint.
    pub eps: f64,
    /// Multiplier bound B.
    pub bound: f64,
}

impl Default for EgParams {
    fn default() -> Self {
        Self { eta: 2.0, max_iter: 20, eps: 0.02, bound: 100.0 }
    }
}

/// Hard decision of a member at threshold 0.5.
pub fn hard_vote(p: f64) -> f64 {
    if p >= 0.5 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgEnsemble<M> {
    pub moment: ConstraintMoment,
    pub members: Vec<M>,
    /// Mixing probabilities, one per member.
    pub weights: Vec<f64>,
    /// Multipliers used at each iteration, positive-sign block first.
    pub lambda_history: Vec<Vec<f64>>,
    pub gap: f64,
    pub converged: bool,
    /// Member minimizing the Lagrangian at the averaged multipliers.
    pub cache_index: usize,
}

impl<M: Classifier> EgEnsemble<M> {
    /// Single unconstrained member.
    pub fn single(moment: ConstraintMoment, model: M) -> Self {
        Self {
            moment,
            members: vec![model],
            weights: vec![1.0],
            lambda_history: Vec::new(),
            gap: 0.0,
            converged: true,
            cache_index: 0,
        }
    }
}

impl<M> EgEnsemble<M> {
    /// Drops members with zero mixing weight, keeping the cache member.
    pub fn pruned(self) -> Self {
        let keep: Vec<bool> = self.weights.iter().enumerate().map(|(i, &w)| w > 0.0 || i == self.cache_index).collect();
        let cache_index = keep[..self.cache_index].iter().filter(|&&k| k).count();
        let mut members = Vec::new();
        let mut weights = Vec::new();
        for ((m, w), k) in self.members.into_iter().zip(self.weights).zip(&keep) {
            if *k {
                members.push(m);
                weights.push(w);
            }
        }
        Self { members, weights, cache_index, ..self }
    }
}

impl<M: Classifier> Classifier for EgEnsemble<M> {
    /// Expected decision of the randomized classifier.
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self.members
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(m, w)| w * hard_vote(m.predict_proba(x)))
            .sum()
    }
}

struct Iterate {
    err: f64,
    gamma: Vec<f64>,
}

fn lagrangian(err: f64, gamma: &[f64], lambda: &[f64], eps: f64) -> f64 {
    let k = gamma.len();
    err + (0..k).map(|j| lambda[j] * (gamma[j] - eps) + lambda[k + j] * (-gamma[j] - eps)).sum::<f64>()
}

/// Runs the reduction with `fit(x, relabeled_y, weights)` as the
/// cost-sensitive base learner.
pub fn eg_fit<M, F>(
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[GroupId],
    moment: ConstraintMoment,
    params: &EgParams,
    mut fit: F,
) -> Result<EgEnsemble<M>>
where
    M: Classifier,
    F: FnMut(&[Vec<f64>], &[bool], &[f64]) -> Result<M>,
{
    let n = y.len();
    if n == 0 || x.len() != n || groups.len() != n {
        return Err(Error::Invalid("reduction needs non-empty aligned x, y and groups".into()));
    }
    if params.max_iter == 0 || params.eps.is_nan() || params.eps < 0.0 {
        return Err(Error::Invalid("reduction needs T >= 1 and slack >= 0".into()));
    }
    if params.eps.is_infinite() {
        return Ok(EgEnsemble::single(moment, fit(x, y, &vec![1.0; n])?));
    }
    let (coef, _) = moment.coefficients(groups, y);
    let k = coef.len();
    let nf = n as f64;
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    let mut theta = vec![0.0f64; 2 * k];
    let mut members: Vec<M> = Vec::new();
    let mut iterates: Vec<Iterate> = Vec::new();
    let mut lambdas: Vec<Vec<f64>> = Vec::new();
    let mut lambda_sum = vec![0.0; 2 * k];
    let mut best: Option<(f64, usize)> = None;
    let mut converged = false;

    for _ in 0..params.max_iter {
        let e: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let denom = 1.0 + e.iter().sum::<f64>();
        let lambda: Vec<f64> = e.iter().map(|v| params.bound * v / denom).collect();

        // Cost of predicting 1 versus 0 for each row.
        let mut relabel = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let mut c1 = (1.0 - ys[i]) / nf;
            for j in 0..k {
                c1 += (lambda[j] - lambda[k + j]) * coef[j][i];
            }
            let c0 = ys[i] / nf;
            relabel.push(c1 < c0);
            w.push((c0 - c1).abs() * nf);
        }
        if w.iter().sum::<f64>() <= 0.0 {
            w.iter_mut().for_each(|v| *v = 1.0);
        }
        let model = fit(x, &relabel, &w)?;
        let h: Vec<f64> = x.iter().map(|r| hard_vote(model.predict_proba(r))).collect();
        let err = h.iter().zip(&ys).filter(|(a, b)| a != b).count() as f64 / nf;
        let gamma: Vec<f64> = coef.iter().map(|c| c.iter().zip(&h).map(|(a, b)| a * b).sum()).collect();

        for j in 0..k {
            theta[j] += params.eta * (gamma[j] - params.eps);
            theta[k + j] += params.eta * (-gamma[j] - params.eps);
        }
        members.push(model);
        iterates.push(Iterate { err, gamma });
        lambda_sum.iter_mut().zip(&lambda).for_each(|(s, l)| *s += l);
        lambdas.push(lambda);

        let t = members.len() as f64;
        let lambda_bar: Vec<f64> = lambda_sum.iter().map(|s| s / t).collect();
        let err_q = iterates.iter().map(|it| it.err).sum::<f64>() / t;
        let gamma_q: Vec<f64> = (0..k).map(|j| iterates.iter().map(|it| it.gamma[j]).sum::<f64>() / t).collect();
        let worst = gamma_q.iter().fold(0.0f64, |m, g| m.max(g.abs() - params.eps));
        let l_hi = err_q + params.bound * worst.max(0.0);
        let l_mid = lagrangian(err_q, &gamma_q, &lambda_bar, params.eps);
        let l_lo = iterates
            .iter()
            .map(|it| lagrangian(it.err, &it.gamma, &lambda_bar, params.eps))
            .fold(f64::INFINITY, f64::min);
        let gap = (l_hi - l_mid).max(l_mid - l_lo);
        log::debug!("eg iter {t}: err {err_q:.4} max|gamma| {:.4} gap {gap:.5}", worst + params.eps);
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, members.len()));
        }
        if gap < params.eps {
            converged = true;
            break;
        }
    }

    let (gap, best_t) = best.expect("at least one iteration ran");
    if !converged {
        log::info!("reduction did not converge in {} iterations, best gap {gap:.5}", params.max_iter);
    }
    let t = members.len();
    let lambda_bar: Vec<f64> = lambda_sum.iter().map(|s| s / t as f64).collect();
    let cache_index = (0..t)
        .min_by(|&a, &b| {
            let la = lagrangian(iterates[a].err, &iterates[a].gamma, &lambda_bar, params.eps);
            let lb = lagrangian(iterates[b].err, &iterates[b].gamma, &lambda_bar, params.eps);
            la.total_cmp(&lb)
        })
        .unwrap_or(0);
    let weights = lp_mixture(&iterates, params).unwrap_or_else(|| {
        log::warn!("mixture program failed, using the uniform best-gap mixture");
        (0..t).map(|i| if i < best_t { 1.0 / best_t as f64 } else { 0.0 }).collect()
    });
    Ok(EgEnsemble { moment, members, weights, lambda_history: lambdas, gap, converged, cache_index })
}

/// Mixture over the collected best responses minimizing the bounded
/// Lagrangian's upper envelope.
fn lp_mixture(iterates: &[Iterate], params: &EgParams) -> Option<Vec<f64>> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let q: Vec<_> = iterates.iter().map(|it| lp.add_var(it.err, (0.0, 1.0))).collect();
    let slack = lp.add_var(params.bound, (0.0, f64::INFINITY));
    lp.add_constraint(q.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(), ComparisonOp::Eq, 1.0);
    let k = iterates[0].gamma.len();
    for j in 0..k {
        for sign in [1.0, -1.0] {
            let mut terms: Vec<_> = q.iter().zip(iterates).map(|(&v, it)| (v, sign * it.gamma[j])).collect();
            terms.push((slack, -1.0));
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, params.eps);
        }
    }
    let SolveOutcome::Solution(sol) = lp.solve().ok()? else { return None };
    let mut w: Vec<f64> = q.iter().map(|&v| sol.var_value(v).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= total);
    Some(w)
}

/// Reduction over a stream. The first window runs [`eg_fit`] with `fit`;
/// later windows use `append(cache, ...)` as the base learner, where the
/// cache is the previous window's Lagrangian-best member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalEg<M> {
    pub moment: ConstraintMoment,
    pub params: EgParams,
    pub ensemble: Option<EgEnsemble<M>>,
    pub windows: usize,
}

impl<M: Classifier + Clone> IncrementalEg<M> {
    pub fn new(moment: ConstraintMoment, params: EgParams) -> Self {
        Self { moment, params, ensemble: None, windows: 0 }
    }

    pub fn cache(&self) -> Option<&M> {
        self.ensemble.as_ref().map(|e| &e.members[e.cache_index])
    }

    pub fn update<F, A>(&mut self, x: &[Vec<f64>], y: &[bool], groups: &[GroupId], mut fit: F, mut append: A) -> Result<()>
    where
        F: FnMut(&[Vec<f64>], &[bool], &[f64]) -> Result<M>,
        A: FnMut(&M, &[Vec<f64>], &[bool], &[f64]) -> Result<M>,
    {
        if y.is_empty() {
            return Ok(());
        }
        let next = match self.cache().cloned() {
            None => eg_fit(x, y, groups, self.moment, &self.params, &mut fit)?,
            Some(cache) => eg_fit(x, y, groups, self.moment, &self.params, |xs, ys, ws| append(&cache, xs, ys, ws))?,
        };
        self.ensemble = Some(next);
        self.windows += 1;
        Ok(())
    }
}

impl<M: Classifier> Classifier for IncrementalEg<M> {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self.ensemble.as_ref().map_or(0.5, |e| e.predict_proba(x))
    }
}

/// Feeds the stream to an [`IncrementalEg`] in windows of `cadence` rows.
#[allow(clippy::too_many_arguments)]
pub fn eg_fit_incremental<M, F, A>(
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[GroupId],
    cadence: usize,
    moment: ConstraintMoment,
    params: &EgParams,
    mut fit: F,
    mut append: A,
) -> Result<IncrementalEg<M>>
where
    M: Classifier + Clone,
    F: FnMut(&[Vec<f64>], &[bool], &[f64]) -> Result<M>,
    A: FnMut(&M, &[Vec<f64>], &[bool], &[f64]) -> Result<M>,
{
    if y.is_empty() || cadence == 0 {
        return Err(Error::Invalid("incremental reduction needs a non-empty stream and cadence >= 1".into()));
    }
    let mut inc = IncrementalEg::new(moment, params.clone());
    let mut start = 0;
    while start < y.len() {
        let end = (start + cadence).min(y.len());
        inc.update(&x[start..end], &y[start..end], &groups[start..end], &mut fit, &mut append)?;
        start = end;
    }
    Ok(inc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{gbt_append, gbt_fit, GbtModel, GbtParams};
    use crate::mitigation::constraint_violation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gbt() -> GbtParams {
        GbtParams { n_trees: 20, max_depth: 2, learning_rate: 0.3, min_samples_leaf: 1 }
    }

    /// Label equals group; the first feature leaks the group.
    fn label_is_group(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>, Vec<GroupId>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for i in 0..n {
            let a = i % 2 == 0;
            x.push(vec![if a { 1.0 } else { 0.0 } + rng.random_range(-0.1..0.1), rng.random::<f64>()]);
            y.push(a);
            g.push(if a { GroupId::A } else { GroupId::B });
        }
        (x, y, g)
    }

    fn expected(m: &impl Classifier, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| m.predict_proba(r)).collect()
    }

    fn accuracy(p: &[f64], y: &[bool]) -> f64 {
        p.iter().zip(y).map(|(&q, &l)| if l { q } else { 1.0 - q }).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn unconstrained_is_a_single_plain_fit() {
        let (x, y, g) = label_is_group(200, 1);
        let params = EgParams { eps: f64::INFINITY, ..Default::default() };
        let e = eg_fit(&x, &y, &g, ConstraintMoment::DemographicParity, &params, |a, b, c| gbt_fit(a, b, c, &gbt())).unwrap();
        let base = gbt_fit(&x, &y, &vec![1.0; 200], &gbt()).unwrap();
        assert_eq!(e.members, vec![base.clone()]);
        for r in &x {
            assert_eq!(e.predict_proba(r), hard_vote(base.predict_proba(r)));
        }
    }

    #[test]
    fn dp_closes_the_gap_at_an_accuracy_cost() {
        let (x, y, g) = label_is_group(200, 2);
        let params = EgParams::default();
        let e = eg_fit(&x, &y, &g, ConstraintMoment::DemographicParity, &params, |a, b, c| gbt_fit(a, b, c, &gbt())).unwrap();
        assert!((e.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.weights.iter().all(|&w| w >= 0.0));
        let p = expected(&e, &x);
        let v = constraint_violation(ConstraintMoment::DemographicParity, &p, &g, &y);
        assert!(v.max_abs <= params.eps + 0.05, "gap {}", v.max_abs);
        let base = gbt_fit(&x, &y, &vec![1.0; 200], &gbt()).unwrap();
        let pb: Vec<f64> = x.iter().map(|r| hard_vote(base.predict_proba(r))).collect();
        assert!(accuracy(&p, &y) <= accuracy(&pb, &y));
    }

    #[test]
    fn single_window_matches_batch() {
        let (x, y, g) = label_is_group(150, 3);
        let p = EgParams::default();
        let fit = |a: &[Vec<f64>], b: &[bool], c: &[f64]| gbt_fit(a, b, c, &gbt());
        let app = |m: &GbtModel, a: &[Vec<f64>], b: &[bool], c: &[f64]| gbt_append(m, a, b, c, 5);
        let batch = eg_fit(&x, &y, &g, ConstraintMoment::EqualizedOdds, &p, fit).unwrap();
        let inc = eg_fit_incremental(&x, &y, &g, 1000, ConstraintMoment::EqualizedOdds, &p, fit, app).unwrap();
        assert_eq!(inc.windows, 1);
        assert_eq!(inc.ensemble.unwrap(), batch);
    }

    #[test]
    fn later_windows_extend_the_cache() {
        let (x, y, g) = label_is_group(300, 4);
        let fit = |a: &[Vec<f64>], b: &[bool], c: &[f64]| gbt_fit(a, b, c, &gbt());
        let app = |m: &GbtModel, a: &[Vec<f64>], b: &[bool], c: &[f64]| gbt_append(m, a, b, c, 5);
        let inc = eg_fit_incremental(&x, &y, &g, 100, ConstraintMoment::DemographicParity, &EgParams::default(), fit, app)
            .unwrap();
        assert_eq!(inc.windows, 3);
        assert!(inc.ensemble.unwrap().members.iter().all(|m| m.n_trees() == 30));
    }

    #[test]
    fn pruning_keeps_predictions_and_cache() {
        let (x, y, g) = label_is_group(200, 6);
        let e = eg_fit(&x, &y, &g, ConstraintMoment::DemographicParity, &EgParams::default(), |a, b, c| gbt_fit(a, b, c, &gbt()))
            .unwrap();
        let cache = e.members[e.cache_index].clone();
        let p = e.clone().pruned();
        assert!(p.members.len() <= e.members.len());
        assert_eq!(p.members[p.cache_index], cache);
        for r in &x {
            assert_eq!(p.predict_proba(r), e.predict_proba(r));
        }
    }

    #[test]
    fn bad_inputs_error() {
        let fit = |a: &[Vec<f64>], b: &[bool], c: &[f64]| gbt_fit(a, b, c, &gbt());
        let p = EgParams::default();
        assert!(eg_fit(&[], &[], &[], ConstraintMoment::DemographicParity, &p, fit).is_err());
        let (x, y, g) = label_is_group(10, 5);
        let bad = EgParams { max_iter: 0, ..p };
        assert!(eg_fit(&x, &y, &g, ConstraintMoment::DemographicParity, &bad, fit).is_err());
    }
}
