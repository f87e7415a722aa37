//! Training and evaluation of a single cell under each pipeline.

use super::{CellEval, PipelineSettings, TrainedModel};
use crate::dataset::MaskedDataset;
use crate::error::{Error, Result};
use crate::learners::{
    gbt_append, gbt_fit, log_loss_one, random_search, validation_split, weighted_log_loss, CalibrationBuffer, Classifier,
    GbtModel, HoeffdingTree, IsotonicCalibrator, SearchSpec, StandardScaler, StreamingScaler,
};
use crate::metrics::DecisionRule;
use crate::mitigation::{
    eg_fit, kamiran_calders_weights, manual_weights, EmaReweigher, IncrementalEg, Mitigation, WeightTable,
};
use crate::sim::GroupId;

fn batch_weights(variant: Mitigation, settings: &PipelineSettings, groups: &[GroupId], labels: &[bool]) -> Result<Vec<f64>> {
    let table = match variant {
        Mitigation::ReweightAuto => kamiran_calders_weights(groups, labels)?,
        Mitigation::ReweightManual => manual_weights(settings.manual_weights.0, settings.manual_weights.1)?,
        _ => WeightTable::uniform(),
    };
    Ok(table.weights_for(groups, labels))
}

/// Time-ordered train/test split. On the training part: scaling, random
/// search on the last 20% as validation, then either a calibrated booster
/// fitted on the first 80% or a reduction over the whole training part.
pub(crate) fn run_offline(ds: &MaskedDataset, variant: Mitigation, settings: &PipelineSettings, seed: u64) -> Result<CellEval> {
    let (train, test) = ds.split_at_fraction(settings.train_fraction);
    if train.len() < 10 || test.is_empty() {
        return Err(Error::Invalid(format!("dataset too small for an offline split ({} rows)", ds.len())));
    }
    let (xtr, scaler) = StandardScaler::fit_transform(train.x())?;
    let xte = scaler.transform(test.x());
    let (ytr, gtr) = (train.y(), train.groups());
    let cut = validation_split(train.len());
    let weights = batch_weights(variant, settings, &gtr[..cut], &ytr[..cut])?;
    let val_weights = batch_weights(variant, settings, &gtr[cut..], &ytr[cut..]).unwrap_or_else(|_| vec![1.0; ytr.len() - cut]);
    let ones_val = vec![1.0; ytr.len() - cut];

    let search_weights = if variant.moment().is_some() { vec![1.0; cut] } else { weights.clone() };
    let spec = SearchSpec { n_candidates: settings.offline_candidates, seed };
    let search = random_search(
        &spec,
        |rng| settings.gbt_space.sample(rng),
        |p| {
            let m = gbt_fit(&xtr[..cut], &ytr[..cut], &search_weights, p)?;
            Ok(weighted_log_loss(&m, &xtr[cut..], &ytr[cut..], &ones_val))
        },
    )?;
    let params = search.best.clone();

    if let Some(moment) = variant.moment() {
        let ensemble = eg_fit(&xtr, ytr, gtr, moment, &settings.eg, |x, y, w| gbt_fit(x, y, w, &params))?.pruned();
        let probs = ensemble.predict_proba_batch(&xte);
        return Ok(CellEval {
            probs,
            labels: test.y().to_vec(),
            groups: test.groups().to_vec(),
            rule: DecisionRule::Expected,
            n_train: train.len(),
            eg_converged: Some(ensemble.converged),
            params: serde_json::json!({ "gbt": params, "eg": settings.eg, "search_scores": search.scores }),
            model: TrainedModel::EgOffline { scaler, ensemble },
        });
    }

    let model = gbt_fit(&xtr[..cut], &ytr[..cut], &weights, &params)?;
    let raw_val = model.predict_proba_batch(&xtr[cut..]);
    let calibrator = crate::learners::isotonic_fit_weighted(&raw_val, &ytr[cut..], Some(&val_weights));
    let model = TrainedModel::Gbt { scaler, model, calibrator };
    Ok(CellEval {
        probs: model.predict_proba_batch(test.x()),
        labels: test.y().to_vec(),
        groups: test.groups().to_vec(),
        rule: DecisionRule::default(),
        n_train: train.len(),
        eg_converged: None,
        params: serde_json::json!({ "gbt": params, "search_scores": search.scores }),
        model,
    })
}

/// Prequential loss of a fresh tree over `x`, scored on its last 20%.
fn hoeffding_validation_loss(tree: &mut HoeffdingTree, x: &[Vec<f64>], y: &[bool]) -> f64 {
    let mut scaler = StreamingScaler::new();
    let cut = validation_split(y.len());
    let mut loss = 0.0;
    for (i, (r, &l)) in x.iter().zip(y).enumerate() {
        let z = scaler.update(r);
        if i >= cut {
            loss += log_loss_one(tree.predict_proba(&z), l);
        }
        tree.learn_one(&z, l, 1.0);
    }
    loss / (y.len() - cut).max(1) as f64
}

enum OnlineWeights {
    Uniform,
    Table(WeightTable),
    Ema(EmaReweigher),
}

impl OnlineWeights {
    fn weight(&mut self, g: GroupId, y: bool) -> f64 {
        match self {
            OnlineWeights::Uniform => 1.0,
            OnlineWeights::Table(t) => t.get(g, y),
            OnlineWeights::Ema(r) => r.update(g, y),
        }
    }
}

/// Prequential (test-then-train) run over the time-ordered stream; only
/// predictions after the warmup rows are scored.
pub(crate) fn run_online(ds: &MaskedDataset, variant: Mitigation, settings: &PipelineSettings, seed: u64) -> Result<CellEval> {
    let n = ds.len();
    let warmup = settings.warmup;
    if n <= warmup {
        return Err(Error::Invalid(format!("stream of {n} rows does not outlast the {warmup}-row warmup")));
    }
    let (x, y, g) = (ds.x(), ds.y(), ds.groups());
    let mut probs = Vec::with_capacity(n - warmup);
    let mut scaler = StreamingScaler::new();

    if let Some(moment) = variant.moment() {
        let mut inc: IncrementalEg<GbtModel> = IncrementalEg::new(moment, settings.eg.clone());
        let (mut wx, mut wy, mut wg) = (Vec::new(), Vec::new(), Vec::new());
        let interval = settings.update_interval.max(1);
        let base = settings.online_eg_gbt.clone();
        let mut converged = true;
        for i in 0..n {
            let z = scaler.update(&x[i]);
            if i >= warmup {
                probs.push(inc.predict_proba(&z));
            }
            wx.push(z);
            wy.push(y[i]);
            wg.push(g[i]);
            if wy.len() == interval {
                inc.update(
                    &wx,
                    &wy,
                    &wg,
                    |a, b, c| gbt_fit(a, b, c, &base),
                    |m, a, b, c| gbt_append(m, a, b, c, settings.eg_new_trees),
                )?;
                converged &= inc.ensemble.as_ref().is_some_and(|e| e.converged);
                wx.clear();
                wy.clear();
                wg.clear();
            }
        }
        let windows = inc.windows;
        return Ok(CellEval {
            probs,
            labels: y[warmup..].to_vec(),
            groups: g[warmup..].to_vec(),
            rule: DecisionRule::Expected,
            n_train: n,
            eg_converged: Some(converged),
            params: serde_json::json!({ "gbt": base, "eg": settings.eg, "windows": windows, "new_trees": settings.eg_new_trees }),
            model: TrainedModel::EgOnline { scaler, ensemble: inc.ensemble.map(|e| e.pruned()) },
        });
    }

    let spec = SearchSpec { n_candidates: settings.online_candidates, seed };
    let search = random_search(
        &spec,
        |rng| settings.hoeffding_space.sample(rng),
        |p| Ok(hoeffding_validation_loss(&mut HoeffdingTree::new(p.clone()), &x[..warmup], &y[..warmup])),
    )?;
    let mut tree = HoeffdingTree::new(search.best.clone());
    let mut weights = match variant {
        Mitigation::ReweightAuto => OnlineWeights::Ema(EmaReweigher::new(settings.ema_lambda, settings.ema_clip.0, settings.ema_clip.1)?),
        Mitigation::ReweightManual => {
            OnlineWeights::Table(manual_weights(settings.manual_weights.0, settings.manual_weights.1)?)
        }
        _ => OnlineWeights::Uniform,
    };
    let mut buffer = CalibrationBuffer::new(settings.calibrate_interval, settings.update_interval);
    for i in 0..n {
        let z = scaler.update(&x[i]);
        let raw = tree.predict_proba(&z);
        if i >= warmup {
            probs.push(buffer.calibrate(raw));
        }
        buffer.push(raw, y[i]);
        let w = weights.weight(g[i], y[i]);
        tree.learn_one(&z, y[i], w);
    }
    let calibrator: IsotonicCalibrator = buffer.calibrator.clone();
    Ok(CellEval {
        probs,
        labels: y[warmup..].to_vec(),
        groups: g[warmup..].to_vec(),
        rule: DecisionRule::default(),
        n_train: n,
        eg_converged: None,
        params: serde_json::json!({ "hoeffding": search.best, "search_scores": search.scores, "leaves": tree.n_leaves() }),
        model: TrainedModel::Hoeffding { scaler, model: tree, calibrator },
    })
}
