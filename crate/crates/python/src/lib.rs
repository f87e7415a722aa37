//! Python bindings: simulation, reweighing, learners, the fairness
//! reduction, metrics, explanations and the experiment runner.
//!
//! Structured results (rows, reports, run records) cross the boundary as
//! plain dicts and lists.

use std::path::PathBuf;

use biassim::explain::{build_interaction_graph, shapley_order2, ValueFunction};
use biassim::learners::{gbt_fit, isotonic_fit, Classifier, GbtModel, GbtParams, HoeffdingParams, HoeffdingTree, IsotonicCalibrator};
use biassim::metrics::{fairness_metrics, performance_metrics};
use biassim::mitigation::{eg_fit, kamiran_calders_weights, ConstraintMoment, EgEnsemble, EgParams, EmaReweigher, Mitigation};
use biassim::runner::{run_plan, ExperimentPlan, Pipeline};
use biassim::{GroupId, ScenarioConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: biassim::Error) -> PyErr {
    match e {
        biassim::Error::Io(e) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any().unbind(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

fn group(s: &str) -> PyResult<GroupId> {
    GroupId::parse(s).ok_or_else(|| PyValueError::new_err(format!("group must be 'A' or 'B', got {s:?}")))
}

fn groups(v: &[String]) -> PyResult<Vec<GroupId>> {
    v.iter().map(|s| group(s)).collect()
}

fn moment(name: &str) -> PyResult<ConstraintMoment> {
    match name {
        "dp" => Ok(ConstraintMoment::DemographicParity),
        "eo" => Ok(ConstraintMoment::EqualizedOdds),
        _ => Err(PyValueError::new_err(format!("constraint must be 'dp' or 'eo', got {name:?}"))),
    }
}

/// Runs the simulator and returns one dict per labeled application.
#[pyfunction]
#[pyo3(signature = (lbl=0.0, rep=0.5, n_steps=2000, seed=0))]
fn simulate(py: Python<'_>, lbl: f64, rep: f64, n_steps: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let cfg = ScenarioConfig { n_steps, rng_seed: seed, ..ScenarioConfig::with_bias(lbl, rep) };
    let rows = py.detach(|| biassim::run_simulation(&cfg)).map_err(err)?;
    to_py(py, &rows)
}

/// Kamiran–Calders weights as {"A": [w_neg, w_pos], "B": [w_neg, w_pos]}.
#[pyfunction]
fn kamiran_calders(py: Python<'_>, groups_: Vec<String>, labels: Vec<bool>) -> PyResult<Py<PyAny>> {
    let t = kamiran_calders_weights(&groups(&groups_)?, &labels).map_err(err)?;
    let d = PyDict::new(py);
    for g in GroupId::ALL {
        d.set_item(g.as_str(), t.w[g.index()].to_vec())?;
    }
    Ok(d.into_any().unbind())
}

/// Streaming reweigher with exponentially decayed estimates.
#[pyclass(name = "EmaReweigher")]
struct PyEmaReweigher(EmaReweigher);

#[pymethods]
impl PyEmaReweigher {
    #[new]
    #[pyo3(signature = (decay=0.01, w_min=0.1, w_max=10.0))]
    fn new(decay: f64, w_min: f64, w_max: f64) -> PyResult<Self> {
        Ok(Self(EmaReweigher::new(decay, w_min, w_max).map_err(err)?))
    }

    /// Updates the estimates with one observation and returns its weight.
    fn update(&mut self, group_: &str, label: bool) -> PyResult<f64> {
        Ok(self.0.update(group(group_)?, label))
    }

    fn weight(&self, group_: &str, label: bool) -> PyResult<f64> {
        Ok(self.0.weight(group(group_)?, label))
    }

    #[getter]
    fn count(&self) -> u64 {
        self.0.count
    }
}

#[pyclass(name = "IsotonicCalibrator")]
struct PyIsotonic(IsotonicCalibrator);

#[pymethods]
impl PyIsotonic {
    fn transform(&self, scores: Vec<f64>) -> Vec<f64> {
        scores.iter().map(|&s| self.0.transform(s)).collect()
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }
}

#[pyfunction]
fn isotonic(scores: Vec<f64>, labels: Vec<bool>) -> PyIsotonic {
    PyIsotonic(isotonic_fit(&scores, &labels))
}

/// Any fitted model exposed to Python.
enum Model {
    Gbt(GbtModel),
    Hoeffding(HoeffdingTree),
    Eg(EgEnsemble<GbtModel>),
}

impl Classifier for Model {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Model::Gbt(m) => m.predict_proba(x),
            Model::Hoeffding(m) => m.predict_proba(x),
            Model::Eg(m) => m.predict_proba(x),
        }
    }
}

#[pyclass(name = "Model")]
struct PyModel(Model);

#[pymethods]
impl PyModel {
    fn predict_proba(&self, py: Python<'_>, x: Vec<Vec<f64>>) -> Vec<f64> {
        py.detach(|| self.0.predict_proba_batch(&x))
    }

    /// Feeds one example to an incremental tree.
    #[pyo3(signature = (x, y, weight=1.0))]
    fn learn_one(&mut self, x: Vec<f64>, y: bool, weight: f64) -> PyResult<()> {
        match &mut self.0 {
            Model::Hoeffding(t) => {
                t.learn_one(&x, y, weight);
                Ok(())
            }
            _ => Err(PyValueError::new_err("only Hoeffding trees learn incrementally")),
        }
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0 {
            Model::Gbt(_) => "gbt",
            Model::Hoeffding(_) => "hoeffding",
            Model::Eg(_) => "eg",
        }
    }

    /// Duality-gap estimate of a reduction, None for plain learners.
    #[getter]
    fn gap(&self) -> Option<f64> {
        match &self.0 {
            Model::Eg(e) => Some(e.gap),
            _ => None,
        }
    }

    #[getter]
    fn converged(&self) -> Option<bool> {
        match &self.0 {
            Model::Eg(e) => Some(e.converged),
            _ => None,
        }
    }

    /// Mixture weights of a reduction's members.
    #[getter]
    fn weights(&self) -> Option<Vec<f64>> {
        match &self.0 {
            Model::Eg(e) => Some(e.weights.clone()),
            _ => None,
        }
    }

    /// Exact order-2 Shapley–Taylor explanation of `instance` against a
    /// background sample, as a dict with the interaction graph attached.
    #[pyo3(signature = (background, instance, feature_names, top_k=10))]
    fn explain(
        &self,
        py: Python<'_>,
        background: Vec<Vec<f64>>,
        instance: Vec<f64>,
        feature_names: Vec<String>,
        top_k: usize,
    ) -> PyResult<Py<PyAny>> {
        let (expl, graph) = py
            .detach(|| {
                let vf = ValueFunction::new(&self.0, &background, &instance)?;
                let expl = shapley_order2(&vf, feature_names)?;
                let graph = build_interaction_graph(&expl, top_k);
                Ok::<_, biassim::Error>((expl, graph))
            })
            .map_err(err)?;
        let d = to_py(py, &expl)?;
        let bound = d.bind(py).cast::<PyDict>()?;
        bound.set_item("hub_concentration", expl.hub_concentration())?;
        bound.set_item("efficiency_residual", expl.efficiency_residual())?;
        bound.set_item("graph", to_py(py, &graph)?)?;
        bound.set_item("dot", graph.to_dot())?;
        Ok(d)
    }
}

fn weights_or_ones(w: Option<Vec<f64>>, n: usize) -> Vec<f64> {
    w.unwrap_or_else(|| vec![1.0; n])
}

/// Gradient-boosted trees on the logistic loss.
#[pyfunction]
#[pyo3(signature = (x, y, weights=None, n_trees=100, max_depth=3, learning_rate=0.1))]
fn fit_gbt(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    weights: Option<Vec<f64>>,
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
) -> PyResult<PyModel> {
    let w = weights_or_ones(weights, y.len());
    let params = GbtParams { n_trees, max_depth, learning_rate, ..GbtParams::default() };
    let m = py.detach(|| gbt_fit(&x, &y, &w, &params)).map_err(err)?;
    Ok(PyModel(Model::Gbt(m)))
}

/// An empty Hoeffding tree to be trained with `learn_one`.
#[pyfunction]
#[pyo3(signature = (grace_period=200, delta=1e-7, tau=0.05))]
fn hoeffding_tree(grace_period: usize, delta: f64, tau: f64) -> PyModel {
    let params = HoeffdingParams { grace_period, delta, tau, ..HoeffdingParams::default() };
    PyModel(Model::Hoeffding(HoeffdingTree::new(params)))
}

/// Exponentiated-gradient reduction over boosted trees under a demographic
/// parity ("dp") or equalized odds ("eo") constraint.
#[pyfunction]
#[pyo3(signature = (x, y, groups_, constraint="dp", eps=0.02, max_iter=20, n_trees=50, max_depth=3))]
#[allow(clippy::too_many_arguments)]
fn fit_eg(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<bool>,
    groups_: Vec<String>,
    constraint: &str,
    eps: f64,
    max_iter: usize,
    n_trees: usize,
    max_depth: usize,
) -> PyResult<PyModel> {
    let g = groups(&groups_)?;
    let m = moment(constraint)?;
    let params = EgParams { eps, max_iter, ..EgParams::default() };
    let gbt = GbtParams { n_trees, max_depth, ..GbtParams::default() };
    let e = py.detach(|| eg_fit(&x, &y, &g, m, &params, |a, b, c| gbt_fit(a, b, c, &gbt))).map_err(err)?;
    Ok(PyModel(Model::Eg(e)))
}

/// Accuracy, precision, recall, log loss and ROC AUC at a threshold.
#[pyfunction]
#[pyo3(signature = (probs, labels, threshold=0.5))]
fn performance(py: Python<'_>, probs: Vec<f64>, labels: Vec<bool>, threshold: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &performance_metrics(&probs, &labels, threshold))
}

/// SPD and EOD (group B minus group A) from decisions in [0, 1].
#[pyfunction]
fn fairness(py: Python<'_>, decisions: Vec<f64>, labels: Vec<bool>, groups_: Vec<String>) -> PyResult<Py<PyAny>> {
    to_py(py, &fairness_metrics(&decisions, &labels, &groups(&groups_)?))
}

/// Runs an experiment plan and returns {"records": [...], "summary": {...}}.
/// `plan_toml` overrides the desk-scale default plan; the keyword
/// arguments override the plan.
#[pyfunction]
#[pyo3(signature = (out_dir=None, plan_toml=None, lbl=None, rep=None, seeds=None, variants=None, pipelines=None, n_steps=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    out_dir: Option<PathBuf>,
    plan_toml: Option<&str>,
    lbl: Option<Vec<f64>>,
    rep: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    variants: Option<Vec<String>>,
    pipelines: Option<Vec<String>>,
    n_steps: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let mut plan = match plan_toml {
        Some(t) => ExperimentPlan::from_toml_str(t).map_err(err)?,
        None => ExperimentPlan::desk(),
    };
    plan.out_dir = out_dir.or(plan.out_dir);
    if let Some(v) = lbl {
        plan.lbl_values = v;
    }
    if let Some(v) = rep {
        plan.rep_values = v;
    }
    if let Some(v) = seeds {
        plan.seeds = v;
    }
    if let Some(n) = n_steps {
        plan.n_steps = n;
    }
    if let Some(v) = variants {
        plan.variants = v
            .iter()
            .map(|s| Mitigation::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown variant {s:?}"))))
            .collect::<PyResult<_>>()?;
    }
    if let Some(v) = pipelines {
        plan.pipelines = v
            .iter()
            .map(|s| Pipeline::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown pipeline {s:?}"))))
            .collect::<PyResult<_>>()?;
    }
    let outcome = py.detach(|| run_plan(&plan)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("records", to_py(py, &outcome.records)?)?;
    d.set_item("summary", to_py(py, &outcome.summary)?)?;
    Ok(d.into_any().unbind())
}

#[pymodule]
fn biassim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(kamiran_calders, m)?)?;
    m.add_function(wrap_pyfunction!(isotonic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gbt, m)?)?;
    m.add_function(wrap_pyfunction!(hoeffding_tree, m)?)?;
    m.add_function(wrap_pyfunction!(fit_eg, m)?)?;
    m.add_function(wrap_pyfunction!(performance, m)?)?;
    m.add_function(wrap_pyfunction!(fairness, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<PyEmaReweigher>()?;
    m.add_class::<PyIsotonic>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
