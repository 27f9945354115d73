//! Python bindings: ontology and KB queries, dialogue acts, focus-state
//! merging, experiment configs, training/evaluation runs and significance tests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cedm::acts::{parse_act, render_act, FillerValue};
use cedm::belief::{Label, Marginal};
use cedm::harness::{self, MetricsRow, Verdict, ALL_OBJECTS};
use cedm::policy::PolicyKind;
use cedm::usersim::{ErrorModelConfig, OrderMode};

fn err(e: cedm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy_kind(name: &str) -> PyResult<PolicyKind> {
    match name {
        "handcrafted" => Ok(PolicyKind::Handcrafted),
        "cedm" => Ok(PolicyKind::Cedm),
        "mddm" => Ok(PolicyKind::Mddm),
        other => Err(PyValueError::new_err(format!("unknown policy `{other}` (handcrafted, cedm, mddm)"))),
    }
}

fn environment(name: &str) -> PyResult<ErrorModelConfig> {
    match name {
        "env1" => Ok(ErrorModelConfig::env1()),
        "env3" => Ok(ErrorModelConfig::env3()),
        other => Err(PyValueError::new_err(format!("unknown environment `{other}` (env1, env3)"))),
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::ABetter => "a_better",
        Verdict::BBetter => "b_better",
        Verdict::NoDifference => "no_difference",
    }
}

/// Object types and the knowledge base.
#[pyclass(name = "Ontology", module = "pycedm")]
struct PyOntology {
    inner: cedm::ontology::Ontology,
}

#[pymethods]
impl PyOntology {
    /// Built-in restaurant/hotel schema with a KB generated from `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn cambridge(seed: u64) -> Self {
        PyOntology {
            inner: cedm::ontology::Ontology::cambridge(seed),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyOntology {
            inner: cedm::ontology::Ontology::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn types(&self) -> Vec<String> {
        self.inner.types.iter().map(|t| t.name.clone()).collect()
    }

    /// Informable slots of `ty` with their values.
    fn slots(&self, ty: &str) -> PyResult<BTreeMap<String, Vec<String>>> {
        let t = self.inner.object_type(ty).map_err(err)?;
        Ok(t.informable.iter().map(|s| (s.name.clone(), s.values.clone())).collect())
    }

    /// Records of `ty` matching every constraint, as dicts including `name`.
    fn query(&self, ty: &str, constraints: BTreeMap<String, String>) -> PyResult<Vec<BTreeMap<String, String>>> {
        let records = cedm::ontology::query_kb(&self.inner, ty, &constraints).map_err(err)?;
        Ok(records
            .into_iter()
            .map(|r| {
                let mut m = r.values.clone();
                m.insert("name".into(), r.name.clone());
                m
            })
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.kb.len()
    }
}

/// A semantic dialogue act such as `inform(CamRestaurants#food="british")`.
#[pyclass(name = "DialogueAct", module = "pycedm", eq)]
#[derive(PartialEq)]
struct PyDialogueAct {
    inner: cedm::acts::DialogueAct,
}

#[pymethods]
impl PyDialogueAct {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyDialogueAct {
            inner: parse_act(text).map_err(err)?,
        })
    }

    #[getter]
    fn act_type(&self) -> &'static str {
        self.inner.act_type.as_str()
    }

    /// `(entity, slot, kind, value)` per filler; kind is one of `bare`,
    /// `literal`, `dontcare`, `negated`, `relation` (value `entity#slot`).
    #[getter]
    fn fillers(&self) -> Vec<(String, String, &'static str, Option<String>)> {
        self.inner
            .fillers
            .iter()
            .map(|f| {
                let (kind, value) = match &f.value {
                    None => ("bare", None),
                    Some(FillerValue::Literal(v)) => ("literal", Some(v.clone())),
                    Some(FillerValue::Dontcare) => ("dontcare", Some(cedm::ontology::DONTCARE.to_string())),
                    Some(FillerValue::Negated(v)) => ("negated", Some(v.clone())),
                    Some(FillerValue::Relation(q)) => ("relation", Some(q.to_string())),
                };
                (f.slot.entity.clone(), f.slot.slot.clone(), kind, value)
            })
            .collect()
    }

    fn has_relation(&self) -> bool {
        self.inner.has_relation()
    }

    fn __str__(&self) -> String {
        render_act(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("DialogueAct({:?})", render_act(&self.inner))
    }
}

/// Experiment configuration.
#[pyclass(name = "RunConfig", module = "pycedm")]
struct PyRunConfig {
    inner: harness::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Hotel handcrafted and first, restaurant handled by `policy`.
    #[staticmethod]
    fn experiment1(env: &str, r: f64, policy: &str) -> PyResult<Self> {
        let inner = harness::RunConfig::experiment1(env, environment(env)?, r, policy_kind(policy)?);
        inner.validate().map_err(err)?;
        Ok(PyRunConfig { inner })
    }

    /// Both objects handled by `policy`, order alternating.
    #[staticmethod]
    fn experiment2(env: &str, r: f64, policy: &str) -> PyResult<Self> {
        let inner = harness::RunConfig::experiment2(env, environment(env)?, r, policy_kind(policy)?);
        inner.validate().map_err(err)?;
        Ok(PyRunConfig { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig {
            inner: harness::RunConfig::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn train_dialogues(&self) -> usize {
        self.inner.train_dialogues
    }

    #[setter]
    fn set_train_dialogues(&mut self, n: usize) {
        self.inner.train_dialogues = n;
    }

    #[getter]
    fn test_dialogues(&self) -> usize {
        self.inner.test_dialogues
    }

    #[setter]
    fn set_test_dialogues(&mut self, n: usize) {
        self.inner.test_dialogues = n;
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[setter]
    fn set_seeds(&mut self, seeds: Vec<u64>) -> PyResult<()> {
        if seeds.is_empty() {
            return Err(PyValueError::new_err("no seeds"));
        }
        self.inner.seeds = seeds;
        Ok(())
    }

    #[getter]
    fn alternating(&self) -> bool {
        self.inner.order == OrderMode::Alternating
    }
}

fn row_dict<'py>(py: Python<'py>, r: &MetricsRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("experiment", &r.experiment)?;
    d.set_item("env", &r.env)?;
    d.set_item("r", r.r)?;
    d.set_item("policy", &r.policy)?;
    d.set_item("seed", r.seed)?;
    d.set_item("object_position", r.object_position)?;
    d.set_item("object", &r.object)?;
    d.set_item("reward_mean", r.reward_mean)?;
    d.set_item("success_rate", r.success_rate)?;
    d.set_item("n", r.n)?;
    d.set_item("relation_act_rate", r.relation_act_rate)?;
    Ok(d)
}

/// Trains and evaluates every seed of `config`. Returns the metric rows, the
/// CSV text and the summary table. With `output_dir`, also writes the usual
/// run directory (checkpoints, logs, metrics.csv, summary.txt).
#[pyfunction]
#[pyo3(signature = (config, output_dir = None))]
fn run<'py>(py: Python<'py>, config: &PyRunConfig, output_dir: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let ontology = harness::ontology_for(&cfg);
    let (trained, evaluated) = py
        .detach(|| harness::run(&ontology, &cfg))
        .map_err(err)?;
    let rows: Vec<MetricsRow> = evaluated.iter().flat_map(|e| e.rows.iter().cloned()).collect();
    if let Some(dir) = output_dir {
        harness::write_training(&dir, &cfg, &trained).map_err(err)?;
        harness::write_evaluation(&dir, &cfg, &evaluated).map_err(err)?;
    }
    let out = PyDict::new(py);
    let list: Vec<Bound<'py, PyDict>> = rows.iter().map(|r| row_dict(py, r)).collect::<PyResult<_>>()?;
    out.set_item("rows", list)?;
    out.set_item("csv", harness::to_csv(&rows))?;
    out.set_item("summary", harness::summary_table(&cfg, &rows))?;
    let pooled = |position: usize| harness::summarize_position(&rows, position, ALL_OBJECTS);
    let positions: BTreeSet<usize> = rows.iter().map(|r| r.object_position).collect();
    let success: BTreeMap<usize, f64> = positions.iter().map(|p| (*p, pooled(*p).success_rate())).collect();
    out.set_item("success_by_position", success)?;
    Ok(out)
}

fn domain_of(maps: &[&BTreeMap<String, f64>]) -> Arc<[Label]> {
    let mut values: BTreeSet<String> = BTreeSet::new();
    for m in maps {
        values.extend(m.keys().filter(|k| k.as_str() != "NONE").cloned());
    }
    let mut labels = vec![Label::None];
    labels.extend(values.iter().map(|v| Label::value(v)));
    labels.into()
}

fn marginal(domain: &Arc<[Label]>, probs: &BTreeMap<String, f64>) -> PyResult<Marginal> {
    let pairs: Vec<(Label, f64)> = probs
        .iter()
        .map(|(k, p)| (if k == "NONE" { Label::None } else { Label::value(k) }, *p))
        .collect();
    Marginal::from_pairs(domain.clone(), &pairs).map_err(err)
}

fn to_map(m: &Marginal) -> BTreeMap<String, f64> {
    m.iter().map(|(l, p)| (l.as_str().to_string(), p)).collect()
}

/// The related object's belief weighted by a relation with `P(EQUALS) = equals`.
/// Keys are values, `"NONE"` is the no-information label.
#[pyfunction]
#[pyo3(signature = (equals, other, context = None))]
fn weighted_relation_belief(equals: f64, other: BTreeMap<String, f64>, context: Option<String>) -> PyResult<BTreeMap<String, f64>> {
    let mut probs = other.clone();
    if let Some(c) = &context {
        probs.entry(c.clone()).or_insert(0.0);
    }
    let domain = domain_of(&[&probs]);
    let rel = Marginal::from_pairs(
        Marginal::relation_domain(),
        &[(Label::None, 1.0 - equals), (Label::Equals, equals)],
    )
    .map_err(err)?;
    let b = cedm::tracking::weighted_relation_belief(&rel, &marginal(&domain, &probs)?, context.as_deref()).map_err(err)?;
    Ok(to_map(&b))
}

/// Merges an object's slot belief with relation-weighted contributions.
/// Returns `(merged, conflict, weights)`.
#[pyfunction]
fn merge_slot(own: BTreeMap<String, f64>, contributions: Vec<BTreeMap<String, f64>>) -> PyResult<(BTreeMap<String, f64>, bool, Vec<f64>)> {
    let all: Vec<&BTreeMap<String, f64>> = std::iter::once(&own).chain(&contributions).collect();
    let domain = domain_of(&all);
    let own_m = marginal(&domain, &own)?;
    let others = contributions.iter().map(|c| marginal(&domain, c)).collect::<PyResult<Vec<_>>>()?;
    let (m, conflict, weights) = cedm::tracking::merge_slot(&own_m, &others);
    Ok((to_map(&m), conflict, weights))
}

/// Two-sided Welch t-test: `(t, p, df, verdict)`.
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, &'static str)> {
    let (r, df) = harness::welch_t_test(&a, &b).map_err(err)?;
    Ok((r.statistic, r.p_value, df, verdict_name(r.verdict)))
}

/// Pooled two-proportion z-test: `(z, p, verdict)`.
#[pyfunction]
fn two_proportion_z_test(successes_a: usize, n_a: usize, successes_b: usize, n_b: usize) -> PyResult<(f64, f64, &'static str)> {
    let r = harness::two_proportion_z_test(successes_a, n_a, successes_b, n_b).map_err(err)?;
    Ok((r.statistic, r.p_value, verdict_name(r.verdict)))
}

#[pymodule]
fn pycedm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOntology>()?;
    m.add_class::<PyDialogueAct>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_relation_belief, m)?)?;
    m.add_function(wrap_pyfunction!(merge_slot, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(two_proportion_z_test, m)?)?;
    Ok(())
}
