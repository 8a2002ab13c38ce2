use std::path::{Path, PathBuf};
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use seasql::config::{BackendSpec, Config};
use seasql::exec::{results_equal, summarize_result, ExecutionOutcome};
use seasql::llm::CostLedger;
use seasql::pipeline::{run_candidate, Backends, Pipeline, Task};
use seasql::schema::{
    introspect_database, render_semantic_schema, retrieve_column_values, ColumnValues,
    DatabaseSchema, SchemaStyle, ValueIndex,
};

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn load_config(path: Option<PathBuf>) -> PyResult<Config> {
    match path {
        Some(p) => Config::load(&p).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(Config::default()),
    }
}

/// Parses a JSON string into Python objects via the stdlib `json` module.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Introspected schema plus its value index.
#[pyclass(name = "SchemaIndex", module = "seasql_py")]
struct PySchemaIndex {
    schema: DatabaseSchema,
    index: ValueIndex,
    config: Config,
}

#[pymethods]
impl PySchemaIndex {
    #[new]
    #[pyo3(signature = (db_path, config_path=None))]
    fn new(db_path: PathBuf, config_path: Option<PathBuf>) -> PyResult<Self> {
        let config = load_config(config_path)?;
        let schema = introspect_database(&db_path).map_err(runtime_err)?;
        let index =
            ValueIndex::build(&db_path, &schema, &config.enhancement).map_err(runtime_err)?;
        Ok(Self {
            schema,
            index,
            config,
        })
    }

    #[getter]
    fn db_id(&self) -> &str {
        &self.schema.db_id
    }

    fn tables(&self) -> Vec<String> {
        self.schema.tables.iter().map(|t| t.name.clone()).collect()
    }

    /// Question-relevant example values keyed by `table.column`.
    fn retrieve(&self, question: &str) -> Vec<(String, Vec<String>)> {
        retrieve_column_values(&self.index, question, &self.config.enhancement)
            .into_iter()
            .map(|(col, vals)| (col.to_string(), vals))
            .collect()
    }

    #[pyo3(signature = (question=None, enhanced=true))]
    fn render(&self, question: Option<&str>, enhanced: bool) -> PyResult<String> {
        let (values, style) = match (question, enhanced) {
            (Some(q), true) => (
                retrieve_column_values(&self.index, q, &self.config.enhancement),
                SchemaStyle::Enhanced,
            ),
            _ => (ColumnValues::new(), SchemaStyle::Standard),
        };
        render_semantic_schema(&self.schema, &values, style).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SchemaIndex(db_id={:?}, tables={})",
            self.schema.db_id,
            self.schema.tables.len()
        )
    }
}

/// The full refinement pipeline over one backend.
#[pyclass(name = "Pipeline", module = "seasql_py")]
struct PyPipeline {
    inner: Pipeline,
    ledger: Arc<CostLedger>,
}

#[pymethods]
impl PyPipeline {
    /// `backend` is `http` or `scripted:<file>`.
    #[new]
    #[pyo3(signature = (backend, config_path=None, ablate=Vec::new()))]
    fn new(backend: &str, config_path: Option<PathBuf>, ablate: Vec<String>) -> PyResult<Self> {
        let mut config = load_config(config_path)?;
        for a in ablate {
            config
                .pipeline
                .ablate(a.parse().map_err(PyValueError::new_err)?);
        }
        let spec: BackendSpec = backend.parse().map_err(PyValueError::new_err)?;
        let be = spec.instantiate().map_err(runtime_err)?;
        let ledger = Arc::new(CostLedger::new());
        let backends = Backends {
            generator: config.gateway.gateway(be.clone(), ledger.clone()),
            eliminator: config.gateway.gateway(be, ledger.clone()),
        };
        Ok(Self {
            inner: Pipeline::new(config, backends),
            ledger,
        })
    }

    /// Runs one question; returns the result record as a dict.
    fn run<'py>(
        &self,
        py: Python<'py>,
        question: &str,
        db_path: PathBuf,
    ) -> PyResult<Bound<'py, PyAny>> {
        let task = Task {
            id: "0".into(),
            question: question.into(),
            db_path,
        };
        let result = self.inner.run(&task).map_err(runtime_err)?;
        to_py(py, &result)
    }

    /// Pre-SQL only.
    fn generate(&self, question: &str, db_path: PathBuf) -> PyResult<String> {
        let task = Task {
            id: "0".into(),
            question: question.into(),
            db_path,
        };
        self.inner
            .generate(&task)
            .map(|(c, _)| c.sql)
            .map_err(runtime_err)
    }

    fn cost_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = self
            .ledger
            .report(&self.inner.config().gateway.prices)
            .map_err(runtime_err)?;
        to_py(py, &report)
    }
}

fn run(db_path: &Path, sql: &str, timeout_s: f64) -> PyResult<ExecutionOutcome> {
    let mut exec = Config::default().executor;
    exec.timeout_s = timeout_s;
    run_candidate(db_path, sql, &exec).map_err(runtime_err)
}

/// Executes read-only SQL; returns `{"status": ..., "rows"|"error_message": ..., "elapsed": ...}`.
#[pyfunction]
#[pyo3(signature = (db_path, sql, timeout_s=30.0))]
fn execute<'py>(
    py: Python<'py>,
    db_path: PathBuf,
    sql: &str,
    timeout_s: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &run(&db_path, sql, timeout_s)?)
}

/// True when both queries run and return the same set of rows.
#[pyfunction]
#[pyo3(signature = (db_path, pred_sql, gold_sql, timeout_s=30.0))]
fn same_result(db_path: PathBuf, pred_sql: &str, gold_sql: &str, timeout_s: f64) -> PyResult<bool> {
    let p = run(&db_path, pred_sql, timeout_s)?;
    let g = run(&db_path, gold_sql, timeout_s)?;
    Ok(match (p.rows(), g.rows()) {
        (Some(a), Some(b)) => results_equal(a, b),
        _ => false,
    })
}

#[pyfunction]
#[pyo3(signature = (db_path, sql, max_rows=10, max_chars=500))]
fn summarize(db_path: PathBuf, sql: &str, max_rows: usize, max_chars: usize) -> PyResult<String> {
    Ok(summarize_result(&run(&db_path, sql, 30.0)?, max_rows, max_chars).text)
}

#[pyfunction]
fn generation_prompt(schema_text: &str, question: &str) -> PyResult<String> {
    seasql::prompt::render_generation_prompt(schema_text, question)
        .map(|p| p.text)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn elimination_prompt(
    schema_text: &str,
    question: &str,
    sql: &str,
    result: &str,
) -> PyResult<String> {
    seasql::prompt::render_elimination_prompt(schema_text, question, sql, result)
        .map(|p| p.text)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn classify_error(pred_sql: &str, gold_sql: &str) -> &'static str {
    let o = ExecutionOutcome::failure("");
    seasql::eval::classify_error(pred_sql, gold_sql, &o, &o).as_str()
}

/// Scores a predictions JSONL file; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (dataset, db_dir, predictions, config_path=None))]
fn evaluate<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    db_dir: PathBuf,
    predictions: PathBuf,
    config_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    use seasql::eval::{evaluate, load_dataset, read_predictions, EvalReport};
    let config = load_config(config_path)?;
    let examples = load_dataset(&dataset, &db_dir).map_err(runtime_err)?;
    let preds = read_predictions(&predictions).map_err(runtime_err)?;
    let records = evaluate(
        &examples,
        &preds,
        &config.executor,
        config.pipeline.parallelism,
    )
    .map_err(runtime_err)?;
    let report = EvalReport::new(&records, None, Some(config)).map_err(runtime_err)?;
    to_py(py, &report)
}

/// Builds the eliminator corpus and writes it as JSONL. Returns counts.
#[pyfunction]
#[pyo3(signature = (dataset, db_dir, backend, out, config_path=None))]
fn build_dataset<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    db_dir: PathBuf,
    backend: &str,
    out: PathBuf,
    config_path: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    use seasql::dataset::{build_training_pairs, load_dataset, self_check, serialize_sft};
    let pipeline = PyPipeline::new(backend, config_path, Vec::new())?;
    let examples = load_dataset(&dataset, &db_dir).map_err(runtime_err)?;
    let build = build_training_pairs(&pipeline.inner, &examples).map_err(runtime_err)?;
    let written = serialize_sft(&build.pairs, &out).map_err(runtime_err)?;
    let check = self_check(&build.pairs, &pipeline.inner.config().executor);
    let d = PyDict::new(py);
    d.set_item("written", written)?;
    d.set_item("kept_pre", build.kept_pre())?;
    d.set_item("kept_gold", build.kept_gold())?;
    d.set_item("skipped", build.skipped.len())?;
    d.set_item("self_check_passed", check.passed)?;
    Ok(d)
}

#[pymodule]
fn seasql_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchemaIndex>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(execute, m)?)?;
    m.add_function(wrap_pyfunction!(same_result, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(generation_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(elimination_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(classify_error, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    Ok(())
}
