//! Per-question refinement: enhanced schema, pre-SQL generation, bias
//! elimination, then the execute / reflect / correct loop.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ExecutorConfig};
use crate::exec::{execute, summarize_result, ExecError, ExecutionOutcome};
use crate::llm::{Completion, Gateway, LedgerEntry, Usage};
use crate::prompt::{
    parse_sql_completion, render_correct_prompt, render_elimination_prompt,
    render_generation_prompt, render_reflect_prompt, PromptKind, TranscriptStep, TranscriptView,
};
use crate::schema::{
    introspect_database, render_semantic_schema, retrieve_column_values, ColumnValues,
    DatabaseSchema, SchemaStyle, ValueIndex,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Schema,
    Generation,
    Elimination,
    Adjustment,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Schema => "schema",
            Stage::Generation => "generation",
            Stage::Elimination => "elimination",
            Stage::Adjustment => "adjustment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, err: impl fmt::Display) -> Self {
        Self {
            stage,
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStage {
    Pre,
    Eliminated,
    /// Elimination was disabled or fell back; the SQL is the pre-SQL.
    Passthrough,
    Corrected(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub stage: CandidateStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentStep {
    pub candidate: SqlCandidate,
    pub outcome: ExecutionOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum Terminal {
    Succeeded,
    Exhausted { max_iters: usize },
}

/// The loop's memory: every executed candidate in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentTrace {
    pub steps: Vec<AdjustmentStep>,
    pub terminal: Terminal,
    /// Set when the loop stopped early because a backend call failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AdjustmentTrace {
    pub fn last(&self) -> &AdjustmentStep {
        self.steps.last().expect("trace always has the seed step")
    }

    /// The `previous_information` view of the trace, with the latest step
    /// left open for reflection.
    pub fn transcript(&self) -> TranscriptView {
        let steps = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| TranscriptStep {
                sql: s.candidate.sql.clone(),
                error_message: s.outcome.error_message().unwrap_or_default().to_string(),
                error_reason: s.reflection.clone().filter(|_| i + 1 < self.steps.len()),
                new_sql: self.steps.get(i + 1).map(|n| n.candidate.sql.clone()),
            })
            .collect();
        TranscriptView::new(steps).expect("trace steps form a valid chain")
    }
}

/// Token usage of one question, per (stage, model).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunUsage {
    pub entries: Vec<LedgerEntry>,
}

impl RunUsage {
    pub fn add(&mut self, stage: PromptKind, model_tag: &str, usage: Usage) {
        match self
            .entries
            .iter_mut()
            .find(|e| e.stage == stage && e.model_tag == model_tag)
        {
            Some(e) => {
                e.calls += 1;
                e.usage += usage;
            }
            None => self.entries.push(LedgerEntry {
                stage,
                model_tag: model_tag.to_string(),
                calls: 1,
                usage,
            }),
        }
    }

    pub fn merge(&mut self, other: &RunUsage) {
        for e in &other.entries {
            match self
                .entries
                .iter_mut()
                .find(|s| s.stage == e.stage && s.model_tag == e.model_tag)
            {
                Some(slot) => {
                    slot.calls += e.calls;
                    slot.usage += e.usage;
                }
                None => self.entries.push(e.clone()),
            }
        }
    }

    fn note(&mut self, kind: PromptKind, gateway: &Gateway, c: &Completion) {
        self.add(kind, gateway.model_tag(), c.usage);
    }

    pub fn calls(&self) -> u64 {
        self.entries.iter().map(|e| e.calls).sum()
    }
}

/// Executes a candidate. Statements the read-only guard rejects come back
/// as failed outcomes so the loop can reflect on them; only a database that
/// cannot be opened is an error.
pub fn run_candidate(
    db_path: &Path,
    sql: &str,
    exec: &ExecutorConfig,
) -> Result<ExecutionOutcome, ExecError> {
    match execute(db_path, sql, &exec.limits()) {
        Err(e @ (ExecError::MultipleStatements | ExecError::NotReadOnly)) => {
            Ok(ExecutionOutcome::failure(format!("Error: {e}")))
        }
        other => other,
    }
}

pub fn generate_pre_sql(
    question: &str,
    schema_text: &str,
    generator: &Gateway,
    usage: &mut RunUsage,
) -> Result<SqlCandidate, PipelineError> {
    let prompt = render_generation_prompt(schema_text, question)
        .map_err(|e| PipelineError::new(Stage::Generation, e))?;
    let completion = generator
        .complete(&prompt)
        .map_err(|e| PipelineError::new(Stage::Generation, e))?;
    usage.note(PromptKind::Generation, generator, &completion);
    let sql = parse_sql_completion(&completion.text, PromptKind::Generation)
        .map_err(|e| PipelineError::new(Stage::Generation, e))?;
    Ok(SqlCandidate {
        sql,
        stage: CandidateStage::Pre,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub candidate: SqlCandidate,
    /// Execution of the pre-SQL that was shown to the eliminator.
    pub pre_outcome: Option<ExecutionOutcome>,
    /// Why the pre-SQL was passed through after an eliminator failure.
    pub warning: Option<String>,
}

/// Runs the pre-SQL, shows it and its result to the eliminator, and returns
/// the revised SQL. With `eliminator = None` the pre-SQL passes through
/// untouched. An eliminator failure falls back to the pre-SQL with a
/// warning unless `hard_fail` is set.
#[allow(clippy::too_many_arguments)]
pub fn eliminate_bias(
    question: &str,
    schema_text: &str,
    pre: &SqlCandidate,
    eliminator: Option<&Gateway>,
    db_path: &Path,
    exec: &ExecutorConfig,
    hard_fail: bool,
    usage: &mut RunUsage,
) -> Result<Elimination, PipelineError> {
    let passthrough = |warning, pre_outcome| Elimination {
        candidate: SqlCandidate {
            sql: pre.sql.clone(),
            stage: CandidateStage::Passthrough,
        },
        pre_outcome,
        warning,
    };
    let Some(eliminator) = eliminator else {
        return Ok(passthrough(None, None));
    };
    let outcome = run_candidate(db_path, &pre.sql, exec)
        .map_err(|e| PipelineError::new(Stage::Elimination, e))?;
    let summary = summarize_result(&outcome, exec.summary_rows, exec.summary_chars);
    let prompt = render_elimination_prompt(schema_text, question, &pre.sql, &summary.text)
        .map_err(|e| PipelineError::new(Stage::Elimination, e))?;

    let revised = eliminator
        .complete(&prompt)
        .map_err(|e| e.to_string())
        .and_then(|c| {
            usage.note(PromptKind::Elimination, eliminator, &c);
            parse_sql_completion(&c.text, PromptKind::Elimination).map_err(|e| e.to_string())
        });
    match revised {
        Ok(sql) => Ok(Elimination {
            candidate: SqlCandidate {
                sql,
                stage: CandidateStage::Eliminated,
            },
            pre_outcome: Some(outcome),
            warning: None,
        }),
        Err(msg) if !hard_fail => {
            log::warn!("eliminator failed, keeping pre-SQL: {msg}");
            Ok(passthrough(Some(msg), Some(outcome)))
        }
        Err(msg) => Err(PipelineError::new(Stage::Elimination, msg)),
    }
}

/// Execute / reflect / correct until the SQL runs or `max_iters`
/// corrections have been tried. Every reflect and correct prompt carries the
/// full history of failed SQL, errors, reasons and replacements.
#[allow(clippy::too_many_arguments)]
pub fn adjust(
    question: &str,
    schema_text: &str,
    seed: SqlCandidate,
    generator: &Gateway,
    db_path: &Path,
    exec: &ExecutorConfig,
    max_iters: usize,
    usage: &mut RunUsage,
) -> Result<AdjustmentTrace, PipelineError> {
    let mut steps: Vec<AdjustmentStep> = Vec::new();
    let mut current = seed;
    for iteration in 0..=max_iters {
        let outcome = run_candidate(db_path, &current.sql, exec)
            .map_err(|e| PipelineError::new(Stage::Adjustment, e))?;
        let succeeded = outcome.is_success();
        steps.push(AdjustmentStep {
            candidate: current.clone(),
            outcome,
            reflection: None,
        });
        if succeeded {
            return Ok(AdjustmentTrace {
                steps,
                terminal: Terminal::Succeeded,
                error: None,
            });
        }
        if iteration == max_iters {
            break;
        }
        match reflect_and_correct(question, schema_text, &mut steps, generator, usage) {
            Ok(sql) => {
                current = SqlCandidate {
                    sql,
                    stage: CandidateStage::Corrected(iteration + 1),
                }
            }
            Err(msg) => {
                log::warn!("adjustment stopped early: {msg}");
                return Ok(AdjustmentTrace {
                    steps,
                    terminal: Terminal::Exhausted { max_iters },
                    error: Some(msg),
                });
            }
        }
    }
    Ok(AdjustmentTrace {
        steps,
        terminal: Terminal::Exhausted { max_iters },
        error: None,
    })
}

fn reflect_and_correct(
    question: &str,
    schema_text: &str,
    steps: &mut [AdjustmentStep],
    generator: &Gateway,
    usage: &mut RunUsage,
) -> Result<String, String> {
    let view = AdjustmentTrace {
        steps: steps.to_vec(),
        terminal: Terminal::Succeeded,
        error: None,
    }
    .transcript();

    let prompt = render_reflect_prompt(schema_text, question, &view).map_err(|e| e.to_string())?;
    let c = generator.complete(&prompt).map_err(|e| e.to_string())?;
    usage.note(PromptKind::Reflect, generator, &c);
    let reason = parse_sql_completion(&c.text, PromptKind::Reflect).map_err(|e| e.to_string())?;
    steps.last_mut().expect("non-empty").reflection = Some(reason.clone());

    let prompt =
        render_correct_prompt(schema_text, question, &view, &reason).map_err(|e| e.to_string())?;
    let c = generator.complete(&prompt).map_err(|e| e.to_string())?;
    usage.note(PromptKind::Correct, generator, &c);
    parse_sql_completion(&c.text, PromptKind::Correct).map_err(|e| e.to_string())
}

/// Introspected schema plus value index for one database.
#[derive(Debug)]
pub struct PreparedDb {
    pub schema: DatabaseSchema,
    pub index: ValueIndex,
}

type Slot = Arc<OnceLock<Result<Arc<PreparedDb>, String>>>;

/// Lazily built, shared per-database schema and index. Optionally persists
/// indexes as `<cache_dir>/<db_id>.index.json`.
#[derive(Debug, Default)]
pub struct SchemaCache {
    slots: Mutex<HashMap<PathBuf, Slot>>,
    cache_dir: Option<PathBuf>,
}

impl SchemaCache {
    pub fn new(cache_dir: Option<PathBuf>) -> Self {
        Self {
            slots: Mutex::default(),
            cache_dir,
        }
    }

    pub fn get(
        &self,
        db_path: &Path,
        cfg: &crate::schema::EnhancementConfig,
    ) -> Result<Arc<PreparedDb>, PipelineError> {
        let slot = {
            let mut slots = self.slots.lock().expect("schema cache poisoned");
            slots.entry(db_path.to_path_buf()).or_default().clone()
        };
        slot.get_or_init(|| self.prepare(db_path, cfg).map(Arc::new))
            .clone()
            .map_err(|m| PipelineError::new(Stage::Schema, m))
    }

    fn prepare(
        &self,
        db_path: &Path,
        cfg: &crate::schema::EnhancementConfig,
    ) -> Result<PreparedDb, String> {
        let schema = introspect_database(db_path).map_err(|e| e.to_string())?;
        let cached = self
            .cache_file(&schema.db_id)
            .and_then(|p| load_index(&p, cfg));
        let index = match cached {
            Some(index) => index,
            None => {
                let index = ValueIndex::build(db_path, &schema, cfg).map_err(|e| e.to_string())?;
                if let Some(path) = self.cache_file(&schema.db_id) {
                    if let Err(e) = save_index(&path, &index) {
                        log::warn!("cannot write index cache {}: {e}", path.display());
                    }
                }
                index
            }
        };
        Ok(PreparedDb { schema, index })
    }

    fn cache_file(&self, db_id: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("{db_id}.index.json")))
    }
}

fn load_index(path: &Path, cfg: &crate::schema::EnhancementConfig) -> Option<ValueIndex> {
    let text = std::fs::read_to_string(path).ok()?;
    let index: ValueIndex = serde_json::from_str(&text).ok()?;
    (index.k1() == cfg.k1 && index.b() == cfg.b && index.per_column_cap() == cfg.per_column_cap)
        .then_some(index)
}

pub fn save_index(path: &Path, index: &ValueIndex) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let json = serde_json::to_string(index).map_err(std::io::Error::other)?;
    std::fs::write(path, json)
}

#[derive(Debug, Clone)]
pub struct Backends {
    pub generator: Gateway,
    pub eliminator: Gateway,
}

/// One question to answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub question: String,
    pub db_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub id: String,
    pub question: String,
    pub db_id: String,
    pub final_sql: String,
    pub pre_sql: String,
    pub eliminated_sql: String,
    pub trace: AdjustmentTrace,
    pub usage: RunUsage,
    /// The adjustment loop ran out of iterations without a runnable SQL.
    pub exhausted: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub struct Pipeline {
    config: Config,
    backends: Backends,
    cache: Arc<SchemaCache>,
}

impl Pipeline {
    pub fn new(config: Config, backends: Backends) -> Self {
        Self::with_cache(config, backends, Arc::new(SchemaCache::default()))
    }

    pub fn with_cache(config: Config, backends: Backends, cache: Arc<SchemaCache>) -> Self {
        Self {
            config,
            backends,
            cache,
        }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn prepared(&self, db_path: &Path) -> Result<Arc<PreparedDb>, PipelineError> {
        self.cache.get(db_path, &self.config.enhancement)
    }

    /// Schema text for `question`: enhanced with retrieved values, or the
    /// plain schema when SES is off.
    pub fn schema_text(&self, db_path: &Path, question: &str) -> Result<String, PipelineError> {
        let db = self.prepared(db_path)?;
        let (values, style) = if self.config.pipeline.ses {
            (
                retrieve_column_values(&db.index, question, &self.config.enhancement),
                SchemaStyle::Enhanced,
            )
        } else {
            (ColumnValues::new(), SchemaStyle::Standard)
        };
        render_semantic_schema(&db.schema, &values, style)
            .map_err(|e| PipelineError::new(Stage::Schema, e))
    }

    /// Pre-SQL only.
    pub fn generate(&self, task: &Task) -> Result<(SqlCandidate, RunUsage), PipelineError> {
        let schema_text = self.schema_text(&task.db_path, &task.question)?;
        let mut usage = RunUsage::default();
        let pre = generate_pre_sql(
            &task.question,
            &schema_text,
            &self.backends.generator,
            &mut usage,
        )?;
        self.backends.generator.ledger().record_query();
        Ok((pre, usage))
    }

    pub fn run(&self, task: &Task) -> Result<PipelineResult, PipelineError> {
        let cfg = &self.config.pipeline;
        let exec = &self.config.executor;
        let db = self.prepared(&task.db_path)?;
        let schema_text = self.schema_text(&task.db_path, &task.question)?;
        let mut usage = RunUsage::default();

        let pre = generate_pre_sql(
            &task.question,
            &schema_text,
            &self.backends.generator,
            &mut usage,
        )?;
        let elim = eliminate_bias(
            &task.question,
            &schema_text,
            &pre,
            cfg.abe.then_some(&self.backends.eliminator),
            &task.db_path,
            exec,
            cfg.elim_hard_fail,
            &mut usage,
        )?;
        let max_iters = if cfg.dea { cfg.max_iters } else { 0 };
        let trace = adjust(
            &task.question,
            &schema_text,
            elim.candidate.clone(),
            &self.backends.generator,
            &task.db_path,
            exec,
            max_iters,
            &mut usage,
        )?;
        self.backends.generator.ledger().record_query();

        let mut warnings: Vec<String> = elim.warning.into_iter().collect();
        if let Some(e) = &trace.error {
            warnings.push(e.clone());
        }
        Ok(PipelineResult {
            id: task.id.clone(),
            question: task.question.clone(),
            db_id: db.schema.db_id.clone(),
            final_sql: trace.last().candidate.sql.clone(),
            pre_sql: pre.sql,
            eliminated_sql: elim.candidate.sql,
            exhausted: matches!(trace.terminal, Terminal::Exhausted { .. }),
            trace,
            usage,
            warnings,
        })
    }

    /// Runs every task with at most `pipeline.parallelism` in flight.
    /// Results come back in input order.
    pub fn run_batch(&self, tasks: &[Task]) -> Vec<Result<PipelineResult, PipelineError>> {
        self.in_pool(|| tasks.par_iter().map(|t| self.run(t)).collect())
    }

    pub fn generate_batch(
        &self,
        tasks: &[Task],
    ) -> Vec<Result<(SqlCandidate, RunUsage), PipelineError>> {
        self.in_pool(|| tasks.par_iter().map(|t| self.generate(t)).collect())
    }

    pub(crate) fn in_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.pipeline.parallelism.max(1))
            .build()
        {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("thread pool unavailable ({e}); running serially");
                f()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CostLedger, ScriptEntry, ScriptFile, ScriptedBackend};

    fn fixture() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shop.sqlite");
        let conn = rusqlite::Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE item (id INTEGER PRIMARY KEY, name TEXT, price REAL);
             INSERT INTO item VALUES (1, 'lamp', 9.5), (2, 'desk', 120.0);",
        )
        .unwrap();
        (dir, path)
    }

    fn gateway(responses: &[&str]) -> Gateway {
        let script = ScriptFile::queue(responses.iter().map(|r| ScriptEntry::text(*r)).collect());
        Config::default().gateway.gateway(
            Arc::new(ScriptedBackend::from_script(script)),
            Arc::new(CostLedger::new()),
        )
    }

    fn seed(sql: &str) -> SqlCandidate {
        SqlCandidate {
            sql: sql.into(),
            stage: CandidateStage::Pre,
        }
    }

    #[test]
    fn successful_seed_makes_no_calls() {
        let (_d, db) = fixture();
        let gw = gateway(&[]);
        let mut usage = RunUsage::default();
        let trace = adjust(
            "q",
            "table item",
            seed("SELECT name FROM item"),
            &gw,
            &db,
            &ExecutorConfig::default(),
            5,
            &mut usage,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.terminal, Terminal::Succeeded);
        assert!(trace.steps[0].reflection.is_none());
        assert_eq!(usage.calls(), 0);
    }

    #[test]
    fn fixed_after_one_correction() {
        let (_d, db) = fixture();
        let gw = gateway(&["the column is called name", " name FROM item"]);
        let mut usage = RunUsage::default();
        let trace = adjust(
            "q",
            "table item",
            seed("SELECT title FROM item"),
            &gw,
            &db,
            &ExecutorConfig::default(),
            5,
            &mut usage,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.terminal, Terminal::Succeeded);
        assert_eq!(
            trace.steps[0].reflection.as_deref(),
            Some("the column is called name")
        );
        assert_eq!(trace.last().candidate.stage, CandidateStage::Corrected(1));
        assert_eq!(trace.last().candidate.sql, "SELECT name FROM item");
    }

    #[test]
    fn never_fixing_exhausts() {
        let (_d, db) = fixture();
        let gw = gateway(&["r", "nope", "r", "nope", "r", "nope"]);
        let mut usage = RunUsage::default();
        let trace = adjust(
            "q",
            "table item",
            seed("SELECT nope"),
            &gw,
            &db,
            &ExecutorConfig::default(),
            3,
            &mut usage,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.terminal, Terminal::Exhausted { max_iters: 3 });
        assert!(trace.error.is_none());
    }

    #[test]
    fn backend_failure_mid_loop_is_annotated() {
        let (_d, db) = fixture();
        let gw = gateway(&["reason"]);
        let mut usage = RunUsage::default();
        let trace = adjust(
            "q",
            "table item",
            seed("SELECT nope"),
            &gw,
            &db,
            &ExecutorConfig::default(),
            3,
            &mut usage,
        )
        .unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert!(matches!(trace.terminal, Terminal::Exhausted { .. }));
        assert!(trace.error.unwrap().contains("script exhausted"));
    }

    #[test]
    fn write_statements_become_failures() {
        let (_d, db) = fixture();
        let out = run_candidate(&db, "DELETE FROM item", &ExecutorConfig::default()).unwrap();
        assert!(!out.is_success());
        let out = run_candidate(&db, "SELECT 1; SELECT 2", &ExecutorConfig::default()).unwrap();
        assert!(!out.is_success());
    }

    #[test]
    fn eliminator_failure_falls_back_unless_hard() {
        let (_d, db) = fixture();
        let gw = gateway(&[]);
        let pre = seed("SELECT name FROM item");
        let mut usage = RunUsage::default();
        let soft = eliminate_bias(
            "q",
            "table item",
            &pre,
            Some(&gw),
            &db,
            &ExecutorConfig::default(),
            false,
            &mut usage,
        )
        .unwrap();
        assert_eq!(soft.candidate.sql, pre.sql);
        assert_eq!(soft.candidate.stage, CandidateStage::Passthrough);
        assert!(soft.warning.is_some());
        let hard = eliminate_bias(
            "q",
            "table item",
            &pre,
            Some(&gw),
            &db,
            &ExecutorConfig::default(),
            true,
            &mut usage,
        );
        assert_eq!(hard.unwrap_err().stage, Stage::Elimination);
    }
}
