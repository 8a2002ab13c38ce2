//! Gold-annotated examples and the bias-eliminator training corpus.
//!
//! Each training pair shows the eliminator a question, its enhanced schema,
//! the generator's pre-SQL and that SQL's execution result. The target is
//! the pre-SQL itself when it already reproduces the gold result, and the
//! gold SQL otherwise.

use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::{results_equal, summarize_result, ExecError, ExecutionOutcome};
use crate::pipeline::{generate_pre_sql, run_candidate, Pipeline, RunUsage};
use crate::prompt::{render_elimination_prompt, PromptError, INPUT_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [
        Difficulty::Simple,
        Difficulty::Moderate,
        Difficulty::Challenging,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Challenging => "challenging",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" | "easy" => Ok(Difficulty::Simple),
            "moderate" | "medium" => Ok(Difficulty::Moderate),
            "challenging" | "hard" => Ok(Difficulty::Challenging),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldExample {
    pub id: String,
    pub question: String,
    pub db_id: String,
    pub gold_sql: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    pub db_path: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("database `{db_id}` not found at {path}")]
    MissingDatabase { db_id: String, path: PathBuf },
    #[error("gold SQL did not execute successfully")]
    GoldNotSuccess,
    #[error("{0}")]
    Exec(#[from] ExecError),
    #[error("{0}")]
    Prompt(#[from] PromptError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Deserialize)]
struct RawExample {
    question: String,
    db_id: String,
    #[serde(default)]
    query: Option<String>,
    #[serde(default, rename = "SQL")]
    sql: Option<String>,
    #[serde(default)]
    difficulty: Option<String>,
    #[serde(default)]
    question_id: Option<serde_json::Value>,
    #[serde(default)]
    id: Option<serde_json::Value>,
}

pub fn database_path(databases_dir: &Path, db_id: &str) -> PathBuf {
    databases_dir.join(db_id).join(format!("{db_id}.sqlite"))
}

/// Loads a Spider (`query`) or BIRD (`SQL`, `difficulty`) style JSON array.
/// Ids come from `question_id` or `id` when present, else the array index.
pub fn load_dataset(path: &Path, databases_dir: &Path) -> Result<Vec<GoldExample>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |message: String| DatasetError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let raw: Vec<RawExample> = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let gold_sql = r
                .sql
                .or(r.query)
                .ok_or_else(|| malformed(format!("entry {i} has neither `query` nor `SQL`")))?;
            let difficulty = r
                .difficulty
                .map(|d| d.parse::<Difficulty>())
                .transpose()
                .map_err(|e| malformed(format!("entry {i}: {e}")))?;
            let db_path = database_path(databases_dir, &r.db_id);
            if !db_path.is_file() {
                return Err(DatasetError::MissingDatabase {
                    db_id: r.db_id,
                    path: db_path,
                });
            }
            let id = match r.question_id.or(r.id) {
                Some(serde_json::Value::String(s)) => s,
                Some(v) => v.to_string(),
                None => i.to_string(),
            };
            Ok(GoldExample {
                id,
                question: r.question,
                db_id: r.db_id,
                gold_sql,
                difficulty,
                db_path,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetLabel {
    KeptPre,
    KeptGold,
}

/// The pre-SQL is the target iff it ran and returned the gold result set.
pub fn select_target(
    pre_outcome: &ExecutionOutcome,
    gold_outcome: &ExecutionOutcome,
    pre_sql: &str,
    gold_sql: &str,
) -> Result<(String, TargetLabel), DatasetError> {
    let gold_rows = gold_outcome.rows().ok_or(DatasetError::GoldNotSuccess)?;
    Ok(match pre_outcome.rows() {
        Some(pre_rows) if results_equal(pre_rows, gold_rows) => {
            (pre_sql.to_string(), TargetLabel::KeptPre)
        }
        _ => (gold_sql.to_string(), TargetLabel::KeptGold),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub id: String,
    pub question: String,
    pub db_id: String,
    pub db_path: PathBuf,
    pub schema_text: String,
    pub pre_sql: String,
    pub result_summary: String,
    pub gold_sql: String,
    pub target: String,
    pub label: TargetLabel,
}

impl TrainingPair {
    pub fn prompt_text(&self) -> Result<String, PromptError> {
        render_elimination_prompt(
            &self.schema_text,
            &self.question,
            &self.pre_sql,
            &self.result_summary,
        )
        .map(|p| p.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedExample {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusBuild {
    pub pairs: Vec<TrainingPair>,
    pub skipped: Vec<SkippedExample>,
    pub usage: RunUsage,
}

impl CorpusBuild {
    pub fn kept_pre(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| p.label == TargetLabel::KeptPre)
            .count()
    }

    pub fn kept_gold(&self) -> usize {
        self.pairs.len() - self.kept_pre()
    }

    pub fn kept_pre_fraction(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.kept_pre() as f64 / self.pairs.len() as f64
        }
    }
}

enum PairResult {
    Pair(TrainingPair, RunUsage),
    Skipped(SkippedExample),
}

/// Builds one training pair per example using the pipeline's generator and
/// schema settings. Examples whose gold SQL fails, or whose generation call
/// fails, are skipped with a reason; a missing database is a hard error.
/// Output order follows input order.
pub fn build_training_pairs(
    pipeline: &Pipeline,
    examples: &[GoldExample],
) -> Result<CorpusBuild, DatasetError> {
    for ex in examples {
        if !ex.db_path.is_file() {
            return Err(DatasetError::MissingDatabase {
                db_id: ex.db_id.clone(),
                path: ex.db_path.clone(),
            });
        }
    }
    let results: Vec<Result<PairResult, DatasetError>> = pipeline.in_pool(|| {
        examples
            .par_iter()
            .map(|ex| build_pair(pipeline, ex))
            .collect()
    });

    let mut build = CorpusBuild::default();
    for r in results {
        match r? {
            PairResult::Pair(pair, usage) => {
                build.usage.merge(&usage);
                build.pairs.push(pair);
            }
            PairResult::Skipped(s) => {
                log::warn!("skipping example {}: {}", s.id, s.reason);
                build.skipped.push(s);
            }
        }
    }
    Ok(build)
}

fn build_pair(pipeline: &Pipeline, ex: &GoldExample) -> Result<PairResult, DatasetError> {
    let exec = &pipeline.config().executor;
    let skip = |reason: String| {
        Ok(PairResult::Skipped(SkippedExample {
            id: ex.id.clone(),
            reason,
        }))
    };
    let gold_outcome = run_candidate(&ex.db_path, &ex.gold_sql, exec)?;
    if !gold_outcome.is_success() {
        return skip(format!(
            "gold SQL failed: {}",
            gold_outcome.error_message().unwrap_or_default()
        ));
    }
    let schema_text = match pipeline.schema_text(&ex.db_path, &ex.question) {
        Ok(s) => s,
        Err(e) => return skip(e.to_string()),
    };
    let mut usage = RunUsage::default();
    let pre = match generate_pre_sql(
        &ex.question,
        &schema_text,
        &pipeline.backends().generator,
        &mut usage,
    ) {
        Ok(pre) => pre,
        Err(e) => return skip(e.to_string()),
    };
    pipeline.backends().generator.ledger().record_query();
    let pre_outcome = run_candidate(&ex.db_path, &pre.sql, exec)?;
    let summary = summarize_result(&pre_outcome, exec.summary_rows, exec.summary_chars);
    let (target, label) = select_target(&pre_outcome, &gold_outcome, &pre.sql, &ex.gold_sql)?;
    Ok(PairResult::Pair(
        TrainingPair {
            id: ex.id.clone(),
            question: ex.question.clone(),
            db_id: ex.db_id.clone(),
            db_path: ex.db_path.clone(),
            schema_text,
            pre_sql: pre.sql,
            result_summary: summary.text,
            gold_sql: ex.gold_sql.clone(),
            target,
            label,
        },
        usage,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub passed: usize,
    pub failed: Vec<String>,
}

impl SelfCheck {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }
}

/// Re-executes both SQLs of every pair and re-applies `select_target`;
/// a pair passes when the stored target and label are reproduced.
pub fn self_check(pairs: &[TrainingPair], exec: &crate::config::ExecutorConfig) -> SelfCheck {
    let verdicts: Vec<bool> = pairs
        .par_iter()
        .map(|p| {
            let redo = || -> Result<(String, TargetLabel), DatasetError> {
                let pre = run_candidate(&p.db_path, &p.pre_sql, exec)?;
                let gold = run_candidate(&p.db_path, &p.gold_sql, exec)?;
                select_target(&pre, &gold, &p.pre_sql, &p.gold_sql)
            };
            redo().is_ok_and(|(t, l)| t == p.target && l == p.label)
        })
        .collect();
    let failed: Vec<String> = pairs
        .iter()
        .zip(&verdicts)
        .filter(|(_, ok)| !**ok)
        .map(|(p, _)| p.id.clone())
        .collect();
    SelfCheck {
        passed: pairs.len() - failed.len(),
        failed,
    }
}

/// One instruction-tuning record. `instruction` followed by `input` is the
/// elimination prompt exactly; `input` starts at `### Input:`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl SftRecord {
    pub fn from_pair(pair: &TrainingPair) -> Result<Self, PromptError> {
        let text = pair.prompt_text()?;
        let at = text
            .find(INPUT_MARKER)
            .expect("elimination prompt contains the input marker");
        Ok(Self {
            instruction: text[..at].to_string(),
            input: text[at..].to_string(),
            output: pair.target.clone(),
        })
    }

    pub fn prompt(&self) -> String {
        format!("{}{}", self.instruction, self.input)
    }
}

/// Writes one JSON object per line and returns the number written.
pub fn serialize_sft(pairs: &[TrainingPair], out_path: &Path) -> Result<usize, DatasetError> {
    let write_err = |source| DatasetError::Write {
        path: out_path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(out_path).map_err(write_err)?;
    let mut out = BufWriter::new(file);
    for pair in pairs {
        let line = serde_json::to_string(&SftRecord::from_pair(pair)?).expect("record serializes");
        writeln!(out, "{line}").map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    Ok(pairs.len())
}

pub fn read_sft(path: &Path) -> Result<Vec<SftRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| DatasetError::Malformed {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}
