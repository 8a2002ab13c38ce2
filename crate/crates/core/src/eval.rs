//! Scoring predictions against gold SQL: execution accuracy, valid
//! efficiency score, and a heuristic error taxonomy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ExecutorConfig};
use crate::dataset::{Difficulty, GoldExample};
use crate::exec::{median, results_equal, timed_execute, ExecError, ExecutionOutcome};
use crate::llm::CostReport;
use crate::pipeline::run_candidate;

pub use crate::dataset::load_dataset;

/// Bounds on the per-query efficiency ratio.
pub const RATIO_MIN: f64 = 0.25;
pub const RATIO_MAX: f64 = 4.0;

/// Wall-clock timings from concurrent queries would contaminate each other.
static TIMING_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no records to score")]
    Empty,
    #[error("record {0} is correct but has no timing")]
    MissingTiming(String),
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub db_id: String,
    #[serde(alias = "final_sql")]
    pub sql: String,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let read_err = |message: String| EvalError::Read {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| read_err(format!("line {}: {e}", n + 1))))
        .collect()
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<(), EvalError> {
    write_jsonl(path, predictions)
}

/// One JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), EvalError> {
    let write_err = |source| EvalError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(std::fs::File::create(path).map_err(write_err)?);
    for item in items {
        let line = serde_json::to_string(item).expect("record serializes");
        writeln!(out, "{line}").map_err(write_err)?;
    }
    out.flush().map_err(write_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    SchemaLinking,
    Join,
    GroupBy,
    Nesting,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 5] = [
        ErrorCategory::SchemaLinking,
        ErrorCategory::Join,
        ErrorCategory::GroupBy,
        ErrorCategory::Nesting,
        ErrorCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::SchemaLinking => "schema_linking",
            ErrorCategory::Join => "join",
            ErrorCategory::GroupBy => "group_by",
            ErrorCategory::Nesting => "nesting",
            ErrorCategory::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub db_id: String,
    pub predicted_sql: String,
    pub gold_sql: String,
    pub pred_outcome: ExecutionOutcome,
    pub gold_outcome: ExecutionOutcome,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_category: Option<ErrorCategory>,
}

/// sqrt(median gold time / median predicted time), clamped.
pub fn efficiency_ratio(gold: &[Duration], pred: &[Duration]) -> Option<f64> {
    let g = median(gold)?.as_secs_f64();
    let p = median(pred)?.as_secs_f64();
    let r = if p > 0.0 { (g / p).sqrt() } else { RATIO_MAX };
    Some(if r.is_nan() {
        1.0
    } else {
        r.clamp(RATIO_MIN, RATIO_MAX)
    })
}

/// Executes every prediction and its gold SQL, and times correct pairs.
/// A question with no prediction is scored as a failed empty query.
pub fn evaluate(
    examples: &[GoldExample],
    predictions: &[Prediction],
    exec: &ExecutorConfig,
    parallelism: usize,
) -> Result<Vec<EvalRecord>, EvalError> {
    let by_id: HashMap<&str, &Prediction> =
        predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let run = || {
        examples
            .par_iter()
            .map(|ex| evaluate_one(ex, by_id.get(ex.id.as_str()).map(|p| p.sql.as_str()), exec))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

fn evaluate_one(
    ex: &GoldExample,
    pred_sql: Option<&str>,
    exec: &ExecutorConfig,
) -> Result<EvalRecord, EvalError> {
    let gold_outcome = run_candidate(&ex.db_path, &ex.gold_sql, exec)?;
    let pred_outcome = match pred_sql {
        Some(sql) => run_candidate(&ex.db_path, sql, exec)?,
        None => ExecutionOutcome::failure("Error: no prediction"),
    };
    let correct = match (pred_outcome.rows(), gold_outcome.rows()) {
        (Some(p), Some(g)) => results_equal(p, g),
        _ => false,
    };
    let pred_sql = pred_sql.unwrap_or_default();
    let efficiency_ratio = if correct {
        let limits = exec.limits();
        let reps = exec.timing_repetitions.max(1);
        let _guard = TIMING_LOCK.lock().unwrap_or_else(|p| p.into_inner());
        let gold_t = timed_execute(&ex.db_path, &ex.gold_sql, reps, &limits)?;
        let pred_t = timed_execute(&ex.db_path, pred_sql, reps, &limits)?;
        efficiency_ratio(&gold_t, &pred_t)
    } else {
        None
    };
    let error_category =
        (!correct).then(|| classify_error(pred_sql, &ex.gold_sql, &pred_outcome, &gold_outcome));
    Ok(EvalRecord {
        id: ex.id.clone(),
        db_id: ex.db_id.clone(),
        predicted_sql: pred_sql.to_string(),
        gold_sql: ex.gold_sql.clone(),
        pred_outcome,
        gold_outcome,
        correct,
        efficiency_ratio,
        difficulty: ex.difficulty,
        error_category,
    })
}

pub fn compute_ex(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64)
}

pub fn compute_ves(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for r in records.iter().filter(|r| r.correct) {
        sum += r
            .efficiency_ratio
            .ok_or_else(|| EvalError::MissingTiming(r.id.clone()))?;
    }
    Ok(sum / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierScore {
    pub count: usize,
    pub correct: usize,
    pub ex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub ex: f64,
    /// Only tiers present in the dataset.
    pub ex_by_difficulty: BTreeMap<Difficulty, TierScore>,
    /// Records without a difficulty tag.
    pub untagged: usize,
    pub ves: f64,
    pub ves_ratio_bounds: (f64, f64),
    pub error_counts: BTreeMap<ErrorCategory, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
}

impl EvalReport {
    pub fn new(
        records: &[EvalRecord],
        cost: Option<CostReport>,
        config: Option<Config>,
    ) -> Result<Self, EvalError> {
        let ex = compute_ex(records)?;
        let ves = compute_ves(records)?;
        let mut tiers: BTreeMap<Difficulty, Vec<&EvalRecord>> = BTreeMap::new();
        for r in records {
            if let Some(d) = r.difficulty {
                tiers.entry(d).or_default().push(r);
            }
        }
        let ex_by_difficulty = tiers
            .into_iter()
            .map(|(d, rs)| {
                let correct = rs.iter().filter(|r| r.correct).count();
                (
                    d,
                    TierScore {
                        count: rs.len(),
                        correct,
                        ex: correct as f64 / rs.len() as f64,
                    },
                )
            })
            .collect();
        let mut error_counts: BTreeMap<ErrorCategory, usize> =
            ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
        for c in records.iter().filter_map(|r| r.error_category) {
            *error_counts.entry(c).or_default() += 1;
        }
        Ok(Self {
            total: records.len(),
            correct: records.iter().filter(|r| r.correct).count(),
            ex,
            ex_by_difficulty,
            untagged: records.iter().filter(|r| r.difficulty.is_none()).count(),
            ves,
            ves_ratio_bounds: (RATIO_MIN, RATIO_MAX),
            error_counts,
            cost,
            config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14}{:>8}{:>10}{:>8}",
            "tier", "count", "correct", "EX"
        );
        for (d, t) in &self.ex_by_difficulty {
            let _ = writeln!(
                s,
                "{:<14}{:>8}{:>10}{:>8.3}",
                d.as_str(),
                t.count,
                t.correct,
                t.ex
            );
        }
        let _ = writeln!(
            s,
            "{:<14}{:>8}{:>10}{:>8.3}",
            "all", self.total, self.correct, self.ex
        );
        let _ = writeln!(
            s,
            "EX {:.3}  VES {:.3} (ratio clamped to [{}, {}])",
            self.ex, self.ves, self.ves_ratio_bounds.0, self.ves_ratio_bounds.1
        );
        let errors: Vec<String> = self
            .error_counts
            .iter()
            .map(|(c, n)| format!("{}={n}", c.as_str()))
            .collect();
        let _ = writeln!(s, "errors: {}", errors.join(" "));
        if let Some(cost) = &self.cost {
            let _ = writeln!(
                s,
                "cost: ${:.6} total, ${:.6} per query over {} queries",
                cost.total.cost_usd, cost.mean_cost_per_query_usd, cost.queries
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Quoted(String),
    Str(String),
    Num(String),
    Punct(char),
}

fn lex(sql: &str) -> Vec<Token> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let take_until = |i: &mut usize, close: char| {
        let start = *i;
        while *i < chars.len() {
            if chars[*i] == close {
                // doubled quote escapes itself
                if chars.get(*i + 1) == Some(&close) && close != ']' {
                    *i += 2;
                    continue;
                }
                break;
            }
            *i += 1;
        }
        let s: String = chars[start..(*i).min(chars.len())].iter().collect();
        *i += 1;
        s
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '\'' {
            i += 1;
            out.push(Token::Str(take_until(&mut i, '\'').replace("''", "'")));
        } else if c == '"' || c == '`' || c == '[' {
            let close = if c == '[' { ']' } else { c };
            i += 1;
            out.push(Token::Quoted(take_until(&mut i, close).to_lowercase()));
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            out.push(Token::Num(chars[start..i].iter().collect()));
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                i += 1;
            }
            out.push(Token::Word(
                chars[start..i].iter().collect::<String>().to_lowercase(),
            ));
        } else {
            out.push(Token::Punct(c));
            i += 1;
        }
    }
    out
}

const KEYWORDS: &[&str] = &[
    "select",
    "from",
    "where",
    "join",
    "inner",
    "left",
    "right",
    "full",
    "outer",
    "cross",
    "natural",
    "on",
    "using",
    "group",
    "by",
    "order",
    "having",
    "limit",
    "offset",
    "as",
    "and",
    "or",
    "not",
    "in",
    "like",
    "glob",
    "between",
    "is",
    "null",
    "distinct",
    "union",
    "intersect",
    "except",
    "all",
    "case",
    "when",
    "then",
    "else",
    "end",
    "asc",
    "desc",
    "exists",
    "cast",
    "escape",
    "with",
    "recursive",
    "true",
    "false",
    "collate",
    "nocase",
    "values",
    "current_date",
    "current_time",
    "current_timestamp",
];

const CLAUSE_END: &[&str] = &[
    "where",
    "group",
    "order",
    "having",
    "limit",
    "union",
    "intersect",
    "except",
    "on",
    "using",
    "join",
    "inner",
    "left",
    "right",
    "full",
    "cross",
    "natural",
    "select",
];

fn is_keyword(w: &str) -> bool {
    KEYWORDS.contains(&w)
}

/// Identifier-level features of one SQL string.
#[derive(Debug, Default, PartialEq, Eq)]
struct SqlShape {
    identifiers: std::collections::BTreeSet<String>,
    joins: Vec<String>,
    group_by: Vec<std::collections::BTreeSet<String>>,
    subqueries: usize,
    set_ops: Vec<String>,
}

fn ident(t: &Token) -> Option<&str> {
    match t {
        Token::Word(w) if !is_keyword(w) => Some(w),
        Token::Quoted(w) => Some(w),
        _ => None,
    }
}

fn shape(sql: &str) -> SqlShape {
    let toks = lex(sql);
    let word = |i: usize| match toks.get(i) {
        Some(Token::Word(w)) => Some(w.as_str()),
        _ => None,
    };

    // Aliases: `table [as] alias` after FROM / JOIN / comma, and `expr as alias`.
    let mut aliases: HashMap<String, String> = HashMap::new();
    let mut alias_pos = std::collections::HashSet::new();
    let mut in_from = false;
    for i in 0..toks.len() {
        match word(i) {
            Some("from") | Some("join") => in_from = true,
            Some(w) if CLAUSE_END.contains(&w) => in_from = false,
            _ => {}
        }
        if word(i) == Some("as") {
            if let Some(a) = toks.get(i + 1).and_then(ident) {
                alias_pos.insert(i + 1);
                if let Some(t) = i.checked_sub(1).and_then(|p| toks.get(p)).and_then(ident) {
                    aliases.insert(a.to_string(), t.to_string());
                }
            }
        } else if in_from {
            let prev_is_table_slot = matches!(word(i.wrapping_sub(1)), Some("from") | Some("join"))
                || toks.get(i.wrapping_sub(1)) == Some(&Token::Punct(','));
            if prev_is_table_slot {
                if let (Some(t), Some(a)) =
                    (toks.get(i).and_then(ident), toks.get(i + 1).and_then(ident))
                {
                    alias_pos.insert(i + 1);
                    aliases.insert(a.to_string(), t.to_string());
                }
            }
        }
    }

    let resolve = |name: &str| {
        aliases
            .get(name)
            .cloned()
            .unwrap_or_else(|| name.to_string())
    };
    let mut s = SqlShape::default();
    let mut after_limit = false;
    let mut after_set_op = false;
    let mut i = 0;
    while i < toks.len() {
        let t = &toks[i];
        match t {
            Token::Word(w) if w == "limit" || w == "offset" => after_limit = true,
            Token::Word(w) if w == "select" => {
                after_limit = false;
                if after_set_op {
                    after_set_op = false;
                } else if i > 0 {
                    s.subqueries += 1;
                }
            }
            Token::Word(w) if matches!(w.as_str(), "union" | "intersect" | "except") => {
                s.set_ops.push(w.clone());
                // the SELECT after a set operator is not nesting
                after_set_op = true;
            }
            Token::Word(w) if w == "join" => {
                let mut kind: Vec<&str> = Vec::new();
                let mut j = i;
                while j > 0 {
                    match word(j - 1) {
                        Some(
                            k @ ("left" | "right" | "full" | "inner" | "outer" | "cross"
                            | "natural"),
                        ) => {
                            kind.push(k);
                            j -= 1;
                        }
                        _ => break,
                    }
                }
                kind.reverse();
                let target = toks
                    .get(i + 1)
                    .and_then(ident)
                    .map(resolve)
                    .unwrap_or_default();
                s.joins
                    .push(format!("{} {target}", kind.join(" ")).trim().to_string());
            }
            Token::Word(w) if w == "group" && word(i + 1) == Some("by") => {
                let mut cols = std::collections::BTreeSet::new();
                let mut j = i + 2;
                let mut depth = 0i32;
                while j < toks.len() {
                    match &toks[j] {
                        Token::Punct('(') => depth += 1,
                        Token::Punct(')') if depth == 0 => break,
                        Token::Punct(')') => depth -= 1,
                        Token::Word(k) if depth == 0 && CLAUSE_END.contains(&k.as_str()) => break,
                        _ => {}
                    }
                    if let Some(name) = toks.get(j).and_then(ident) {
                        if toks.get(j + 1) == Some(&Token::Punct('.')) {
                            j += 1;
                        } else {
                            cols.insert(name.to_string());
                        }
                    }
                    j += 1;
                }
                s.group_by.push(cols);
            }
            Token::Str(v) => {
                s.identifiers.insert(format!("'{v}'"));
            }
            Token::Num(n) if !after_limit => {
                s.identifiers.insert(n.clone());
            }
            _ => {
                if let Some(name) = ident(t) {
                    let is_call = toks.get(i + 1) == Some(&Token::Punct('('));
                    let qualified = toks.get(i + 1) == Some(&Token::Punct('.'));
                    if qualified {
                        s.identifiers.insert(resolve(name));
                        if let Some(col) = toks.get(i + 2).and_then(ident) {
                            s.identifiers.insert(col.to_string());
                        }
                        i += 3;
                        continue;
                    }
                    if !is_call && !alias_pos.contains(&i) && !aliases.contains_key(name) {
                        s.identifiers.insert(name.to_string());
                    }
                }
            }
        }
        i += 1;
    }
    s.joins.sort();
    s
}

/// Buckets an incorrect prediction by the first rule that fires: differing
/// identifiers, then join structure, then grouping, then nesting.
pub fn classify_error(
    pred_sql: &str,
    gold_sql: &str,
    _pred_outcome: &ExecutionOutcome,
    _gold_outcome: &ExecutionOutcome,
) -> ErrorCategory {
    let p = shape(pred_sql);
    let g = shape(gold_sql);
    if p.identifiers != g.identifiers {
        ErrorCategory::SchemaLinking
    } else if p.joins != g.joins {
        ErrorCategory::Join
    } else if p.group_by != g.group_by {
        ErrorCategory::GroupBy
    } else if p.subqueries != g.subqueries || p.set_ops != g.set_ops {
        ErrorCategory::Nesting
    } else {
        ErrorCategory::Other
    }
}
