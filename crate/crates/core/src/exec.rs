//! Read-only execution of candidate SQL against SQLite files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::sqlite::open_read_only;

pub const TIMEOUT_MESSAGE: &str = "Error: execution timed out";

/// A single SQLite cell value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Blob),
}

/// Blob payloads serialize as `{"blob": "<hex>"}` to stay distinct from text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blob {
    #[serde(with = "hex_bytes")]
    pub blob: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

impl From<ValueRef<'_>> for Value {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Value::Null,
            ValueRef::Integer(i) => Value::Integer(i),
            ValueRef::Real(f) => Value::Real(f),
            ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Value::Blob(Blob { blob: b.to_vec() }),
        }
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ExecutionStatus {
    Success { rows: Vec<Row>, truncated: bool },
    Failure { error_message: String },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    #[serde(flatten)]
    pub status: ExecutionStatus,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl ExecutionOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self.status, ExecutionStatus::Success { .. })
    }

    pub fn rows(&self) -> Option<&[Row]> {
        match &self.status {
            ExecutionStatus::Success { rows, .. } => Some(rows),
            _ => None,
        }
    }

    /// Error text for failed or timed-out executions.
    pub fn error_message(&self) -> Option<&str> {
        match &self.status {
            ExecutionStatus::Success { .. } => None,
            ExecutionStatus::Failure { error_message } => Some(error_message),
            ExecutionStatus::Timeout => Some(TIMEOUT_MESSAGE),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self {
            status: ExecutionStatus::Failure {
                error_message: message.into(),
            },
            elapsed: Duration::ZERO,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("cannot open database {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
    #[error("only a single statement may be executed")]
    MultipleStatements,
    #[error("statement is not read-only")]
    NotReadOnly,
    #[error("timing run {repetition} failed: {message}")]
    TimingFailed { repetition: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecLimits {
    pub timeout: Duration,
    pub max_rows_fetched: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            max_rows_fetched: 10_000,
        }
    }
}

/// How often (in virtual machine instructions) the deadline is checked.
const PROGRESS_PERIOD: i32 = 1_000;

/// Executes one read-only statement.
///
/// Engine errors (syntax, unknown table, ...) come back as a
/// [`ExecutionStatus::Failure`] carrying the engine's text verbatim. Input
/// that must never reach the engine (several statements, writes) is an
/// [`ExecError`].
pub fn execute(
    db_path: &Path,
    sql: &str,
    limits: &ExecLimits,
) -> Result<ExecutionOutcome, ExecError> {
    let conn = open_read_only(db_path).map_err(|source| ExecError::Open {
        path: db_path.to_path_buf(),
        source,
    })?;
    execute_on(&conn, sql, limits)
}

fn execute_on(
    conn: &Connection,
    sql: &str,
    limits: &ExecLimits,
) -> Result<ExecutionOutcome, ExecError> {
    let start = Instant::now();
    let deadline = start + limits.timeout;
    conn.progress_handler(PROGRESS_PERIOD, Some(move || Instant::now() >= deadline));
    let result = run_statement(conn, sql, limits.max_rows_fetched);
    conn.progress_handler(PROGRESS_PERIOD, None::<fn() -> bool>);
    let elapsed = start.elapsed();

    let status = match result {
        Ok((rows, truncated)) => ExecutionStatus::Success { rows, truncated },
        Err(RunError::Guard(e)) => return Err(e),
        Err(RunError::Engine(e)) if is_interrupt(&e) => ExecutionStatus::Timeout,
        Err(RunError::Engine(e)) => ExecutionStatus::Failure {
            error_message: engine_message(&e),
        },
    };
    Ok(ExecutionOutcome { status, elapsed })
}

enum RunError {
    Guard(ExecError),
    Engine(rusqlite::Error),
}

impl From<rusqlite::Error> for RunError {
    fn from(e: rusqlite::Error) -> Self {
        match e {
            rusqlite::Error::MultipleStatement => RunError::Guard(ExecError::MultipleStatements),
            other => RunError::Engine(other),
        }
    }
}

fn run_statement(
    conn: &Connection,
    sql: &str,
    max_rows: usize,
) -> Result<(Vec<Row>, bool), RunError> {
    let mut stmt = conn.prepare(sql)?;
    if !stmt.readonly() {
        return Err(RunError::Guard(ExecError::NotReadOnly));
    }
    let width = stmt.column_count();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    let mut truncated = false;
    while let Some(row) = rows.next()? {
        if out.len() >= max_rows {
            truncated = true;
            break;
        }
        let mut values = Vec::with_capacity(width);
        for i in 0..width {
            values.push(Value::from(row.get_ref(i)?));
        }
        out.push(values);
    }
    Ok((out, truncated))
}

fn is_interrupt(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(f, _) if f.code == rusqlite::ErrorCode::OperationInterrupted
    )
}

fn engine_message(e: &rusqlite::Error) -> String {
    match e {
        rusqlite::Error::SqliteFailure(_, Some(msg)) => msg.clone(),
        rusqlite::Error::SqlInputError { msg, .. } => msg.clone(),
        other => other.to_string(),
    }
}

/// Wall-clock timings of `repetitions` full executions (rows drained) on one
/// warm connection. The statement runs once untimed first.
pub fn timed_execute(
    db_path: &Path,
    sql: &str,
    repetitions: usize,
    limits: &ExecLimits,
) -> Result<Vec<Duration>, ExecError> {
    if repetitions == 0 {
        return Ok(Vec::new());
    }
    let conn = open_read_only(db_path).map_err(|source| ExecError::Open {
        path: db_path.to_path_buf(),
        source,
    })?;
    let drain = ExecLimits {
        timeout: limits.timeout,
        max_rows_fetched: usize::MAX,
    };
    let check = |rep: usize, outcome: ExecutionOutcome| -> Result<Duration, ExecError> {
        match outcome.error_message() {
            None => Ok(outcome.elapsed),
            Some(m) => Err(ExecError::TimingFailed {
                repetition: rep,
                message: m.to_string(),
            }),
        }
    };
    check(0, execute_on(&conn, sql, &drain)?)?;
    (1..=repetitions)
        .map(|rep| check(rep, execute_on(&conn, sql, &drain)?))
        .collect()
}

pub fn median(samples: &[Duration]) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort();
    let mid = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[mid]
    } else {
        (s[mid - 1] + s[mid]) / 2
    })
}

/// Relative tolerance for numeric cell comparison.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

/// Cell equality: NULL equals NULL, integers and reals compare numerically
/// within a relative tolerance, text and blobs byte-wise.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (as_number(a), as_number(b)) {
        (Some(x), Some(y)) => x == y || (x - y).abs() <= NUMERIC_TOLERANCE * x.abs().max(y.abs()),
        (None, None) => a == b,
        _ => false,
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(i) => Some(*i as f64),
        Value::Real(f) => Some(*f),
        _ => None,
    }
}

fn rows_equal(a: &Row, b: &Row) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y))
}

/// Exact hashing key; integral reals hash like the matching integer.
#[derive(Hash, PartialEq, Eq)]
enum CellKey<'a> {
    Null,
    Int(i64),
    Float(u64),
    Text(&'a str),
    Blob(&'a [u8]),
}

fn cell_key(v: &Value) -> CellKey<'_> {
    match v {
        Value::Null => CellKey::Null,
        Value::Integer(i) => CellKey::Int(*i),
        Value::Real(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => CellKey::Int(*f as i64),
        Value::Real(f) => CellKey::Float(if *f == 0.0 { 0 } else { f.to_bits() }),
        Value::Text(s) => CellKey::Text(s),
        Value::Blob(b) => CellKey::Blob(&b.blob),
    }
}

fn row_keys(rows: &[Row]) -> HashSet<Vec<CellKey<'_>>> {
    rows.iter()
        .map(|r| r.iter().map(cell_key).collect())
        .collect()
}

/// Set equality of two result sets: duplicates collapse, row order is
/// ignored, cells compare positionally under [`values_equal`].
pub fn results_equal(a: &[Row], b: &[Row]) -> bool {
    if row_keys(a) == row_keys(b) {
        return true;
    }
    // Exact keys differ; fall back to tolerant matching in both directions.
    let covered = |xs: &[Row], ys: &[Row]| xs.iter().all(|x| ys.iter().any(|y| rows_equal(x, y)));
    covered(a, b) && covered(b, a)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub text: String,
    pub truncated: bool,
}

pub const DEFAULT_SUMMARY_ROWS: usize = 10;
pub const DEFAULT_SUMMARY_CHARS: usize = 500;
const ELLIPSIS: &str = "...";

/// Renders an outcome as the `r` fed to prompts. Successful results become
/// a Python-style list of tuples, e.g. `[(1, 'a'), (2, None)]`.
pub fn summarize_result(
    outcome: &ExecutionOutcome,
    max_rows: usize,
    max_chars: usize,
) -> ResultSummary {
    let (mut text, mut truncated) = match &outcome.status {
        ExecutionStatus::Success { rows, truncated } => {
            let shown = rows.len().min(max_rows);
            let mut parts: Vec<String> = rows[..shown].iter().map(render_row).collect();
            let cut = shown < rows.len() || *truncated;
            if cut {
                parts.push(ELLIPSIS.to_string());
            }
            (format!("[{}]", parts.join(", ")), cut)
        }
        ExecutionStatus::Failure { error_message } => (error_message.clone(), false),
        ExecutionStatus::Timeout => (TIMEOUT_MESSAGE.to_string(), false),
    };
    if text.chars().count() > max_chars {
        let keep = max_chars.saturating_sub(ELLIPSIS.len());
        text = text.chars().take(keep).collect();
        text.push_str(&ELLIPSIS[..ELLIPSIS.len().min(max_chars)]);
        truncated = true;
    }
    ResultSummary { text, truncated }
}

fn render_row(row: &Row) -> String {
    let cells: Vec<String> = row.iter().map(render_value).collect();
    if cells.len() == 1 {
        format!("({},)", cells[0])
    } else {
        format!("({})", cells.join(", "))
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::Null => "None".to_string(),
        Value::Integer(i) => i.to_string(),
        Value::Real(f) => {
            if f.is_finite() && f.fract() == 0.0 && f.abs() < 1e16 {
                format!("{f:.1}")
            } else {
                f.to_string()
            }
        }
        Value::Text(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Blob(b) => {
            let mut s = String::from("b'");
            for byte in &b.blob {
                let _ = write!(s, "\\x{byte:02x}");
            }
            s.push('\'');
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(sql: &str) -> tempfile::TempPath {
        let path = tempfile::Builder::new()
            .suffix(".sqlite")
            .tempfile()
            .unwrap()
            .into_temp_path();
        Connection::open(&path).unwrap().execute_batch(sql).unwrap();
        path
    }

    fn ok(rows: Vec<Row>, truncated: bool) -> ExecutionOutcome {
        ExecutionOutcome {
            status: ExecutionStatus::Success { rows, truncated },
            elapsed: Duration::ZERO,
        }
    }

    #[test]
    fn select_one() {
        let path = db("CREATE TABLE t(a)");
        let out = execute(&path, "SELECT 1", &ExecLimits::default()).unwrap();
        assert_eq!(out.rows().unwrap(), &[vec![Value::Integer(1)]]);
    }

    #[test]
    fn missing_table_is_an_engine_failure() {
        let path = db("CREATE TABLE t(a)");
        let out = execute(&path, "SELECT * FROM no_such_table", &ExecLimits::default()).unwrap();
        assert!(out.error_message().unwrap().contains("no such table"));
    }

    #[test]
    fn runaway_recursive_cte_times_out() {
        let path = db("CREATE TABLE t(a)");
        let limits = ExecLimits {
            timeout: Duration::from_secs(1),
            ..Default::default()
        };
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) \
                   SELECT count(*) FROM c";
        let out = execute(&path, sql, &limits).unwrap();
        assert_eq!(out.status, ExecutionStatus::Timeout);
        assert!(out.elapsed >= Duration::from_secs(1));
        assert!(out.elapsed < Duration::from_secs(5));
    }

    #[test]
    fn guard_rejects_writes_and_multiple_statements() {
        let path = db("CREATE TABLE t(a)");
        let l = ExecLimits::default();
        assert!(matches!(
            execute(&path, "SELECT 1; SELECT 2", &l),
            Err(ExecError::MultipleStatements)
        ));
        assert!(matches!(
            execute(&path, "DELETE FROM t", &l),
            Err(ExecError::NotReadOnly)
        ));
        // Trailing semicolon is a single statement.
        assert!(execute(&path, "SELECT 1;", &l).unwrap().is_success());
    }

    #[test]
    fn row_cap_sets_truncation() {
        let path = db("CREATE TABLE t(a); INSERT INTO t VALUES (1),(2),(3);");
        let l = ExecLimits {
            max_rows_fetched: 2,
            ..Default::default()
        };
        let out = execute(&path, "SELECT a FROM t", &l).unwrap();
        assert_eq!(
            out.status,
            ExecutionStatus::Success {
                rows: vec![vec![Value::Integer(1)], vec![Value::Integer(2)]],
                truncated: true
            }
        );
    }

    #[test]
    fn equality_examples() {
        let i = Value::Integer;
        let t = |s: &str| Value::Text(s.into());
        assert!(results_equal(&[vec![i(1), t("a")]], &[vec![i(1), t("a")]]));
        assert!(results_equal(
            &[vec![i(1)], vec![i(2)]],
            &[vec![i(2)], vec![i(1)]]
        ));
        assert!(results_equal(&[vec![Value::Real(1.0)]], &[vec![i(1)]]));
        assert!(results_equal(&[vec![i(1)], vec![i(1)]], &[vec![i(1)]]));
        assert!(results_equal(
            &[vec![Value::Real(0.1 + 0.2)]],
            &[vec![Value::Real(0.3)]]
        ));
        assert!(!results_equal(&[vec![t("A")]], &[vec![t("a")]]));
        assert!(!results_equal(&[vec![t("1")]], &[vec![i(1)]]));
        assert!(!results_equal(&[vec![i(1), i(2)]], &[vec![i(2), i(1)]]));
        assert!(results_equal(&[vec![Value::Null]], &[vec![Value::Null]]));
        assert!(results_equal(&[], &[]));
        assert!(!results_equal(&[vec![i(1)]], &[]));
    }

    #[test]
    fn summary_examples() {
        assert_eq!(summarize_result(&ok(vec![], false), 10, 500).text, "[]");
        let rows = vec![
            vec![Value::Integer(1), Value::Text("a".into())],
            vec![Value::Integer(2), Value::Null],
            vec![Value::Integer(3), Value::Real(2.0)],
        ];
        let s = summarize_result(&ok(rows, false), 2, 500);
        assert_eq!(s.text, "[(1, 'a'), (2, None), ...]");
        assert!(s.truncated);
        let s = summarize_result(&ExecutionOutcome::failure("no such column: x"), 10, 500);
        assert_eq!(s.text, "no such column: x");
        let timeout = ExecutionOutcome {
            status: ExecutionStatus::Timeout,
            elapsed: Duration::ZERO,
        };
        assert_eq!(summarize_result(&timeout, 10, 500).text, TIMEOUT_MESSAGE);
        assert_eq!(
            summarize_result(&ok(vec![vec![Value::Real(2.5)]], false), 10, 500).text,
            "[(2.5,)]"
        );
    }

    #[test]
    fn summary_char_cap() {
        let rows = (0..100).map(|i| vec![Value::Integer(i)]).collect();
        let s = summarize_result(&ok(rows, false), 100, 20);
        assert_eq!(s.text.chars().count(), 20);
        assert!(s.text.ends_with("..."));
        assert!(s.truncated);
    }

    #[test]
    fn timing() {
        let path = db("CREATE TABLE t(a); INSERT INTO t VALUES (1),(2);");
        let l = ExecLimits::default();
        assert!(timed_execute(&path, "SELECT a FROM t", 0, &l)
            .unwrap()
            .is_empty());
        let samples = timed_execute(&path, "SELECT a FROM t", 5, &l).unwrap();
        assert_eq!(samples.len(), 5);
        assert!(samples.iter().all(|d| *d > Duration::ZERO));
        assert!(timed_execute(&path, "SELECT nope FROM t", 3, &l).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        let ms = Duration::from_millis;
        assert_eq!(median(&[ms(3), ms(1), ms(2)]), Some(ms(2)));
        assert_eq!(
            median(&[ms(4), ms(1), ms(2), ms(3)]),
            Some(Duration::from_micros(2500))
        );
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn outcome_json_shape() {
        let o = ok(
            vec![vec![Value::Integer(1), Value::Text("x".into())]],
            false,
        );
        let json = serde_json::to_value(&o).unwrap();
        assert_eq!(json["status"], "success");
        assert_eq!(json["rows"][0][1], "x");
        let back: ExecutionOutcome = serde_json::from_value(json).unwrap();
        assert_eq!(back, o);
    }
}
