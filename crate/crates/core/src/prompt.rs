//! Zero-shot prompt templates and completion parsing.
//!
//! Every renderer is a pure function of its inputs. User text (schema,
//! question, SQL, error messages, reasons) is interpolated verbatim with no
//! escaping, so text that itself contains a `### ` delimiter line can make a
//! rendered transcript ambiguous to re-parse.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Generation,
    Elimination,
    Reflect,
    Correct,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Generation,
        PromptKind::Elimination,
        PromptKind::Reflect,
        PromptKind::Correct,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Generation => "generation",
            PromptKind::Elimination => "elimination",
            PromptKind::Reflect => "reflect",
            PromptKind::Correct => "correct",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("schema text is empty")]
    EmptySchema,
    #[error("SQL is empty")]
    EmptySql,
    #[error("error reason is empty")]
    EmptyReason,
    #[error("completion is empty after stripping")]
    EmptyCompletion,
    #[error("invalid transcript: {0}")]
    Transcript(String),
}

const GENERATION_HEADER: &str = "### Complete sqlite SQL query only and with no explanation.";
const TABLES_HEADER: &str = "### Sqlite SQL tables, with their properties:";
const ELIMINATION_PREAMBLE: &str = "Below is an instruction that describes a task, paired with an input that provides further context. Write a response that appropriately completes the request.";
const ELIMINATION_INSTRUCTION: &str = "This represents the SQLite SQL query that has been generated in response to the given question, along with the resulting outcome after executing the query.\n\
Please judge its correctness based on the execution result and the explanation for the question.\n\
If it's incorrect, output the correct sqlite SQL query; otherwise, output the original sqlite SQL query.";
const REFLECT_HEADER: &str = "### Here is a sqlite SQL query that resulted from a question, but it produced an error when executed. What do you think is the possible reason for this SQL error?";
const CORRECT_HEADER: &str = "### Here is a sqlite SQL query that resulted from a question, but it produced an error when executed. Please correct it with no explanation.";

/// Marker separating the instruction half of the elimination prompt from its
/// input half.
pub const INPUT_MARKER: &str = "### Input:";
pub const RESPONSE_MARKER: &str = "### Response:";

fn check_common(schema_text: &str, question: &str) -> Result<(), PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    if schema_text.trim().is_empty() {
        return Err(PromptError::EmptySchema);
    }
    Ok(())
}

fn schema_block(schema_text: &str, question: &str) -> String {
    format!("{TABLES_HEADER}\n#\n{schema_text}\n#\n### Question: {question}")
}

pub fn render_generation_prompt(
    schema_text: &str,
    question: &str,
) -> Result<PromptText, PromptError> {
    check_common(schema_text, question)?;
    Ok(PromptText {
        text: format!(
            "{GENERATION_HEADER}\n{}\nSELECT",
            schema_block(schema_text, question)
        ),
        kind: PromptKind::Generation,
    })
}

/// `result_summary` is rendered as given; truncation is the caller's job.
pub fn render_elimination_prompt(
    schema_text: &str,
    question: &str,
    sql: &str,
    result_summary: &str,
) -> Result<PromptText, PromptError> {
    check_common(schema_text, question)?;
    if sql.trim().is_empty() {
        return Err(PromptError::EmptySql);
    }
    Ok(PromptText {
        text: format!(
            "{ELIMINATION_PREAMBLE}\n\n### Instruction:\n{ELIMINATION_INSTRUCTION}\n\n\
             {INPUT_MARKER}\n{}\n### SQLite SQL query: {sql}\n### Run results: {result_summary}\n\n\
             {RESPONSE_MARKER}",
            schema_block(schema_text, question)
        ),
        kind: PromptKind::Elimination,
    })
}

pub fn render_reflect_prompt(
    schema_text: &str,
    question: &str,
    transcript: &TranscriptView,
) -> Result<PromptText, PromptError> {
    check_common(schema_text, question)?;
    transcript.check_open()?;
    Ok(PromptText {
        text: format!(
            "{REFLECT_HEADER}\n\n{}\n{}\n### Error Reason:",
            schema_block(schema_text, question),
            transcript.render()
        ),
        kind: PromptKind::Reflect,
    })
}

pub fn render_correct_prompt(
    schema_text: &str,
    question: &str,
    transcript: &TranscriptView,
    reason: &str,
) -> Result<PromptText, PromptError> {
    check_common(schema_text, question)?;
    if reason.trim().is_empty() {
        return Err(PromptError::EmptyReason);
    }
    transcript.check_open()?;
    Ok(PromptText {
        text: format!(
            "{CORRECT_HEADER}\n\n{}\n{}\n### Error Reason: {reason}\n### Correct SQL: SELECT",
            schema_block(schema_text, question),
            transcript.render()
        ),
        kind: PromptKind::Correct,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptStep {
    pub sql: String,
    pub error_message: String,
    pub error_reason: Option<String>,
    pub new_sql: Option<String>,
}

/// The `previous_information` block: every failed SQL so far with its error,
/// the reflection on it and the SQL that replaced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptView {
    steps: Vec<TranscriptStep>,
}

const T_SQL: &str = "### SQL:";
const T_ERROR: &str = "### Error message:";
const T_REASON: &str = "### Error reason:";
const T_NEW_SQL: &str = "### New SQL:";

impl TranscriptView {
    /// Steps must be non-empty, every step but the last must have both a
    /// reason and a replacement SQL, and each replacement must be the next
    /// step's SQL.
    pub fn new(steps: Vec<TranscriptStep>) -> Result<Self, PromptError> {
        if steps.is_empty() {
            return Err(PromptError::Transcript("no steps".into()));
        }
        for (i, pair) in steps.windows(2).enumerate() {
            let Some(next) = &pair[0].new_sql else {
                return Err(PromptError::Transcript(format!(
                    "step {i} has a successor but no new SQL"
                )));
            };
            if pair[0].error_reason.is_none() {
                return Err(PromptError::Transcript(format!(
                    "step {i} has a successor but no error reason"
                )));
            }
            if next != &pair[1].sql {
                return Err(PromptError::Transcript(format!(
                    "step {} SQL does not match the new SQL of step {i}",
                    i + 1
                )));
            }
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[TranscriptStep] {
        &self.steps
    }

    pub fn last(&self) -> &TranscriptStep {
        self.steps.last().expect("transcript is never empty")
    }

    /// Reflect and correct prompts need the latest failure to still be open:
    /// no reason and no replacement yet.
    fn check_open(&self) -> Result<(), PromptError> {
        let last = self.last();
        if last.error_reason.is_some() {
            return Err(PromptError::Transcript(
                "latest step already has an error reason".into(),
            ));
        }
        if last.new_sql.is_some() {
            return Err(PromptError::Transcript(
                "latest step already has a new SQL".into(),
            ));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut lines = Vec::with_capacity(self.steps.len() * 4);
        lines.push(format!("{T_SQL} {}", self.steps[0].sql));
        for step in &self.steps {
            lines.push(format!("{T_ERROR} {}", step.error_message));
            if let Some(reason) = &step.error_reason {
                lines.push(format!("{T_REASON} {reason}"));
            }
            if let Some(new_sql) = &step.new_sql {
                lines.push(format!("{T_NEW_SQL} {new_sql}"));
            }
        }
        lines.join("\n")
    }

    /// Inverse of [`TranscriptView::render`] for text whose fields contain
    /// no line starting with one of the delimiters.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut fields: Vec<(&'static str, String)> = Vec::new();
        for line in text.split('\n') {
            let hit = [T_SQL, T_ERROR, T_REASON, T_NEW_SQL]
                .into_iter()
                .find(|d| line.starts_with(d));
            match hit {
                Some(d) => {
                    let rest = &line[d.len()..];
                    let rest = rest.strip_prefix(' ').unwrap_or(rest);
                    fields.push((d, rest.to_string()));
                }
                None => match fields.last_mut() {
                    Some((_, value)) => {
                        value.push('\n');
                        value.push_str(line);
                    }
                    None => {
                        return Err(PromptError::Transcript(
                            "text before the first delimiter".into(),
                        ))
                    }
                },
            }
        }

        let mut iter = fields.into_iter().peekable();
        let mut sql = match iter.next() {
            Some((T_SQL, s)) => s,
            _ => return Err(PromptError::Transcript("must start with ### SQL:".into())),
        };
        let mut steps = Vec::new();
        loop {
            let error_message = match iter.next() {
                Some((T_ERROR, e)) => e,
                _ => {
                    return Err(PromptError::Transcript(
                        "expected ### Error message:".into(),
                    ))
                }
            };
            let error_reason = match iter.peek() {
                Some((T_REASON, _)) => iter.next().map(|(_, r)| r),
                _ => None,
            };
            let new_sql = match iter.peek() {
                Some((T_NEW_SQL, _)) => iter.next().map(|(_, s)| s),
                _ => None,
            };
            let next_sql = new_sql.clone();
            steps.push(TranscriptStep {
                sql,
                error_message,
                error_reason,
                new_sql,
            });
            match (iter.peek(), next_sql) {
                (None, _) => break,
                (Some(_), Some(next)) => sql = next,
                (Some(_), None) => {
                    return Err(PromptError::Transcript(
                        "error message follows a step without new SQL".into(),
                    ))
                }
            }
        }
        Self::new(steps)
    }
}

/// Extracts SQL (or, for reflect prompts, the reason text) from a raw model
/// completion.
///
/// Generation, correct and elimination prompts end right before or at the
/// point where a query starts, so a bare continuation such as `name FROM t`
/// gets `SELECT ` prepended. Markdown code fences are unwrapped. For the
/// elimination kind, anything up to an echoed `### Response:` is discarded
/// first.
pub fn parse_sql_completion(raw: &str, kind: PromptKind) -> Result<String, PromptError> {
    let mut text = raw;
    if kind == PromptKind::Elimination {
        if let Some(pos) = text.rfind(RESPONSE_MARKER) {
            text = &text[pos + RESPONSE_MARKER.len()..];
        }
    }
    let body = strip_fences(text).trim();
    if body.is_empty() {
        return Err(PromptError::EmptyCompletion);
    }
    if kind == PromptKind::Reflect || starts_with_select(body) {
        return Ok(body.to_string());
    }
    Ok(format!("SELECT {body}"))
}

fn starts_with_select(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() >= 6
        && b[..6].eq_ignore_ascii_case(b"select")
        && b.get(6)
            .is_none_or(|c| !(c.is_ascii_alphanumeric() || *c == b'_'))
}

fn strip_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text;
    };
    let after = &text[open + 3..];
    // The rest of the opening line is an info string such as `sql`.
    let content = match after.find('\n') {
        Some(nl) if !after[..nl].trim().contains(' ') => &after[nl + 1..],
        _ => after,
    };
    match content.find("```") {
        Some(close) => &content[..close],
        None => content,
    }
}
