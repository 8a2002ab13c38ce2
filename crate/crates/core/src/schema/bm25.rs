//! Okapi BM25 over per-column value documents.
//!
//! score(D, Q) = Σ_{t ∈ distinct(Q)} idf(t) · tf(t, D)·(k1 + 1) / (tf(t, D) + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln((N − n(t) + 0.5) / (n(t) + 0.5) + 1)
//!
//! The `+ 1` inside the logarithm keeps every idf, and therefore every score,
//! non-negative.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::{ColumnRef, DatabaseSchema, EnhancementConfig};
use crate::sqlite::{open_read_only, quote_ident};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error("cannot open database {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
    #[error("reading values of {column} failed: {source}")]
    Scan {
        column: ColumnRef,
        #[source]
        source: rusqlite::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc: u32,
    pub score: f64,
}

/// Inverted index over the distinct values of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnIndex {
    column: ColumnRef,
    numeric: bool,
    docs: Vec<String>,
    doc_lens: Vec<u32>,
    /// term -> (doc id, term frequency), doc ids ascending
    postings: HashMap<String, Vec<(u32, u32)>>,
    avg_len: f64,
}

impl ColumnIndex {
    /// Indexes `values`, keeping the first `cap` distinct non-blank ones in
    /// the order given.
    pub fn new(
        column: ColumnRef,
        numeric: bool,
        values: impl IntoIterator<Item = String>,
        cap: usize,
    ) -> Self {
        let mut docs: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for v in values {
            if docs.len() >= cap {
                break;
            }
            if v.trim().is_empty() || !seen.insert(v.clone()) {
                continue;
            }
            docs.push(v);
        }

        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        for (id, doc) in docs.iter().enumerate() {
            let tokens = tokenize(doc);
            doc_lens.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((id as u32, n));
            }
        }
        let total: u64 = doc_lens.iter().map(|&l| l as u64).sum();
        let avg_len = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Self {
            column,
            numeric,
            docs,
            doc_lens,
            postings,
            avg_len,
        }
    }

    pub fn column(&self) -> &ColumnRef {
        &self.column
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric
    }

    pub fn docs(&self) -> &[String] {
        &self.docs
    }

    pub fn doc(&self, id: u32) -> &str {
        &self.docs[id as usize]
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_len
    }

    /// Number of postings (documents) containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// BM25 score of every document against the query.
    pub fn scores(&self, query: &str, k1: f64, b: f64) -> Vec<f64> {
        let mut scores = vec![0.0; self.docs.len()];
        if self.docs.is_empty() {
            return scores;
        }
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();
        let n = self.docs.len() as f64;
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let df = list.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for &(doc, tf) in list {
                let tf = tf as f64;
                let len_ratio = if self.avg_len > 0.0 {
                    self.doc_lens[doc as usize] as f64 / self.avg_len
                } else {
                    1.0
                };
                let norm = tf + k1 * (1.0 - b + b * len_ratio);
                scores[doc as usize] += idf * tf * (k1 + 1.0) / norm;
            }
        }
        scores
    }

    /// The `limit` best documents by (score desc, insertion order asc).
    /// Documents that match no query term are included with score 0.
    pub fn rank(&self, query: &str, k1: f64, b: f64, limit: usize) -> Vec<ScoredDoc> {
        let mut ranked: Vec<ScoredDoc> = self
            .scores(query, k1, b)
            .into_iter()
            .enumerate()
            .map(|(doc, score)| ScoredDoc {
                doc: doc as u32,
                score,
            })
            .collect();
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
        ranked.truncate(limit);
        ranked
    }
}

/// Per-column BM25 indexes for one database. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueIndex {
    db_id: String,
    columns: Vec<ColumnIndex>,
    k1: f64,
    b: f64,
    per_column_cap: usize,
}

impl ValueIndex {
    pub fn from_columns(
        db_id: impl Into<String>,
        columns: Vec<ColumnIndex>,
        cfg: &EnhancementConfig,
    ) -> Self {
        Self {
            db_id: db_id.into(),
            columns,
            k1: cfg.k1,
            b: cfg.b,
            per_column_cap: cfg.per_column_cap,
        }
    }

    /// Scans every column of `schema` for distinct non-null, non-blob values.
    pub fn build(
        db_path: &Path,
        schema: &DatabaseSchema,
        cfg: &EnhancementConfig,
    ) -> Result<Self, BuildError> {
        let conn = open_read_only(db_path).map_err(|source| BuildError::Open {
            path: db_path.to_path_buf(),
            source,
        })?;
        let mut columns = Vec::new();
        for (column, def) in schema.columns() {
            let values = scan_column(&conn, &column, cfg.per_column_cap).map_err(|source| {
                BuildError::Scan {
                    column: column.clone(),
                    source,
                }
            })?;
            columns.push(ColumnIndex::new(
                column,
                def.affinity().is_numeric(),
                values,
                cfg.per_column_cap,
            ));
        }
        Ok(Self::from_columns(schema.db_id.clone(), columns, cfg))
    }

    pub fn db_id(&self) -> &str {
        &self.db_id
    }

    pub fn columns(&self) -> &[ColumnIndex] {
        &self.columns
    }

    pub fn column(&self, r: &ColumnRef) -> Option<&ColumnIndex> {
        self.columns.iter().find(|c| &c.column == r)
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn per_column_cap(&self) -> usize {
        self.per_column_cap
    }
}

fn scan_column(
    conn: &rusqlite::Connection,
    column: &ColumnRef,
    cap: usize,
) -> rusqlite::Result<Vec<String>> {
    let col = quote_ident(&column.column);
    // Over-fetch a little so blank values dropped later do not starve the cap.
    let sql = format!(
        "SELECT DISTINCT CAST({col} AS TEXT) FROM {table} \
         WHERE {col} IS NOT NULL AND typeof({col}) != 'blob' LIMIT ?1",
        table = quote_ident(&column.table),
    );
    let mut stmt = conn.prepare(&sql)?;
    let fetch = cap.saturating_add(16).min(i64::MAX as usize) as i64;
    let rows = stmt.query_map([fetch], |r| r.get::<_, String>(0))?;
    rows.collect()
}
