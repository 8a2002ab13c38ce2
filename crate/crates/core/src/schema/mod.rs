//! Database schema introspection, value indexing and schema rendering.
//!
//! A [`DatabaseSchema`] is read from a SQLite file through its catalog. A
//! [`ValueIndex`] holds one BM25 inverted index per column over the distinct
//! cell values of that column; [`retrieve_column_values`] picks the values
//! most relevant to a question, and [`render_semantic_schema`] turns the
//! schema plus those values into the text block every prompt embeds.

mod bm25;
mod introspect;
mod render;
mod retrieve;
pub mod tokenize;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use bm25::{BuildError, ColumnIndex, ScoredDoc, ValueIndex, DEFAULT_B, DEFAULT_K1};
pub use introspect::introspect_database;
pub use render::{render_semantic_schema, SchemaStyle};
pub use retrieve::{bridge_score, retrieve_column_values, ColumnValues};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("cannot open database {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
    #[error("catalog query failed on {path}: {source}")]
    Catalog {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
    #[error("database {0} has no user tables")]
    NoTables(PathBuf),
    #[error("table `{0}` has no columns")]
    EmptyTable(String),
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("foreign key endpoint {0} does not exist")]
    DanglingForeignKey(ColumnRef),
    #[error("values given for unknown column {0}")]
    UnknownColumn(ColumnRef),
}

/// A fully qualified `table.column` reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub declared_type: String,
    pub is_primary_key: bool,
}

impl ColumnDef {
    /// SQLite type affinity of the declared type.
    pub fn affinity(&self) -> Affinity {
        Affinity::of(&self.declared_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn primary_key(&self) -> impl Iterator<Item = &ColumnDef> {
        self.columns.iter().filter(|c| c.is_primary_key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl DatabaseSchema {
    /// Builds a schema and checks its structural invariants.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<TableDef>,
        foreign_keys: Vec<ForeignKey>,
    ) -> Result<Self, SchemaError> {
        let schema = Self {
            db_id: db_id.into(),
            tables,
            foreign_keys,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        for (i, table) in self.tables.iter().enumerate() {
            if table.columns.is_empty() {
                return Err(SchemaError::EmptyTable(table.name.clone()));
            }
            if self.tables[..i]
                .iter()
                .any(|t| t.name.eq_ignore_ascii_case(&table.name))
            {
                return Err(SchemaError::DuplicateTable(table.name.clone()));
            }
            for (j, col) in table.columns.iter().enumerate() {
                if table.columns[..j]
                    .iter()
                    .any(|c| c.name.eq_ignore_ascii_case(&col.name))
                {
                    return Err(SchemaError::DuplicateColumn {
                        table: table.name.clone(),
                        column: col.name.clone(),
                    });
                }
            }
        }
        for fk in &self.foreign_keys {
            for end in [&fk.from, &fk.to] {
                if self.column(end).is_none() {
                    return Err(SchemaError::DanglingForeignKey(end.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, r: &ColumnRef) -> Option<&ColumnDef> {
        self.table(&r.table).and_then(|t| t.column(&r.column))
    }

    /// Every column of every table, in declaration order.
    pub fn columns(&self) -> impl Iterator<Item = (ColumnRef, &ColumnDef)> {
        self.tables.iter().flat_map(|t| {
            t.columns
                .iter()
                .map(move |c| (ColumnRef::new(&t.name, &c.name), c))
        })
    }
}

/// SQLite column affinity, derived from the declared type with the engine's
/// own precedence rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Affinity {
    Integer,
    Text,
    Blob,
    Real,
    Numeric,
}

impl Affinity {
    pub fn of(declared: &str) -> Self {
        let t = declared.to_ascii_uppercase();
        if t.contains("INT") {
            Affinity::Integer
        } else if t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT") {
            Affinity::Text
        } else if t.contains("BLOB") || t.trim().is_empty() {
            Affinity::Blob
        } else if t.contains("REAL") || t.contains("FLOA") || t.contains("DOUB") {
            Affinity::Real
        } else {
            Affinity::Numeric
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Affinity::Integer | Affinity::Real | Affinity::Numeric)
    }
}

/// Knobs for value retrieval and schema enhancement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhancementConfig {
    /// BM25 candidate pool per column.
    pub k: usize,
    /// Values rendered per column.
    pub m: usize,
    /// Maximum number of distinct values indexed per column.
    pub per_column_cap: usize,
    /// Minimum bridging score a candidate needs to be rendered.
    pub bridge_threshold: f64,
    /// Render sampled values for numeric-affinity columns too.
    pub include_numeric: bool,
    pub k1: f64,
    pub b: f64,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            k: 200,
            m: 2,
            per_column_cap: 10_000,
            bridge_threshold: 0.5,
            include_numeric: false,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

impl EnhancementConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("enhancement.k must be positive".into());
        }
        if self.m > self.k {
            return Err(format!(
                "enhancement.m ({}) must not exceed enhancement.k ({})",
                self.m, self.k
            ));
        }
        if self.per_column_cap == 0 {
            return Err("enhancement.per_column_cap must be positive".into());
        }
        Ok(())
    }
}
