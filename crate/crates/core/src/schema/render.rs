//! Text rendering of a schema for prompts.
//!
//! ```text
//! table <name>
//!   <column> <declared type>[ -- examples: 'v1', 'v2']
//!   primary key: <col>[, <col>]
//! foreign keys
//!   <table>.<column> -> <table>.<column>
//! ```
//!
//! The `primary key` line is omitted for tables without one and the
//! `foreign keys` section is omitted when there are none. Lines are joined
//! with `\n`, with no trailing newline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ColumnValues, DatabaseSchema, SchemaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemaStyle {
    Standard,
    #[default]
    Enhanced,
}

pub fn render_semantic_schema(
    schema: &DatabaseSchema,
    values: &ColumnValues,
    style: SchemaStyle,
) -> Result<String, SchemaError> {
    let mut lookup: HashMap<(String, String), &Vec<String>> = HashMap::new();
    if style == SchemaStyle::Enhanced {
        for (r, vals) in values {
            if schema.column(r).is_none() {
                return Err(SchemaError::UnknownColumn(r.clone()));
            }
            lookup.insert((r.table.to_lowercase(), r.column.to_lowercase()), vals);
        }
    }

    let mut lines = Vec::new();
    for table in &schema.tables {
        lines.push(format!("table {}", table.name));
        for col in &table.columns {
            let mut line = format!("  {}", col.name);
            let ty = col.declared_type.trim();
            if !ty.is_empty() {
                line.push(' ');
                line.push_str(ty);
            }
            let key = (table.name.to_lowercase(), col.name.to_lowercase());
            if let Some(vals) = lookup.get(&key).filter(|v| !v.is_empty()) {
                let rendered: Vec<String> = vals.iter().map(|v| quote_value(v)).collect();
                line.push_str(" -- examples: ");
                line.push_str(&rendered.join(", "));
            }
            lines.push(line);
        }
        let pk: Vec<&str> = table.primary_key().map(|c| c.name.as_str()).collect();
        if !pk.is_empty() {
            lines.push(format!("  primary key: {}", pk.join(", ")));
        }
    }
    if !schema.foreign_keys.is_empty() {
        lines.push("foreign keys".to_string());
        for fk in &schema.foreign_keys {
            lines.push(format!("  {} -> {}", fk.from, fk.to));
        }
    }
    Ok(lines.join("\n"))
}

/// SQL-literal style quoting; line breaks become spaces so each column
/// stays on one line.
fn quote_value(v: &str) -> String {
    let flat: String = v
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    format!("'{}'", flat.replace('\'', "''"))
}
