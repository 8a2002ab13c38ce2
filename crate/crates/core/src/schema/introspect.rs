use std::path::Path;

use rusqlite::Connection;

use super::{ColumnDef, ColumnRef, DatabaseSchema, ForeignKey, SchemaError, TableDef};
use crate::sqlite::{open_read_only, quote_ident};

/// Reads tables, columns (in declaration order) and foreign keys from the
/// catalog of a SQLite file. The `db_id` is the file stem.
pub fn introspect_database(db_path: &Path) -> Result<DatabaseSchema, SchemaError> {
    let conn = open_read_only(db_path).map_err(|source| SchemaError::Open {
        path: db_path.to_path_buf(),
        source,
    })?;
    let catalog = |source| SchemaError::Catalog {
        path: db_path.to_path_buf(),
        source,
    };

    let names = table_names(&conn).map_err(catalog)?;
    if names.is_empty() {
        return Err(SchemaError::NoTables(db_path.to_path_buf()));
    }
    let mut tables = Vec::with_capacity(names.len());
    for name in &names {
        tables.push(table_def(&conn, name).map_err(catalog)?);
    }

    let mut foreign_keys = Vec::new();
    for table in &tables {
        let raw = raw_foreign_keys(&conn, &table.name).map_err(catalog)?;
        for (from_col, to_table, to_col) in raw {
            match resolve_fk(&tables, table, &from_col, &to_table, &to_col) {
                Some(fk) => {
                    if !foreign_keys.contains(&fk) {
                        foreign_keys.push(fk)
                    }
                }
                None => log::warn!(
                    "{}: skipping foreign key {}.{} -> {}.{} with unresolvable endpoint",
                    db_path.display(),
                    table.name,
                    from_col,
                    to_table,
                    match &to_col {
                        FkTarget::Column(c) => c.as_str(),
                        FkTarget::PrimaryKey(_) => "<pk>",
                    }
                ),
            }
        }
    }

    let db_id = db_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    DatabaseSchema::new(db_id, tables, foreign_keys)
}

fn table_names(conn: &Connection) -> rusqlite::Result<Vec<String>> {
    let mut stmt = conn.prepare(
        "SELECT name FROM sqlite_master \
         WHERE type = 'table' AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' \
         ORDER BY rowid",
    )?;
    let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
    rows.collect()
}

fn table_def(conn: &Connection, name: &str) -> rusqlite::Result<TableDef> {
    let mut stmt = conn.prepare(&format!("PRAGMA table_info({})", quote_ident(name)))?;
    let columns = stmt
        .query_map([], |r| {
            Ok(ColumnDef {
                name: r.get(1)?,
                declared_type: r.get::<_, Option<String>>(2)?.unwrap_or_default(),
                is_primary_key: r.get::<_, i64>(5)? > 0,
            })
        })?
        .collect::<rusqlite::Result<Vec<_>>>()?;
    Ok(TableDef {
        name: name.to_string(),
        columns,
    })
}

/// Target column of a foreign key as the catalog reports it.
enum FkTarget {
    Column(String),
    /// NULL in the catalog: the n-th column of the referenced primary key.
    PrimaryKey(usize),
}

fn raw_foreign_keys(
    conn: &Connection,
    table: &str,
) -> rusqlite::Result<Vec<(String, String, FkTarget)>> {
    let mut stmt = conn.prepare(&format!("PRAGMA foreign_key_list({})", quote_ident(table)))?;
    let rows = stmt.query_map([], |r| {
        let seq: i64 = r.get(1)?;
        let to_table: String = r.get(2)?;
        let from: String = r.get(3)?;
        let target = match r.get::<_, Option<String>>(4)? {
            Some(c) => FkTarget::Column(c),
            None => FkTarget::PrimaryKey(seq.max(0) as usize),
        };
        Ok((from, to_table, target))
    })?;
    rows.collect()
}

fn resolve_fk(
    tables: &[TableDef],
    from_table: &TableDef,
    from_col: &str,
    to_table: &str,
    to_col: &FkTarget,
) -> Option<ForeignKey> {
    let from = from_table.column(from_col)?;
    let target = tables
        .iter()
        .find(|t| t.name.eq_ignore_ascii_case(to_table))?;
    let to = match to_col {
        FkTarget::Column(c) => target.column(c)?,
        FkTarget::PrimaryKey(seq) => target.primary_key().nth(*seq)?,
    };
    Some(ForeignKey {
        from: ColumnRef::new(&from_table.name, &from.name),
        to: ColumnRef::new(&target.name, &to.name),
    })
}
