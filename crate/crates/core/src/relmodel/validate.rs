use std::collections::{HashMap, HashSet};
use std::fmt;

use super::{encode_tuple, RelationalDatabase, ScalarValue, Table};

#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// Several rows share one primary-key tuple. Rows are 0-based.
    DuplicateKey {
        table: String,
        key: Vec<ScalarValue>,
        rows: Vec<usize>,
    },
    /// A fully non-null foreign-key tuple with no matching primary key.
    DanglingLink {
        table: String,
        row: usize,
        columns: Vec<String>,
        values: Vec<ScalarValue>,
        ref_table: String,
    },
    /// A composite foreign key with some, but not all, columns null.
    PartialNullLink {
        table: String,
        row: usize,
        columns: Vec<String>,
        values: Vec<ScalarValue>,
    },
}

fn tuple_str(values: &[ScalarValue]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateKey { table, key, rows } => {
                let rows: Vec<String> = rows.iter().map(|r| (r + 1).to_string()).collect();
                write!(
                    f,
                    "duplicate-key {table} ({}) on rows {}",
                    tuple_str(key),
                    rows.join(", ")
                )
            }
            Finding::DanglingLink {
                table,
                row,
                columns,
                values,
                ref_table,
            } => write!(
                f,
                "dangling-link {table} row {} ({}) = ({}) has no match in {ref_table}",
                row + 1,
                columns.join(", "),
                tuple_str(values)
            ),
            Finding::PartialNullLink {
                table,
                row,
                columns,
                values,
            } => write!(
                f,
                "partial-null-link {table} row {} ({}) = ({})",
                row + 1,
                columns.join(", "),
                tuple_str(values)
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub database: String,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn key_index(table: &Table) -> HashMap<String, Vec<usize>> {
    let pk = table.pk_indices();
    let mut index: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        index
            .entry(encode_tuple(&Table::tuple(row, &pk)))
            .or_default()
            .push(i);
    }
    index
}

/// Lists primary-key duplicates and foreign keys that do not resolve.
///
/// Expects a schema that passes [`RelationalDatabase::check`] apart from row
/// data; foreign keys naming a missing table report every non-null value as
/// dangling.
pub fn validate_database(db: &RelationalDatabase) -> ValidationReport {
    let mut findings = Vec::new();
    let indices: HashMap<&str, HashMap<String, Vec<usize>>> = db
        .tables
        .iter()
        .map(|t| (t.name.as_str(), key_index(t)))
        .collect();

    for table in &db.tables {
        let pk = table.pk_indices();
        let mut reported = HashSet::new();
        for row in &table.rows {
            let key = Table::tuple(row, &pk);
            let encoded = encode_tuple(&key);
            let rows = &indices[table.name.as_str()][&encoded];
            if rows.len() > 1 && reported.insert(encoded) {
                findings.push(Finding::DuplicateKey {
                    table: table.name.clone(),
                    key,
                    rows: rows.clone(),
                });
            }
        }

        for fk in &table.foreign_keys {
            let cols = table.indices(&fk.columns);
            for (i, row) in table.rows.iter().enumerate() {
                let values = Table::tuple(row, &cols);
                let nulls = values.iter().filter(|v| v.is_null()).count();
                if nulls == values.len() {
                    continue;
                }
                if nulls > 0 {
                    findings.push(Finding::PartialNullLink {
                        table: table.name.clone(),
                        row: i,
                        columns: fk.columns.clone(),
                        values,
                    });
                    continue;
                }
                let found = indices
                    .get(fk.ref_table.as_str())
                    .is_some_and(|idx| idx.contains_key(&encode_tuple(&values)));
                if !found {
                    findings.push(Finding::DanglingLink {
                        table: table.name.clone(),
                        row: i,
                        columns: fk.columns.clone(),
                        values,
                        ref_table: fk.ref_table.clone(),
                    });
                }
            }
        }
    }
    ValidationReport {
        database: db.name.clone(),
        findings,
    }
}
