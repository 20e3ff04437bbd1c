//! Relational side of the pipeline: databases made of a schema and an
//! extension, plus the two loaders that build them.

mod snapshot;
mod sqldump;
mod validate;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use snapshot::{load_snapshot, write_snapshot};
pub use sqldump::parse_sql_dump;
pub use validate::{validate_database, Finding, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: malformed schema: {message}", path.display())]
    SchemaSyntax { path: PathBuf, message: String },
    #[error("{}:{line}: malformed row: {message}", path.display())]
    DataSyntax {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("line {line}, column {column}: expected {expected}, found {found}")]
    Parse {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: unsupported statement {kind}")]
    UnsupportedStatement { line: usize, kind: String },
    #[error("{location}: {message}")]
    InvariantViolation { location: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Maps every character outside `[A-Za-z0-9_]` to `_`.
pub fn sanitize_identifier(raw: &str) -> String {
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

pub fn is_identifier(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Text,
    Integer,
    Real,
    Boolean,
    Date,
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Text => "text",
            DataType::Integer => "integer",
            DataType::Real => "real",
            DataType::Boolean => "boolean",
            DataType::Date => "date",
        })
    }
}

/// A single cell value, shared by the relational and document models.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarValue {
    Null,
    Text(String),
    Integer(i64),
    Real(f64),
    Boolean(bool),
    Date(NaiveDate),
}

impl ScalarValue {
    pub fn is_null(&self) -> bool {
        matches!(self, ScalarValue::Null)
    }

    pub fn data_type(&self) -> Option<DataType> {
        match self {
            ScalarValue::Null => None,
            ScalarValue::Text(_) => Some(DataType::Text),
            ScalarValue::Integer(_) => Some(DataType::Integer),
            ScalarValue::Real(_) => Some(DataType::Real),
            ScalarValue::Boolean(_) => Some(DataType::Boolean),
            ScalarValue::Date(_) => Some(DataType::Date),
        }
    }

    /// Type-tagged textual form used to build catalog keys. Distinct values
    /// always render differently, including across types.
    pub fn canonical(&self) -> String {
        match self {
            ScalarValue::Null => "n:".to_string(),
            ScalarValue::Text(s) => format!("t:{s}"),
            ScalarValue::Integer(i) => format!("i:{i}"),
            ScalarValue::Real(r) => format!("r:{r:?}"),
            ScalarValue::Boolean(b) => format!("b:{b}"),
            ScalarValue::Date(d) => format!("d:{}", d.format("%Y-%m-%d")),
        }
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Null => f.write_str("NULL"),
            ScalarValue::Text(s) => write!(f, "{s:?}"),
            ScalarValue::Integer(i) => write!(f, "{i}"),
            ScalarValue::Real(r) => write!(f, "{r:?}"),
            ScalarValue::Boolean(b) => write!(f, "{b}"),
            ScalarValue::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data_type: DataType,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForeignKey {
    pub columns: Vec<String>,
    pub ref_table: String,
    pub ref_columns: Vec<String>,
}

/// One value slot per column, in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub values: Vec<ScalarValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Column indices of the given names. Panics on unknown names, which a
    /// checked table never contains.
    pub fn indices(&self, names: &[String]) -> Vec<usize> {
        names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .unwrap_or_else(|| panic!("unknown column {n} in table {}", self.name))
            })
            .collect()
    }

    pub fn pk_indices(&self) -> Vec<usize> {
        self.indices(&self.primary_key)
    }

    pub fn tuple(row: &Row, indices: &[usize]) -> Vec<ScalarValue> {
        indices.iter().map(|&i| row.values[i].clone()).collect()
    }

    fn check_schema(&self, tables: &[Table]) -> std::result::Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("invalid table name {:?}", self.name));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !is_identifier(&col.name) {
                return Err(format!("invalid column name {:?}", col.name));
            }
            if !seen.insert(col.name.as_str()) {
                return Err(format!("duplicate column {}", col.name));
            }
        }
        if self.primary_key.is_empty() {
            return Err("table has no primary key".into());
        }
        let mut pk_seen = HashSet::new();
        for name in &self.primary_key {
            let col = self
                .column(name)
                .ok_or_else(|| format!("primary key column {name} does not exist"))?;
            if col.nullable {
                return Err(format!("primary key column {name} is nullable"));
            }
            if !pk_seen.insert(name) {
                return Err(format!("primary key lists {name} twice"));
            }
        }
        let mut fk_columns: HashSet<&str> = HashSet::new();
        for fk in &self.foreign_keys {
            if fk.columns.is_empty() {
                return Err("foreign key without columns".into());
            }
            let target = tables
                .iter()
                .find(|t| t.name == fk.ref_table)
                .ok_or_else(|| format!("foreign key references unknown table {}", fk.ref_table))?;
            if fk.ref_columns != target.primary_key {
                return Err(format!(
                    "foreign key ({}) must reference the primary key ({}) of {}",
                    fk.columns.join(", "),
                    target.primary_key.join(", "),
                    target.name
                ));
            }
            for (col_name, ref_name) in fk.columns.iter().zip(&fk.ref_columns) {
                let col = self
                    .column(col_name)
                    .ok_or_else(|| format!("foreign key column {col_name} does not exist"))?;
                // ref column existence is implied by the primary key check on target
                let ref_col = target.column(ref_name).expect("checked primary key");
                if col.data_type != ref_col.data_type {
                    return Err(format!(
                        "foreign key column {col_name} is {} but {}.{ref_name} is {}",
                        col.data_type, target.name, ref_col.data_type
                    ));
                }
                if !fk_columns.insert(col_name) {
                    return Err(format!("column {col_name} belongs to two foreign keys"));
                }
            }
        }
        Ok(())
    }

    fn check_row(&self, row: &Row) -> std::result::Result<(), String> {
        if row.values.len() != self.columns.len() {
            return Err(format!(
                "row has {} values for {} columns",
                row.values.len(),
                self.columns.len()
            ));
        }
        for (col, value) in self.columns.iter().zip(&row.values) {
            match value.data_type() {
                None if !col.nullable => return Err(format!("column {} is not nullable", col.name)),
                None => {}
                Some(t) if t != col.data_type => {
                    return Err(format!(
                        "column {} expects {}, got {} value {value}",
                        col.name, col.data_type, t
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationalDatabase {
    pub name: String,
    pub tables: Vec<Table>,
}

impl RelationalDatabase {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Checks every structural invariant, including primary-key uniqueness.
    pub fn check(&self) -> Result<()> {
        self.check_schema()?;
        for table in &self.tables {
            let mut keys = HashMap::new();
            for (i, row) in table.rows.iter().enumerate() {
                let location = format!("{}.{} row {}", self.name, table.name, i + 1);
                table
                    .check_row(row)
                    .map_err(|message| Error::InvariantViolation {
                        location: location.clone(),
                        message,
                    })?;
                check_unique_key(table, row, i, &mut keys).map_err(|message| {
                    Error::InvariantViolation { location, message }
                })?;
            }
        }
        Ok(())
    }

    pub(crate) fn check_schema(&self) -> Result<()> {
        if !is_identifier(&self.name) {
            return Err(Error::InvariantViolation {
                location: format!("database {:?}", self.name),
                message: "invalid database name".into(),
            });
        }
        let mut names = HashSet::new();
        for table in &self.tables {
            let location = format!("{}.{}", self.name, table.name);
            if !names.insert(table.name.as_str()) {
                return Err(Error::InvariantViolation {
                    location,
                    message: "duplicate table name".into(),
                });
            }
            table
                .check_schema(&self.tables)
                .map_err(|message| Error::InvariantViolation { location, message })?;
        }
        Ok(())
    }
}

/// Records the primary-key tuple of `row` in `keys`, failing if an earlier
/// row already holds it.
pub(crate) fn check_unique_key(
    table: &Table,
    row: &Row,
    index: usize,
    keys: &mut HashMap<String, usize>,
) -> std::result::Result<(), String> {
    let key = encode_tuple(&Table::tuple(row, &table.pk_indices()));
    if let Some(prev) = keys.insert(key, index) {
        return Err(format!(
            "duplicate primary key ({}) also on row {}",
            table.primary_key.join(", "),
            prev + 1
        ));
    }
    Ok(())
}

/// Joins canonical renderings with the ASCII unit separator. Separator and
/// backslash characters inside values are escaped so that distinct tuples
/// never collide.
pub fn encode_tuple(values: &[ScalarValue]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push('\u{1f}');
        }
        for c in v.canonical().chars() {
            match c {
                '\\' => out.push_str("\\\\"),
                '\u{1f}' => out.push_str("\\x1f"),
                c => out.push(c),
            }
        }
    }
    out
}
