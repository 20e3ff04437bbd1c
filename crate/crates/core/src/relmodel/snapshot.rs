//! Snapshot directories: `schema.json` plus one `data/<table>.jsonl` per table.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{
    check_unique_key, parse_date, sanitize_identifier, Column, DataType, Error, ForeignKey,
    RelationalDatabase, Result, Row, ScalarValue, Table,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    name: String,
    tables: Vec<TableDef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct TableDef {
    name: String,
    columns: Vec<ColumnDef>,
    primary_key: Vec<String>,
    #[serde(default)]
    foreign_keys: Vec<ForeignKeyDef>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnDef {
    name: String,
    #[serde(rename = "type")]
    data_type: DataType,
    nullable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ForeignKeyDef {
    columns: Vec<String>,
    ref_table: String,
    ref_columns: Vec<String>,
}

fn sanitize_all(names: &[String]) -> Vec<String> {
    names.iter().map(|n| sanitize_identifier(n)).collect()
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

/// Loads a snapshot directory. Identifiers are sanitized on the way in and
/// rows keep their file order.
pub fn load_snapshot(dir: impl AsRef<Path>) -> Result<RelationalDatabase> {
    let dir = dir.as_ref();
    let schema_path = dir.join("schema.json");
    let schema: SchemaFile =
        serde_json::from_str(&read_file(&schema_path)?).map_err(|e| Error::SchemaSyntax {
            path: schema_path.clone(),
            message: e.to_string(),
        })?;

    let mut db = RelationalDatabase {
        name: sanitize_identifier(&schema.name),
        tables: schema
            .tables
            .iter()
            .map(|t| Table {
                name: sanitize_identifier(&t.name),
                columns: t
                    .columns
                    .iter()
                    .map(|c| Column {
                        name: sanitize_identifier(&c.name),
                        data_type: c.data_type,
                        nullable: c.nullable,
                    })
                    .collect(),
                primary_key: sanitize_all(&t.primary_key),
                foreign_keys: t
                    .foreign_keys
                    .iter()
                    .map(|fk| ForeignKey {
                        columns: sanitize_all(&fk.columns),
                        ref_table: sanitize_identifier(&fk.ref_table),
                        ref_columns: sanitize_all(&fk.ref_columns),
                    })
                    .collect(),
                rows: Vec::new(),
            })
            .collect(),
    };
    db.check_schema().map_err(|e| match e {
        Error::InvariantViolation { location, message } => Error::InvariantViolation {
            location: format!("{} ({location})", schema_path.display()),
            message,
        },
        other => other,
    })?;

    for (def, table) in schema.tables.iter().zip(db.tables.iter_mut()) {
        let path = dir.join("data").join(format!("{}.jsonl", def.name));
        table.rows = load_rows(&path, table)?;
    }
    Ok(db)
}

fn load_rows(path: &Path, table: &Table) -> Result<Vec<Row>> {
    let text = read_file(path)?;
    let mut rows = Vec::new();
    let mut keys = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let syntax = |message: String| Error::DataSyntax {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let object: Map<String, Value> =
            serde_json::from_str(line).map_err(|e| syntax(e.to_string()))?;
        let mut values = vec![ScalarValue::Null; table.columns.len()];
        for (key, value) in object {
            let name = sanitize_identifier(&key);
            let idx = table
                .column_index(&name)
                .ok_or_else(|| syntax(format!("unknown column {key:?}")))?;
            values[idx] = json_to_scalar(&value, table.columns[idx].data_type)
                .map_err(|m| syntax(format!("column {key}: {m}")))?;
        }
        let row = Row { values };
        let violation = |message: String| Error::InvariantViolation {
            location: format!("{}:{line_no}", path.display()),
            message,
        };
        table.check_row(&row).map_err(violation)?;
        check_unique_key(table, &row, rows.len(), &mut keys).map_err(violation)?;
        rows.push(row);
    }
    Ok(rows)
}

fn json_to_scalar(value: &Value, data_type: DataType) -> std::result::Result<ScalarValue, String> {
    let mismatch = || format!("expected {data_type}, found {value}");
    Ok(match (data_type, value) {
        (_, Value::Null) => ScalarValue::Null,
        (DataType::Text, Value::String(s)) => ScalarValue::Text(s.clone()),
        (DataType::Integer, Value::Number(n)) => {
            ScalarValue::Integer(n.as_i64().ok_or_else(mismatch)?)
        }
        (DataType::Real, Value::Number(n)) => ScalarValue::Real(n.as_f64().ok_or_else(mismatch)?),
        (DataType::Boolean, Value::Bool(b)) => ScalarValue::Boolean(*b),
        (DataType::Date, Value::String(s)) => ScalarValue::Date(parse_date(s).ok_or_else(mismatch)?),
        _ => return Err(mismatch()),
    })
}

fn scalar_to_json(value: &ScalarValue) -> Value {
    match value {
        ScalarValue::Null => Value::Null,
        ScalarValue::Text(s) => Value::String(s.clone()),
        ScalarValue::Integer(i) => Value::from(*i),
        ScalarValue::Real(r) => Value::from(*r),
        ScalarValue::Boolean(b) => Value::Bool(*b),
        ScalarValue::Date(d) => Value::String(d.format("%Y-%m-%d").to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `db` in the layout [`load_snapshot`] reads.
pub fn write_snapshot(db: &RelationalDatabase, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let data_dir: PathBuf = dir.join("data");
    fs::create_dir_all(&data_dir).map_err(io_err(&data_dir))?;

    let schema = SchemaFile {
        name: db.name.clone(),
        tables: db
            .tables
            .iter()
            .map(|t| TableDef {
                name: t.name.clone(),
                columns: t
                    .columns
                    .iter()
                    .map(|c| ColumnDef {
                        name: c.name.clone(),
                        data_type: c.data_type,
                        nullable: c.nullable,
                    })
                    .collect(),
                primary_key: t.primary_key.clone(),
                foreign_keys: t
                    .foreign_keys
                    .iter()
                    .map(|fk| ForeignKeyDef {
                        columns: fk.columns.clone(),
                        ref_table: fk.ref_table.clone(),
                        ref_columns: fk.ref_columns.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let schema_path = dir.join("schema.json");
    let mut text = serde_json::to_string_pretty(&schema).expect("schema serializes");
    text.push('\n');
    fs::write(&schema_path, text).map_err(io_err(&schema_path))?;

    for table in &db.tables {
        let path = data_dir.join(format!("{}.jsonl", table.name));
        let mut out = Vec::new();
        for row in &table.rows {
            let mut object = Map::new();
            for (col, value) in table.columns.iter().zip(&row.values) {
                if let ScalarValue::Real(r) = value {
                    if !r.is_finite() {
                        return Err(Error::InvariantViolation {
                            location: format!("{}.{}", table.name, col.name),
                            message: format!("non-finite real {r}"),
                        });
                    }
                }
                object.insert(col.name.clone(), scalar_to_json(value));
            }
            serde_json::to_writer(&mut out, &object).expect("row serializes");
            out.push(b'\n');
        }
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        file.write_all(&out).map_err(io_err(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::clinic;
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, rel: &str, contents: &str) {
        let path = dir.join(rel);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, contents).unwrap();
    }

    const INSURED_SCHEMA: &str = r#"{"name": "ServiceProvision", "tables": [
        {"name": "Insured",
         "columns": [{"name": "NoInsured", "type": "text", "nullable": false},
                     {"name": "Spouse", "type": "text", "nullable": true}],
         "primaryKey": ["NoInsured"],
         "foreignKeys": [{"columns": ["Spouse"], "refTable": "Insured", "refColumns": ["NoInsured"]}]}]}"#;

    #[test]
    fn empty_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", r#"{"name": "Empty", "tables": []}"#);
        let db = load_snapshot(dir.path()).unwrap();
        assert_eq!(db.name, "Empty");
        assert!(db.tables.is_empty());
    }

    #[test]
    fn missing_schema_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_snapshot(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with("schema.json")));
    }

    #[test]
    fn missing_data_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", INSURED_SCHEMA);
        let err = load_snapshot(dir.path()).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with("Insured.jsonl")));
    }

    #[test]
    fn malformed_schema() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", r#"{"name": "X", "tables": [{"name": 3}]}"#);
        assert!(matches!(load_snapshot(dir.path()), Err(Error::SchemaSyntax { .. })));
        write(dir.path(), "schema.json", r#"{"name": "X", "tables": [{"name": "T",
            "columns": [{"name": "A", "type": "blob", "nullable": false}], "primaryKey": ["A"]}]}"#);
        assert!(matches!(load_snapshot(dir.path()), Err(Error::SchemaSyntax { .. })));
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", INSURED_SCHEMA);
        write(
            dir.path(),
            "data/Insured.jsonl",
            "{\"NoInsured\": \"1\"}\n{\"NoInsured\": 2}\n",
        );
        match load_snapshot(dir.path()).unwrap_err() {
            Error::DataSyntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        write(dir.path(), "data/Insured.jsonl", "{\"NoInsured\": \"1\"\n");
        assert!(matches!(load_snapshot(dir.path()), Err(Error::DataSyntax { line: 1, .. })));
    }

    #[test]
    fn duplicate_pk_is_invariant_violation() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", INSURED_SCHEMA);
        write(
            dir.path(),
            "data/Insured.jsonl",
            "{\"NoInsured\": \"45657709\"}\n{\"NoInsured\": \"45657709\"}\n",
        );
        let err = load_snapshot(dir.path()).unwrap_err();
        match &err {
            Error::InvariantViolation { location, .. } => assert!(location.ends_with(":2"), "{err}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn identifiers_are_sanitized() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.json", r#"{"name": "Service Provision", "tables": [{"name": "In-sured",
            "columns": [{"name": "No Insured", "type": "integer", "nullable": false}], "primaryKey": ["No Insured"]}]}"#);
        write(dir.path(), "data/In-sured.jsonl", "{\"No Insured\": 7}\n");
        let db = load_snapshot(dir.path()).unwrap();
        assert_eq!(db.name, "Service_Provision");
        assert_eq!(db.tables[0].name, "In_sured");
        assert_eq!(db.tables[0].primary_key, vec!["No_Insured".to_string()]);
        assert_eq!(db.tables[0].rows[0].values, vec![ScalarValue::Integer(7)]);
    }

    #[test]
    fn clinic_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let db = clinic();
        write_snapshot(&db, dir.path()).unwrap();
        assert_eq!(load_snapshot(dir.path()).unwrap(), db);
    }

    fn scalar_for(t: DataType) -> BoxedStrategy<ScalarValue> {
        let value = match t {
            DataType::Text => ".{0,8}".prop_map(ScalarValue::Text).boxed(),
            DataType::Integer => any::<i64>().prop_map(ScalarValue::Integer).boxed(),
            DataType::Real => (-1e12f64..1e12).prop_map(ScalarValue::Real).boxed(),
            DataType::Boolean => any::<bool>().prop_map(ScalarValue::Boolean).boxed(),
            DataType::Date => (0i64..40000)
                .prop_map(|d| {
                    ScalarValue::Date(
                        chrono::NaiveDate::from_ymd_opt(1950, 1, 1).unwrap()
                            + chrono::Duration::days(d),
                    )
                })
                .boxed(),
        };
        prop_oneof![1 => Just(ScalarValue::Null), 4 => value].boxed()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn snapshot_round_trip(
            types in proptest::collection::vec(
                prop_oneof![Just(DataType::Text), Just(DataType::Integer), Just(DataType::Real),
                            Just(DataType::Boolean), Just(DataType::Date)], 1..5),
            seed_rows in 0usize..12,
        ) {
            let columns: Vec<Column> = types.iter().enumerate().map(|(i, t)| Column {
                name: format!("c{i}"), data_type: *t, nullable: true,
            }).collect();
            let mut columns = columns;
            columns.insert(0, Column { name: "id".into(), data_type: DataType::Integer, nullable: false });
            let strategies: Vec<_> = types.iter().map(|t| scalar_for(*t)).collect();
            let mut runner = proptest::test_runner::TestRunner::deterministic();
            let rows = (0..seed_rows).map(|i| {
                let mut values = vec![ScalarValue::Integer(i as i64)];
                for s in &strategies {
                    values.push(s.new_tree(&mut runner).unwrap().current());
                }
                Row { values }
            }).collect();
            let db = RelationalDatabase {
                name: "P".into(),
                tables: vec![Table {
                    name: "T".into(), columns, primary_key: vec!["id".into()],
                    foreign_keys: vec![], rows,
                }],
            };
            let dir = tempfile::tempdir().unwrap();
            write_snapshot(&db, dir.path()).unwrap();
            prop_assert_eq!(load_snapshot(dir.path()).unwrap(), db);
        }
    }
}
