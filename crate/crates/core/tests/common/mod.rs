#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use lakedw::relmodel::{Column, DataType, ForeignKey, Row, Table};
use lakedw::{RelationalDatabase, ScalarValue};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn snapshot_dir(db: &str) -> PathBuf {
    fixtures().join("snapshots").join(db)
}

pub fn sql_file(name: &str) -> PathBuf {
    fixtures().join("sql").join(name)
}

/// Every file under `dir`, keyed by relative path.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

const TYPES: [DataType; 5] = [
    DataType::Text,
    DataType::Integer,
    DataType::Real,
    DataType::Boolean,
    DataType::Date,
];

pub fn random_scalar(rng: &mut impl Rng, t: DataType) -> ScalarValue {
    match t {
        DataType::Text => {
            if rng.gen_bool(0.05) {
                // text that looks like a record id
                ScalarValue::Text(format!("#{}:{}", rng.gen_range(0..9), rng.gen_range(0..9)))
            } else {
                let len = rng.gen_range(0..8);
                ScalarValue::Text((0..len).map(|_| rng.gen_range('a'..='z')).collect())
            }
        }
        DataType::Integer => ScalarValue::Integer(rng.gen_range(-1000..1000)),
        DataType::Real => ScalarValue::Real(rng.gen_range(-1e6..1e6)),
        DataType::Boolean => ScalarValue::Boolean(rng.gen()),
        DataType::Date => ScalarValue::Date(
            NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Duration::days(rng.gen_range(0..12000)),
        ),
    }
}

fn key_value(t: DataType, n: usize) -> ScalarValue {
    match t {
        DataType::Integer => ScalarValue::Integer(n as i64),
        _ => ScalarValue::Text(format!("K{n}")),
    }
}

/// A random clean database: up to 6 tables, up to 200 rows per table and up
/// to 3 foreign keys in total (self references included). Key columns are
/// never foreign-key columns.
pub fn random_database(rng: &mut impl Rng, name: &str) -> RelationalDatabase {
    let n_tables = rng.gen_range(1..=6);
    let mut tables = Vec::new();
    for t in 0..n_tables {
        let arity = if rng.gen_bool(0.25) { 2 } else { 1 };
        let key_types: Vec<DataType> = (0..arity)
            .map(|_| if rng.gen_bool(0.5) { DataType::Integer } else { DataType::Text })
            .collect();
        let mut columns: Vec<Column> = key_types
            .iter()
            .enumerate()
            .map(|(i, t)| Column { name: format!("k{i}"), data_type: *t, nullable: false })
            .collect();
        let n_data = rng.gen_range(0..=3);
        let data_types: Vec<DataType> = (0..n_data).map(|_| *TYPES.choose(rng).unwrap()).collect();
        for (i, t) in data_types.iter().enumerate() {
            columns.push(Column { name: format!("d{i}"), data_type: *t, nullable: rng.gen_bool(0.5) });
        }
        let n_rows = rng.gen_range(0..=200);
        let mut ids: Vec<usize> = (0..n_rows * 2).collect();
        ids.shuffle(rng);
        let rows = ids[..n_rows]
            .iter()
            .map(|&id| {
                let mut values: Vec<ScalarValue> = if arity == 1 {
                    vec![key_value(key_types[0], id)]
                } else {
                    vec![key_value(key_types[0], id / 3), key_value(key_types[1], id % 3)]
                };
                for c in &columns[arity..] {
                    values.push(if c.nullable && rng.gen_bool(0.2) {
                        ScalarValue::Null
                    } else {
                        random_scalar(rng, c.data_type)
                    });
                }
                Row { values }
            })
            .collect();
        tables.push(Table {
            name: format!("T{t}"),
            primary_key: (0..arity).map(|i| format!("k{i}")).collect(),
            columns,
            foreign_keys: Vec::new(),
            rows,
        });
    }

    let n_fks = rng.gen_range(0..=3);
    for j in 0..n_fks {
        let src = rng.gen_range(0..tables.len());
        let dst = rng.gen_range(0..tables.len());
        let target_pk: Vec<(String, DataType)> = tables[dst]
            .primary_key
            .iter()
            .map(|k| (k.clone(), tables[dst].column(k).unwrap().data_type))
            .collect();
        let target_keys: Vec<Vec<ScalarValue>> = tables[dst]
            .rows
            .iter()
            .map(|r| Table::tuple(r, &tables[dst].pk_indices()))
            .collect();
        let fk_cols: Vec<String> = (0..target_pk.len()).map(|i| format!("fk{j}_{i}")).collect();
        let table = &mut tables[src];
        for (c, (_, t)) in fk_cols.iter().zip(&target_pk) {
            table.columns.push(Column { name: c.clone(), data_type: *t, nullable: true });
        }
        for row in table.rows.iter_mut() {
            if target_keys.is_empty() || rng.gen_bool(0.2) {
                row.values.extend(fk_cols.iter().map(|_| ScalarValue::Null));
            } else {
                row.values.extend(target_keys.choose(rng).unwrap().iter().cloned());
            }
        }
        table.foreign_keys.push(ForeignKey {
            columns: fk_cols,
            ref_table: format!("T{dst}"),
            ref_columns: target_pk.into_iter().map(|(k, _)| k).collect(),
        });
    }
    let db = RelationalDatabase { name: name.to_string(), tables };
    db.check().expect("generator produces valid databases");
    db
}
