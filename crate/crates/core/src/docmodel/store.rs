//! Warehouse directory layout:
//!
//! ```text
//! manifest.json          {"name": .., "classes": [{"name", "cluster", "file", "count"}]}
//! classes/<name>.jsonl   one record per line: {"@rid": "#c:p", "@class": "<name>", "<attr>": <value>, ...}
//! ```
//!
//! Values map to JSON as follows. Text, integers, reals and booleans are
//! native JSON values; references are strings of the form `#c:p`; lists are
//! arrays and embedded maps are objects. Two cases need a wrapper object so
//! that reading back is lossless: dates (`{"@date": "YYYY-MM-DD"}`) and text
//! that would otherwise read as a reference (`{"@text": "#1:2"}`). Absent
//! links are absent keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Couple, DocValue, Error, Record, Result, Rid, Warehouse};
use crate::relmodel::{is_identifier, parse_date, ScalarValue};

const DATE_TAG: &str = "@date";
const TEXT_TAG: &str = "@text";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    classes: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    cluster: u32,
    file: String,
    count: usize,
}

pub fn scalar_to_json(value: &ScalarValue) -> std::result::Result<Value, String> {
    Ok(match value {
        ScalarValue::Null => Value::Null,
        ScalarValue::Text(s) if s.parse::<Rid>().is_ok() => {
            single(TEXT_TAG, Value::String(s.clone()))
        }
        ScalarValue::Text(s) => Value::String(s.clone()),
        ScalarValue::Integer(i) => Value::from(*i),
        ScalarValue::Real(r) if r.is_finite() => Value::from(*r),
        ScalarValue::Real(r) => return Err(format!("non-finite real {r}")),
        ScalarValue::Boolean(b) => Value::Bool(*b),
        ScalarValue::Date(d) => single(DATE_TAG, Value::String(d.format("%Y-%m-%d").to_string())),
    })
}

fn single(key: &str, value: Value) -> Value {
    let mut map = Map::new();
    map.insert(key.to_string(), value);
    Value::Object(map)
}

pub fn value_to_json(value: &DocValue) -> std::result::Result<Value, String> {
    Ok(match value {
        DocValue::Scalar(s) => scalar_to_json(s)?,
        DocValue::Reference(r) => Value::String(r.to_string()),
        DocValue::List(items) => Value::Array(items.iter().map(value_to_json).collect::<std::result::Result<_, _>>()?),
        DocValue::Embedded(map) => {
            let mut out = Map::new();
            for (k, v) in map {
                out.insert(k.clone(), value_to_json(v)?);
            }
            Value::Object(out)
        }
    })
}

pub fn value_from_json(value: &Value) -> std::result::Result<DocValue, String> {
    Ok(match value {
        Value::Null => DocValue::Scalar(ScalarValue::Null),
        Value::Bool(b) => DocValue::Scalar(ScalarValue::Boolean(*b)),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                DocValue::Scalar(ScalarValue::Integer(i))
            } else if n.is_f64() {
                DocValue::Scalar(ScalarValue::Real(n.as_f64().expect("f64")))
            } else {
                return Err(format!("integer {n} out of range"));
            }
        }
        Value::String(s) => match s.parse::<Rid>() {
            Ok(rid) => DocValue::Reference(rid),
            Err(_) => DocValue::Scalar(ScalarValue::Text(s.clone())),
        },
        Value::Array(items) => DocValue::List(items.iter().map(value_from_json).collect::<std::result::Result<_, _>>()?),
        Value::Object(map) => {
            if map.len() == 1 {
                if let Some(v) = map.get(DATE_TAG) {
                    let s = v.as_str().ok_or("@date must hold a string")?;
                    let d = parse_date(s).ok_or_else(|| format!("invalid date {s:?}"))?;
                    return Ok(DocValue::Scalar(ScalarValue::Date(d)));
                }
                if let Some(v) = map.get(TEXT_TAG) {
                    let s = v.as_str().ok_or("@text must hold a string")?;
                    return Ok(DocValue::Scalar(ScalarValue::Text(s.to_string())));
                }
            }
            let mut out = BTreeMap::new();
            for (k, v) in map {
                if !is_identifier(k) {
                    return Err(format!("invalid embedded attribute {k:?}"));
                }
                out.insert(k.clone(), value_from_json(v)?);
            }
            DocValue::Embedded(out)
        }
    })
}

/// `@rid` and `@class` first, then couples in order.
pub fn record_to_json(record: &Record) -> std::result::Result<Map<String, Value>, String> {
    let mut map = Map::new();
    map.insert("@rid".into(), Value::String(record.rid().to_string()));
    map.insert("@class".into(), Value::String(record.class_name().to_string()));
    for couple in record.couples() {
        let value = value_to_json(&couple.value).map_err(|m| format!("{}.{}: {m}", record.rid(), couple.attribute))?;
        map.insert(couple.attribute.clone(), value);
    }
    Ok(map)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub(crate) fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Writes the manifest and one JSON lines file per class.
pub fn write_warehouse(wh: &Warehouse, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let classes_dir = dir.join("classes");
    fs::create_dir_all(&classes_dir).map_err(io_err(&classes_dir))?;

    let mut entries = Vec::new();
    for class in wh.classes() {
        let file = format!("classes/{}.jsonl", class.name());
        let path = dir.join(&file);
        let mut out = Vec::new();
        for record in class.records() {
            let map = record_to_json(record).map_err(|m| format_err(&path, m))?;
            serde_json::to_writer(&mut out, &map).map_err(|e| format_err(&path, e.to_string()))?;
            out.push(b'\n');
        }
        fs::write(&path, out).map_err(io_err(&path))?;
        entries.push(ManifestEntry {
            name: class.name().to_string(),
            cluster: class.cluster(),
            file,
            count: class.records().len(),
        });
    }
    write_json_file(
        &dir.join("manifest.json"),
        &Manifest {
            name: wh.name().to_string(),
            classes: entries,
        },
    )
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            format_err(path, "file not found")
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

pub fn read_warehouse(dir: impl AsRef<Path>) -> Result<Warehouse> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_str(&read_to_string(&manifest_path)?)
        .map_err(|e| format_err(&manifest_path, e.to_string()))?;

    let mut classes = Vec::new();
    for entry in manifest.classes {
        let path: PathBuf = dir.join(&entry.file);
        let text = read_to_string(&path)?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let at = |m: String| format_err(&path, format!("line {}: {m}", i + 1));
            let map: Map<String, Value> = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let mut couples = Vec::new();
            let mut rid = None;
            let mut class = None;
            for (key, value) in &map {
                match key.as_str() {
                    "@rid" => rid = value.as_str().map(str::parse::<Rid>),
                    "@class" => class = value.as_str(),
                    k if k.starts_with('@') => return Err(at(format!("unexpected key {k}"))),
                    k => couples.push(Couple {
                        attribute: k.to_string(),
                        value: value_from_json(value).map_err(|m| at(format!("{k}: {m}")))?,
                    }),
                }
            }
            let expected = Rid::new(entry.cluster, i as u32);
            match rid {
                Some(Ok(r)) if r == expected => {}
                _ => return Err(at(format!("expected @rid {expected}"))),
            }
            if class != Some(entry.name.as_str()) {
                return Err(at(format!("expected @class {}", entry.name)));
            }
            records.push(couples);
        }
        if records.len() != entry.count {
            return Err(format_err(
                &path,
                format!("manifest declares {} records, file holds {}", entry.count, records.len()),
            ));
        }
        classes.push((entry.name, entry.cluster, records));
    }
    Warehouse::from_parts(manifest.name, classes).map_err(|e| match e {
        Error::Format { .. } | Error::Io { .. } => e,
        other => format_err(&manifest_path, other.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Warehouse {
        let mut wh = Warehouse::new("dw");
        let a = wh.create_class("Analysis_Physician").unwrap();
        a.append_record(vec![Couple::new("NoPhys", ScalarValue::Text("P1".into()))]).unwrap();
        let b = wh.create_class("Analysis_Patients").unwrap();
        b.append_record(vec![
            Couple::new("NoPat", ScalarValue::Text("45657709".into())),
            Couple::new("Doctor", Rid::new(1, 0)),
            Couple::new("Age", ScalarValue::Integer(42)),
            Couple::new("Weight", ScalarValue::Real(80.0)),
            Couple::new("Born", ScalarValue::Date(chrono::NaiveDate::from_ymd_opt(1980, 2, 29).unwrap())),
            Couple::new("Code", ScalarValue::Text("#3:4".into())),
            Couple::new("Active", ScalarValue::Boolean(true)),
            Couple::new("Tags", DocValue::List(vec![
                DocValue::Scalar(ScalarValue::Text("a".into())),
                DocValue::Reference(Rid::new(1, 0)),
            ])),
            Couple::new("Addr", DocValue::Embedded(BTreeMap::from([
                ("City".to_string(), DocValue::Scalar(ScalarValue::Text("Paris".into()))),
            ]))),
        ])
        .unwrap();
        b.append_record(vec![Couple::new("NoPat", ScalarValue::Text("13700008".into()))]).unwrap();
        wh
    }

    #[test]
    fn empty_warehouse_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let wh = Warehouse::new("empty");
        write_warehouse(&wh, dir.path()).unwrap();
        assert_eq!(fs::read_dir(dir.path().join("classes")).unwrap().count(), 0);
        assert_eq!(read_warehouse(dir.path()).unwrap(), wh);
    }

    #[test]
    fn sample_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let wh = sample();
        write_warehouse(&wh, dir.path()).unwrap();
        let back = read_warehouse(dir.path()).unwrap();
        assert_eq!(back, wh);
        let dir2 = tempfile::tempdir().unwrap();
        write_warehouse(&back, dir2.path()).unwrap();
        for f in ["manifest.json", "classes/Analysis_Patients.jsonl", "classes/Analysis_Physician.jsonl"] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(dir2.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn record_line_layout() {
        let dir = tempfile::tempdir().unwrap();
        write_warehouse(&sample(), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("classes/Analysis_Patients.jsonl")).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r##"{"@rid":"#2:0","@class":"Analysis_Patients","NoPat":"45657709","Doctor":"#1:0","Age":42,"Weight":80.0"##), "{first}");
        assert!(first.contains(r#""Born":{"@date":"1980-02-29"}"#));
        assert!(first.contains(r##""Code":{"@text":"#3:4"}"##));
    }

    #[test]
    fn missing_class_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_warehouse(&sample(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("classes/Analysis_Physician.jsonl")).unwrap();
        assert!(matches!(read_warehouse(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_manifest_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_warehouse(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_and_misplaced_rid() {
        let dir = tempfile::tempdir().unwrap();
        write_warehouse(&sample(), dir.path()).unwrap();
        let manifest = dir.path().join("manifest.json");
        let original = fs::read_to_string(&manifest).unwrap();
        fs::write(&manifest, original.replace("\"count\": 2", "\"count\": 3")).unwrap();
        assert!(matches!(read_warehouse(dir.path()), Err(Error::Format { .. })));
        fs::write(&manifest, &original).unwrap();
        let file = dir.path().join("classes/Analysis_Physician.jsonl");
        let text = fs::read_to_string(&file).unwrap().replace("#1:0", "#1:5");
        fs::write(&file, text).unwrap();
        assert!(matches!(read_warehouse(dir.path()), Err(Error::Format { .. })));
    }

    fn leaf() -> impl Strategy<Value = DocValue> {
        prop_oneof![
            ".{0,6}".prop_map(|s| DocValue::Scalar(ScalarValue::Text(s))),
            "#[0-9]{1,2}:[0-9]{1,2}".prop_map(|s| DocValue::Scalar(ScalarValue::Text(s))),
            any::<i64>().prop_map(|i| DocValue::Scalar(ScalarValue::Integer(i))),
            (-1e9f64..1e9).prop_map(|r| DocValue::Scalar(ScalarValue::Real(r))),
            any::<bool>().prop_map(|b| DocValue::Scalar(ScalarValue::Boolean(b))),
            (0u32..50, 0u32..50).prop_map(|(c, p)| DocValue::Reference(Rid::new(c, p))),
            (0i64..30000).prop_map(|d| DocValue::Scalar(ScalarValue::Date(
                chrono::NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(d)))),
        ]
    }

    fn doc_value() -> impl Strategy<Value = DocValue> {
        leaf().prop_recursive(2, 8, 3, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..3).prop_map(DocValue::List),
                proptest::collection::btree_map("[a-z]{1,3}", inner, 0..3).prop_map(DocValue::Embedded),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn warehouse_round_trip(classes in proptest::collection::vec(
            proptest::collection::vec(proptest::collection::vec(doc_value(), 0..4), 0..4), 0..4)) {
            let mut wh = Warehouse::new("p");
            for (i, records) in classes.iter().enumerate() {
                let class = wh.create_class(&format!("K{i}")).unwrap();
                for values in records {
                    let couples = values.iter().enumerate()
                        .map(|(j, v)| Couple::new(format!("a{j}"), v.clone())).collect();
                    class.append_record(couples).unwrap();
                }
            }
            let dir = tempfile::tempdir().unwrap();
            write_warehouse(&wh, dir.path()).unwrap();
            prop_assert_eq!(read_warehouse(dir.path()).unwrap(), wh);
        }
    }
}
