//! Table-to-class and row-to-record transformation.
//!
//! Every table becomes a class named `<database>_<table>`, every row becomes a
//! record whose couples are the row's non-null columns in schema order. Key
//! and foreign-key columns are stored like any other attribute; alongside,
//! a [`KeyCatalog`] records which rid each primary key landed on and which
//! couples must later become references.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};

use crate::docmodel::{self, store::scalar_to_json, Couple, Rid, Warehouse};
use crate::relmodel::{self, encode_tuple, RelationalDatabase, ScalarValue, Table};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("database {0} listed twice")]
    DuplicateDatabaseName(String),
    #[error(transparent)]
    Relational(#[from] relmodel::Error),
    #[error(transparent)]
    Document(#[from] docmodel::Error),
}

/// Foreign-key couples of one class that must be turned into references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub class_name: String,
    pub attributes: Vec<String>,
    pub target_db: String,
    pub target_table: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CatalogKey {
    db: String,
    table: String,
    pk: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub db: String,
    pub table: String,
    pub pk: Vec<ScalarValue>,
    pub rid: Rid,
}

/// Primary key → rid metadata plus the link specifications, in ingestion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyCatalog {
    entries: IndexMap<CatalogKey, CatalogEntry>,
    links: Vec<LinkSpec>,
}

impl KeyCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn lookup(&self, db: &str, table: &str, pk: &[ScalarValue]) -> Option<Rid> {
        let key = CatalogKey {
            db: db.to_string(),
            table: table.to_string(),
            pk: encode_tuple(pk),
        };
        self.entries.get(&key).map(|e| e.rid)
    }

    fn insert(&mut self, db: &str, table: &str, pk: Vec<ScalarValue>, rid: Rid) {
        let key = CatalogKey {
            db: db.to_string(),
            table: table.to_string(),
            pk: encode_tuple(&pk),
        };
        let previous = self.entries.insert(
            key,
            CatalogEntry {
                db: db.to_string(),
                table: table.to_string(),
                pk,
                rid,
            },
        );
        debug_assert!(previous.is_none(), "primary keys are unique per checked table");
    }

    /// The `entries` and `links` sections of `catalog.json`.
    pub fn to_json(&self) -> Result<Map<String, Value>, String> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in self.entries.values() {
            let pk = e.pk.iter().map(scalar_to_json).collect::<Result<Vec<_>, _>>()?;
            entries.push(json!({"db": e.db, "table": e.table, "pk": pk, "rid": e.rid.to_string()}));
        }
        let links: Vec<Value> = self
            .links
            .iter()
            .map(|l| {
                json!({
                    "class": l.class_name,
                    "attributes": l.attributes,
                    "targetDb": l.target_db,
                    "targetTable": l.target_table,
                })
            })
            .collect();
        let mut map = Map::new();
        map.insert("entries".into(), Value::Array(entries));
        map.insert("links".into(), Value::Array(links));
        Ok(map)
    }
}

/// Class name of a source table: the table name prefixed by its database.
pub fn class_name_for(db_name: &str, table_name: &str) -> String {
    format!("{db_name}_{table_name}")
}

fn row_couples(table: &Table, row: &relmodel::Row) -> Vec<Couple> {
    table
        .columns
        .iter()
        .zip(&row.values)
        .filter(|(_, v)| !v.is_null())
        .map(|(c, v)| Couple::new(c.name.clone(), v.clone()))
        .collect()
}

/// Adds one class per table and one record per row of `db` to `wh`.
///
/// Nothing is written if any resulting class name is already taken.
pub fn transform_database(
    db: &RelationalDatabase,
    wh: &mut Warehouse,
    cat: &mut KeyCatalog,
) -> Result<(), Error> {
    db.check()?;
    for table in &db.tables {
        let name = class_name_for(&db.name, &table.name);
        if wh.class(&name).is_some() {
            return Err(docmodel::Error::DuplicateClass(name).into());
        }
    }

    for table in &db.tables {
        let class_name = class_name_for(&db.name, &table.name);
        let class = wh.create_class(&class_name)?;
        let pk = table.pk_indices();
        for row in &table.rows {
            let rid = class.append_record(row_couples(table, row))?;
            cat.insert(&db.name, &table.name, Table::tuple(row, &pk), rid);
        }
        for fk in &table.foreign_keys {
            cat.links.push(LinkSpec {
                class_name: class_name.clone(),
                attributes: fk.columns.clone(),
                target_db: db.name.clone(),
                target_table: fk.ref_table.clone(),
            });
        }
    }
    Ok(())
}

/// Transforms every database, in order, into one fresh warehouse.
pub fn ingest_all(
    dbs: &[RelationalDatabase],
    wh_name: &str,
) -> Result<(Warehouse, KeyCatalog), Error> {
    let mut seen = HashSet::new();
    for db in dbs {
        if !seen.insert(db.name.as_str()) {
            return Err(Error::DuplicateDatabaseName(db.name.clone()));
        }
    }
    let mut wh = Warehouse::new(wh_name);
    let mut cat = KeyCatalog::new();
    for db in dbs {
        transform_database(db, &mut wh, &mut cat)?;
    }
    Ok((wh, cat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docmodel::DocValue;
    use crate::relmodel::test_support::{clinic, col, text};
    use crate::relmodel::{DataType, Row};

    #[test]
    fn class_names_are_prefixed() {
        assert_eq!(class_name_for("Analysis", "Patients"), "Analysis_Patients");
        assert_eq!(class_name_for("ServiceProvision", "Insured"), "ServiceProvision_Insured");
        assert_eq!(class_name_for("Analysis", "Insured"), "Analysis_Insured");
    }

    #[test]
    fn empty_database_adds_nothing() {
        let mut wh = Warehouse::new("dw");
        let mut cat = KeyCatalog::new();
        let db = RelationalDatabase { name: "E".into(), tables: vec![] };
        transform_database(&db, &mut wh, &mut cat).unwrap();
        assert!(wh.classes().is_empty());
        assert!(cat.is_empty() && cat.links().is_empty());
    }

    #[test]
    fn rows_become_records_with_raw_fk_values() {
        let (wh, cat) = ingest_all(&[clinic()], "dw").unwrap();
        let names: Vec<_> = wh.classes().iter().map(|c| c.name()).collect();
        assert_eq!(names, ["Analysis_Physician", "Analysis_Patients"]);
        let patients = wh.class("Analysis_Patients").unwrap();
        assert_eq!(patients.cluster(), 2);
        let first = &patients.records()[0];
        assert_eq!(first.rid(), Rid::new(2, 0));
        assert_eq!(first.get("NoPat"), Some(&DocValue::Scalar(text("45657709"))));
        assert_eq!(first.get("Doctor"), Some(&DocValue::Scalar(text("P1"))));
        // null Doctor and null Name leave no couple
        assert_eq!(patients.records()[1].couples().len(), 1);
        assert_eq!(wh.class("Analysis_Physician").unwrap().records()[1].couples().len(), 1);

        assert_eq!(cat.len(), 4);
        assert_eq!(cat.lookup("Analysis", "Physician", &[text("P2")]), Some(Rid::new(1, 1)));
        assert_eq!(cat.lookup("Analysis", "Physician", &[text("P3")]), None);
        assert_eq!(
            cat.links(),
            &[LinkSpec {
                class_name: "Analysis_Patients".into(),
                attributes: vec!["Doctor".into()],
                target_db: "Analysis".into(),
                target_table: "Physician".into(),
            }]
        );
    }

    #[test]
    fn empty_input_list() {
        let (wh, cat) = ingest_all(&[], "dw").unwrap();
        assert!(wh.classes().is_empty());
        assert!(cat.is_empty());
    }

    #[test]
    fn duplicate_database_names() {
        let err = ingest_all(&[clinic(), clinic()], "dw").unwrap_err();
        assert!(matches!(err, Error::DuplicateDatabaseName(n) if n == "Analysis"));
    }

    #[test]
    fn class_collision_after_prefixing_is_an_error() {
        let a = RelationalDatabase {
            name: "A_B".into(),
            tables: vec![Table {
                name: "C".into(),
                columns: vec![col("k", DataType::Integer, false)],
                primary_key: vec!["k".into()],
                foreign_keys: vec![],
                rows: vec![Row { values: vec![ScalarValue::Integer(1)] }],
            }],
        };
        let mut b = a.clone();
        b.name = "A".into();
        b.tables[0].name = "B_C".into();
        let err = ingest_all(&[a, b], "dw").unwrap_err();
        assert!(matches!(err, Error::Document(docmodel::Error::DuplicateClass(n)) if n == "A_B_C"));
    }

    #[test]
    fn catalog_json_layout() {
        let (_, cat) = ingest_all(&[clinic()], "dw").unwrap();
        let json = Value::Object(cat.to_json().unwrap());
        assert_eq!(json["entries"][0], json!({"db": "Analysis", "table": "Physician", "pk": ["P1"], "rid": "#1:0"}));
        assert_eq!(json["links"][0]["targetTable"], "Physician");
    }
}
