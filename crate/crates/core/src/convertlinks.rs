//! Rewrites foreign-key couples into record references.
//!
//! For every [`LinkSpec`], each record of the linking class whose foreign-key
//! couples are all present is looked up in the [`KeyCatalog`]; the couple of
//! the first foreign-key attribute then holds the target rid and the other
//! foreign-key couples (composite keys) are dropped. Records without the
//! couples are left alone. Couples already holding a reference are skipped,
//! so the pass is idempotent.

use std::fmt;

use serde_json::{json, Value};

use crate::createdw::{class_name_for, KeyCatalog, LinkSpec};
use crate::docmodel::{store::scalar_to_json, DocValue, Rid, Warehouse};
use crate::relmodel::ScalarValue;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LinkPolicy {
    /// Any dangling foreign key aborts the pass before anything is rewritten.
    #[default]
    Strict,
    /// Dangling foreign-key couples are removed and reported.
    Lenient,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dangling link in {class} record {rid}: {attribute} = ({}) has no target", display_values(.values))]
    DanglingLink {
        class: String,
        rid: Rid,
        attribute: String,
        values: Vec<ScalarValue>,
    },
}

fn display_values(values: &[ScalarValue]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DanglingIncident {
    pub class: String,
    pub rid: Rid,
    pub attributes: Vec<String>,
    pub values: Vec<ScalarValue>,
    pub target_class: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkReport {
    pub converted: usize,
    /// Records with no (or an incomplete) foreign-key tuple.
    pub absent: usize,
    /// Records whose link was already a reference.
    pub skipped: usize,
    pub dangling: Vec<DanglingIncident>,
}

impl LinkReport {
    pub fn to_json(&self) -> Value {
        let dangling: Vec<Value> = self
            .dangling
            .iter()
            .map(|d| {
                let values: Vec<Value> = d
                    .values
                    .iter()
                    .map(|v| scalar_to_json(v).unwrap_or(Value::Null))
                    .collect();
                json!({
                    "class": d.class,
                    "rid": d.rid.to_string(),
                    "attributes": d.attributes,
                    "values": values,
                    "targetClass": d.target_class,
                })
            })
            .collect();
        json!({
            "converted": self.converted,
            "absent": self.absent,
            "skipped": self.skipped,
            "dangling": dangling,
        })
    }
}

enum Action {
    Convert(Rid),
    Drop,
}

struct Planned<'a> {
    cluster: u32,
    position: u32,
    link: &'a LinkSpec,
    action: Action,
}

/// Converts foreign-key couples into references.
pub fn convert_links(
    wh: &mut Warehouse,
    cat: &KeyCatalog,
    policy: LinkPolicy,
) -> Result<LinkReport, Error> {
    let mut report = LinkReport::default();
    let mut plan = Vec::new();

    for link in cat.links() {
        let Some(class) = wh.class(&link.class_name) else {
            continue;
        };
        let target_class = class_name_for(&link.target_db, &link.target_table);
        for record in class.records() {
            let found: Vec<Option<&DocValue>> = link.attributes.iter().map(|a| record.get(a)).collect();
            if let Some(Some(DocValue::Reference(_))) = found.first() {
                report.skipped += 1;
                continue;
            }
            let scalars: Option<Vec<ScalarValue>> = found
                .iter()
                .map(|v| match v {
                    Some(DocValue::Scalar(s)) if !s.is_null() => Some(s.clone()),
                    _ => None,
                })
                .collect();
            let Some(values) = scalars else {
                report.absent += 1;
                continue;
            };
            let action = match cat.lookup(&link.target_db, &link.target_table, &values) {
                Some(target) => {
                    report.converted += 1;
                    Action::Convert(target)
                }
                None => {
                    if policy == LinkPolicy::Strict {
                        return Err(Error::DanglingLink {
                            class: link.class_name.clone(),
                            rid: record.rid(),
                            attribute: link.attributes[0].clone(),
                            values,
                        });
                    }
                    report.dangling.push(DanglingIncident {
                        class: link.class_name.clone(),
                        rid: record.rid(),
                        attributes: link.attributes.clone(),
                        values,
                        target_class: target_class.clone(),
                    });
                    Action::Drop
                }
            };
            plan.push(Planned {
                cluster: class.cluster(),
                position: record.rid().position,
                link,
                action,
            });
        }
    }
    report.dangling.sort_by_key(|d| d.rid);

    for step in plan {
        let class = wh
            .class_mut(&step.link.class_name)
            .expect("planned against an existing class");
        debug_assert_eq!(class.cluster(), step.cluster);
        let record = &mut class.records_mut()[step.position as usize];
        let (first, rest) = step.link.attributes.split_first().expect("non-empty link");
        for attr in rest {
            record.remove(attr);
        }
        match step.action {
            Action::Convert(target) => record.set(first, DocValue::Reference(target)),
            Action::Drop => {
                record.remove(first);
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnresolvedReference {
    pub class: String,
    pub rid: Rid,
    pub attribute: String,
    pub target: Rid,
}

impl fmt::Display for UnresolvedReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} record {}: {} -> {} does not resolve",
            self.class, self.rid, self.attribute, self.target
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegrityReport {
    pub unresolved: Vec<UnresolvedReference>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.unresolved.is_empty()
    }
}

/// Lists every reference, nested ones included, that points at no record.
pub fn check_referential_integrity(wh: &Warehouse) -> IntegrityReport {
    let mut unresolved = Vec::new();
    for class in wh.classes() {
        for record in class.records() {
            for (attribute, target) in record.references() {
                if wh.get_record(target).is_err() {
                    unresolved.push(UnresolvedReference {
                        class: class.name().to_string(),
                        rid: record.rid(),
                        attribute: attribute.to_string(),
                        target,
                    });
                }
            }
        }
    }
    IntegrityReport { unresolved }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::createdw::ingest_all;
    use crate::docmodel::Couple;
    use crate::relmodel::test_support::{clinic, col, text};
    use crate::relmodel::{DataType, ForeignKey, RelationalDatabase, Row, Table};

    #[test]
    fn doctor_becomes_reference() {
        let (mut wh, cat) = ingest_all(&[clinic()], "dw").unwrap();
        let report = convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap();
        assert_eq!((report.converted, report.absent, report.skipped), (1, 1, 0));
        let patients = wh.class("Analysis_Patients").unwrap();
        let doctor = patients.records()[0].get("Doctor").unwrap().as_reference().unwrap();
        let physician = wh.get_record(doctor).unwrap();
        assert_eq!(physician.class_name(), "Analysis_Physician");
        assert_eq!(physician.get("NoPhys"), Some(&DocValue::Scalar(text("P1"))));
        assert!(patients.records()[1].get("Doctor").is_none());
        assert!(wh.class("Analysis_Physician").unwrap().records()[0].get("Name").is_some());
        assert!(check_referential_integrity(&wh).is_clean());
    }

    #[test]
    fn second_pass_converts_nothing() {
        let (mut wh, cat) = ingest_all(&[clinic()], "dw").unwrap();
        convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap();
        let snapshot = wh.clone();
        let again = convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap();
        assert_eq!(again.converted, 0);
        assert_eq!(again.skipped, 1);
        assert_eq!(wh, snapshot);
    }

    fn with_dangling() -> RelationalDatabase {
        let mut db = clinic();
        db.tables[1].rows.push(Row { values: vec![text("87782784"), text("P9")] });
        db
    }

    #[test]
    fn strict_dangling_aborts_without_changes() {
        let (mut wh, cat) = ingest_all(&[with_dangling()], "dw").unwrap();
        let before = wh.clone();
        let err = convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap_err();
        let Error::DanglingLink { class, rid, attribute, .. } = &err;
        assert_eq!((class.as_str(), *rid, attribute.as_str()), ("Analysis_Patients", Rid::new(2, 2), "Doctor"));
        assert!(err.to_string().contains("\"P9\""));
        assert_eq!(wh, before);
    }

    #[test]
    fn lenient_dangling_drops_couple() {
        let (mut wh, cat) = ingest_all(&[with_dangling()], "dw").unwrap();
        let report = convert_links(&mut wh, &cat, LinkPolicy::Lenient).unwrap();
        assert_eq!(report.converted, 1);
        assert_eq!(report.dangling.len(), 1);
        assert_eq!(report.dangling[0].target_class, "Analysis_Physician");
        assert!(wh.get_record(Rid::new(2, 2)).unwrap().get("Doctor").is_none());
        let json = report.to_json();
        assert_eq!(json["dangling"][0]["values"][0], "P9");
    }

    #[test]
    fn class_without_links_is_untouched() {
        let (mut wh, cat) = ingest_all(&[clinic()], "dw").unwrap();
        let before = wh.class("Analysis_Physician").unwrap().clone();
        convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap();
        assert_eq!(wh.class("Analysis_Physician").unwrap(), &before);
    }

    #[test]
    fn composite_fk_collapses_to_first_attribute() {
        let parent = Table {
            name: "Visit".into(),
            columns: vec![col("pat", DataType::Integer, false), col("day", DataType::Integer, false)],
            primary_key: vec!["pat".into(), "day".into()],
            foreign_keys: vec![],
            rows: vec![
                Row { values: vec![ScalarValue::Integer(1), ScalarValue::Integer(10)] },
                Row { values: vec![ScalarValue::Integer(1), ScalarValue::Integer(11)] },
            ],
        };
        let child = Table {
            name: "Act".into(),
            columns: vec![
                col("id", DataType::Integer, false),
                col("vpat", DataType::Integer, true),
                col("note", DataType::Text, true),
                col("vday", DataType::Integer, true),
            ],
            primary_key: vec!["id".into()],
            foreign_keys: vec![ForeignKey {
                columns: vec!["vpat".into(), "vday".into()],
                ref_table: "Visit".into(),
                ref_columns: vec!["pat".into(), "day".into()],
            }],
            rows: vec![Row {
                values: vec![ScalarValue::Integer(5), ScalarValue::Integer(1), text("x"), ScalarValue::Integer(11)],
            }],
        };
        let db = RelationalDatabase { name: "H".into(), tables: vec![parent, child] };
        let (mut wh, cat) = ingest_all(&[db], "dw").unwrap();
        convert_links(&mut wh, &cat, LinkPolicy::Strict).unwrap();
        let act = &wh.class("H_Act").unwrap().records()[0];
        let names: Vec<_> = act.couples().iter().map(|c| c.attribute.as_str()).collect();
        assert_eq!(names, ["id", "vpat", "note"]);
        assert_eq!(act.get("vpat").unwrap().as_reference(), Some(Rid::new(1, 1)));
    }

    #[test]
    fn planted_reference_is_found() {
        let mut wh = Warehouse::new("dw");
        assert!(check_referential_integrity(&wh).is_clean());
        let class = wh.create_class("T").unwrap();
        class.append_record(vec![Couple::new("self_ref", Rid::new(1, 0))]).unwrap();
        class
            .append_record(vec![Couple::new("bad", DocValue::List(vec![DocValue::Reference(Rid::new(999, 0))]))])
            .unwrap();
        let report = check_referential_integrity(&wh);
        assert_eq!(report.unresolved.len(), 1);
        assert_eq!(report.unresolved[0].target, Rid::new(999, 0));
        assert_eq!(report.unresolved[0].attribute, "bad");
    }
}
