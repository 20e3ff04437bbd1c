//! Merging of equivalent classes under an expert-supplied ontology.
//!
//! Each equivalence group names member classes in precedence order, how their
//! attributes map onto canonical names, and the canonical attribute that
//! identifies an entity. Member records are bucketed by that match key and
//! every bucket becomes one record of a new class whose couples are the union
//! of the bucket's mapped couples. When two sources disagree on an attribute
//! the higher-precedence member wins and the disagreement is reported.
//!
//! Member classes are left as they are, and references inside merged records
//! keep pointing at the original records.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::docmodel::{self, store::value_to_json, Couple, DocValue, Rid, Warehouse};
use crate::relmodel::is_identifier;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ontology: {0}")]
    Format(String),
    #[error("group {group} names unknown class {class}")]
    UnknownClass { group: String, class: String },
    #[error("class {class} has no attribute {attribute}")]
    UnknownAttribute { class: String, attribute: String },
    #[error("class {0} belongs to more than one equivalence group")]
    OverlappingGroups(String),
    #[error("canonical class name {0} is already taken")]
    CanonicalNameTaken(String),
    #[error("{class} record {rid} has no match key {match_key}")]
    MissingMatchKey {
        class: String,
        rid: Rid,
        match_key: String,
    },
    #[error(transparent)]
    Document(#[from] docmodel::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MergePolicy {
    /// A member record without the match key aborts the merge.
    #[default]
    Strict,
    /// Keyless records become singleton merged records and are reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MemberMapping {
    #[serde(rename = "class")]
    pub class_name: String,
    #[serde(default)]
    pub attribute_map: IndexMap<String, String>,
}

impl MemberMapping {
    /// Canonical name of a source attribute; unmapped names pass through.
    pub fn canonical<'a>(&'a self, attribute: &'a str) -> &'a str {
        self.attribute_map
            .get(attribute)
            .map(String::as_str)
            .unwrap_or(attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EquivalenceGroup {
    pub canonical_name: String,
    pub match_key: String,
    /// Highest precedence first.
    pub members: Vec<MemberMapping>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ontology {
    pub groups: Vec<EquivalenceGroup>,
}

impl Ontology {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    /// Checks the ontology against the classes and attributes of `wh`.
    pub fn validate(&self, wh: &Warehouse) -> Result<(), Error> {
        let mut claimed = HashSet::new();
        let mut canonical_names = HashSet::new();
        for group in &self.groups {
            if !is_identifier(&group.canonical_name) {
                return Err(Error::Format(format!("invalid canonical name {:?}", group.canonical_name)));
            }
            if wh.class(&group.canonical_name).is_some() || !canonical_names.insert(&group.canonical_name) {
                return Err(Error::CanonicalNameTaken(group.canonical_name.clone()));
            }
            if !is_identifier(&group.match_key) {
                return Err(Error::Format(format!("invalid match key {:?}", group.match_key)));
            }
            if group.members.len() < 2 {
                return Err(Error::Format(format!(
                    "group {} needs at least two members",
                    group.canonical_name
                )));
            }
            for member in &group.members {
                let class = wh.class(&member.class_name).ok_or_else(|| Error::UnknownClass {
                    group: group.canonical_name.clone(),
                    class: member.class_name.clone(),
                })?;
                if !claimed.insert(member.class_name.as_str()) {
                    return Err(Error::OverlappingGroups(member.class_name.clone()));
                }
                validate_member(member, class, &group.match_key)?;
            }
        }
        if let Some(name) = canonical_names.iter().find(|n| claimed.contains(n.as_str())) {
            return Err(Error::CanonicalNameTaken((*name).clone()));
        }
        Ok(())
    }
}

fn validate_member(member: &MemberMapping, class: &docmodel::DocClass, match_key: &str) -> Result<(), Error> {
    let mut universe: Vec<&str> = Vec::new();
    for record in class.records() {
        for c in record.couples() {
            if !universe.contains(&c.attribute.as_str()) {
                universe.push(&c.attribute);
            }
        }
    }
    let mut targets = HashSet::new();
    for (source, target) in &member.attribute_map {
        if !is_identifier(target) {
            return Err(Error::Format(format!("invalid canonical attribute {target:?}")));
        }
        if !targets.insert(target.as_str()) {
            return Err(Error::Format(format!(
                "{} maps two attributes onto {target}",
                member.class_name
            )));
        }
        if !class.records().is_empty() && !universe.contains(&source.as_str()) {
            return Err(Error::UnknownAttribute {
                class: member.class_name.clone(),
                attribute: source.clone(),
            });
        }
    }
    for attr in &universe {
        if !member.attribute_map.contains_key(*attr) && targets.contains(attr) {
            return Err(Error::Format(format!(
                "{}: attribute {attr} collides with a mapped canonical attribute",
                member.class_name
            )));
        }
    }
    let reaches_key = targets.contains(match_key)
        || (!member.attribute_map.contains_key(match_key) && universe.contains(&match_key));
    if !class.records().is_empty() && !reaches_key {
        return Err(Error::UnknownAttribute {
            class: member.class_name.clone(),
            attribute: match_key.to_string(),
        });
    }
    Ok(())
}

/// Reads and validates an ontology file.
pub fn load_ontology(path: impl AsRef<Path>, wh: &Warehouse) -> Result<Ontology, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ontology = Ontology::from_json(&text)?;
    ontology.validate(wh)?;
    Ok(ontology)
}

/// One attribute on which the sources of a bucket disagreed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeConflict {
    pub attribute: String,
    /// Index into the merged input of the source whose value was kept.
    pub kept: usize,
    /// (input index, value) of every differing value that was dropped.
    pub discarded: Vec<(usize, DocValue)>,
}

/// Combines records describing one entity.
///
/// `sources` holds (precedence rank, mapped couples) and should be sorted by
/// rank; ties keep their given order. The result is the union of the couples
/// in first-seen order; on disagreement the earliest source wins.
pub fn merge_records(sources: &[(usize, Vec<Couple>)]) -> (Vec<Couple>, Vec<AttributeConflict>) {
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.sort_by_key(|&i| sources[i].0);

    let mut merged: Vec<Couple> = Vec::new();
    let mut origin: Vec<usize> = Vec::new();
    let mut conflicts: Vec<AttributeConflict> = Vec::new();
    for i in order {
        for couple in &sources[i].1 {
            match merged.iter().position(|c| c.attribute == couple.attribute) {
                None => {
                    merged.push(couple.clone());
                    origin.push(i);
                }
                Some(at) if merged[at].value == couple.value => {}
                Some(at) => {
                    let discarded = (i, couple.value.clone());
                    match conflicts.iter_mut().find(|c| c.attribute == couple.attribute) {
                        Some(c) => c.discarded.push(discarded),
                        None => conflicts.push(AttributeConflict {
                            attribute: couple.attribute.clone(),
                            kept: origin[at],
                            discarded: vec![discarded],
                        }),
                    }
                }
            }
        }
    }
    (merged, conflicts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRef {
    pub class: String,
    pub rid: Rid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictEntry {
    /// Match-key value of the entity, absent for keyless singletons.
    pub entity: Option<DocValue>,
    pub merged_rid: Rid,
    pub attribute: String,
    pub kept: SourceRef,
    pub kept_value: DocValue,
    pub discarded: Vec<(SourceRef, DocValue)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub canonical_name: String,
    pub cluster: u32,
    pub merged: usize,
    /// Records contributed by each member, in precedence order.
    pub per_source: Vec<(String, usize)>,
    pub conflicts: Vec<ConflictEntry>,
    pub missing_match_key: Vec<SourceRef>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    pub groups: Vec<GroupReport>,
}

impl MergeReport {
    pub fn merged_records(&self) -> usize {
        self.groups.iter().map(|g| g.merged).sum()
    }

    pub fn conflict_count(&self) -> usize {
        self.groups.iter().map(|g| g.conflicts.len()).sum()
    }

    pub fn to_json(&self) -> Result<Value, String> {
        let source = |s: &SourceRef| json!({"class": s.class, "rid": s.rid.to_string()});
        let mut groups = Vec::new();
        for g in &self.groups {
            let mut conflicts = Vec::new();
            for c in &g.conflicts {
                let mut discarded = Vec::new();
                for (s, v) in &c.discarded {
                    discarded.push(json!({"source": source(s), "value": value_to_json(v)?}));
                }
                conflicts.push(json!({
                    "entity": c.entity.as_ref().map(value_to_json).transpose()?,
                    "record": c.merged_rid.to_string(),
                    "attribute": c.attribute,
                    "kept": {"source": source(&c.kept), "value": value_to_json(&c.kept_value)?},
                    "discarded": discarded,
                }));
            }
            let per_source: Vec<Value> = g
                .per_source
                .iter()
                .map(|(class, count)| json!({"class": class, "count": count}))
                .collect();
            let missing: Vec<Value> = g.missing_match_key.iter().map(source).collect();
            groups.push(json!({
                "canonicalName": g.canonical_name,
                "cluster": g.cluster,
                "merged": g.merged,
                "perSource": per_source,
                "conflicts": conflicts,
                "missingMatchKey": missing,
            }));
        }
        Ok(json!({ "groups": groups }))
    }
}

struct Bucket {
    key: Option<DocValue>,
    sources: Vec<(usize, Vec<Couple>)>,
    refs: Vec<SourceRef>,
}

/// Creates one merged class per equivalence group, in ontology order.
///
/// All buckets are computed before any class is created, so a strict-mode
/// failure leaves the warehouse untouched.
pub fn merge_classes(wh: &mut Warehouse, ont: &Ontology, policy: MergePolicy) -> Result<MergeReport, Error> {
    ont.validate(wh)?;
    let mut planned = Vec::new();
    for group in &ont.groups {
        let mut buckets: Vec<Bucket> = Vec::new();
        let mut by_key: HashMap<String, usize> = HashMap::new();
        let mut per_source = Vec::new();
        let mut missing = Vec::new();
        for (rank, member) in group.members.iter().enumerate() {
            let class = wh.class(&member.class_name).expect("validated member");
            per_source.push((member.class_name.clone(), class.records().len()));
            for record in class.records() {
                let mapped: Vec<Couple> = record
                    .couples()
                    .iter()
                    .map(|c| Couple::new(member.canonical(&c.attribute), c.value.clone()))
                    .collect();
                let source = SourceRef {
                    class: member.class_name.clone(),
                    rid: record.rid(),
                };
                let key = mapped
                    .iter()
                    .find(|c| c.attribute == group.match_key)
                    .map(|c| c.value.clone())
                    .filter(|v| !matches!(v, DocValue::Scalar(s) if s.is_null()));
                let idx = match &key {
                    Some(value) => {
                        let encoded = value_to_json(value).map_err(Error::Format)?.to_string();
                        *by_key.entry(encoded).or_insert_with(|| {
                            buckets.push(Bucket {
                                key: Some(value.clone()),
                                sources: Vec::new(),
                                refs: Vec::new(),
                            });
                            buckets.len() - 1
                        })
                    }
                    None => {
                        if policy == MergePolicy::Strict {
                            return Err(Error::MissingMatchKey {
                                class: member.class_name.clone(),
                                rid: record.rid(),
                                match_key: group.match_key.clone(),
                            });
                        }
                        missing.push(source.clone());
                        buckets.push(Bucket {
                            key: None,
                            sources: Vec::new(),
                            refs: Vec::new(),
                        });
                        buckets.len() - 1
                    }
                };
                buckets[idx].sources.push((rank, mapped));
                buckets[idx].refs.push(source);
            }
        }
        planned.push((group, buckets, per_source, missing));
    }

    let mut report = MergeReport::default();
    for (group, buckets, per_source, missing_match_key) in planned {
        let class = wh.create_class(&group.canonical_name)?;
        let mut conflicts = Vec::new();
        for bucket in &buckets {
            let (couples, found) = merge_records(&bucket.sources);
            let merged_rid = class.append_record(couples)?;
            for c in found {
                let kept_value = bucket.sources[c.kept]
                    .1
                    .iter()
                    .find(|k| k.attribute == c.attribute)
                    .map(|k| k.value.clone())
                    .expect("kept source holds the attribute");
                conflicts.push(ConflictEntry {
                    entity: bucket.key.clone(),
                    merged_rid,
                    attribute: c.attribute,
                    kept: bucket.refs[c.kept].clone(),
                    kept_value,
                    discarded: c
                        .discarded
                        .into_iter()
                        .map(|(i, v)| (bucket.refs[i].clone(), v))
                        .collect(),
                });
            }
        }
        report.groups.push(GroupReport {
            canonical_name: group.canonical_name.clone(),
            cluster: class.cluster(),
            merged: buckets.len(),
            per_source,
            conflicts,
            missing_match_key,
        });
    }
    Ok(report)
}
