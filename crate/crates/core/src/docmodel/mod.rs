//! Document side of the pipeline: classes of identified records made of
//! (attribute, value) couples.

pub mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::relmodel::{is_identifier, ScalarValue};

pub use store::{read_warehouse, write_warehouse};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("class {0} already exists")]
    DuplicateClass(String),
    #[error("attribute {attribute} appears twice in a record of {class}")]
    DuplicateAttribute { class: String, attribute: String },
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("no record {0}")]
    NotFound(Rid),
    #[error("malformed record id {0:?}")]
    InvalidRid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Record identifier, rendered `#<cluster>:<position>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rid {
    pub cluster: u32,
    pub position: u32,
}

impl Rid {
    pub fn new(cluster: u32, position: u32) -> Self {
        Rid { cluster, position }
    }
}

impl fmt::Display for Rid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}:{}", self.cluster, self.position)
    }
}

fn parse_component(s: &str) -> Option<u32> {
    // canonical decimal only, so parsing never accepts two spellings of one rid
    let canonical = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit())
        && (s == "0" || !s.starts_with('0'));
    canonical.then(|| s.parse().ok()).flatten()
}

impl FromStr for Rid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::InvalidRid(s.to_string());
        let body = s.strip_prefix('#').ok_or_else(invalid)?;
        let (cluster, position) = body.split_once(':').ok_or_else(invalid)?;
        Ok(Rid {
            cluster: parse_component(cluster).ok_or_else(invalid)?,
            position: parse_component(position).ok_or_else(invalid)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DocValue {
    Scalar(ScalarValue),
    Reference(Rid),
    List(Vec<DocValue>),
    Embedded(BTreeMap<String, DocValue>),
}

impl DocValue {
    pub fn as_reference(&self) -> Option<Rid> {
        match self {
            DocValue::Reference(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<&ScalarValue> {
        match self {
            DocValue::Scalar(s) => Some(s),
            _ => None,
        }
    }

    /// Every reference held by this value, nested ones included.
    pub fn references(&self) -> Vec<Rid> {
        let mut out = Vec::new();
        self.collect_references(&mut out);
        out
    }

    fn collect_references(&self, out: &mut Vec<Rid>) {
        match self {
            DocValue::Scalar(_) => {}
            DocValue::Reference(r) => out.push(*r),
            DocValue::List(items) => items.iter().for_each(|v| v.collect_references(out)),
            DocValue::Embedded(map) => map.values().for_each(|v| v.collect_references(out)),
        }
    }
}

impl From<ScalarValue> for DocValue {
    fn from(v: ScalarValue) -> Self {
        DocValue::Scalar(v)
    }
}

impl From<Rid> for DocValue {
    fn from(r: Rid) -> Self {
        DocValue::Reference(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Couple {
    pub attribute: String,
    pub value: DocValue,
}

impl Couple {
    pub fn new(attribute: impl Into<String>, value: impl Into<DocValue>) -> Self {
        Couple {
            attribute: attribute.into(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    rid: Rid,
    class_name: String,
    couples: Vec<Couple>,
}

impl Record {
    fn new(rid: Rid, class_name: &str, couples: Vec<Couple>) -> Result<Self> {
        for (i, c) in couples.iter().enumerate() {
            if c.attribute.is_empty() {
                return Err(Error::InvalidName(c.attribute.clone()));
            }
            if couples[..i].iter().any(|d| d.attribute == c.attribute) {
                return Err(Error::DuplicateAttribute {
                    class: class_name.to_string(),
                    attribute: c.attribute.clone(),
                });
            }
        }
        Ok(Record {
            rid,
            class_name: class_name.to_string(),
            couples,
        })
    }

    pub fn rid(&self) -> Rid {
        self.rid
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn couples(&self) -> &[Couple] {
        &self.couples
    }

    pub fn get(&self, attribute: &str) -> Option<&DocValue> {
        self.couples
            .iter()
            .find(|c| c.attribute == attribute)
            .map(|c| &c.value)
    }

    /// Replaces the value of `attribute` in place, or appends a new couple.
    pub fn set(&mut self, attribute: &str, value: DocValue) {
        match self.couples.iter_mut().find(|c| c.attribute == attribute) {
            Some(c) => c.value = value,
            None => self.couples.push(Couple::new(attribute, value)),
        }
    }

    pub fn remove(&mut self, attribute: &str) -> Option<DocValue> {
        let idx = self.couples.iter().position(|c| c.attribute == attribute)?;
        Some(self.couples.remove(idx).value)
    }

    pub fn references(&self) -> impl Iterator<Item = (&str, Rid)> {
        self.couples.iter().flat_map(|c| {
            c.value
                .references()
                .into_iter()
                .map(move |r| (c.attribute.as_str(), r))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocClass {
    name: String,
    cluster: u32,
    records: Vec<Record>,
}

impl DocClass {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cluster(&self) -> u32 {
        self.cluster
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [Record] {
        &mut self.records
    }

    /// Appends a record at the next position of this class's cluster.
    pub fn append_record(&mut self, couples: Vec<Couple>) -> Result<Rid> {
        let position = u32::try_from(self.records.len()).expect("class exceeds u32 positions");
        let rid = Rid::new(self.cluster, position);
        self.records.push(Record::new(rid, &self.name, couples)?);
        Ok(rid)
    }

    pub fn get(&self, position: u32) -> Option<&Record> {
        self.records.get(position as usize)
    }
}

/// The single warehouse. Clusters are allocated one per class, from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Warehouse {
    name: String,
    classes: Vec<DocClass>,
    next_cluster: u32,
}

impl Warehouse {
    pub fn new(name: impl Into<String>) -> Self {
        Warehouse {
            name: name.into(),
            classes: Vec::new(),
            next_cluster: 1,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[DocClass] {
        &self.classes
    }

    pub fn next_cluster(&self) -> u32 {
        self.next_cluster
    }

    pub fn class(&self, name: &str) -> Option<&DocClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_mut(&mut self, name: &str) -> Option<&mut DocClass> {
        self.classes.iter_mut().find(|c| c.name == name)
    }

    pub fn class_by_cluster(&self, cluster: u32) -> Option<&DocClass> {
        self.classes.iter().find(|c| c.cluster == cluster)
    }

    pub fn create_class(&mut self, name: &str) -> Result<&mut DocClass> {
        if !is_identifier(name) {
            return Err(Error::InvalidName(name.to_string()));
        }
        if self.class(name).is_some() {
            return Err(Error::DuplicateClass(name.to_string()));
        }
        let cluster = self.next_cluster;
        self.next_cluster += 1;
        self.classes.push(DocClass {
            name: name.to_string(),
            cluster,
            records: Vec::new(),
        });
        Ok(self.classes.last_mut().expect("just pushed"))
    }

    pub fn get_record(&self, rid: Rid) -> Result<&Record> {
        self.class_by_cluster(rid.cluster)
            .and_then(|c| c.get(rid.position))
            .ok_or(Error::NotFound(rid))
    }

    pub fn record_count(&self) -> usize {
        self.classes.iter().map(|c| c.records.len()).sum()
    }

    /// Rebuilds a warehouse from persisted parts. Classes must carry distinct
    /// names and clusters and records must sit at their own rid.
    pub(crate) fn from_parts(name: String, classes: Vec<(String, u32, Vec<Vec<Couple>>)>) -> Result<Self> {
        let mut wh = Warehouse::new(name);
        for (class_name, cluster, records) in classes {
            if !is_identifier(&class_name) {
                return Err(Error::InvalidName(class_name));
            }
            if wh.class(&class_name).is_some() {
                return Err(Error::DuplicateClass(class_name));
            }
            if wh.class_by_cluster(cluster).is_some() {
                return Err(Error::DuplicateClass(format!("{class_name} (cluster {cluster})")));
            }
            let mut class = DocClass {
                name: class_name,
                cluster,
                records: Vec::new(),
            };
            for couples in records {
                class.append_record(couples)?;
            }
            wh.next_cluster = wh.next_cluster.max(cluster + 1);
            wh.classes.push(class);
        }
        Ok(wh)
    }
}
