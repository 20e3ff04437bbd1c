//! Ingestion of a set of relational databases into one document-oriented
//! warehouse.
//!
//! The pipeline runs in three passes over an in-memory [`Warehouse`]:
//!
//! 1. [`createdw`] turns every table into a class (prefixed by its database
//!    name) and every row into a record, recording a [`KeyCatalog`] that maps
//!    each primary key to the record identifier it landed on.
//! 2. [`convertlinks`] rewrites foreign-key couples into [`Rid`] references
//!    using that catalog.
//! 3. [`mergeclasses`] groups equivalent classes named by an expert
//!    [`Ontology`] into new classes, combining complementary attributes of
//!    records that describe the same entity.
//!
//! Sources come from snapshot directories or a small SQL dump dialect (see
//! [`relmodel`]); the warehouse is persisted as a directory of JSON lines
//! files (see [`docmodel::store`]).

pub mod cli;
pub mod convertlinks;
pub mod createdw;
pub mod docmodel;
pub mod mergeclasses;
pub mod relmodel;

pub use convertlinks::{check_referential_integrity, convert_links, LinkPolicy, LinkReport};
pub use createdw::{class_name_for, ingest_all, transform_database, KeyCatalog, LinkSpec};
pub use docmodel::{Couple, DocClass, DocValue, Record, Rid, Warehouse};
pub use mergeclasses::{load_ontology, merge_classes, MergePolicy, MergeReport, Ontology};

pub use relmodel::{
    load_snapshot, parse_sql_dump, validate_database, write_snapshot, RelationalDatabase,
    ScalarValue,
};
