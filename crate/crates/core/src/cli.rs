//! Command implementations behind the `lakedw` binary.
//!
//! Every command returns data plus a line-oriented rendering; `main` only
//! parses arguments, prints, and maps results to exit codes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::{Map, Value};

use crate::convertlinks::{convert_links, LinkPolicy, LinkReport};
use crate::createdw::ingest_all;
use crate::docmodel::{read_warehouse, store, write_warehouse, Rid};
use crate::mergeclasses::{load_ontology, merge_classes, MergePolicy, MergeReport};
use crate::relmodel::{load_snapshot, parse_sql_dump, validate_database, RelationalDatabase, ValidationReport};

/// Invalid invocation, as opposed to a failure while running a command.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSpec {
    Snapshot(PathBuf),
    SqlDump { path: PathBuf, db_name: String },
}

impl SourceSpec {
    pub fn path(&self) -> &Path {
        match self {
            SourceSpec::Snapshot(p) => p,
            SourceSpec::SqlDump { path, .. } => path,
        }
    }

    pub fn load(&self) -> Result<RelationalDatabase> {
        match self {
            SourceSpec::Snapshot(dir) => {
                load_snapshot(dir).with_context(|| format!("loading snapshot {}", dir.display()))
            }
            SourceSpec::SqlDump { path, db_name } => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading SQL dump {}", path.display()))?;
                parse_sql_dump(&text, db_name)
                    .with_context(|| format!("parsing SQL dump {}", path.display()))
            }
        }
    }
}

impl FromStr for SourceSpec {
    type Err = UsageError;

    /// `snapshot:<dir>` or `sqldump:<file>:<dbname>`.
    fn from_str(s: &str) -> Result<Self, UsageError> {
        if let Some(dir) = s.strip_prefix("snapshot:") {
            if dir.is_empty() {
                return Err(UsageError("snapshot source needs a directory".into()));
            }
            return Ok(SourceSpec::Snapshot(dir.into()));
        }
        if let Some(rest) = s.strip_prefix("sqldump:") {
            return match rest.rsplit_once(':') {
                Some((path, db)) if !path.is_empty() && !db.is_empty() => Ok(SourceSpec::SqlDump {
                    path: path.into(),
                    db_name: db.to_string(),
                }),
                _ => Err(UsageError(format!("expected sqldump:<file>:<dbname>, got {s:?}"))),
            };
        }
        Err(UsageError(format!(
            "unknown source {s:?}; use snapshot:<dir> or sqldump:<file>:<dbname>"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sources: Vec<SourceSpec>,
    pub warehouse_name: String,
    pub out_dir: PathBuf,
    pub ontology_path: Option<PathBuf>,
    pub link_policy: LinkPolicy,
    pub merge_policy: MergePolicy,
}

fn same_path(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

impl PipelineConfig {
    pub fn check(&self) -> Result<(), UsageError> {
        if self.sources.is_empty() {
            return Err(UsageError("at least one --source is required".into()));
        }
        if !crate::relmodel::is_identifier(&self.warehouse_name) {
            return Err(UsageError(format!(
                "warehouse name {:?} must match [A-Za-z0-9_]+",
                self.warehouse_name
            )));
        }
        if let Some(src) = self.sources.iter().find(|s| same_path(s.path(), &self.out_dir)) {
            return Err(UsageError(format!(
                "output directory {} is also a source",
                src.path().display()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSummary {
    pub name: String,
    pub cluster: u32,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub sources: usize,
    pub validation_findings: usize,
    pub classes: Vec<ClassSummary>,
    pub links: LinkReport,
    pub merge: Option<MergeReport>,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sources: {}", self.sources)?;
        writeln!(f, "validation.findings: {}", self.validation_findings)?;
        writeln!(f, "classes: {}", self.classes.len())?;
        writeln!(f, "records: {}", self.classes.iter().map(|c| c.records).sum::<usize>())?;
        for c in &self.classes {
            writeln!(f, "class: {} cluster={} records={}", c.name, c.cluster, c.records)?;
        }
        writeln!(f, "links.converted: {}", self.links.converted)?;
        writeln!(f, "links.absent: {}", self.links.absent)?;
        writeln!(f, "links.skipped: {}", self.links.skipped)?;
        writeln!(f, "links.dangling: {}", self.links.dangling.len())?;
        let (groups, merged, conflicts) = match &self.merge {
            Some(m) => (m.groups.len(), m.merged_records(), m.conflict_count()),
            None => (0, 0, 0),
        };
        writeln!(f, "merge.groups: {groups}")?;
        writeln!(f, "merge.records: {merged}")?;
        write!(f, "merge.conflicts: {conflicts}")
    }
}

const OUTPUT_FILES: [&str; 3] = ["manifest.json", "catalog.json", "merge_report.json"];

/// Makes `dir` ready for a fresh warehouse: missing or empty directories are
/// fine, a previous warehouse is cleared, anything else is refused.
fn prepare_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_none();
        if !empty {
            if !dir.join("manifest.json").is_file() {
                bail!(
                    "refusing to write into non-empty directory {} that holds no warehouse",
                    dir.display()
                );
            }
            let classes = dir.join("classes");
            if classes.exists() {
                fs::remove_dir_all(&classes).with_context(|| format!("clearing {}", classes.display()))?;
            }
            for f in OUTPUT_FILES {
                let p = dir.join(f);
                if p.exists() {
                    fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
                }
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Loads, validates, ingests, converts links, optionally merges, and writes
/// the warehouse directory.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<IngestSummary> {
    config.check()?;
    let dbs = config
        .sources
        .iter()
        .map(SourceSpec::load)
        .collect::<Result<Vec<_>>>()?;

    let reports: Vec<ValidationReport> = dbs.iter().map(validate_database).collect();
    let validation_findings = reports.iter().map(|r| r.findings.len()).sum();
    if config.link_policy == LinkPolicy::Strict && validation_findings > 0 {
        let lines: Vec<String> = reports
            .iter()
            .flat_map(|r| r.findings.iter().map(move |f| format!("{}: {f}", r.database)))
            .collect();
        bail!("source validation failed:\n{}", lines.join("\n"));
    }

    let (mut wh, cat) = ingest_all(&dbs, &config.warehouse_name)?;
    let links = convert_links(&mut wh, &cat, config.link_policy)?;
    let merge = match &config.ontology_path {
        Some(path) => {
            let ontology = load_ontology(path, &wh)
                .with_context(|| format!("loading ontology {}", path.display()))?;
            Some(merge_classes(&mut wh, &ontology, config.merge_policy)?)
        }
        None => None,
    };

    prepare_out_dir(&config.out_dir)?;
    write_warehouse(&wh, &config.out_dir)?;
    let mut catalog: Map<String, Value> = cat.to_json().map_err(anyhow::Error::msg)?;
    catalog.insert("conversion".into(), links.to_json());
    write_json(&config.out_dir.join("catalog.json"), &Value::Object(catalog))?;
    if let Some(report) = &merge {
        write_json(
            &config.out_dir.join("merge_report.json"),
            &report.to_json().map_err(anyhow::Error::msg)?,
        )?;
    }

    Ok(IngestSummary {
        sources: dbs.len(),
        validation_findings,
        classes: wh
            .classes()
            .iter()
            .map(|c| ClassSummary {
                name: c.name().to_string(),
                cluster: c.cluster(),
                records: c.records().len(),
            })
            .collect(),
        links,
        merge,
    })
}

/// Loads and validates each source; callers exit nonzero when any report has
/// findings.
pub fn cmd_validate(sources: &[SourceSpec]) -> Result<Vec<ValidationReport>> {
    sources.iter().map(|s| Ok(validate_database(&s.load()?))).collect()
}

pub fn render_validation(reports: &[ValidationReport]) -> String {
    let mut out = String::new();
    for r in reports {
        if r.is_clean() {
            out.push_str(&format!("{}: clean\n", r.database));
        }
        for f in &r.findings {
            out.push_str(&format!("{}: {f}\n", r.database));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassStats {
    pub name: String,
    pub cluster: u32,
    pub records: usize,
    pub references: usize,
}

pub fn cmd_stats(dir: &Path) -> Result<Vec<ClassStats>> {
    let wh = read_warehouse(dir)?;
    Ok(wh
        .classes()
        .iter()
        .map(|c| ClassStats {
            name: c.name().to_string(),
            cluster: c.cluster(),
            records: c.records().len(),
            references: c.records().iter().map(|r| r.references().count()).sum(),
        })
        .collect())
}

/// Tab-separated, header first.
pub fn render_stats(stats: &[ClassStats]) -> String {
    let mut out = String::from("class\tcluster\trecords\treferences\n");
    for s in stats {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.name, s.cluster, s.records, s.references));
    }
    out
}

/// Pretty JSON of one record with the `@type`/`@rid`/`@version`/`@class`
/// header keys. `@type` and `@version` are the constants "d" and 1.
pub fn cmd_inspect(dir: &Path, rid: Rid) -> Result<String> {
    let wh = read_warehouse(dir)?;
    let record = wh.get_record(rid)?;
    let body = store::record_to_json(record).map_err(anyhow::Error::msg)?;
    let mut map = Map::new();
    map.insert("@type".into(), Value::from("d"));
    for (k, v) in body {
        map.insert(k.clone(), v);
        if k == "@rid" {
            map.insert("@version".into(), Value::from(1));
        }
    }
    Ok(serde_json::to_string_pretty(&Value::Object(map))?)
}
