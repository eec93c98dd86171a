//! Publication records and ground-truth advisor-advisee pairs.
//!
//! JSONL is the canonical publication format (one record per line). CSV is a
//! restricted alternate with `;`-separated list columns:
//!
//! ```text
//! paper_id,title,year,field,authors,affiliations,references
//! p1,On Things,2005,physics,Ada Lovelace;Alan Turing,Cambridge;,p0
//! ```
//!
//! An empty entry in `affiliations` means the mention has no affiliation.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_err, open, write_atomic};

pub const MIN_YEAR: i32 = 1800;
pub const MAX_YEAR: i32 = 2100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorMention {
    pub name: String,
    pub affiliation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub paper_id: String,
    #[serde(default)]
    pub title: String,
    pub year: i32,
    pub field: String,
    pub authors: Vec<AuthorMention>,
    #[serde(default)]
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub advisee_name: String,
    pub advisor_name: String,
    pub field: String,
    pub start_year: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    Jsonl,
    Csv,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> RecordFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Jsonl,
        }
    }
}

/// Trims and collapses internal whitespace. Casing is kept for display.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Matching key for a name: normalized and case-folded.
pub fn name_key(name: &str) -> String {
    normalize_name(name).to_lowercase()
}

fn normalize_record(mut rec: PublicationRecord, line: usize) -> Result<PublicationRecord> {
    if !(MIN_YEAR..=MAX_YEAR).contains(&rec.year) {
        return Err(Error::YearOutOfRange {
            year: rec.year,
            line,
        });
    }
    if rec.authors.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("paper {:?} has no authors", rec.paper_id),
        });
    }
    for a in &mut rec.authors {
        a.name = normalize_name(&a.name);
        if a.name.is_empty() {
            return Err(Error::Parse {
                line,
                message: format!("paper {:?} has an empty author name", rec.paper_id),
            });
        }
        a.affiliation = a
            .affiliation
            .take()
            .map(|s| normalize_name(&s))
            .filter(|s| !s.is_empty());
    }
    rec.field = rec.field.trim().to_string();
    Ok(rec)
}

fn check_unique(seen: &mut HashSet<String>, rec: &PublicationRecord, line: usize) -> Result<()> {
    if !seen.insert(rec.paper_id.clone()) {
        return Err(Error::DuplicateId {
            paper_id: rec.paper_id.clone(),
            line,
        });
    }
    Ok(())
}

pub fn read_publications_jsonl<R: Read>(reader: R) -> Result<Vec<PublicationRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PublicationRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let rec = normalize_record(rec, lineno)?;
        check_unique(&mut seen, &rec, lineno)?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    paper_id: String,
    title: String,
    year: i32,
    field: String,
    authors: String,
    affiliations: String,
    references: String,
}

fn split_list(s: &str) -> Vec<String> {
    if s.is_empty() {
        Vec::new()
    } else {
        s.split(';').map(|p| p.to_string()).collect()
    }
}

pub fn read_publications_csv<R: Read>(reader: R) -> Result<Vec<PublicationRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(csv_err)?;
        let line = out.len() + 2;
        let names = split_list(&row.authors);
        let affs = split_list(&row.affiliations);
        if !affs.is_empty() && affs.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "{} authors but {} affiliations",
                    names.len(),
                    affs.len()
                ),
            });
        }
        let authors = names
            .into_iter()
            .enumerate()
            .map(|(i, name)| AuthorMention {
                name,
                affiliation: affs.get(i).cloned().filter(|a| !a.is_empty()),
            })
            .collect();
        let rec = PublicationRecord {
            paper_id: row.paper_id,
            title: row.title,
            year: row.year,
            field: row.field,
            authors,
            references: split_list(&row.references),
        };
        let rec = normalize_record(rec, line)?;
        check_unique(&mut seen, &rec, line)?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads publication records in file order.
pub fn load_publications(path: &Path, format: RecordFormat) -> Result<Vec<PublicationRecord>> {
    let file = open(path)?;
    match format {
        RecordFormat::Jsonl => read_publications_jsonl(file),
        RecordFormat::Csv => read_publications_csv(file),
    }
}

pub fn write_publications_jsonl<W: Write + ?Sized>(
    w: &mut W,
    records: &[PublicationRecord],
) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_publications_csv<W: Write + ?Sized>(
    w: &mut W,
    records: &[PublicationRecord],
) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for rec in records {
        let any_aff = rec.authors.iter().any(|a| a.affiliation.is_some());
        let row = CsvRow {
            paper_id: rec.paper_id.clone(),
            title: rec.title.clone(),
            year: rec.year,
            field: rec.field.clone(),
            authors: rec
                .authors
                .iter()
                .map(|a| a.name.as_str())
                .collect::<Vec<_>>()
                .join(";"),
            affiliations: if any_aff {
                rec.authors
                    .iter()
                    .map(|a| a.affiliation.as_deref().unwrap_or(""))
                    .collect::<Vec<_>>()
                    .join(";")
            } else {
                String::new()
            },
            references: rec.references.join(";"),
        };
        wtr.serialize(row).map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn save_publications(
    path: &Path,
    records: &[PublicationRecord],
    format: RecordFormat,
) -> Result<()> {
    write_atomic(path, |w| match format {
        RecordFormat::Jsonl => write_publications_jsonl(w, records),
        RecordFormat::Csv => write_publications_csv(w, records),
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct GroundTruthRow {
    advisee_name: String,
    advisor_name: String,
    field: String,
    start_year: Option<i32>,
}

/// Reads ground-truth pairs, dropping repeats of the same
/// (advisee, advisor, field) triple. Names are compared by [`name_key`].
pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<GroundTruthPair>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, row) in rdr.deserialize::<GroundTruthRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = idx + 2;
        let advisee = normalize_name(&row.advisee_name);
        let advisor = normalize_name(&row.advisor_name);
        if advisee.is_empty() || advisor.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty advisee or advisor name".into(),
            });
        }
        if name_key(&advisee) == name_key(&advisor) {
            return Err(Error::SelfPair {
                name: advisee,
                line,
            });
        }
        let field = row.field.trim().to_string();
        if !seen.insert((name_key(&advisee), name_key(&advisor), field.clone())) {
            continue;
        }
        out.push(GroundTruthPair {
            advisee_name: advisee,
            advisor_name: advisor,
            field,
            start_year: row.start_year,
        });
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthPair>> {
    read_ground_truth(open(path)?)
}

pub fn write_ground_truth<W: Write + ?Sized>(w: &mut W, pairs: &[GroundTruthPair]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["advisee_name", "advisor_name", "field", "start_year"])
        .map_err(std::io::Error::other)?;
    for p in pairs {
        let year = p.start_year.map(|y| y.to_string()).unwrap_or_default();
        wtr.write_record([
            p.advisee_name.as_str(),
            p.advisor_name.as_str(),
            p.field.as_str(),
            year.as_str(),
        ])
        .map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn save_ground_truth(path: &Path, pairs: &[GroundTruthPair]) -> Result<()> {
    write_atomic(path, |w| write_ground_truth(w, pairs))
}
