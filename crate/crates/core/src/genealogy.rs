//! Corpus-wide advisor identification and genealogy export.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::CollabGraph;
use crate::io::{csv_err, open, write_atomic};
use crate::model::JointModel;
use crate::{Error, Result};

/// Which scholars are established enough to be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityRule {
    pub min_papers: usize,
    /// Largest allowed distance in years between consecutive papers.
    pub max_gap_years: i32,
    /// Minimum number of calendar years from first to last paper, inclusive.
    pub min_span_years: i32,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        EligibilityRule {
            min_papers: 10,
            max_gap_years: 5,
            min_span_years: 10,
        }
    }
}

impl EligibilityRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_papers == 0 || self.max_gap_years <= 0 || self.min_span_years <= 0 {
            return Err(Error::Config("eligibility thresholds must be positive".into()));
        }
        Ok(())
    }

    /// `years` must be sorted ascending.
    pub fn admits(&self, years: &[i32]) -> bool {
        let (Some(&first), Some(&last)) = (years.first(), years.last()) else {
            return false;
        };
        years.len() >= self.min_papers
            && last - first + 1 >= self.min_span_years
            && years.windows(2).all(|w| w[1] - w[0] <= self.max_gap_years)
    }
}

/// Ids of graph nodes whose publication history satisfies `rule`.
pub fn filter_scholars(graph: &CollabGraph, rule: &EligibilityRule) -> Vec<usize> {
    (0..graph.n_nodes())
        .filter(|&i| rule.admits(&graph.nodes[i].paper_years))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyRecord {
    pub advisee_id: usize,
    pub advisor_id: usize,
    pub probability: f64,
    pub first_coauthor_year: i32,
    pub field: String,
}

/// Scores every eligible advisee and keeps up to `top_k` candidates whose
/// probability reaches `threshold`. Advisees without collaborators are
/// skipped.
pub fn generate_genealogy(
    model: &JointModel,
    graph: &CollabGraph,
    eligible: &[usize],
    threshold: f64,
    top_k: usize,
) -> Result<Vec<GenealogyRecord>> {
    let mut out = Vec::new();
    for &advisee in eligible {
        let ranked = match model.identify_advisor(graph, advisee) {
            Ok(r) => r,
            Err(Error::NoCollaborators(_)) => continue,
            Err(e) => return Err(e),
        };
        for (advisor, p) in ranked.into_iter().take(top_k) {
            // Saturated sigmoids are kept strictly inside (0, 1).
            let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
            if p < threshold {
                break;
            }
            out.push(GenealogyRecord {
                advisee_id: graph.nodes[advisee].scholar_id,
                advisor_id: graph.nodes[advisor].scholar_id,
                probability: p,
                first_coauthor_year: graph.edge(advisee, advisor)?.first_year,
                field: graph.nodes[advisee].field.clone(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Dot,
    Graphml,
}

impl ExportFormat {
    pub fn parse(s: &str) -> Option<ExportFormat> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(ExportFormat::Csv),
            "dot" => Some(ExportFormat::Dot),
            "graphml" => Some(ExportFormat::Graphml),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Dot => "dot",
            ExportFormat::Graphml => "graphml",
        }
    }
}

pub const GENEALOGY_HEADER: [&str; 5] = [
    "advisee_id",
    "advisor_id",
    "probability",
    "first_coauthor_year",
    "field",
];

pub fn write_csv<W: Write + ?Sized>(w: &mut W, records: &[GenealogyRecord]) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GENEALOGY_HEADER)?;
    for r in records {
        out.write_record([
            r.advisee_id.to_string(),
            r.advisor_id.to_string(),
            r.probability.to_string(),
            r.first_coauthor_year.to_string(),
            r.field.clone(),
        ])?;
    }
    out.flush()
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<GenealogyRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(GENEALOGY_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", GENEALOGY_HEADER.join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn load_csv(path: &Path) -> Result<Vec<GenealogyRecord>> {
    read_csv(open(path)?)
}

fn nodes_of(records: &[GenealogyRecord]) -> BTreeSet<usize> {
    records
        .iter()
        .flat_map(|r| [r.advisor_id, r.advisee_id])
        .collect()
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Directed advisor → advisee graph in Graphviz syntax.
pub fn write_dot<W: Write + ?Sized>(w: &mut W, records: &[GenealogyRecord]) -> std::io::Result<()> {
    writeln!(w, "digraph genealogy {{")?;
    for n in nodes_of(records) {
        writeln!(w, "  s{n} [label=\"{n}\"];")?;
    }
    for r in records {
        writeln!(
            w,
            "  s{} -> s{} [probability={}, first_coauthor_year={}, field=\"{}\"];",
            r.advisor_id,
            r.advisee_id,
            r.probability,
            r.first_coauthor_year,
            escape_dot(&r.field)
        )?;
    }
    writeln!(w, "}}")
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

pub fn write_graphml<W: Write + ?Sized>(w: &mut W, records: &[GenealogyRecord]) -> std::io::Result<()> {
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        w,
        r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns" xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">"#
    )?;
    writeln!(w, r#"  <key id="probability" for="edge" attr.name="probability" attr.type="double"/>"#)?;
    writeln!(
        w,
        r#"  <key id="first_coauthor_year" for="edge" attr.name="first_coauthor_year" attr.type="int"/>"#
    )?;
    writeln!(w, r#"  <key id="field" for="edge" attr.name="field" attr.type="string"/>"#)?;
    writeln!(w, r#"  <graph id="genealogy" edgedefault="directed">"#)?;
    for n in nodes_of(records) {
        writeln!(w, r#"    <node id="s{n}"/>"#)?;
    }
    for (k, r) in records.iter().enumerate() {
        writeln!(
            w,
            r#"    <edge id="e{k}" source="s{}" target="s{}">"#,
            r.advisor_id, r.advisee_id
        )?;
        writeln!(w, r#"      <data key="probability">{}</data>"#, r.probability)?;
        writeln!(
            w,
            r#"      <data key="first_coauthor_year">{}</data>"#,
            r.first_coauthor_year
        )?;
        writeln!(w, r#"      <data key="field">{}</data>"#, escape_xml(&r.field))?;
        writeln!(w, "    </edge>")?;
    }
    writeln!(w, "  </graph>")?;
    writeln!(w, "</graphml>")
}

pub fn export(path: &Path, records: &[GenealogyRecord], format: ExportFormat) -> Result<()> {
    if records.is_empty() && format != ExportFormat::Csv {
        return Err(Error::Domain("no genealogy records to draw as a graph".into()));
    }
    write_atomic(path, |w| match format {
        ExportFormat::Csv => write_csv(w, records),
        ExportFormat::Dot => write_dot(w, records),
        ExportFormat::Graphml => write_graphml(w, records),
    })
}
