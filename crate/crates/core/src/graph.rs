//! Weighted co-authorship graph and the corpus-level corrections used when
//! counting publications.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::PublicationRecord;
use crate::disambiguation::{mention_owners, Scholar};
use crate::error::{Error, Result};

/// Scale of the exponential publication-growth deflator.
pub const TAU_SCALE: f64 = 4.15e-46;
/// Yearly growth rate of the deflator.
pub const TAU_RATE: f64 = 0.05;
/// Number of major disciplines in the reference corpus.
pub const DEFAULT_FIELD_COUNT: usize = 19;

/// Temporal correction factor `τ(y) = 4.15e-46 · e^(0.05 y)`.
pub fn temporal_factor(year: i32) -> f64 {
    TAU_SCALE * (TAU_RATE * year as f64).exp()
}

/// Publication count deflated to a year-independent scale: `p / τ(year)`.
pub fn rescale_publications(count: f64, year: i32) -> f64 {
    count / temporal_factor(year)
}

/// Disciplinary output factor `δ = |F| · np(field, year) / mean_f np(f, year)`,
/// where the mean runs over the fields that published in `year`.
pub fn disciplinary_factor(
    field: &str,
    year: i32,
    counts: &BTreeMap<(String, i32), u64>,
    n_fields: usize,
) -> Result<f64> {
    let in_year: Vec<u64> = counts
        .iter()
        .filter(|((_, y), c)| *y == year && **c > 0)
        .map(|(_, &c)| c)
        .collect();
    if in_year.is_empty() {
        return Err(Error::Domain(format!("no publications recorded in {year}")));
    }
    let mean = in_year.iter().sum::<u64>() as f64 / in_year.len() as f64;
    let own = counts.get(&(field.to_string(), year)).copied().unwrap_or(0);
    if own == 0 {
        return Err(Error::Domain(format!(
            "field {field:?} has no publications in {year}"
        )));
    }
    Ok(n_fields as f64 * own as f64 / mean)
}

/// Collaboration similarity `(np_ij / 2)(1/np_i + 1/np_j)`.
pub fn kulc(np_ij: u32, np_i: u32, np_j: u32) -> Result<f64> {
    if np_i == 0 || np_j == 0 {
        return Err(Error::Domain(format!(
            "kulc needs positive paper counts, got np_i={np_i}, np_j={np_j}"
        )));
    }
    if np_ij > np_i || np_ij > np_j {
        return Err(Error::Domain(format!(
            "joint count {np_ij} exceeds an individual count ({np_i}, {np_j})"
        )));
    }
    let joint = np_ij as f64;
    Ok(joint / 2.0 * (1.0 / np_i as f64 + 1.0 / np_j as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    /// Publications per (field, year) across the whole corpus.
    pub counts_by_field_year: BTreeMap<(String, i32), u64>,
    pub n_fields: usize,
}

impl Corrections {
    pub fn from_records(records: &[PublicationRecord], n_fields: usize) -> Self {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry((r.field.clone(), r.year)).or_insert(0) += 1;
        }
        Corrections {
            counts_by_field_year: counts,
            n_fields,
        }
    }

    pub fn tau(&self, year: i32) -> f64 {
        temporal_factor(year)
    }

    pub fn delta(&self, field: &str, year: i32) -> Result<f64> {
        disciplinary_factor(field, year, &self.counts_by_field_year, self.n_fields)
    }
}

/// One co-authored paper seen from an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPaper {
    pub paper: usize,
    pub year: i32,
    /// Author positions of the lower and higher node id.
    pub positions: (usize, usize),
    pub n_authors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeData {
    pub first_year: i32,
    pub per_year: BTreeMap<i32, u32>,
    /// Sorted by (year, paper).
    pub papers: Vec<JointPaper>,
}

impl EdgeData {
    pub fn weight(&self) -> u32 {
        self.papers.len() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeData {
    pub scholar_id: usize,
    pub first_pub_year: i32,
    /// Year of every paper, ascending.
    pub paper_years: Vec<i32>,
    pub affiliations: BTreeSet<String>,
    pub field: String,
}

impl NodeData {
    /// Papers with `from <= year <= to`.
    pub fn papers_between(&self, from: i32, to: i32) -> u32 {
        let lo = self.paper_years.partition_point(|&y| y < from);
        let hi = self.paper_years.partition_point(|&y| y <= to);
        (hi - lo) as u32
    }

    pub fn papers_before(&self, year: i32) -> u32 {
        self.paper_years.partition_point(|&y| y < year) as u32
    }
}

/// Undirected co-authorship graph over disambiguated scholars. Node `i`
/// is the scholar with `scholar_id == i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabGraph {
    pub nodes: Vec<NodeData>,
    /// Symmetric collaboration counts, zero diagonal.
    pub adjacency: Vec<BTreeMap<usize, u32>>,
    /// Keyed by (lower id, higher id).
    pub edges: BTreeMap<(usize, usize), EdgeData>,
    pub corrections: Corrections,
}

fn majority_field(records: &[PublicationRecord], papers: &[usize]) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &p in papers {
        *counts.entry(records[p].field.as_str()).or_default() += 1;
    }
    // BTreeMap iteration makes ties resolve to the lexicographically smallest.
    let mut best: Option<(&str, usize)> = None;
    for (f, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((f, c));
        }
    }
    best.map(|(f, _)| f.to_string()).unwrap_or_default()
}

impl CollabGraph {
    pub fn build(records: &[PublicationRecord], scholars: &[Scholar]) -> Self {
        Self::build_with_fields(records, scholars, DEFAULT_FIELD_COUNT)
    }

    pub fn build_with_fields(
        records: &[PublicationRecord],
        scholars: &[Scholar],
        n_fields: usize,
    ) -> Self {
        let mut ordered: Vec<&Scholar> = scholars.iter().collect();
        ordered.sort_by_key(|s| s.scholar_id);
        let nodes: Vec<NodeData> = ordered
            .iter()
            .map(|s| NodeData {
                scholar_id: s.scholar_id,
                first_pub_year: s.first_pub_year,
                paper_years: s.papers.iter().map(|&p| records[p].year).collect(),
                affiliations: s.affiliations.clone(),
                field: majority_field(records, &s.papers),
            })
            .collect();

        let owners = mention_owners(records, scholars);
        let mut adjacency = vec![BTreeMap::new(); nodes.len()];
        let mut edges: BTreeMap<(usize, usize), EdgeData> = BTreeMap::new();
        for (p, rec) in records.iter().enumerate() {
            // First position of each distinct scholar on the paper.
            let mut slots: Vec<(usize, usize)> = Vec::new();
            for (pos, &owner) in owners[p].iter().enumerate() {
                if owner != usize::MAX && !slots.iter().any(|&(o, _)| o == owner) {
                    slots.push((owner, pos));
                }
            }
            for a in 0..slots.len() {
                for b in (a + 1)..slots.len() {
                    let (mut x, mut y) = (slots[a], slots[b]);
                    if x.0 > y.0 {
                        std::mem::swap(&mut x, &mut y);
                    }
                    let e = edges.entry((x.0, y.0)).or_insert_with(|| EdgeData {
                        first_year: rec.year,
                        per_year: BTreeMap::new(),
                        papers: Vec::new(),
                    });
                    e.first_year = e.first_year.min(rec.year);
                    *e.per_year.entry(rec.year).or_insert(0) += 1;
                    e.papers.push(JointPaper {
                        paper: p,
                        year: rec.year,
                        positions: (x.1, y.1),
                        n_authors: rec.authors.len(),
                    });
                    *adjacency[x.0].entry(y.0).or_insert(0) += 1;
                    *adjacency[y.0].entry(x.0).or_insert(0) += 1;
                }
            }
        }
        for e in edges.values_mut() {
            e.papers.sort_by_key(|jp| (jp.year, jp.paper));
        }
        CollabGraph {
            nodes,
            adjacency,
            edges,
            corrections: Corrections::from_records(records, n_fields),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> u32 {
        self.adjacency
            .get(i)
            .and_then(|row| row.get(&j))
            .copied()
            .unwrap_or(0)
    }

    pub fn edge(&self, i: usize, j: usize) -> Result<&EdgeData> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges
            .get(&key)
            .ok_or(Error::NoCollaboration { a: i, b: j })
    }

    /// Collaborators of `i`, ascending by id.
    pub fn collaborators(&self, i: usize) -> Vec<usize> {
        self.adjacency[i].keys().copied().collect()
    }

    /// Dense 0/1 adjacency row of `i`.
    pub fn binary_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.nodes.len()];
        for &j in self.adjacency[i].keys() {
            row[j] = 1.0;
        }
        row
    }

    /// `aa = y_c − y_f` of `scholar` at its first paper with `partner`.
    pub fn academic_age(&self, scholar: usize, partner: usize) -> Result<i32> {
        let edge = self.edge(scholar, partner)?;
        Ok(edge.first_year - self.nodes[scholar].first_pub_year)
    }
}
