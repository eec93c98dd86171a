//! Author name disambiguation.
//!
//! Every author mention starts as its own scholar. Passes then merge
//! scholars that share a canonical name and satisfy any of three criteria:
//! they cite each other, they share a co-author, or they share an
//! affiliation. Qualifying pairs found in one pass are merged through
//! union-find, and passes repeat until one applies no merges.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{name_key, PublicationRecord};
use crate::error::{Error, Result};
use crate::io::write_atomic;

/// One author slot on one paper: `paper` indexes the loaded record list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionId {
    pub paper: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scholar {
    pub scholar_id: usize,
    pub canonical_name: String,
    pub mention_ids: BTreeSet<MentionId>,
    pub affiliations: BTreeSet<String>,
    /// Paper indices sorted by (year, index).
    pub papers: Vec<usize>,
    pub first_pub_year: i32,
}

impl Scholar {
    pub fn name_key(&self) -> String {
        name_key(&self.canonical_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeCriterion {
    MutualCitation,
    SharedCoauthor,
    SharedAffiliation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub a: usize,
    pub b: usize,
    pub criterion: MergeCriterion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisambiguationConfig {
    /// Require citations in both directions. When false a single citation
    /// from either scholar to the other qualifies.
    pub mutual_citation: bool,
    pub max_passes: usize,
}

impl Default for DisambiguationConfig {
    fn default() -> Self {
        DisambiguationConfig {
            mutual_citation: true,
            max_passes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisambiguationReport {
    pub scholars: Vec<Scholar>,
    /// Merges applied by each pass, including the final zero-merge pass.
    pub merges_per_pass: Vec<usize>,
}

/// Lookup tables derived once from the record list.
pub struct RecordIndex<'a> {
    records: &'a [PublicationRecord],
    keys: Vec<Vec<String>>,
    /// Resolved references: record index -> cited record indices.
    cites: Vec<Vec<usize>>,
}

impl<'a> RecordIndex<'a> {
    pub fn new(records: &'a [PublicationRecord]) -> Self {
        let by_id: HashMap<&str, usize> = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.paper_id.as_str(), i))
            .collect();
        let keys = records
            .iter()
            .map(|r| r.authors.iter().map(|a| name_key(&a.name)).collect())
            .collect();
        let cites = records
            .iter()
            .map(|r| {
                let mut v: Vec<usize> = r
                    .references
                    .iter()
                    .filter_map(|id| by_id.get(id.as_str()).copied())
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        RecordIndex {
            records,
            keys,
            cites,
        }
    }

    pub fn records(&self) -> &'a [PublicationRecord] {
        self.records
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Joins the two sets; the smaller root becomes the representative.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

fn build_scholar(
    index: &RecordIndex<'_>,
    mentions: BTreeSet<MentionId>,
) -> Scholar {
    let records = index.records;
    let first = *mentions.iter().next().expect("scholar with no mentions");
    let canonical_name = records[first.paper].authors[first.position].name.clone();
    let affiliations = mentions
        .iter()
        .filter_map(|m| records[m.paper].authors[m.position].affiliation.clone())
        .collect();
    let mut papers: Vec<usize> = mentions.iter().map(|m| m.paper).collect();
    papers.sort_unstable_by_key(|&p| (records[p].year, p));
    papers.dedup();
    let first_pub_year = records[papers[0]].year;
    Scholar {
        scholar_id: 0,
        canonical_name,
        mention_ids: mentions,
        affiliations,
        papers,
        first_pub_year,
    }
}

/// Sorts by (name key, first mention) and renumbers ids from zero.
fn assign_ids(mut scholars: Vec<Scholar>) -> Vec<Scholar> {
    scholars.sort_by_cached_key(|s| (s.name_key(), *s.mention_ids.iter().next().unwrap()));
    for (i, s) in scholars.iter_mut().enumerate() {
        s.scholar_id = i;
    }
    scholars
}

/// One scholar per author mention.
pub fn initial_split(records: &[PublicationRecord]) -> Vec<Scholar> {
    let index = RecordIndex::new(records);
    let scholars = records
        .iter()
        .enumerate()
        .flat_map(|(p, r)| (0..r.authors.len()).map(move |pos| MentionId { paper: p, position: pos }))
        .map(|m| build_scholar(&index, BTreeSet::from([m])))
        .collect();
    assign_ids(scholars)
}

/// Qualifying same-name pairs for the current partition, in processing order.
///
/// Each returned decision joined two previously separate groups; pairs
/// already connected through earlier decisions are not repeated.
pub fn find_merges(
    scholars: &[Scholar],
    index: &RecordIndex<'_>,
    config: &DisambiguationConfig,
) -> Vec<MergeDecision> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in scholars.iter().enumerate() {
        groups.entry(s.name_key()).or_default().push(i);
    }

    let mut uf = UnionFind::new(scholars.len());
    let mut decisions = Vec::new();
    let mut record = |uf: &mut UnionFind, a: usize, b: usize, criterion| {
        if uf.union(a, b) {
            let (x, y) = (scholars[a].scholar_id, scholars[b].scholar_id);
            decisions.push(MergeDecision {
                a: x.min(y),
                b: x.max(y),
                criterion,
            });
        }
    };

    for (key, members) in &groups {
        if members.len() < 2 {
            continue;
        }
        let mut members = members.clone();
        members.sort_by_key(|&i| scholars[i].scholar_id);

        // Citations between members of this name group.
        let mut owner: HashMap<usize, Vec<usize>> = HashMap::new();
        for &m in &members {
            for &p in &scholars[m].papers {
                owner.entry(p).or_default().push(m);
            }
        }
        let mut cites: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &m in &members {
            for &p in &scholars[m].papers {
                for q in &index.cites[p] {
                    if let Some(targets) = owner.get(q) {
                        for &t in targets {
                            if t != m {
                                cites.insert((m, t));
                            }
                        }
                    }
                }
            }
        }
        let mut pairs: Vec<(usize, usize)> = cites
            .iter()
            .filter(|&&(a, b)| !config.mutual_citation || cites.contains(&(b, a)))
            .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        pairs.sort_by_key(|&(a, b)| (scholars[a].scholar_id, scholars[b].scholar_id));
        pairs.dedup();
        for (a, b) in pairs {
            record(&mut uf, a, b, MergeCriterion::MutualCitation);
        }

        // Shared co-author names (the shared name itself excluded).
        let mut first_with: BTreeMap<&str, usize> = BTreeMap::new();
        for &m in &members {
            let mut coauthors: BTreeSet<&str> = BTreeSet::new();
            for mention in &scholars[m].mention_ids {
                for (pos, k) in index.keys[mention.paper].iter().enumerate() {
                    if pos != mention.position && k != key {
                        coauthors.insert(k.as_str());
                    }
                }
            }
            for c in coauthors {
                match first_with.get(c) {
                    Some(&other) => record(&mut uf, other, m, MergeCriterion::SharedCoauthor),
                    None => {
                        first_with.insert(c, m);
                    }
                }
            }
        }

        let mut first_at: BTreeMap<&str, usize> = BTreeMap::new();
        for &m in &members {
            for aff in &scholars[m].affiliations {
                match first_at.get(aff.as_str()) {
                    Some(&other) => record(&mut uf, other, m, MergeCriterion::SharedAffiliation),
                    None => {
                        first_at.insert(aff.as_str(), m);
                    }
                }
            }
        }
    }
    decisions
}

fn apply_merges(
    scholars: &[Scholar],
    index: &RecordIndex<'_>,
    decisions: &[MergeDecision],
) -> Vec<Scholar> {
    let pos_of: HashMap<usize, usize> = scholars
        .iter()
        .enumerate()
        .map(|(i, s)| (s.scholar_id, i))
        .collect();
    let mut uf = UnionFind::new(scholars.len());
    for d in decisions {
        uf.union(pos_of[&d.a], pos_of[&d.b]);
    }
    let mut merged: BTreeMap<usize, BTreeSet<MentionId>> = BTreeMap::new();
    for (i, s) in scholars.iter().enumerate() {
        let root = uf.find(i);
        merged
            .entry(root)
            .or_default()
            .extend(s.mention_ids.iter().copied());
    }
    assign_ids(
        merged
            .into_values()
            .map(|m| build_scholar(index, m))
            .collect(),
    )
}

/// Applies every qualifying merge for the current partition once.
pub fn merge_pass(
    scholars: &[Scholar],
    index: &RecordIndex<'_>,
    config: &DisambiguationConfig,
) -> (Vec<Scholar>, usize) {
    let decisions = find_merges(scholars, index, config);
    if decisions.is_empty() {
        return (scholars.to_vec(), 0);
    }
    (apply_merges(scholars, index, &decisions), decisions.len())
}

/// Runs merge passes from the initial split until a pass merges nothing.
pub fn disambiguate_with_report(
    records: &[PublicationRecord],
    config: &DisambiguationConfig,
) -> Result<DisambiguationReport> {
    let index = RecordIndex::new(records);
    let scholars = initial_split(records);
    continue_from(scholars, &index, config)
}

/// Resumes disambiguation from an existing partition.
pub fn continue_from(
    mut scholars: Vec<Scholar>,
    index: &RecordIndex<'_>,
    config: &DisambiguationConfig,
) -> Result<DisambiguationReport> {
    let mut merges_per_pass = Vec::new();
    for _ in 0..config.max_passes {
        let (next, merges) = merge_pass(&scholars, index, config);
        merges_per_pass.push(merges);
        scholars = next;
        if merges == 0 {
            return Ok(DisambiguationReport {
                scholars,
                merges_per_pass,
            });
        }
    }
    Err(Error::IterationLimitExceeded {
        passes: config.max_passes,
    })
}

pub fn disambiguate(
    records: &[PublicationRecord],
    config: &DisambiguationConfig,
) -> Result<Vec<Scholar>> {
    disambiguate_with_report(records, config).map(|r| r.scholars)
}

/// `owner[paper][position]` is the scholar id holding that mention.
pub fn mention_owners(records: &[PublicationRecord], scholars: &[Scholar]) -> Vec<Vec<usize>> {
    let mut owner: Vec<Vec<usize>> = records
        .iter()
        .map(|r| vec![usize::MAX; r.authors.len()])
        .collect();
    for s in scholars {
        for m in &s.mention_ids {
            owner[m.paper][m.position] = s.scholar_id;
        }
    }
    owner
}

/// Checks that scholars partition every mention exactly once.
pub fn is_partition(records: &[PublicationRecord], scholars: &[Scholar]) -> bool {
    let total: usize = records.iter().map(|r| r.authors.len()).sum();
    let mut seen = BTreeSet::new();
    for s in scholars {
        for m in &s.mention_ids {
            if m.paper >= records.len()
                || m.position >= records[m.paper].authors.len()
                || !seen.insert(*m)
            {
                return false;
            }
        }
    }
    seen.len() == total
}

pub fn write_scholar_table<W: Write + ?Sized>(w: &mut W, scholars: &[Scholar]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scholar_id", "canonical_name", "first_pub_year", "n_papers"])
        .map_err(std::io::Error::other)?;
    for s in scholars {
        wtr.write_record([
            s.scholar_id.to_string(),
            s.canonical_name.clone(),
            s.first_pub_year.to_string(),
            s.papers.len().to_string(),
        ])
        .map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn save_scholars(path: &Path, scholars: &[Scholar]) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, scholars)?;
        w.write_all(b"\n")
    })
}

pub fn load_scholars(path: &Path) -> Result<Vec<Scholar>> {
    let f = crate::io::open(path)?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}
