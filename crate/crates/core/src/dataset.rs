//! Labeled candidate pairs: ground-truth matching, negative sampling,
//! raw pair features and per-field min-max scaling.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{name_key, GroundTruthPair};
use crate::disambiguation::Scholar;
use crate::features::{
    apply_window, edge_features, node_features, FeatureConfig, EDGE_DIM, KULC_YEARS,
    YEARLY_COUNTS,
};
use crate::graph::CollabGraph;
use crate::io::{open, write_atomic};
use crate::model::{pool, PairSample};
use crate::{Error, Result};

/// A ground-truth pair resolved to graph nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub advisee: usize,
    pub advisor: usize,
    pub field: String,
    pub first_year: i32,
}

/// Unscaled features of the ordered pair `(advisee, candidate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub advisee: usize,
    pub candidate: usize,
    pub field: String,
    /// First co-authorship year of this pair.
    pub first_year: i32,
    /// First co-authorship year of the advisee with their advisor; the
    /// split key, shared by a positive and the negatives drawn for it.
    pub anchor_year: i32,
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
    pub pool_dim: usize,
    /// Nonzero entries of the pooled structure vector.
    pub pooled: Vec<(u32, f64)>,
    pub label: Option<bool>,
}

impl PairFeatures {
    pub fn pooled_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.pool_dim];
        for &(k, x) in &self.pooled {
            v[k as usize] = x;
        }
        v
    }
}

/// Raw features of `(i, j)` for a graph, with `anchor_year` set to the
/// pair's own first year.
pub fn pair_features(
    graph: &CollabGraph,
    i: usize,
    j: usize,
    cfg: &FeatureConfig,
    pool_dim: usize,
) -> Result<PairFeatures> {
    let edge = graph.edge(i, j)?;
    let node = node_features(graph, i, j, cfg)?.to_vec();
    let edge_vec = edge_features(graph, i, j)?.to_vec();
    let pooled = pool(&graph.binary_row(i), &graph.binary_row(j), pool_dim)?;
    Ok(PairFeatures {
        advisee: i,
        candidate: j,
        field: graph.nodes[i].field.clone(),
        first_year: edge.first_year,
        anchor_year: edge.first_year,
        node,
        edge: edge_vec,
        pool_dim,
        pooled: pooled
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(k, &x)| (k as u32, x))
            .collect(),
        label: None,
    })
}

/// Resolves ground-truth names to graph nodes.
///
/// The advisee is looked up by name key, preferring scholars of the pair's
/// field; the advisor must be one of that advisee's collaborators. Returns
/// the matched pairs and the number left unmatched.
pub fn match_ground_truth(
    graph: &CollabGraph,
    scholars: &[Scholar],
    truth: &[GroundTruthPair],
) -> (Vec<MatchedPair>, usize) {
    let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, node) in graph.nodes.iter().enumerate() {
        if let Some(s) = scholars.iter().find(|s| s.scholar_id == node.scholar_id) {
            by_key.entry(s.name_key()).or_default().push(idx);
        }
    }
    let mut matched = Vec::new();
    let mut seen = BTreeSet::new();
    let mut unmatched = 0;
    for gt in truth {
        let advisee_key = name_key(&gt.advisee_name);
        let advisor_key = name_key(&gt.advisor_name);
        let candidates = by_key.get(&advisee_key).cloned().unwrap_or_default();
        let (same_field, other): (Vec<usize>, Vec<usize>) = candidates
            .into_iter()
            .partition(|&i| graph.nodes[i].field == gt.field);
        let advisors = by_key.get(&advisor_key);
        let found = same_field.iter().chain(&other).find_map(|&i| {
            advisors?
                .iter()
                .copied()
                .find(|&a| graph.adjacency[i].contains_key(&a))
                .map(|a| (i, a))
        });
        match found {
            Some((i, a)) if seen.insert((i, a)) => {
                let first_year = graph.edges[&(i.min(a), i.max(a))].first_year;
                matched.push(MatchedPair {
                    advisee: i,
                    advisor: a,
                    field: gt.field.clone(),
                    first_year,
                });
            }
            Some(_) => {}
            None => unmatched += 1,
        }
    }
    (matched, unmatched)
}

/// One positive per matched pair and, where possible, one negative drawn
/// uniformly from the advisee's other collaborators.
pub fn build_labeled_pairs(
    graph: &CollabGraph,
    matched: &[MatchedPair],
    cfg: &FeatureConfig,
    pool_dim: usize,
    seed: u64,
) -> Result<Vec<PairFeatures>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut advisors: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for m in matched {
        advisors.entry(m.advisee).or_default().insert(m.advisor);
    }
    let mut out = Vec::with_capacity(2 * matched.len());
    for m in matched {
        let mut pos = pair_features(graph, m.advisee, m.advisor, cfg, pool_dim)?;
        pos.field = m.field.clone();
        pos.label = Some(true);
        out.push(pos);

        let others: Vec<usize> = graph
            .collaborators(m.advisee)
            .into_iter()
            .filter(|c| !advisors[&m.advisee].contains(c))
            .collect();
        if let Some(&c) = others.choose(&mut rng) {
            let mut neg = pair_features(graph, m.advisee, c, cfg, pool_dim)?;
            neg.field = m.field.clone();
            neg.anchor_year = m.first_year;
            neg.label = Some(false);
            out.push(neg);
        }
    }
    Ok(out)
}

/// Per-column minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ColumnRange {
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (k, &x) in row.iter().enumerate().take(dim) {
                min[k] = min[k].min(x);
                max[k] = max[k].max(x);
            }
        }
        for k in 0..dim {
            if !min[k].is_finite() {
                min[k] = 0.0;
                max[k] = 0.0;
            }
        }
        ColumnRange { min, max }
    }

    /// Maps each column to `[0, 1]`; constant columns map to 0 and values
    /// outside the fitted range are clamped.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.min.len() {
            return Err(Error::shape(self.min.len(), row.len()));
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldScaler {
    pub node: ColumnRange,
    pub edge: ColumnRange,
}

impl FieldScaler {
    fn fit(pairs: &[&PairFeatures], node_dim: usize, window: usize) -> Self {
        let edges: Vec<Vec<f64>> = pairs.iter().map(|p| windowed(&p.edge, window)).collect();
        FieldScaler {
            node: ColumnRange::fit(node_dim, pairs.iter().map(|p| p.node.as_slice())),
            edge: ColumnRange::fit(EDGE_DIM, edges.iter().map(|e| e.as_slice())),
        }
    }
}

/// Min-max normalization fitted per field, with a corpus-wide fallback for
/// fields unseen during fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub node_dim: usize,
    pub window: usize,
    pub per_field: BTreeMap<String, FieldScaler>,
    pub global: FieldScaler,
}

fn windowed(edge: &[f64], window: usize) -> Vec<f64> {
    let mut e = edge.to_vec();
    if e.len() == EDGE_DIM {
        apply_window(&mut e, window);
    }
    e
}

impl FeatureScaler {
    pub fn fit(pairs: &[PairFeatures], window: usize) -> Result<Self> {
        if window == 0 || window > KULC_YEARS.max(YEARLY_COUNTS) {
            return Err(Error::Config(format!(
                "feature window must be in 1..={KULC_YEARS}, got {window}"
            )));
        }
        let node_dim = pairs.first().map(|p| p.node.len()).unwrap_or(0);
        for p in pairs {
            if p.node.len() != node_dim {
                return Err(Error::shape(node_dim, p.node.len()));
            }
            if p.edge.len() != EDGE_DIM {
                return Err(Error::shape(EDGE_DIM, p.edge.len()));
            }
        }
        let mut groups: BTreeMap<&str, Vec<&PairFeatures>> = BTreeMap::new();
        for p in pairs {
            groups.entry(p.field.as_str()).or_default().push(p);
        }
        let all: Vec<&PairFeatures> = pairs.iter().collect();
        Ok(FeatureScaler {
            node_dim,
            window,
            per_field: groups
                .into_iter()
                .map(|(f, ps)| (f.to_string(), FieldScaler::fit(&ps, node_dim, window)))
                .collect(),
            global: FieldScaler::fit(&all, node_dim, window),
        })
    }

    fn for_field(&self, field: &str) -> &FieldScaler {
        self.per_field.get(field).unwrap_or(&self.global)
    }

    /// Scaled node attributes and windowed, scaled edge attributes.
    pub fn transform(&self, p: &PairFeatures) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.for_field(&p.field);
        Ok((
            s.node.transform(&p.node)?,
            s.edge.transform(&windowed(&p.edge, self.window))?,
        ))
    }

    /// Model input for a pair: `[scaled node attributes ∥ pooled structure]`
    /// and the scaled edge vector.
    pub fn sample(&self, p: &PairFeatures) -> Result<PairSample> {
        let (mut node_input, edge_input) = self.transform(p)?;
        node_input.extend(p.pooled_dense());
        Ok(PairSample {
            advisee: p.advisee,
            candidate: p.candidate,
            node_input,
            edge_input,
            label: p.label.map(|l| if l { 1.0 } else { 0.0 }),
        })
    }

    pub fn samples(&self, pairs: &[PairFeatures]) -> Result<Vec<PairSample>> {
        pairs.iter().map(|p| self.sample(p)).collect()
    }
}

pub const EDGE_COLUMNS: [&str; EDGE_DIM] = [
    "ad", "ct", "cd", "ft", "lf", "kulc1", "kulc2", "kulc3", "kulc4", "kulc5", "kulc6", "kulc7",
    "yc1", "yc2", "yc3", "yc4", "yc5", "yc6",
];

fn node_columns(dim: usize) -> Vec<String> {
    let base = ["aa_i", "aa_j", "same_org", "np_i", "np_j"];
    let mut cols: Vec<String> = base.iter().take(dim).map(|s| s.to_string()).collect();
    let buckets = dim.saturating_sub(base.len()) / 2;
    for side in ["i", "j"] {
        for b in 0..buckets {
            cols.push(format!("org_{side}_{b}"));
        }
    }
    cols
}

/// CSV with raw and normalized node and edge attributes per pair.
pub fn write_feature_dump<W: Write + ?Sized>(
    w: &mut W,
    pairs: &[PairFeatures],
    scaler: &FeatureScaler,
) -> Result<()> {
    let node_cols = node_columns(scaler.node_dim);
    let mut header = vec![
        "advisee".to_string(),
        "candidate".into(),
        "label".into(),
        "field".into(),
        "first_year".into(),
        "anchor_year".into(),
    ];
    for prefix in ["raw", "norm"] {
        header.extend(node_cols.iter().map(|c| format!("{prefix}_{c}")));
        header.extend(EDGE_COLUMNS.iter().map(|c| format!("{prefix}_{c}")));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header).map_err(crate::io::csv_err)?;
    for p in pairs {
        let (node_n, edge_n) = scaler.transform(p)?;
        let mut row = vec![
            p.advisee.to_string(),
            p.candidate.to_string(),
            match p.label {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            },
            p.field.clone(),
            p.first_year.to_string(),
            p.anchor_year.to_string(),
        ];
        let nums = p.node.iter().chain(&p.edge).chain(&node_n).chain(&edge_n);
        row.extend(nums.map(|x| x.to_string()));
        out.write_record(&row).map_err(crate::io::csv_err)?;
    }
    out.flush().map_err(|e| Error::io("<feature dump>", e))?;
    Ok(())
}

pub fn save_pairs(path: &Path, pairs: &[PairFeatures]) -> Result<()> {
    write_atomic(path, |w| {
        for p in pairs {
            serde_json::to_writer(&mut *w, p)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn load_pairs(path: &Path) -> Result<Vec<PairFeatures>> {
    use std::io::BufRead;
    let reader = std::io::BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pf(field: &str, node: Vec<f64>, edge0: f64, label: bool) -> PairFeatures {
        let mut edge = vec![0.0; EDGE_DIM];
        edge[0] = edge0;
        edge[EDGE_DIM - 1] = 3.0;
        PairFeatures {
            advisee: 0,
            candidate: 1,
            field: field.into(),
            first_year: 2001,
            anchor_year: 2001,
            node,
            edge,
            pool_dim: 4,
            pooled: vec![(2, 0.5)],
            label: Some(label),
        }
    }

    #[test]
    fn column_range_maps_to_unit_interval() {
        let rows = [vec![0.0, 5.0], vec![10.0, 5.0]];
        let r = ColumnRange::fit(2, rows.iter().map(|r| r.as_slice()));
        assert_eq!(r.transform(&[5.0, 5.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(r.transform(&[20.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(r.transform(&[-1.0, 9.0]).unwrap(), vec![0.0, 0.0]);
        assert!(r.transform(&[1.0]).is_err());
    }

    #[test]
    fn scaler_is_per_field_with_fallback() {
        let pairs = vec![
            pf("a", vec![0.0; 5], 0.0, true),
            pf("a", vec![2.0; 5], 4.0, false),
            pf("b", vec![0.0; 5], 0.0, true),
            pf("b", vec![8.0; 5], 8.0, false),
        ];
        let s = FeatureScaler::fit(&pairs, 7).unwrap();
        let probe = pf("a", vec![2.0; 5], 2.0, true);
        let (n, e) = s.transform(&probe).unwrap();
        assert_eq!(n, vec![1.0; 5]);
        assert_eq!(e[0], 0.5);
        let (n, e) = s.transform(&pf("c", vec![2.0; 5], 2.0, true)).unwrap();
        assert_eq!(n, vec![0.25; 5]);
        assert_eq!(e[0], 0.25);
    }

    #[test]
    fn sample_concatenates_pooled_structure() {
        let pairs = vec![pf("a", vec![0.0; 5], 0.0, true), pf("a", vec![1.0; 5], 1.0, false)];
        let s = FeatureScaler::fit(&pairs, 7).unwrap();
        let sample = s.sample(&pairs[1]).unwrap();
        assert_eq!(sample.node_input, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.5, 0.0]);
        assert_eq!(sample.edge_input.len(), EDGE_DIM);
        assert_eq!(sample.label, Some(0.0));
    }

    #[test]
    fn window_zeroes_late_yearly_counts() {
        let pairs = vec![pf("a", vec![0.0; 5], 0.0, true), pf("a", vec![1.0; 5], 1.0, false)];
        let full = FeatureScaler::fit(&pairs, 7).unwrap();
        let short = FeatureScaler::fit(&pairs, 3).unwrap();
        assert_eq!(full.global.edge.max[EDGE_DIM - 1], 3.0);
        assert_eq!(short.global.edge.max[EDGE_DIM - 1], 0.0);
        assert!(FeatureScaler::fit(&pairs, 0).is_err());
        assert!(FeatureScaler::fit(&pairs, 8).is_err());
    }

    #[test]
    fn node_columns_cover_buckets() {
        assert_eq!(node_columns(5).len(), 5);
        let c = node_columns(9);
        assert_eq!(c.len(), 9);
        assert_eq!(c[5], "org_i_0");
        assert_eq!(c[8], "org_j_1");
    }
}
