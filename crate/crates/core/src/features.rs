//! Pairwise node and edge attributes of a collaboration.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{kulc, CollabGraph};

/// Years of collaboration history summarised by the similarity features.
pub const KULC_YEARS: usize = 7;
/// Years of per-year co-authored paper counts.
pub const YEARLY_COUNTS: usize = 6;
/// `ad, ct, cd, ft, lf` + kulc + yearly counts.
pub const EDGE_DIM: usize = 5 + KULC_YEARS + YEARLY_COUNTS;
/// Node attributes before optional organization buckets.
pub const BASE_NODE_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Deflate publication counts by the temporal factor of the first
    /// collaboration year.
    pub temporal_rescale: bool,
    /// Divide publication counts by the disciplinary factor of the scholar's
    /// field in the first collaboration year.
    pub disciplinary_correction: bool,
    /// Hashed one-hot buckets per endpoint for the primary affiliation.
    pub org_buckets: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            temporal_rescale: true,
            disciplinary_correction: false,
            org_buckets: 0,
        }
    }
}

impl FeatureConfig {
    pub fn node_dim(&self) -> usize {
        BASE_NODE_DIM + 2 * self.org_buckets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAttr {
    pub aa_i: i32,
    pub aa_j: i32,
    pub same_org: bool,
    pub np_i: f64,
    pub np_j: f64,
    /// One-hot organization buckets for `i` then `j`; empty when disabled.
    pub org_buckets: Vec<f64>,
}

impl NodeAttr {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.aa_i as f64,
            self.aa_j as f64,
            if self.same_org { 1.0 } else { 0.0 },
            self.np_i,
            self.np_j,
        ];
        v.extend_from_slice(&self.org_buckets);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttr {
    /// `aa_i − aa_j`.
    pub ad: i32,
    pub ct: u32,
    pub cd: i32,
    pub ft: u32,
    pub lf: u32,
    pub kulc: [f64; KULC_YEARS],
    pub yearly: [u32; YEARLY_COUNTS],
}

impl EdgeAttr {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(EDGE_DIM);
        v.extend([
            self.ad as f64,
            self.ct as f64,
            self.cd as f64,
            self.ft as f64,
            self.lf as f64,
        ]);
        v.extend(self.kulc.iter());
        v.extend(self.yearly.iter().map(|&c| c as f64));
        v
    }
}

/// Zeroes the kulc and yearly-count entries past `window` years in an
/// edge vector laid out as [`EdgeAttr::to_vec`].
pub fn apply_window(edge: &mut [f64], window: usize) {
    for t in window..KULC_YEARS {
        edge[5 + t] = 0.0;
    }
    for k in window.min(YEARLY_COUNTS)..YEARLY_COUNTS {
        edge[5 + KULC_YEARS + k] = 0.0;
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn org_one_hot(graph: &CollabGraph, i: usize, buckets: usize) -> Vec<f64> {
    let mut v = vec![0.0; buckets];
    if let Some(org) = graph.nodes[i].affiliations.iter().next() {
        v[(fnv1a(org) % buckets as u64) as usize] = 1.0;
    }
    v
}

fn corrected_count(graph: &CollabGraph, i: usize, year: i32, cfg: &FeatureConfig) -> f64 {
    let mut np = graph.nodes[i].papers_before(year) as f64;
    if cfg.temporal_rescale {
        np /= graph.corrections.tau(year);
    }
    if cfg.disciplinary_correction {
        // Pairs whose field has no output that year stay uncorrected.
        if let Ok(delta) = graph.corrections.delta(&graph.nodes[i].field, year) {
            np /= delta;
        }
    }
    np
}

/// Node attributes of the ordered pair `(i, j)`.
pub fn node_features(
    graph: &CollabGraph,
    i: usize,
    j: usize,
    cfg: &FeatureConfig,
) -> Result<NodeAttr> {
    let edge = graph.edge(i, j)?;
    let y_c = edge.first_year;
    let (ni, nj) = (&graph.nodes[i], &graph.nodes[j]);
    let mut org_buckets = Vec::new();
    if cfg.org_buckets > 0 {
        org_buckets.extend(org_one_hot(graph, i, cfg.org_buckets));
        org_buckets.extend(org_one_hot(graph, j, cfg.org_buckets));
    }
    Ok(NodeAttr {
        aa_i: y_c - ni.first_pub_year,
        aa_j: y_c - nj.first_pub_year,
        same_org: !ni.affiliations.is_disjoint(&nj.affiliations),
        np_i: corrected_count(graph, i, y_c, cfg),
        np_j: corrected_count(graph, j, y_c, cfg),
        org_buckets,
    })
}

/// Edge attributes of the ordered pair `(i, j)`.
///
/// Year `k` of the history is `first_year + k − 1`; the similarity for
/// `t` years counts papers of both scholars in `[first_year, first_year + t − 1]`.
pub fn edge_features(graph: &CollabGraph, i: usize, j: usize) -> Result<EdgeAttr> {
    let edge = graph.edge(i, j)?;
    let y_c = edge.first_year;
    let (ni, nj) = (&graph.nodes[i], &graph.nodes[j]);
    let aa_i = y_c - ni.first_pub_year;
    let aa_j = y_c - nj.first_pub_year;

    let mut ft = 0;
    let mut lf = 0;
    for jp in &edge.papers {
        let (a, b) = jp.positions;
        let (lo, hi) = (a.min(b), a.max(b));
        if lo == 0 && hi == 1 {
            ft += 1;
        }
        if jp.n_authors >= 2 && lo == 0 && hi == jp.n_authors - 1 {
            lf += 1;
        }
    }
    let last_year = edge.papers.last().map(|p| p.year).unwrap_or(y_c);

    let mut kulc_t = [0.0; KULC_YEARS];
    for (t, slot) in kulc_t.iter_mut().enumerate() {
        let end = y_c + t as i32;
        let joint = edge.papers.iter().filter(|p| p.year <= end).count() as u32;
        *slot = kulc(joint, ni.papers_between(y_c, end), nj.papers_between(y_c, end))?;
    }
    let mut yearly = [0; YEARLY_COUNTS];
    for (k, slot) in yearly.iter_mut().enumerate() {
        *slot = edge.per_year.get(&(y_c + k as i32)).copied().unwrap_or(0);
    }

    Ok(EdgeAttr {
        ad: aa_i - aa_j,
        ct: edge.weight(),
        cd: last_year - y_c,
        ft,
        lf,
        kulc: kulc_t,
        yearly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorMention, PublicationRecord};
    use crate::disambiguation::disambiguate;
    use crate::graph::temporal_factor;

    fn rec(id: &str, year: i32, authors: &[(&str, &str)]) -> PublicationRecord {
        PublicationRecord {
            paper_id: id.into(),
            title: String::new(),
            year,
            field: "cs".into(),
            authors: authors
                .iter()
                .map(|(n, a)| AuthorMention {
                    name: n.to_string(),
                    affiliation: Some(a.to_string()),
                })
                .collect(),
            references: vec![],
        }
    }

    fn graph(recs: &[PublicationRecord]) -> CollabGraph {
        let scholars = disambiguate(recs, &Default::default()).unwrap();
        CollabGraph::build(recs, &scholars)
    }

    #[test]
    fn degenerate_single_joint_paper() {
        let recs = vec![rec("p", 2001, &[("I", "U"), ("J", "V")])];
        let g = graph(&recs);
        let e = edge_features(&g, 0, 1).unwrap();
        assert_eq!((e.ct, e.cd, e.ft, e.lf), (1, 0, 1, 1));
        assert!(e.kulc.iter().all(|&k| k == 1.0));
        assert_eq!(e.yearly, [1, 0, 0, 0, 0, 0]);
        assert_eq!(e.to_vec().len(), EDGE_DIM);

        let n = node_features(&g, 0, 1, &FeatureConfig::default()).unwrap();
        assert_eq!((n.aa_i, n.aa_j, n.np_i, n.np_j), (0, 0, 0.0, 0.0));
        assert!(!n.same_org);
        assert_eq!(n.to_vec().len(), BASE_NODE_DIM);
    }

    #[test]
    fn shared_affiliation_sets_same_org() {
        let recs = vec![rec("p", 2001, &[("I", "U"), ("J", "U")])];
        let n = node_features(&graph(&recs), 0, 1, &FeatureConfig::default()).unwrap();
        assert!(n.same_org);
    }

    #[test]
    fn prior_papers_are_rescaled() {
        let mut recs: Vec<_> = (0..20)
            .map(|k| rec(&format!("a{k}"), 1990 + (k % 10), &[("Adv", "U")]))
            .collect();
        recs.push(rec("joint", 2005, &[("Stu", "U"), ("Adv", "U")]));
        let g = graph(&recs);
        // ids sorted by name key: adv=0, stu=1
        let n = node_features(&g, 1, 0, &FeatureConfig::default()).unwrap();
        assert_eq!(n.np_i, 0.0);
        assert!((n.np_j - 20.0 / temporal_factor(2005)).abs() < 1e-9 * n.np_j);
        assert_eq!(n.aa_j, 2005 - 1990);

        let raw = node_features(
            &g,
            1,
            0,
            &FeatureConfig {
                temporal_rescale: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(raw.np_j, 20.0);
    }

    #[test]
    fn first_two_and_first_last_positions() {
        let recs = vec![
            rec("a", 2000, &[("I", "U"), ("J", "V"), ("K", "W")]),
            rec("b", 2001, &[("J", "V"), ("K", "W"), ("I", "U")]),
            rec("c", 2002, &[("K", "W"), ("I", "U"), ("J", "V")]),
        ];
        let g = graph(&recs);
        // I=0, J=1, K=2
        let ij = edge_features(&g, 0, 1).unwrap();
        assert_eq!(ij.ft, 1);
        assert_eq!(ij.lf, 1);
        let ik = edge_features(&g, 0, 2).unwrap();
        assert_eq!(ik.ft, 1);
        assert_eq!(ik.lf, 1);
        assert_eq!(ik.cd, 2);
    }

    #[test]
    fn direction_only_flips_age_difference() {
        let recs = vec![
            rec("a", 1990, &[("Adv", "U")]),
            rec("b", 2000, &[("Stu", "U"), ("Adv", "U")]),
            rec("c", 2002, &[("Stu", "U"), ("Adv", "U")]),
            rec("d", 2003, &[("Stu", "U")]),
        ];
        let g = graph(&recs);
        let ab = edge_features(&g, 0, 1).unwrap().to_vec();
        let ba = edge_features(&g, 1, 0).unwrap().to_vec();
        assert_eq!(ab[0], -ba[0]);
        assert_eq!(&ab[1..], &ba[1..]);
    }

    #[test]
    fn window_masks_late_years() {
        let mut v: Vec<f64> = (0..EDGE_DIM).map(|x| x as f64 + 1.0).collect();
        apply_window(&mut v, 3);
        assert!(v[5..8].iter().all(|&x| x != 0.0));
        assert!(v[8..12].iter().all(|&x| x == 0.0));
        assert!(v[12..15].iter().all(|&x| x != 0.0));
        assert!(v[15..18].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn org_buckets_extend_node_vector() {
        let recs = vec![rec("p", 2001, &[("I", "U"), ("J", "V")])];
        let cfg = FeatureConfig {
            org_buckets: 4,
            ..Default::default()
        };
        let n = node_features(&graph(&recs), 0, 1, &cfg).unwrap();
        assert_eq!(n.to_vec().len(), cfg.node_dim());
        assert_eq!(n.org_buckets.iter().sum::<f64>(), 2.0);
    }
}
