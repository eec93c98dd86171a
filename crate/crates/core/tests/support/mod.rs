//! Brute-force recomputation of pair features straight from publication
//! records and scholar mention sets. Shares no code with the library beyond
//! the plain data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lineage_core::corpus::PublicationRecord;
use lineage_core::disambiguation::Scholar;
use lineage_core::features::FeatureConfig;
use lineage_core::graph::CollabGraph;
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn tau(year: i32) -> f64 {
    4.15e-46 * std::f64::consts::E.powf(year as f64 / 20.0)
}

pub fn kulc(joint: u32, a: u32, b: u32) -> f64 {
    joint as f64 * (a + b) as f64 / (2.0 * a as f64 * b as f64)
}

/// `n_fields · own / mean`, mean over fields that published in `year`.
pub fn delta(records: &[PublicationRecord], field: &str, year: i32, n_fields: usize) -> Option<f64> {
    let mut per_field: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.year == year) {
        *per_field.entry(r.field.as_str()).or_default() += 1;
    }
    let own = *per_field.get(field)?;
    let total: u64 = per_field.values().sum();
    Some(n_fields as f64 * own as f64 * per_field.len() as f64 / total as f64)
}

/// Every feature of an ordered pair, recomputed.
#[derive(Debug, Clone)]
pub struct Expected {
    pub aa_i: i32,
    pub aa_j: i32,
    pub same_org: bool,
    pub raw_np_i: u32,
    pub raw_np_j: u32,
    pub np_i: f64,
    pub np_j: f64,
    pub edge: Vec<f64>,
    pub first_year: i32,
}

struct Person {
    years: Vec<i32>,
    papers: BTreeSet<usize>,
    /// Lowest author position on each paper.
    position: BTreeMap<usize, usize>,
    orgs: BTreeSet<String>,
    field: String,
}

fn person(records: &[PublicationRecord], s: &Scholar) -> Person {
    let mut position = BTreeMap::new();
    let mut orgs = BTreeSet::new();
    for m in &s.mention_ids {
        let e = position.entry(m.paper).or_insert(m.position);
        *e = (*e).min(m.position);
        if let Some(a) = &records[m.paper].authors[m.position].affiliation {
            orgs.insert(a.clone());
        }
    }
    let papers: BTreeSet<usize> = position.keys().copied().collect();
    let mut years: Vec<i32> = papers.iter().map(|&p| records[p].year).collect();
    years.sort();
    let mut fields: BTreeMap<&str, usize> = BTreeMap::new();
    for &p in &papers {
        *fields.entry(records[p].field.as_str()).or_default() += 1;
    }
    let best = fields.values().copied().max().unwrap_or(0);
    let field = fields
        .iter()
        .find(|(_, &c)| c == best)
        .map(|(f, _)| f.to_string())
        .unwrap_or_default();
    Person {
        years,
        papers,
        position,
        orgs,
        field,
    }
}

pub fn expected(
    records: &[PublicationRecord],
    scholars: &[Scholar],
    i: usize,
    j: usize,
    cfg: &FeatureConfig,
    n_fields: usize,
) -> Expected {
    let find = |id: usize| scholars.iter().find(|s| s.scholar_id == id).unwrap();
    let (pi, pj) = (person(records, find(i)), person(records, find(j)));
    let joint: Vec<usize> = pi.papers.intersection(&pj.papers).copied().collect();
    assert!(!joint.is_empty(), "pair ({i}, {j}) never co-authored");
    let joint_years: Vec<i32> = joint.iter().map(|&p| records[p].year).collect();
    let y_c = *joint_years.iter().min().unwrap();
    let y_last = *joint_years.iter().max().unwrap();
    let aa_i = y_c - pi.years[0];
    let aa_j = y_c - pj.years[0];

    let mut ft = 0;
    let mut lf = 0;
    for &p in &joint {
        let n = records[p].authors.len();
        let pos: BTreeSet<usize> = [pi.position[&p], pj.position[&p]].into();
        if pos == BTreeSet::from([0, 1]) {
            ft += 1;
        }
        if n >= 2 && pos == BTreeSet::from([0, n - 1]) {
            lf += 1;
        }
    }
    let mut edge = vec![
        (aa_i - aa_j) as f64,
        joint.len() as f64,
        (y_last - y_c) as f64,
        ft as f64,
        lf as f64,
    ];
    for t in 1..=7 {
        let end = y_c + t - 1;
        let within = |ys: &[i32]| ys.iter().filter(|&&y| y >= y_c && y <= end).count() as u32;
        edge.push(kulc(within(&joint_years), within(&pi.years), within(&pj.years)));
    }
    for k in 0..6 {
        edge.push(joint_years.iter().filter(|&&y| y == y_c + k).count() as f64);
    }

    let raw = |p: &Person| p.years.iter().filter(|&&y| y < y_c).count() as u32;
    let corrected = |p: &Person| {
        let mut v = raw(p) as f64;
        if cfg.temporal_rescale {
            v /= tau(y_c);
        }
        if cfg.disciplinary_correction {
            if let Some(d) = delta(records, &p.field, y_c, n_fields) {
                v /= d;
            }
        }
        v
    };
    Expected {
        aa_i,
        aa_j,
        same_org: !pi.orgs.is_disjoint(&pj.orgs),
        raw_np_i: raw(&pi),
        raw_np_j: raw(&pj),
        np_i: corrected(&pi),
        np_j: corrected(&pj),
        edge,
        first_year: y_c,
    }
}

/// `n` random ordered collaborating pairs.
pub fn random_pairs<R: Rng>(graph: &CollabGraph, n: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let keys: Vec<(usize, usize)> = graph.edges.keys().copied().collect();
    (0..n)
        .map(|_| {
            let &(a, b) = keys.choose(rng).unwrap();
            if rng.random::<bool>() {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

/// Spreads papers over a few fields so disciplinary factors differ.
pub fn scatter_fields<R: Rng>(records: &mut [PublicationRecord], rng: &mut R) {
    const FIELDS: [&str; 3] = ["biology", "computer science", "physics"];
    for r in records {
        r.field = FIELDS.choose(rng).unwrap().to_string();
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Compares the library's view of `(i, j)` with [`expected`]. Integers must
/// match exactly, reals to `1e-12` relative.
pub fn check_pair(
    graph: &CollabGraph,
    records: &[PublicationRecord],
    scholars: &[Scholar],
    (i, j): (usize, usize),
    cfg: &FeatureConfig,
) -> Result<(), String> {
    use lineage_core::features::{edge_features, node_features};
    use lineage_core::graph::{rescale_publications, temporal_factor};
    const TOL: f64 = 1e-12;
    let want = expected(records, scholars, i, j, cfg, graph.corrections.n_fields);
    let node = node_features(graph, i, j, cfg).map_err(|e| e.to_string())?;
    let edge = edge_features(graph, i, j).map_err(|e| e.to_string())?.to_vec();
    let fail = |what: &str, got: f64, want: f64| Err(format!("({i}, {j}) {what}: got {got}, want {want}"));

    if graph.academic_age(i, j).map_err(|e| e.to_string())? != want.aa_i || node.aa_i != want.aa_i {
        return fail("aa_i", node.aa_i as f64, want.aa_i as f64);
    }
    if node.aa_j != want.aa_j {
        return fail("aa_j", node.aa_j as f64, want.aa_j as f64);
    }
    if node.same_org != want.same_org {
        return fail("same_org", node.same_org as u8 as f64, want.same_org as u8 as f64);
    }
    for (what, got, w) in [("np_i", node.np_i, want.np_i), ("np_j", node.np_j, want.np_j)] {
        if rel_err(got, w) >= TOL {
            return fail(what, got, w);
        }
    }
    let y = want.first_year;
    if rel_err(temporal_factor(y), tau(y)) >= TOL {
        return fail("tau", temporal_factor(y), tau(y));
    }
    let p = want.raw_np_i as f64;
    if rel_err(rescale_publications(p, y), p / tau(y)) >= TOL {
        return fail("rescaled count", rescale_publications(p, y), p / tau(y));
    }
    let field = &graph.nodes[i].field;
    let d_want = delta(records, field, y, graph.corrections.n_fields);
    match (graph.corrections.delta(field, y), d_want) {
        (Ok(d), Some(w)) if rel_err(d, w) < TOL => {}
        (Err(_), None) => {}
        (got, w) => return Err(format!("({i}, {j}) delta: got {got:?}, want {w:?}")),
    }
    for (k, (&g, &w)) in edge.iter().zip(&want.edge).enumerate() {
        let is_real = (5..12).contains(&k);
        if (is_real && rel_err(g, w) >= TOL) || (!is_real && g != w) {
            return fail(&format!("edge[{k}]"), g, w);
        }
    }
    Ok(())
}

/// Checks 100 random pairs of a small generated corpus, with every count
/// correction switched on and with the defaults. Returns the pairs checked.
pub fn formula_oracle_run(seed: u64) -> Result<usize, String> {
    use lineage_core::disambiguation::{disambiguate, DisambiguationConfig};
    use lineage_core::eval::{generate_synthetic, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let spec = SyntheticSpec {
        n_advisees: 60,
        seed,
        ..Default::default()
    };
    let (mut records, _) = generate_synthetic(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scatter_fields(&mut records, &mut rng);
    let scholars = disambiguate(&records, &DisambiguationConfig::default()).map_err(|e| e.to_string())?;
    let graph = CollabGraph::build(&records, &scholars);
    let pairs = random_pairs(&graph, 100, &mut rng);
    let configs = [
        FeatureConfig::default(),
        FeatureConfig {
            temporal_rescale: true,
            disciplinary_correction: true,
            org_buckets: 0,
        },
        FeatureConfig {
            temporal_rescale: false,
            disciplinary_correction: false,
            org_buckets: 0,
        },
    ];
    for &pair in &pairs {
        for cfg in &configs {
            check_pair(&graph, &records, &scholars, pair, cfg)?;
        }
    }
    Ok(pairs.len())
}

/// Exactly `n` generated records whose author names are folded onto a
/// smaller pool, so distinct people share names, plus citations between
/// papers that share an author name.
pub fn homonym_fixture(n: usize, seed: u64) -> Vec<PublicationRecord> {
    use lineage_core::eval::{generate_synthetic, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut n_advisees = 50;
    let mut records = loop {
        // Little background output, so the records spread over many people.
        let spec = SyntheticSpec {
            n_advisees,
            pub_count_multiplier: 0.05,
            seed,
            ..Default::default()
        };
        let (records, _) = generate_synthetic(&spec);
        if records.len() >= n {
            break records;
        }
        n_advisees *= 2;
    };
    records.truncate(n);

    let names: BTreeSet<String> = records
        .iter()
        .flat_map(|r| r.authors.iter().map(|a| a.name.clone()))
        .collect();
    let names: Vec<String> = names.into_iter().collect();
    let pool = (names.len() * 3 / 5).max(1);
    let folded: BTreeMap<&str, &str> = names
        .iter()
        .enumerate()
        .map(|(k, name)| (name.as_str(), names[k % pool].as_str()))
        .collect();
    for r in &mut records {
        for a in &mut r.authors {
            a.name = folded[a.name.as_str()].to_string();
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_name: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (p, r) in records.iter().enumerate() {
        for a in &r.authors {
            by_name.entry(a.name.clone()).or_default().push(p);
        }
    }
    for p in 0..records.len() {
        if rng.random::<f64>() >= 0.5 {
            continue;
        }
        let name = &records[p].authors[0].name;
        let candidates = &by_name[name];
        let &q = candidates.choose(&mut rng).unwrap();
        if q != p {
            let id = records[q].paper_id.clone();
            records[p].references.push(id);
        }
    }
    records
}
