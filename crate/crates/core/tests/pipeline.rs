use std::collections::BTreeSet;

use lineage_core::dataset::PairFeatures;
use lineage_core::eval::{
    build_benchmark, evaluate, metrics, split, sweep, SplitSpec, SweepParam, SyntheticSpec,
};
use lineage_core::features::{node_features, FeatureConfig};
use lineage_core::genealogy::{
    export, filter_scholars, generate_genealogy, load_csv, EligibilityRule, ExportFormat,
};
use lineage_core::model::{fit, ModelConfig};
use lineage_core::Error;
use proptest::prelude::*;

fn pair(advisee: usize, candidate: usize, anchor_year: i32, label: bool) -> PairFeatures {
    PairFeatures {
        advisee,
        candidate,
        field: "physics".into(),
        first_year: anchor_year,
        anchor_year,
        node: vec![0.0; 5],
        edge: vec![0.0; 18],
        pool_dim: 4,
        pooled: vec![],
        label: Some(label),
    }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        pool_dim: 20,
        node_layers: vec![16, 8],
        edge_layers: vec![18, 8],
        max_epochs: 15,
        pretrain_epochs: 3,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn year_split_routes_by_anchor_year() {
    let pairs = vec![pair(0, 1, 2004, true), pair(0, 2, 2004, false), pair(3, 4, 2008, true)];
    let (train, test) = split(&pairs, &SplitSpec::default()).unwrap();
    assert_eq!(train.len(), 2);
    assert!(train.iter().all(|p| p.anchor_year == 2004));
    assert_eq!(test, vec![pairs[2].clone()]);

    let only_train = vec![pair(0, 1, 2004, true)];
    assert!(matches!(split(&only_train, &SplitSpec::default()), Err(Error::EmptySplit(_))));
}

#[test]
fn generated_advisors_are_older_than_advisees() {
    let spec = SyntheticSpec {
        n_advisees: 80,
        ..Default::default()
    };
    let bench = build_benchmark(&spec, &FeatureConfig::default(), 10).unwrap();
    assert_eq!(bench.matched.len(), 80);
    for m in &bench.matched {
        let n = node_features(&bench.graph, m.advisee, m.advisor, &FeatureConfig::default()).unwrap();
        assert!(n.aa_j > n.aa_i, "advisor age {} vs advisee {}", n.aa_j, n.aa_i);
    }
}

/// Without noise the advisor is the same-organization collaborator with
/// the most joint papers.
#[test]
fn noiseless_corpus_is_separable_by_a_simple_rule() {
    let spec = SyntheticSpec {
        n_advisees: 200,
        noise: 0.0,
        ..Default::default()
    };
    let bench = build_benchmark(&spec, &FeatureConfig::default(), 10).unwrap();
    let g = &bench.graph;
    let hits = bench
        .matched
        .iter()
        .filter(|m| {
            let best = g
                .collaborators(m.advisee)
                .into_iter()
                .max_by_key(|&c| {
                    let same = !g.nodes[m.advisee].affiliations.is_disjoint(&g.nodes[c].affiliations);
                    (same, g.weight(m.advisee, c), std::cmp::Reverse(c))
                })
                .unwrap();
            best == m.advisor
        })
        .count();
    assert!(hits as f64 >= 0.98 * bench.matched.len() as f64, "{hits} of {}", bench.matched.len());
}

#[test]
fn single_value_sweep_equals_direct_run() {
    let spec = SyntheticSpec {
        n_advisees: 60,
        ..Default::default()
    };
    let bench = build_benchmark(&spec, &FeatureConfig::default(), 20).unwrap();
    let (train, test) = split(&bench.pairs, &SplitSpec::default()).unwrap();
    let base = small_config();
    let rows = sweep(SweepParam::LearningRate, &[0.005], &base, &train, &test).unwrap();
    let direct = ModelConfig {
        learning_rate: 0.005,
        ..base
    };
    let (model, _) = fit(direct, &train).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].metrics, evaluate(&model, &test).unwrap());
}

#[test]
fn genealogy_from_a_trained_model_exports_consistently() {
    let spec = SyntheticSpec {
        n_advisees: 60,
        ..Default::default()
    };
    let bench = build_benchmark(&spec, &FeatureConfig::default(), 20).unwrap();
    let (model, _) = fit(small_config(), &bench.pairs).unwrap();
    let rule = EligibilityRule {
        min_papers: 5,
        max_gap_years: 5,
        min_span_years: 5,
    };
    let eligible = filter_scholars(&bench.graph, &rule);
    assert!(!eligible.is_empty());
    let records = generate_genealogy(&model, &bench.graph, &eligible, 0.0, 1).unwrap();
    let advisees: BTreeSet<usize> = records.iter().map(|r| r.advisee_id).collect();
    assert_eq!(advisees.len(), records.len());
    for r in &records {
        assert!(r.probability > 0.0 && r.probability < 1.0);
        assert!(eligible.contains(&r.advisee_id));
        assert_eq!(bench.graph.edge(r.advisee_id, r.advisor_id).unwrap().first_year, r.first_coauthor_year);
    }
    let strict = generate_genealogy(&model, &bench.graph, &eligible, 0.999_999, 3).unwrap();
    assert!(strict.len() <= records.len());

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("genealogy.csv");
    export(&csv, &records, ExportFormat::Csv).unwrap();
    assert_eq!(load_csv(&csv).unwrap(), records);

    let graphml = dir.path().join("genealogy.graphml");
    export(&graphml, &records, ExportFormat::Graphml).unwrap();
    let text = std::fs::read_to_string(&graphml).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "graphml");
    assert_eq!(root.tag_name().namespace(), Some("http://graphml.graphdrawing.org/xmlns"));
    let keys: BTreeSet<&str> = root
        .children()
        .filter(|n| n.has_tag_name("key"))
        .map(|n| n.attribute("id").unwrap())
        .collect();
    let graph = root.children().find(|n| n.has_tag_name("graph")).unwrap();
    assert_eq!(graph.attribute("edgedefault"), Some("directed"));
    let nodes: BTreeSet<&str> = graph
        .children()
        .filter(|n| n.has_tag_name("node"))
        .map(|n| n.attribute("id").unwrap())
        .collect();
    let edges: Vec<_> = graph.children().filter(|n| n.has_tag_name("edge")).collect();
    assert_eq!(edges.len(), records.len());
    for e in edges {
        assert!(nodes.contains(e.attribute("source").unwrap()));
        assert!(nodes.contains(e.attribute("target").unwrap()));
        for d in e.children().filter(|n| n.has_tag_name("data")) {
            assert!(keys.contains(d.attribute("key").unwrap()));
        }
    }
}

proptest! {
    #[test]
    fn random_split_is_a_disjoint_cover_by_advisee(
        groups in prop::collection::vec(1usize..4, 2..30),
        fraction in 0.05f64..0.95,
        seed in 0u64..1000,
    ) {
        let pairs: Vec<PairFeatures> = groups
            .iter()
            .enumerate()
            .flat_map(|(a, &n)| (0..n).map(move |k| pair(a, 100 + k, 2000 + (k as i32), k == 0)))
            .collect();
        let spec = SplitSpec { random_fraction: Some(fraction), seed, ..Default::default() };
        match split(&pairs, &spec) {
            Ok((train, test)) => {
                prop_assert_eq!(train.len() + test.len(), pairs.len());
                let a: BTreeSet<usize> = train.iter().map(|p| p.advisee).collect();
                let b: BTreeSet<usize> = test.iter().map(|p| p.advisee).collect();
                prop_assert!(a.is_disjoint(&b));
            }
            Err(Error::EmptySplit(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn metrics_ignore_sample_order(
        rows in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..60),
        rotate in 0usize..60,
    ) {
        let (p, l): (Vec<f64>, Vec<bool>) = rows.iter().cloned().unzip();
        let mut shuffled = rows.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let (p2, l2): (Vec<f64>, Vec<bool>) = shuffled.into_iter().unzip();
        prop_assert_eq!(metrics(&p, &l, 0.5).unwrap(), metrics(&p2, &l2, 0.5).unwrap());
    }

    #[test]
    fn stricter_rules_admit_subsets(
        mut years in prop::collection::vec(1990i32..2020, 0..30),
        min_papers in 1usize..15,
        gap in 1i32..8,
        span in 1i32..20,
    ) {
        years.sort();
        let loose = EligibilityRule { min_papers, max_gap_years: gap + 1, min_span_years: span };
        let strict = EligibilityRule { min_papers: min_papers + 1, max_gap_years: gap, min_span_years: span + 1 };
        prop_assert!(!strict.admits(&years) || loose.admits(&years));
    }
}
