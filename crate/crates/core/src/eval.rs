//! Splits, classification metrics, parameter sweeps and a planted-advisor
//! corpus generator.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorMention, GroundTruthPair, PublicationRecord};
use crate::dataset::{build_labeled_pairs, match_ground_truth, MatchedPair, PairFeatures};
use crate::disambiguation::{disambiguate, DisambiguationConfig, Scholar};
use crate::features::FeatureConfig;
use crate::graph::CollabGraph;
use crate::io::write_atomic;
use crate::model::{fit, JointModel, ModelConfig, PairSample};
use crate::{Error, Result};

/// Train/test partition of labeled pairs.
///
/// By default a pair trains when its anchor year (the advisee's first year
/// with the advisor) falls in `train_from..=train_to`; every other pair
/// tests. With `random_fraction` set, advisees are instead shuffled with
/// `seed` and that fraction of them trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_from: i32,
    pub train_to: i32,
    pub random_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_from: 2000,
            train_to: 2006,
            random_fraction: None,
            seed: 0,
        }
    }
}

pub fn split(pairs: &[PairFeatures], spec: &SplitSpec) -> Result<(Vec<PairFeatures>, Vec<PairFeatures>)> {
    let (train, test): (Vec<_>, Vec<_>) = match spec.random_fraction {
        None => pairs
            .iter()
            .cloned()
            .partition(|p| (spec.train_from..=spec.train_to).contains(&p.anchor_year)),
        Some(frac) => {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::Config(format!("random split fraction {frac} outside [0, 1]")));
            }
            let chosen = sample_advisees(pairs, frac, spec.seed);
            pairs.iter().cloned().partition(|p| chosen.contains(&p.advisee))
        }
    };
    if train.is_empty() {
        return Err(Error::EmptySplit("no pairs fall in the training range".into()));
    }
    if test.is_empty() {
        return Err(Error::EmptySplit("no pairs fall outside the training range".into()));
    }
    Ok((train, test))
}

/// `round(fraction · n)` distinct advisees chosen with `seed`.
fn sample_advisees(pairs: &[PairFeatures], fraction: f64, seed: u64) -> BTreeSet<usize> {
    let mut advisees: Vec<usize> = pairs
        .iter()
        .map(|p| p.advisee)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    advisees.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (fraction * advisees.len() as f64).round() as usize;
    advisees.into_iter().take(k).collect()
}

/// Keeps the pairs of `round(fraction · n)` advisees, chosen with `seed`.
pub fn subsample(pairs: &[PairFeatures], fraction: f64, seed: u64) -> Vec<PairFeatures> {
    let chosen = sample_advisees(pairs, fraction, seed);
    pairs.iter().filter(|p| chosen.contains(&p.advisee)).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

pub const METRICS_HEADER: &str = "accuracy,precision,recall,f1,tp,fp,tn,fn";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.accuracy, self.precision, self.recall, self.f1, self.tp, self.fp, self.tn, self.fn_
        )
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |w| writeln!(w, "{METRICS_HEADER}\n{}", self.csv_row()))
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Binary metrics of `predictions ≥ threshold` against `labels`. Ratios
/// with a zero denominator are 0.
pub fn metrics(predictions: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, predictions.len()),
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Scores `pairs` with `model` and compares against their labels.
pub fn evaluate(model: &JointModel, pairs: &[PairFeatures]) -> Result<MetricsReport> {
    let samples: Vec<PairSample> = model.scaler.samples(pairs)?;
    let refs: Vec<&PairSample> = samples.iter().collect();
    let preds = model.predict_batch(&refs)?;
    let labels = pairs
        .iter()
        .map(|p| {
            p.label.ok_or(Error::UnlabeledSample {
                advisee: p.advisee,
                candidate: p.candidate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    metrics(&preds, &labels, 0.5)
}

/// Node-encoder widths by depth.
pub const NODE_WIDTH_TABLE: [&[usize]; 5] = [
    &[2000],
    &[2000, 1000],
    &[2000, 1000, 500],
    &[2000, 1500, 1000, 500],
    &[2000, 1500, 1000, 500, 300],
];

/// Edge-encoder widths by depth.
pub const EDGE_WIDTH_TABLE: [&[usize]; 5] = [
    &[18],
    &[18, 50],
    &[18, 50, 70],
    &[18, 30, 50, 70],
    &[18, 30, 50, 70, 90],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    LearningRate,
    NodeDepth,
    EdgeDepth,
    TrainFraction,
    EmbedDim,
    FeatureWindow,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::LearningRate => "learning_rate",
            SweepParam::NodeDepth => "node_depth",
            SweepParam::EdgeDepth => "edge_depth",
            SweepParam::TrainFraction => "train_fraction",
            SweepParam::EmbedDim => "embed_dim",
            SweepParam::FeatureWindow => "feature_window",
        }
    }

    pub fn parse(s: &str) -> Option<SweepParam> {
        [
            SweepParam::LearningRate,
            SweepParam::NodeDepth,
            SweepParam::EdgeDepth,
            SweepParam::TrainFraction,
            SweepParam::EmbedDim,
            SweepParam::FeatureWindow,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

fn depth(value: f64, param: SweepParam) -> Result<usize> {
    let d = value as usize;
    if value.fract() != 0.0 || !(1..=5).contains(&d) {
        return Err(Error::Config(format!("{} must be an integer in 1..=5", param.name())));
    }
    Ok(d)
}

/// Configuration for one sweep row. Node depths follow the width table,
/// scaled by the ratio of the base first width to 2000.
pub fn sweep_config(param: SweepParam, value: f64, base: &ModelConfig) -> Result<ModelConfig> {
    let mut cfg = base.clone();
    match param {
        SweepParam::LearningRate => cfg.learning_rate = value,
        SweepParam::NodeDepth => {
            let scale = base.node_layers.first().copied().unwrap_or(2000) as f64 / 2000.0;
            cfg.node_layers = NODE_WIDTH_TABLE[depth(value, param)? - 1]
                .iter()
                .map(|&w| ((w as f64 * scale).round() as usize).max(1))
                .collect();
        }
        SweepParam::EdgeDepth => {
            cfg.edge_layers = EDGE_WIDTH_TABLE[depth(value, param)? - 1].to_vec();
        }
        SweepParam::TrainFraction => {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::Config("train_fraction must be in (0, 1]".into()));
            }
        }
        SweepParam::EmbedDim => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config("embed_dim must be a positive integer".into()));
            }
            *cfg.node_layers.last_mut().expect("validated layers") = value as usize;
        }
        SweepParam::FeatureWindow => cfg.feature_window = value as usize,
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: MetricsReport,
}

/// Trains and evaluates once per value. Each row starts from `base` with
/// its own seed, so a row does not depend on the others.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    base: &ModelConfig,
    train: &[PairFeatures],
    test: &[PairFeatures],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let cfg = sweep_config(param, value, base)?;
            let rows = if param == SweepParam::TrainFraction {
                subsample(train, value, base.seed)
            } else {
                train.to_vec()
            };
            let (model, _) = fit(cfg, &rows)?;
            Ok(SweepRow {
                value,
                metrics: evaluate(&model, test)?,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write + ?Sized>(w: &mut W, param: SweepParam, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "parameter,value,{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{}", param.name(), r.value, r.metrics.csv_row())?;
    }
    Ok(())
}

/// Whitespace-separated columns for gnuplot.
pub fn write_sweep_dat<W: Write + ?Sized>(w: &mut W, param: SweepParam, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "# {} accuracy precision recall f1", param.name())?;
    for r in rows {
        let m = &r.metrics;
        writeln!(w, "{} {} {} {} {}", r.value, m.accuracy, m.precision, m.recall, m.f1)?;
    }
    Ok(())
}

/// Parameters of the planted-advisor corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_advisees: usize,
    /// Distinct co-authors of each advisee, the advisor included.
    pub collaborators_per_advisee: usize,
    /// Advisees start publishing uniformly in `first_year..=last_start_year`.
    pub first_year: i32,
    pub last_start_year: i32,
    /// Minimum years a senior scholar has published before the earliest
    /// advisee starts.
    pub advisor_age_offset: i32,
    /// Mean yearly papers of senior scholars outside advising.
    pub pub_count_multiplier: f64,
    /// Mean yearly joint papers during the first years of a mentoring tie.
    pub early_collab_intensity: f64,
    /// Share of non-advisor collaborators that mentor like an advisor from
    /// another organization.
    pub confounder_fraction: f64,
    /// Per-advisee probability of each signal being blurred.
    pub noise: f64,
    pub n_orgs: usize,
    pub field: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_advisees: 500,
            collaborators_per_advisee: 8,
            first_year: 2000,
            last_start_year: 2009,
            advisor_age_offset: 8,
            pub_count_multiplier: 1.0,
            early_collab_intensity: 2.0,
            confounder_fraction: 0.43,
            noise: 0.1,
            n_orgs: 25,
            field: "computer science".into(),
            seed: 7,
        }
    }
}

const GIVEN: [&str; 24] = [
    "Ada", "Bela", "Chen", "Dara", "Emil", "Farah", "Goran", "Hana", "Ivo", "Jun", "Kai", "Lena",
    "Mira", "Nils", "Omar", "Pia", "Quinn", "Rosa", "Sami", "Tomas", "Uma", "Vera", "Wen", "Yara",
];
const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "te", "vo", "ba", "di", "fe", "go", "hu", "ji", "po", "zu",
];

/// A distinct pronounceable name for every index.
fn person_name(k: usize) -> String {
    let given = GIVEN[k % GIVEN.len()];
    let mut n = k / GIVEN.len();
    let mut surname = String::new();
    loop {
        surname.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
    }
    if surname.len() < 4 {
        surname.push_str("ren");
    }
    let mut chars = surname.chars();
    let first = chars.next().expect("non-empty").to_ascii_uppercase();
    format!("{given} {first}{}", chars.as_str())
}

struct Person {
    name: String,
    org: usize,
}

struct Corpus<'a> {
    spec: &'a SyntheticSpec,
    people: Vec<Person>,
    records: Vec<PublicationRecord>,
}

impl Corpus<'_> {
    fn person(&mut self, org: usize) -> usize {
        let k = self.people.len();
        self.people.push(Person {
            name: person_name(k),
            org,
        });
        k
    }

    fn paper(&mut self, year: i32, authors: &[usize]) {
        let n = self.records.len();
        self.records.push(PublicationRecord {
            paper_id: format!("P{n:06}"),
            title: format!("Study {n}"),
            year,
            field: self.spec.field.clone(),
            authors: authors
                .iter()
                .map(|&a| AuthorMention {
                    name: self.people[a].name.clone(),
                    affiliation: Some(format!("Institute {}", self.people[a].org)),
                })
                .collect(),
            references: Vec::new(),
        });
    }
}

/// Up to `k` distinct members of `pool` outside `exclude`, preferring those
/// that pass `accept`.
fn draw_distinct<R: Rng>(
    pool: &[usize],
    k: usize,
    exclude: &[usize],
    rng: &mut R,
    mut accept: impl FnMut(usize, &mut R) -> bool,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let fresh = |x: &usize, out: &Vec<usize>| !out.contains(x) && !exclude.contains(x);
    for _ in 0..100 * k.max(1) {
        if out.len() == k {
            return out;
        }
        let x = *pool.choose(rng).expect("non-empty pool");
        if fresh(&x, &out) && accept(x, rng) {
            out.push(x);
        }
    }
    for &x in pool {
        if out.len() == k {
            break;
        }
        if fresh(&x, &out) {
            out.push(x);
        }
    }
    out
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u32).unwrap_or(0)
}

/// Generates a corpus in which every advisee has exactly one planted
/// advisor among `collaborators_per_advisee` co-authors, and the matching
/// ground-truth list.
///
/// Advisors co-author from the advisee's first paper, intensely for five
/// years with the advisee first and the advisor last, at the advisee's
/// organization. Co-mentors follow the same collaboration pattern from
/// another organization, so only node-level signals tell them apart. Peers
/// are juniors with a few papers; the remaining seniors appear once or
/// twice in the middle of the author list. After the mentoring years each
/// advisee keeps publishing alone, so careers span well over a decade.
pub fn generate_synthetic(spec: &SyntheticSpec) -> (Vec<PublicationRecord>, Vec<GroundTruthPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut c = Corpus {
        spec,
        people: Vec::new(),
        records: Vec::new(),
    };
    let n = spec.n_advisees;
    let n_orgs = spec.n_orgs.max(2);
    let others = spec.collaborators_per_advisee.saturating_sub(1);
    let n_conf = ((others as f64) * spec.confounder_fraction).round() as usize;
    let n_weak = (others - n_conf).min(2);
    let n_peer = others - n_conf - n_weak;
    let last_year = spec.last_start_year + 14;

    let seniors = |c: &mut Corpus, count: usize, rng: &mut ChaCha8Rng| -> Vec<(usize, i32)> {
        (0..count)
            .map(|_| {
                let p = c.person(rng.random_range(0..n_orgs));
                let start = spec.first_year - 1 - spec.advisor_age_offset - rng.random_range(0..=15);
                (p, start)
            })
            .collect()
    };
    let faculty = seniors(&mut c, n.div_ceil(4).max(1), &mut rng);
    let mentors = seniors(&mut c, (n * n_conf).div_ceil(4).max(1), &mut rng);
    let faculty_ids: Vec<usize> = faculty.iter().map(|&(p, _)| p).collect();
    let mentor_ids: Vec<usize> = mentors.iter().map(|&(p, _)| p).collect();
    let external: Vec<usize> = (0..(n / 5).max(4))
        .map(|_| c.person(rng.random_range(0..n_orgs)))
        .collect();
    let juniors: Vec<usize> = (0..(n / 2).max(n_peer + 1))
        .map(|_| c.person(rng.random_range(0..n_orgs)))
        .collect();

    // Background output of senior scholars with outside co-authors.
    for &(p, start) in faculty.iter().chain(&mentors) {
        c.paper(start, &[p]);
        for year in (start + 1)..=last_year {
            for _ in 0..poisson(spec.pub_count_multiplier, &mut rng) {
                let ext = *external.choose(&mut rng).expect("external pool");
                c.paper(year, &[p, ext]);
            }
        }
    }

    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let start = rng.random_range(spec.first_year..=spec.last_start_year);
        let advisor = *faculty_ids.choose(&mut rng).expect("faculty pool");
        let org = if rng.random::<f64>() < spec.noise {
            (c.people[advisor].org + rng.random_range(1..n_orgs)) % n_orgs
        } else {
            c.people[advisor].org
        };
        let me = c.person(org);

        let conf = draw_distinct(&mentor_ids, n_conf, &[], &mut rng, |m, rng| {
            c.people[m].org != org || rng.random::<f64>() < spec.noise
        });
        let peers = draw_distinct(&juniors, n_peer, &[], &mut rng, |_, _| true);
        let mut taken = conf.clone();
        taken.push(advisor);
        let weak = draw_distinct(&faculty_ids, n_weak, &taken, &mut rng, |_, _| true);

        // A blurred start: the advisee's first paper predates the advisor.
        if rng.random::<f64>() < spec.noise && !peers.is_empty() {
            c.paper(start - 1, &[me, peers[0]]);
        }
        let mentoring = |c: &mut Corpus, rng: &mut ChaCha8Rng, who: usize, from: i32| {
            for k in 0..5 {
                let count = poisson(spec.early_collab_intensity - 1.0, rng) + 1;
                for _ in 0..count {
                    match peers.choose(rng) {
                        Some(&p) if rng.random::<f64>() < 0.3 => c.paper(from + k, &[me, p, who]),
                        _ => c.paper(from + k, &[me, who]),
                    }
                }
            }
            for k in 5..10 {
                if rng.random::<f64>() < 0.3 {
                    c.paper(from + k, &[me, who]);
                }
            }
        };
        mentoring(&mut c, &mut rng, advisor, start);
        for &m in &conf {
            mentoring(&mut c, &mut rng, m, start);
        }
        for &p in &peers {
            let from = start + rng.random_range(0..=5);
            for k in 0..rng.random_range(1..=2) {
                if rng.random::<bool>() {
                    c.paper(from + k, &[me, p]);
                } else {
                    c.paper(from + k, &[p, me]);
                }
            }
        }
        for &w in &weak {
            let year = start + rng.random_range(1..=8);
            let p = peers.first().copied().unwrap_or(external[0]);
            c.paper(year, &[p, me, w]);
        }
        for year in (start + 5)..=(start + 14) {
            c.paper(year, &[me]);
        }
        truth.push(GroundTruthPair {
            advisee_name: c.people[me].name.clone(),
            advisor_name: c.people[advisor].name.clone(),
            field: spec.field.clone(),
            start_year: Some(start),
        });
    }
    (c.records, truth)
}

/// A generated corpus carried through disambiguation, graph construction
/// and pair labeling.
pub struct Benchmark {
    pub records: Vec<PublicationRecord>,
    pub truth: Vec<GroundTruthPair>,
    pub scholars: Vec<Scholar>,
    pub graph: CollabGraph,
    pub matched: Vec<MatchedPair>,
    pub pairs: Vec<PairFeatures>,
}

pub fn build_benchmark(spec: &SyntheticSpec, features: &FeatureConfig, pool_dim: usize) -> Result<Benchmark> {
    let (records, truth) = generate_synthetic(spec);
    let scholars = disambiguate(&records, &DisambiguationConfig::default())?;
    let graph = CollabGraph::build(&records, &scholars);
    let (matched, _) = match_ground_truth(&graph, &scholars, &truth);
    let pairs = build_labeled_pairs(&graph, &matched, features, pool_dim, spec.seed)?;
    Ok(Benchmark {
        records,
        truth,
        scholars,
        graph,
        matched,
        pairs,
    })
}
