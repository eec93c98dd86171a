//! One function per pipeline stage. Each reads the artifacts of earlier
//! stages from the output directory and writes its own atomically.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lineage_core::corpus::{
    load_ground_truth, load_publications, save_ground_truth, save_publications, PublicationRecord, RecordFormat,
};
use lineage_core::dataset::{build_labeled_pairs, load_pairs, match_ground_truth, save_pairs, write_feature_dump, FeatureScaler};
use lineage_core::disambiguation::{disambiguate_with_report, load_scholars, save_scholars, Scholar};
use lineage_core::eval::{evaluate, generate_synthetic, split, sweep, write_sweep_csv, write_sweep_dat, SweepParam};
use lineage_core::genealogy::{export, filter_scholars, generate_genealogy};
use lineage_core::graph::CollabGraph;
use lineage_core::io::write_atomic;
use lineage_core::model::{fit, JointModel};
use serde_json::{json, Value};

use crate::config::{ConfigError, PipelineConfig};

pub const RECORDS: &str = "records.jsonl";
pub const SCHOLARS: &str = "scholars.json";
pub const PAIRS: &str = "pairs.jsonl";
pub const FEATURES: &str = "features.csv";
pub const MODEL: &str = "model.json";
pub const HISTORY: &str = "history.csv";
pub const METRICS: &str = "metrics.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_DAT: &str = "sweep.dat";

/// Eval ran but the metrics fell short of the requested floor; maps to
/// exit code 4.
#[derive(Debug, thiserror::Error)]
#[error("accuracy {accuracy:.4} is below the required {required}")]
pub struct AcceptanceFailure {
    pub accuracy: f64,
    pub required: f64,
}

/// A stage input that is not on disk yet.
fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        anyhow::bail!("missing {}; run `lineage {stage}` first", path.display())
    }
}

fn stage_input(cfg: &PipelineConfig, file: &str, stage: &str) -> Result<PathBuf> {
    let path = cfg.out(file);
    require(&path, stage)?;
    Ok(path)
}

fn records(cfg: &PipelineConfig) -> Result<Vec<PublicationRecord>> {
    let path = stage_input(cfg, RECORDS, "ingest")?;
    Ok(load_publications(&path, RecordFormat::Jsonl)?)
}

fn scholars(cfg: &PipelineConfig) -> Result<Vec<Scholar>> {
    let path = stage_input(cfg, SCHOLARS, "disambiguate")?;
    Ok(load_scholars(&path)?)
}

fn graph(cfg: &PipelineConfig) -> Result<(Vec<PublicationRecord>, Vec<Scholar>, CollabGraph)> {
    let records = records(cfg)?;
    let scholars = scholars(cfg)?;
    let graph = CollabGraph::build(&records, &scholars);
    Ok((records, scholars, graph))
}

fn model(cfg: &PipelineConfig) -> Result<JointModel> {
    let path = stage_input(cfg, MODEL, "train")?;
    Ok(JointModel::load(&path)?)
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

pub fn ingest(cfg: &PipelineConfig) -> Result<Value> {
    let input = &cfg.paths.publications;
    require(input, "synth").with_context(|| "publication file not found")?;
    let records = load_publications(input, RecordFormat::from_path(input))?;
    let out = cfg.out(RECORDS);
    save_publications(&out, &records, RecordFormat::Jsonl)?;
    let mentions: usize = records.iter().map(|r| r.authors.len()).sum();
    Ok(json!({"records": records.len(), "mentions": mentions, "output": show(&out)}))
}

pub fn disambiguate(cfg: &PipelineConfig) -> Result<Value> {
    let records = records(cfg)?;
    let report = disambiguate_with_report(&records, &cfg.disambiguation)?;
    let out = cfg.out(SCHOLARS);
    save_scholars(&out, &report.scholars)?;
    Ok(json!({
        "scholars": report.scholars.len(),
        "passes": report.merges_per_pass.len(),
        "merges": report.merges_per_pass.iter().sum::<usize>(),
        "output": show(&out),
    }))
}

pub fn featurize(cfg: &PipelineConfig) -> Result<Value> {
    let seed = cfg.seed()?;
    let model_cfg = cfg.model_config()?;
    let (_, scholars, graph) = graph(cfg)?;
    require(&cfg.paths.ground_truth, "synth").context("ground-truth file not found")?;
    let truth = load_ground_truth(&cfg.paths.ground_truth)?;
    let (matched, unmatched) = match_ground_truth(&graph, &scholars, &truth);
    let pairs = build_labeled_pairs(&graph, &matched, &model_cfg.features, model_cfg.pool_dim, seed)?;
    let out = cfg.out(PAIRS);
    save_pairs(&out, &pairs)?;
    // The dump shows every pair normalized with one corpus-wide scaler.
    let scaler = FeatureScaler::fit(&pairs, model_cfg.feature_window)?;
    let mut dump = Vec::new();
    write_feature_dump(&mut dump, &pairs, &scaler)?;
    let dump_path = cfg.out(FEATURES);
    write_atomic(&dump_path, |w| w.write_all(&dump))?;
    Ok(json!({
        "matched": matched.len(),
        "unmatched": unmatched,
        "pairs": pairs.len(),
        "output": show(&out),
        "features": show(&dump_path),
    }))
}

pub fn train(cfg: &PipelineConfig) -> Result<Value> {
    let model_cfg = cfg.model_config()?;
    let pairs = load_pairs(&stage_input(cfg, PAIRS, "featurize")?)?;
    let (train, test) = split(&pairs, &cfg.split_spec()?)?;
    let (model, history) = fit(model_cfg, &train)?;
    let out = cfg.out(MODEL);
    model.save(&out)?;
    let history_path = cfg.out(HISTORY);
    history.save_csv(&history_path)?;
    let last = history.epochs.last().expect("history starts with the initial epoch");
    Ok(json!({
        "train_pairs": train.len(),
        "test_pairs": test.len(),
        "epochs": last.epoch,
        "converged": history.converged,
        "final_loss": last.loss.l_sum,
        "train_accuracy": last.train_acc,
        "output": show(&out),
        "history": show(&history_path),
    }))
}

pub fn eval(cfg: &PipelineConfig, min_accuracy: Option<f64>) -> Result<Value> {
    let model = model(cfg)?;
    let pairs = load_pairs(&stage_input(cfg, PAIRS, "featurize")?)?;
    let (_, test) = split(&pairs, &cfg.split_spec()?)?;
    let m = evaluate(&model, &test)?;
    let out = cfg.out(METRICS);
    m.save_csv(&out)?;
    if let Some(required) = min_accuracy {
        if m.accuracy < required {
            return Err(AcceptanceFailure {
                accuracy: m.accuracy,
                required,
            }
            .into());
        }
    }
    Ok(json!({"test_pairs": test.len(), "metrics": m, "output": show(&out)}))
}

pub fn run_sweep(cfg: &PipelineConfig, param: &str, values: &[f64]) -> Result<Value> {
    let param = SweepParam::parse(param).ok_or_else(|| ConfigError(format!("unknown sweep parameter {param:?}")))?;
    let base = cfg.model_config()?;
    let pairs = load_pairs(&stage_input(cfg, PAIRS, "featurize")?)?;
    let (train, test) = split(&pairs, &cfg.split_spec()?)?;
    let rows = sweep(param, values, &base, &train, &test)?;
    let csv_path = cfg.out(SWEEP_CSV);
    write_atomic(&csv_path, |w| write_sweep_csv(w, param, &rows))?;
    let dat_path = cfg.out(SWEEP_DAT);
    write_atomic(&dat_path, |w| write_sweep_dat(w, param, &rows))?;
    let accuracy: Vec<f64> = rows.iter().map(|r| r.metrics.accuracy).collect();
    Ok(json!({
        "parameter": param.name(),
        "values": values,
        "accuracy": accuracy,
        "output": show(&csv_path),
        "plot_data": show(&dat_path),
    }))
}

pub fn genealogy(cfg: &PipelineConfig) -> Result<Value> {
    cfg.eligibility.validate()?;
    let opts = &cfg.genealogy;
    if !(0.0..=1.0).contains(&opts.threshold) || opts.top_k == 0 {
        return Err(ConfigError("genealogy threshold must be in [0, 1] and top_k positive".into()).into());
    }
    let model = model(cfg)?;
    let (_, _, graph) = graph(cfg)?;
    let eligible = filter_scholars(&graph, &cfg.eligibility);
    let records = generate_genealogy(&model, &graph, &eligible, opts.threshold, opts.top_k)?;
    let out = cfg.out(&format!("genealogy.{}", opts.format.extension()));
    export(&out, &records, opts.format)?;
    Ok(json!({"eligible": eligible.len(), "relations": records.len(), "output": show(&out)}))
}

pub fn synth(cfg: &PipelineConfig) -> Result<Value> {
    let spec = lineage_core::eval::SyntheticSpec {
        seed: cfg.seed()?,
        ..cfg.synth.clone()
    };
    let (records, truth) = generate_synthetic(&spec);
    let pubs = &cfg.paths.publications;
    save_publications(pubs, &records, RecordFormat::from_path(pubs))?;
    save_ground_truth(&cfg.paths.ground_truth, &truth)?;
    Ok(json!({
        "records": records.len(),
        "advisors": truth.len(),
        "publications": show(pubs),
        "ground_truth": show(&cfg.paths.ground_truth),
    }))
}
