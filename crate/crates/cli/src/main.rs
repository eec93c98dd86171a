//! `lineage`: advisor mining pipeline from publication records to a
//! genealogy graph.
//!
//! Every command prints one JSON summary line on stdout. Exit codes: 0 ok,
//! 2 configuration error, 3 data error, 4 acceptance failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lineage_core::genealogy::ExportFormat;
use lineage_core::model::Variant;
use serde_json::{json, Value};

use crate::commands::AcceptanceFailure;
use crate::config::{ConfigError, PipelineConfig};

#[derive(Parser)]
#[command(name = "lineage", version, about = "Mine advisor-advisee relations from publication records")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Pipeline config (TOML). Flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Directory for stage artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Publication records (.jsonl or .csv).
    #[arg(long, global = true)]
    publications: Option<PathBuf>,
    /// Advisor ground truth CSV.
    #[arg(long, global = true)]
    ground_truth: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate publication records and store them for later stages.
    Ingest,
    /// Merge author mentions into scholars.
    Disambiguate {
        #[arg(long)]
        max_passes: Option<usize>,
        /// Accept a citation in one direction as evidence.
        #[arg(long)]
        one_way_citations: bool,
    },
    /// Match ground truth and compute labeled pair features.
    Featurize {
        #[arg(long)]
        pool_dim: Option<usize>,
        #[arg(long)]
        no_temporal_rescale: bool,
        #[arg(long)]
        disciplinary_correction: bool,
    },
    /// Train on the training split and write a checkpoint.
    Train(TrainArgs),
    /// Score the test split.
    Eval {
        /// Exit with code 4 when test accuracy is below this value.
        #[arg(long)]
        min_accuracy: Option<f64>,
    },
    /// Retrain once per value of one hyperparameter.
    Sweep {
        /// learning_rate, node_depth, edge_depth, train_fraction, embed_dim or feature_window.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Identify advisors of eligible scholars and export the genealogy.
    Genealogy {
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        /// csv, dot or graphml.
        #[arg(long, value_parser = parse_format)]
        format: Option<ExportFormat>,
        #[arg(long)]
        min_papers: Option<usize>,
        #[arg(long)]
        max_gap_years: Option<i32>,
        #[arg(long)]
        min_span_years: Option<i32>,
    },
    /// Generate a corpus with planted advisors.
    Synth {
        #[arg(long)]
        n_advisees: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// full or edge_only.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    ExportFormat::parse(s).ok_or_else(|| format!("unknown format {s:?}; expected csv, dot or graphml"))
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "full" => Ok(Variant::Full),
        "edge_only" | "edge-only" => Ok(Variant::EdgeOnly),
        _ => Err(format!("unknown variant {s:?}; expected full or edge_only")),
    }
}

impl TrainArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(e) = self.epochs {
            cfg.model.max_epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.model.learning_rate = lr;
        }
        if let Some(v) = self.variant {
            cfg.model.variant = v;
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(d) = &g.out_dir {
        cfg.paths.out_dir = d.clone();
    }
    if let Some(p) = &g.publications {
        cfg.paths.publications = p.clone();
    }
    if let Some(p) = &g.ground_truth {
        cfg.paths.ground_truth = p.clone();
    }
    if g.seed.is_some() {
        cfg.seed = g.seed;
    }
    Ok(cfg)
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Ingest => "ingest",
        Command::Disambiguate { .. } => "disambiguate",
        Command::Featurize { .. } => "featurize",
        Command::Train(_) => "train",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
        Command::Genealogy { .. } => "genealogy",
        Command::Synth { .. } => "synth",
    }
}

fn run(cmd: &Command, mut cfg: PipelineConfig) -> anyhow::Result<Value> {
    match cmd {
        Command::Ingest => commands::ingest(&cfg),
        Command::Disambiguate {
            max_passes,
            one_way_citations,
        } => {
            if let Some(n) = max_passes {
                cfg.disambiguation.max_passes = *n;
            }
            if *one_way_citations {
                cfg.disambiguation.mutual_citation = false;
            }
            commands::disambiguate(&cfg)
        }
        Command::Featurize {
            pool_dim,
            no_temporal_rescale,
            disciplinary_correction,
        } => {
            if let Some(d) = pool_dim {
                cfg.model.pool_dim = *d;
            }
            if *no_temporal_rescale {
                cfg.corrections.temporal_rescale = false;
            }
            if *disciplinary_correction {
                cfg.corrections.disciplinary_correction = true;
            }
            commands::featurize(&cfg)
        }
        Command::Train(args) => {
            args.apply(&mut cfg);
            commands::train(&cfg)
        }
        Command::Eval { min_accuracy } => commands::eval(&cfg, *min_accuracy),
        Command::Sweep { param, values, train } => {
            train.apply(&mut cfg);
            commands::run_sweep(&cfg, param, values)
        }
        Command::Genealogy {
            threshold,
            top_k,
            format,
            min_papers,
            max_gap_years,
            min_span_years,
        } => {
            let g = &mut cfg.genealogy;
            g.threshold = threshold.unwrap_or(g.threshold);
            g.top_k = top_k.unwrap_or(g.top_k);
            g.format = format.unwrap_or(g.format);
            let e = &mut cfg.eligibility;
            e.min_papers = min_papers.unwrap_or(e.min_papers);
            e.max_gap_years = max_gap_years.unwrap_or(e.max_gap_years);
            e.min_span_years = min_span_years.unwrap_or(e.min_span_years);
            commands::genealogy(&cfg)
        }
        Command::Synth { n_advisees, noise } => {
            if let Some(n) = n_advisees {
                cfg.synth.n_advisees = *n;
            }
            if let Some(x) = noise {
                cfg.synth.noise = *x;
            }
            commands::synth(&cfg)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    if err.downcast_ref::<AcceptanceFailure>().is_some() {
        return 4;
    }
    match err.downcast_ref::<lineage_core::Error>() {
        Some(lineage_core::Error::Config(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = name(&cli.command);
    let result = load_config(&cli.global)
        .map_err(anyhow::Error::from)
        .and_then(|cfg| {
            let seed = cfg.seed;
            run(&cli.command, cfg).map(|v| (v, seed))
        });
    match result {
        Ok((summary, seed)) => {
            println!("{}", json!({"command": command, "status": "ok", "seed": seed, "summary": summary}));
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = exit_code(&err);
            eprintln!("error: {err:#}");
            println!(
                "{}",
                json!({"command": command, "status": "error", "exit_code": code, "error": format!("{err:#}")})
            );
            ExitCode::from(code)
        }
    }
}
