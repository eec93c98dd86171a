//! Trains the full and edge-only models on a generated corpus and prints
//! test metrics.
//!
//! `cargo run --release -p lineage-core --example synthetic_benchmark [noise] [pool_dim] [confounders] [seed]`

use std::time::Instant;

use lineage_core::eval::{build_benchmark, evaluate, split, subsample, SplitSpec, SyntheticSpec};
use lineage_core::features::FeatureConfig;
use lineage_core::model::{fit, ModelConfig, Variant};

fn main() -> lineage_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let base = SyntheticSpec::default();
    let arg = |k: usize| args.get(k).and_then(|s| s.parse::<f64>().ok());
    let pool_dim = arg(2).map(|v| v as usize).unwrap_or(200);
    let spec = SyntheticSpec {
        noise: arg(1).unwrap_or(base.noise),
        confounder_fraction: arg(3).unwrap_or(base.confounder_fraction),
        seed: arg(4).map(|v| v as u64).unwrap_or(base.seed),
        ..base
    };
    let t = Instant::now();
    let bench = build_benchmark(&spec, &FeatureConfig::default(), pool_dim)?;
    println!(
        "records {} scholars {} matched {} pairs {} ({:.1}s)",
        bench.records.len(),
        bench.scholars.len(),
        bench.matched.len(),
        bench.pairs.len(),
        t.elapsed().as_secs_f64()
    );
    let (train, test) = split(&bench.pairs, &SplitSpec::default())?;
    println!("train {} test {}", train.len(), test.len());
    let fractions: Vec<f64> = std::env::var("FRACS")
        .map(|v| v.split(',').filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_default();
    for frac in fractions {
        let cfg = ModelConfig {
            pool_dim,
            node_layers: vec![128, 64, 32],
            max_epochs: std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(1000),
            seed: 11,
            ..Default::default()
        };
        let rows = subsample(&train, frac, 11);
        let (model, _) = fit(cfg, &rows)?;
        let m = evaluate(&model, &test)?;
        println!("fraction {frac}: n {} acc {:.4} f1 {:.4}", rows.len(), m.accuracy, m.f1);
    }
    for variant in [Variant::Full, Variant::EdgeOnly] {
        let t = Instant::now();
        let cfg = ModelConfig {
            pool_dim,
            node_layers: vec![128, 64, 32],
            max_epochs: std::env::var("EPOCHS").ok().and_then(|s| s.parse().ok()).unwrap_or(1000),
            variant,
            seed: 11,
            ..Default::default()
        };
        let (model, history) = fit(cfg, &train)?;
        let m = evaluate(&model, &test)?;
        let first = history.epochs[0].loss.l_sum;
        let last = history.epochs.last().unwrap();
        println!(
            "{variant:?}: acc {:.4} f1 {:.4} epochs {} L_sum {:.4} -> {:.4} train_acc {:.4} ({:.1}s)",
            m.accuracy,
            m.f1,
            history.epochs.len() - 1,
            first,
            last.loss.l_sum,
            last.train_acc,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
