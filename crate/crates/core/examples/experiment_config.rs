//! The repeated-trial runner: build a config in code (or load one of the JSON
//! files under configs/), run it, and print the per-method summary.
//!
//! cargo run --release --example experiment_config [trials]

use wacp::data::SyntheticAssignment;
use wacp::experiment::{run_experiment, DatasetSpec, ExperimentConfig, Method};
use wacp::score::ScoreKind;

fn main() -> wacp::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let out = std::env::temp_dir().join("wacp-example");

    let mut config = ExperimentConfig::new(DatasetSpec::Synthetic {
        assignment: SyntheticAssignment::NoOverlap,
        noise_sd: 0.1,
    });
    config.methods = Method::ALL.to_vec();
    config.score_kinds = vec![ScoreKind::AbsResidual];
    config.trials = trials;
    config.split.merge_size = Some(160);
    config.split.test_cap = Some(500);
    config.output_dir = out.clone();

    let report = run_experiment(&config)?;
    println!("{:<12} {:>8} {:>8} {:>9} {:>10}", "method", "cov", "ws", "size", "unbounded");
    for s in &report.summary {
        let fmt = |m: Option<f64>| m.map_or("inf".to_string(), |v| format!("{v:.3}"));
        println!(
            "{:<12} {:>8} {:>8} {:>9} {:>10}",
            s.method.as_str(),
            fmt(s.marginal_cov.mean),
            fmt(s.ws_cov.mean),
            fmt(s.mean_size.mean),
            s.unbounded_trials
        );
    }
    println!("results in {}", out.display());
    Ok(())
}
