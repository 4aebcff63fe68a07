//! Learning vs forgetting: fine-tunes a task-A base on task B with each rule
//! across step sizes and compares new-task fit at matched retention.
//! Writes CSV and SVG under `out/example_tradeoff`.
//!
//! `cargo run --release --example tradeoff`

use infosft::experiments::{matched_comparisons, pareto_frontier, run_tradeoff, ExperimentConfig};

fn main() -> infosft::Result<()> {
    let mut config = ExperimentConfig {
        out: "out/example_tradeoff".into(),
        ..ExperimentConfig::default()
    };
    config.tradeoff.draws = 5;
    let records = run_tradeoff(&config)?;
    for rule in &config.tradeoff.rules {
        let points: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| &r.rule == rule && r.draw == 0)
            .filter_map(|r| Some((r.retention_kl?, r.new_task_fit?)))
            .collect();
        let frontier = pareto_frontier(&points);
        println!(
            "{rule}: {} cells in draw 0, {} on the frontier",
            points.len(),
            frontier.len()
        );
    }
    for other in ["sft", "dft"] {
        let s = matched_comparisons(&records, "infosft", other, config.tradeoff.match_tolerance);
        println!(
            "infosft <= {other} at matched retention: {}/{}",
            s.wins, s.comparisons
        );
    }
    println!("wrote {}", config.out.display());
    Ok(())
}
