//! Expected one-step KL change per rule as the bound `d` on `q` grows.
//! Writes `population_sweep.csv` and `.svg` under `out/example_sweep`.
//!
//! `cargo run --release --example population_sweep`

use infosft::experiments::{run_population_sweep, ExperimentConfig};

fn main() -> infosft::Result<()> {
    let mut config = ExperimentConfig {
        out: "out/example_sweep".into(),
        ..ExperimentConfig::default()
    };
    config.population_sweep.populations_per_cell = 4;
    let rows = run_population_sweep(&config)?;
    println!(
        "{:>7} {:<8} {:>12} {:>10}",
        "d", "rule", "E[dKL]", "/ oracle"
    );
    for r in rows {
        let mean = r
            .mean_delta_kl
            .map_or(r.status.clone(), |m| format!("{m:.4}"));
        let ratio = r
            .ratio_to_oracle
            .map_or(String::new(), |x| format!("{x:.3}"));
        println!("{:>7} {:<8} {mean:>12} {ratio:>10}", r.d, r.rule);
    }
    println!("wrote {}", config.out.display());
    Ok(())
}
