use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use infosft::experiments::{
    matched_comparisons, run_estimate_pbar, run_population_sweep, run_tradeoff, run_train,
    run_verify, run_weight_curves, ExperimentConfig, Overrides,
};

#[derive(Parser)]
#[command(
    name = "infosft",
    version,
    about = "Token-weighting experiments on exactly computable models"
)]
struct Cli {
    /// TOML config; defaults are used for anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the one-step proximal identities and bounds; exits 1 on any failure.
    Verify,
    /// Emit token-weight curves for each configured rule.
    WeightCurves,
    /// Expected one-step KL change per rule over a grid of q bounds.
    PopulationSweep,
    /// Train one tabular policy and write its trace.
    Train,
    /// Fine-tune a task-A base on task B across rules and step sizes.
    Tradeoff,
    /// Estimate the mean self-assigned token probability of a policy.
    EstimatePbar,
}

fn run(cli: Cli) -> infosft::Result<ExitCode> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
    };
    let config = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;
    let out = config.out.display();
    match cli.command {
        Command::Verify => {
            let report = run_verify(&config)?;
            print!("{}", report.to_text());
            if let Some(failed) = report.first_failure() {
                eprintln!("verify failed: {}", failed.name);
                return Ok(ExitCode::from(1));
            }
        }
        Command::WeightCurves => {
            let set = run_weight_curves(&config)?;
            for f in &set.files {
                println!("wrote {}", f.display());
            }
        }
        Command::PopulationSweep => {
            let rows = run_population_sweep(&config)?;
            println!(
                "{:>8} {:<16} {:>14} {:>10} {:>9}",
                "d", "rule", "E[dKL]", "ratio", "regime"
            );
            for r in &rows {
                println!(
                    "{:>8} {:<16} {:>14} {:>10} {:>9}",
                    r.d,
                    r.rule,
                    r.mean_delta_kl
                        .map_or(r.status.clone(), |m| format!("{m:.6}")),
                    r.ratio_to_oracle
                        .map_or(String::new(), |x| format!("{x:.4}")),
                    r.in_regime.map_or(String::new(), |b| b.to_string()),
                );
            }
            println!("wrote {out}/population_sweep.csv");
        }
        Command::Train => match run_train(&config) {
            Ok(outcome) => {
                println!(
                    "steps={} mean_q={:.6} entropy={:.6} kl_to_init={:.6}",
                    outcome.trace.len(),
                    outcome.metrics.mean_q,
                    outcome.metrics.entropy,
                    outcome.metrics.kl_to_base
                );
                println!("wrote {out}/trace.csv and {out}/policy.txt");
            }
            Err(infosft::Error::Diverged { step, trace }) => {
                eprintln!(
                    "training diverged at step {step}; {} trace rows in {out}/trace.csv",
                    trace.len()
                );
                return Ok(ExitCode::from(1));
            }
            Err(e) => return Err(e),
        },
        Command::Tradeoff => {
            let records = run_tradeoff(&config)?;
            let ok = records.iter().filter(|r| r.status == "ok").count();
            println!("{} cells, {ok} ok", records.len());
            let rules = &config.tradeoff.rules;
            if let Some(info) = rules.iter().find(|r| r.starts_with("infosft")) {
                for other in rules.iter().filter(|r| *r != info) {
                    let s =
                        matched_comparisons(&records, info, other, config.tradeoff.match_tolerance);
                    if let Some(f) = s.fraction() {
                        println!(
                            "{info} <= {other} in new-task KL at matched retention: {}/{} ({:.1}%)",
                            s.wins,
                            s.comparisons,
                            100.0 * f
                        );
                    }
                }
            }
            println!("wrote {out}/tradeoff.csv and {out}/tradeoff.svg");
        }
        Command::EstimatePbar => {
            let est = run_estimate_pbar(&config)?;
            println!(
                "p_bar = {:.6} +- {:.6} ({} of {} responses kept)",
                est.p_bar, est.std_error, est.kept_responses, est.total_responses
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
