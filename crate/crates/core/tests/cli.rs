use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[verify]
closed_form_samples = 100
oracle_pairs = 10
populations = 12
population_size = 60

[weight_curves]
grid_points = 200

[population_sweep]
d_grid = [0.01, 0.5]
populations_per_cell = 2

[population_sweep.population]
count = 50
min_q = 0.0015

[train]
epochs = 30

[train.task]
sequences = 30

[tradeoff]
learning_rates = [0.5, 2.0, 8.0]
epochs = [1]
draws = 2

[tradeoff.task]
prior_sequences = 40
new_sequences = 20
pretrain_steps = 50

[estimate_pbar]
num_samples = 20
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let config = dir.join("small.toml");
    if !config.exists() {
        std::fs::write(&config, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_infosft"))
        .arg("--config")
        .arg(&config)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn every_subcommand_runs_and_writes_schema_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 6] = [
        ("verify", &["verify.csv"]),
        (
            "weight-curves",
            &[
                "weight_curve_sft.csv",
                "weight_curve_dft.csv",
                "weight_curve_infosft_0.93.csv",
            ],
        ),
        ("population-sweep", &["population_sweep.csv"]),
        ("train", &["trace.csv"]),
        ("tradeoff", &["tradeoff.csv", "tradeoff_matched.csv"]),
        ("estimate-pbar", &["pbar.csv", "pbar_summary.csv"]),
    ];
    for (cmd, files) in cases {
        let out = dir.path().join(cmd);
        let o = run(
            dir.path(),
            &[
                cmd,
                "--seed",
                "3",
                "--jobs",
                "2",
                "--out",
                out.to_str().unwrap(),
            ],
        );
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(out.join("config.resolved.toml").exists(), "{cmd}");
        for f in files {
            let text = std::fs::read_to_string(out.join(f)).unwrap();
            assert!(text.starts_with("# schema: infosft/"), "{cmd}/{f}");
        }
    }
    let trace = std::fs::read_to_string(dir.path().join("train/trace.csv")).unwrap();
    assert_eq!(
        trace.lines().nth(1),
        Some("step,loss,mean_q,entropy,kl_to_base")
    );
    assert_eq!(trace.lines().count(), 2 + 30);
}

#[test]
fn same_seed_is_byte_identical_and_jobs_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        for cmd in ["verify", "tradeoff", "population-sweep"] {
            let o = run(
                dir.path(),
                &[
                    cmd,
                    "--seed",
                    "11",
                    "--jobs",
                    jobs,
                    "--out",
                    out.to_str().unwrap(),
                ],
            );
            assert!(o.status.success(), "{cmd}");
        }
    }
    for f in [
        "verify.csv",
        "tradeoff.csv",
        "tradeoff_matched.csv",
        "population_sweep.csv",
        "tradeoff.svg",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_changes_the_tradeoff_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(
        dir.path(),
        &["tradeoff", "--seed", "1", "--out", a.to_str().unwrap()],
    );
    run(
        dir.path(),
        &["tradeoff", "--seed", "2", "--out", b.to_str().unwrap()],
    );
    assert_ne!(
        std::fs::read(a.join("tradeoff.csv")).unwrap(),
        std::fs::read(b.join("tradeoff.csv")).unwrap()
    );
}

#[test]
fn verify_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(dir.path(), &["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.lines()
            .any(|l| l.starts_with("PASS") && l.contains("closed_form_vs_enumeration")),
        "{text}"
    );
    assert!(!text.contains("FAIL"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[train]\nlearning_rte = 1.0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_infosft"))
        .args(["train", "--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rte"));
}

#[test]
fn diverging_train_exits_one_and_keeps_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("huge.toml");
    std::fs::write(
        &config,
        "[train]\nrule = \"sft\"\nlearning_rate = 1e308\nepochs = 5\n",
    )
    .unwrap();
    let out = dir.path().join("t");
    let o = Command::new(env!("CARGO_BIN_EXE_infosft"))
        .args([
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(out.join("trace.csv").exists());
}

#[test]
fn estimate_pbar_on_uniform_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = run(
        dir.path(),
        &["estimate-pbar", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success());
    assert!(
        stdout(&o).starts_with("p_bar = 0.100000 +- 0.000000"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn train_output_feeds_estimate_pbar() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    assert!(run(dir.path(), &["train", "--out", t.to_str().unwrap()])
        .status
        .success());
    let config = dir.path().join("pbar.toml");
    std::fs::write(
        &config,
        format!(
            "[estimate_pbar]\npolicy = {:?}\ndataset = {:?}\nnum_samples = 10\n",
            t.join("policy.txt"),
            t.join("dataset.txt")
        ),
    )
    .unwrap();
    let out = dir.path().join("p");
    let o = Command::new(env!("CARGO_BIN_EXE_infosft"))
        .args([
            "estimate-pbar",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: f64 = stdout(&o)
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(p > 1.0 / 12.0 && p < 1.0, "{p}");
}
