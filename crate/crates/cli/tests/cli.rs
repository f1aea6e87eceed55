//! Command-line surface: config validation, dependency ordering, locking,
//! and artifact layout.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn prth(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prth"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, out_dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    let base = format!(
        r#"
out_dir = "{}"

[data]
source = "synthetic"

[data.synthetic]
seed = 5
n_links = 12
n_stations = 3
n_days = 80
target_failure_rate = 0.05
k_neighbors = 1

[model]
variant = "ltrans"
n_days_window = 4

[train]
seed = 6
epochs = 30
batch_size = 128
learning_rate = 0.003
early_stop_patience = 0

[explain]
p_samples = 12
seed = 7
normalize = true
background_size = 6

[prune]
coverage = 0.95
alpha = 0

[eval]
random_seeds = [1, 2]
thresholds = [0.5]
{extra}
"#,
        out_dir.display()
    );
    std::fs::write(&path, base).unwrap();
    path
}

#[test]
fn validate_config_accepts_valid_and_lists_violations() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &dir.path().join("out"), "");
    let ok = prth(&["validate-config", "--config", config.to_str().unwrap()], &[]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let raw = std::fs::read_to_string(&config)
        .unwrap()
        .replace("coverage = 0.95", "coverage = 1.2")
        .replace("\nseed = 6\n", "\n");
    std::fs::write(&config, raw).unwrap();
    let bad = prth(&["validate-config", "--config", config.to_str().unwrap()], &[]);
    assert!(!bad.status.success());
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("prune.coverage"), "{stdout}");
    assert!(stdout.contains("train.seed"), "{stdout}");
}

#[test]
fn explain_without_checkpoint_names_the_dependency() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out, "");
    let r = prth(&["explain", "--config", config.to_str().unwrap(), "--fold", "F4"], &[]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("dependency missing"), "{stderr}");
    assert!(stderr.contains("model.ckpt"), "{stderr}");
    assert!(stderr.contains("prth train"), "{stderr}");
}

#[test]
fn unknown_fold_is_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &dir.path().join("out"), "");
    let r = prth(&["train", "--config", config.to_str().unwrap(), "--fold", "F9"], &[]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown fold"));
}

#[test]
fn stage_chain_produces_expected_artifacts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out, "");
    let c = config.to_str().unwrap();

    for args in [
        vec!["gen-data", "--config", c],
        vec!["train", "--config", c, "--fold", "F4"],
        vec!["explain", "--config", c, "--fold", "F4"],
        vec!["aggregate", "--config", c, "--fold", "F4"],
        vec!["prune", "--config", c, "--fold", "F4"],
        vec!["refine", "--config", c, "--fold", "F4"],
        vec!["evaluate", "--config", c, "--fold", "F4"],
        vec!["fidelity", "--config", c, "--fold", "F4"],
        vec!["report", "--config", c],
    ] {
        let r = prth(&args.iter().map(|s| *s).collect::<Vec<_>>(), &[]);
        assert!(
            r.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&r.stderr)
        );
    }

    for artifact in [
        "gen-data/rl_kpi.csv",
        "gen-data/ground_truth.json",
        "train/F4/model.ckpt",
        "explain/F4/saliency.csv",
        "explain/F4/meta.json",
        "aggregate/F4/channel_importance.json",
        "prune/F4/importance.json",
        "prune/F4/pruned_set.json",
        "refine/F4/refined_spec.json",
        "refine/F4/pruning_report.json",
        "evaluate/F4/metrics.json",
        "fidelity/F4/fidelity_curves.csv",
        "report/summary.json",
        "report/boxplot.csv",
    ] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }

    // Each stage dir carries a manifest without timestamps.
    let manifest = std::fs::read_to_string(out.join("train/F4/manifest.json")).unwrap();
    assert!(manifest.contains("\"stage\": \"train\""));
    assert!(!manifest.to_lowercase().contains("time"));
}

#[test]
fn prth_out_env_overrides_config_and_flag_overrides_env() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &dir.path().join("config-out"), "");
    let env_out = dir.path().join("env-out");
    let r = prth(
        &["gen-data", "--config", config.to_str().unwrap()],
        &[("PRTH_OUT", env_out.to_str().unwrap())],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(env_out.join("gen-data/rl_kpi.csv").exists());
    assert!(!dir.path().join("config-out").exists());

    let flag_out = dir.path().join("flag-out");
    let r = prth(
        &[
            "gen-data",
            "--config",
            config.to_str().unwrap(),
            "--out",
            flag_out.to_str().unwrap(),
        ],
        &[("PRTH_OUT", env_out.to_str().unwrap())],
    );
    assert!(r.status.success());
    assert!(flag_out.join("gen-data/rl_kpi.csv").exists());
}

#[test]
fn lock_file_rejects_concurrent_invocations() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), &out, "");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".prth.lock"), "12345\n").unwrap();
    let r = prth(&["gen-data", "--config", config.to_str().unwrap()], &[]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("locked"), "{stderr}");
    assert!(stderr.contains("12345"), "{stderr}");
}

#[test]
fn error_output_is_single_line() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &dir.path().join("out"), "");
    let r = prth(&["aggregate", "--config", config.to_str().unwrap(), "--fold", "F4"], &[]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    let lines: Vec<&str> = stderr.trim().lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    assert!(lines[0].starts_with("error: "));
}
