//! End-to-end checks of the `seqmc` binary: verbs, flags and output files.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqmc"))
}

fn out_dir(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("config.txt");
    std::fs::write(
        &path,
        format!(
            "model.type = gaussian\nmodel.d = 4\nalgorithm.name = sir\nalgorithm.n = 100\n\
             run.t = 3\nrun.n_runs = 2\nrun.seed = 9\noutput.dir = {}\n",
            dir.join("out").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn list_algos_names_all_ten() {
    let output = bin().arg("list-algos").output().unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    for name in [
        "sir",
        "block_sir",
        "sir_rm",
        "smcmc_prior",
        "smcmc_optimal",
        "smala",
        "smmala",
        "simplified_smmala",
        "shmc",
        "smhmc",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "missing {name}");
    }
}

#[test]
fn generate_is_reproducible_byte_for_byte() {
    let dir = out_dir("bin_generate");
    let config = write_config(&dir);
    let run = |out: &str| {
        let status = bin()
            .args(["generate", "--config"])
            .arg(&config)
            .args(["--out", &dir.join(out).display().to_string()])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.join(out).join("dataset.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn run_verb_emits_results() {
    let dir = out_dir("bin_run");
    let config = write_config(&dir);
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--runs", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("out/steps.csv").exists());
    assert!(dir.join("out/summary.csv").exists());
    // --runs override: one summary row.
    let summary = std::fs::read_to_string(dir.join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn table_dry_run_lists_planned_cells() {
    let dir = out_dir("bin_table");
    let output = bin()
        .args(["table", "ess_gaussian", "--scale", "0", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.starts_with("table,method,d,n,runs,"));
    assert_eq!(text.lines().count(), 5); // header + 4 planned methods
    assert!(dir.join("ess_gaussian.csv").exists());
}

#[test]
fn table_runs_at_tiny_scale() {
    let dir = out_dir("bin_table_small");
    let output = bin()
        .args([
            "table",
            "mse_gaussian",
            "--scale",
            "0.02",
            "--d",
            "16",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = String::from_utf8(output.stdout).unwrap();
    // Header plus smhmc and three Resample-Move rows, all with results.
    assert_eq!(text.lines().count(), 5);
    for needle in ["smhmc,16", "sir_rm1,16", "sir_rm2,16", "sir_rm3,16"] {
        assert!(text.contains(needle), "missing row {needle} in:\n{text}");
    }
}
