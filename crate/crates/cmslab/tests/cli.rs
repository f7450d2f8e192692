//! End-to-end checks of the `cmslab` binary: exit codes, CSV shape, atomic
//! output, and plot-script hygiene.

use std::path::Path;
use std::process::Command;

fn cmslab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cmslab"))
}

fn run_ok(args: &[&str], dir: &Path) -> std::process::Output {
    let output = cmslab()
        .args(args)
        .current_dir(dir)
        .env_remove("CMSLAB_SEED")
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn selftest_exits_zero_and_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_ok(&["selftest"], dir.path());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.lines().filter(|l| l.starts_with("ok")).count() >= 10);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn unknown_flags_exit_nonzero() {
    let out = cmslab().args(["subcritical", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
    let out = cmslab().args(["frobnicate"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn invalid_kspec_exits_nonzero_with_message() {
    let out = cmslab()
        .args(["subcritical", "--k", "(3,14;2)"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "stderr was: {stderr}");
}

#[test]
fn csv_has_exact_header_and_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "subcritical",
            "--k",
            "3",
            "--lambdas",
            "0.4,0.6",
            "--n",
            "100",
            "--multiplier",
            "50",
            "--reps",
            "2",
            "--seed",
            "5",
            "--out",
            "out.csv",
        ],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,n,kspec,dist,lambda,lambda_h,lambda_c,G,beta,multiplier,rep,seed,metric,value"
    );
    for line in lines {
        assert_eq!(line.split(',').count(), 14, "bad row: {line}");
    }
    assert!(!text.contains('\r'));
}

#[test]
fn seed_env_var_applies_only_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "subcritical",
        "--k",
        "3",
        "--lambdas",
        "0.5",
        "--n",
        "100",
        "--multiplier",
        "50",
        "--reps",
        "2",
    ];
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();

    let mut with_env = base.to_vec();
    with_env.extend(["--out", "env.csv"]);
    let out = cmslab()
        .args(&with_env)
        .current_dir(dir.path())
        .env("CMSLAB_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());

    let mut with_flag = base.to_vec();
    with_flag.extend(["--seed", "99", "--out", "flag.csv"]);
    run_ok(&with_flag, dir.path());

    // Same seed by either route: identical bytes.
    assert_eq!(read("env.csv"), read("flag.csv"));

    // The flag wins over the environment.
    let mut both = base.to_vec();
    both.extend(["--seed", "5", "--out", "both.csv"]);
    let out = cmslab()
        .args(&both)
        .current_dir(dir.path())
        .env("CMSLAB_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(read("both.csv"), read("flag.csv"));

    // A bad environment value is an error only when the flag is absent.
    let mut plain = base.to_vec();
    plain.extend(["--out", "bad.csv"]);
    let out = cmslab()
        .args(&plain)
        .current_dir(dir.path())
        .env("CMSLAB_SEED", "not-a-number")
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn zipf_run_writes_rank_rows_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "zipf",
            "--k",
            "2",
            "--lambda",
            "0.5",
            "--beta",
            "0.7",
            "--n",
            "100",
            "--multiplier",
            "100",
            "--reps",
            "2",
            "--top-ranks",
            "5",
            "--out",
            "zipf.csv",
            "--plot-script",
            "plot_zipf.py",
        ],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("zipf.csv")).unwrap();
    assert!(text.contains("occ_rank_1"));
    assert!(text.contains("est_rank_5"));
    assert!(!text.contains("occ_rank_6"));
    let script = std::fs::read_to_string(dir.path().join("plot_zipf.py")).unwrap();
    assert!(script.contains("zipf.csv"));
    let dir_str = dir.path().to_str().unwrap();
    assert!(
        !script.contains(dir_str),
        "plot script embeds an absolute path"
    );
}

#[test]
fn peel_check_prints_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let output = run_ok(
        &[
            "peel-check",
            "--n",
            "60",
            "--k",
            "3",
            "--lambda",
            "0.5",
            "--reps",
            "20",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        stdout.starts_with("peelable fraction: "),
        "stdout: {stdout}"
    );
}

#[test]
fn step_and_convergence_and_supercritical_smoke() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "step",
            "--k-hot",
            "2",
            "--k-cold",
            "5",
            "--lambdas",
            "0.2",
            "--lambda-c",
            "1",
            "--G",
            "10",
            "--n",
            "100",
            "--multiplier",
            "50",
            "--reps",
            "2",
            "--out",
            "step.csv",
        ],
        dir.path(),
    );
    let step = std::fs::read_to_string(dir.path().join("step.csv")).unwrap();
    assert!(step.contains("errhot"));
    assert!(step.contains("errcold"));
    assert!(
        step.contains("\"(2,5)\""),
        "kspec echo should be quoted CSV"
    );

    run_ok(
        &[
            "convergence",
            "--k",
            "2",
            "--lambdas",
            "1,2",
            "--G",
            "10",
            "--n",
            "100",
            "--multiplier",
            "50",
            "--reps",
            "2",
            "--out",
            "conv.csv",
        ],
        dir.path(),
    );
    let conv = std::fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    assert!(conv.contains("hot_cold_ratio"));

    run_ok(
        &[
            "supercritical",
            "--k",
            "1",
            "--k",
            "2",
            "--lambdas",
            "2,4",
            "--n",
            "100",
            "--multiplier",
            "50",
            "--reps",
            "2",
            "--out",
            "super.csv",
            "--plot-script",
            "plot.py",
        ],
        dir.path(),
    );
    let sup = std::fs::read_to_string(dir.path().join("super.csv")).unwrap();
    assert!(sup.contains("supercritical"));
    assert!(std::fs::metadata(dir.path().join("plot.py")).is_ok());
}

#[test]
fn default_output_name_follows_experiment() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        &[
            "subcritical",
            "--k",
            "3",
            "--lambdas",
            "0.5",
            "--n",
            "50",
            "--multiplier",
            "20",
            "--reps",
            "1",
        ],
        dir.path(),
    );
    assert!(dir.path().join("subcritical.csv").exists());
}
