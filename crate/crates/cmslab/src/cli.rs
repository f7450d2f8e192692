//! Command-line front end: flag parsing, experiment dispatch, atomic CSV
//! output, and optional plot-script generation.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::experiments::{
    self, mean_where, near_exact_prefix, run_zipf_detailed, ExperimentConfig, ExperimentKind,
    ResultRow, ZipfSummary, DEFAULT_MULTIPLIER, DEFAULT_N, DEFAULT_REPS, DEFAULT_SEED,
};
use crate::hashspace::{build_hypergraph, plan_cardinalities, KSpec};
use crate::hypergraph::is_peelable;
use crate::selftest;
use crate::streams::Distribution;
use crate::util::derive_seed;

/// Environment variable consulted for the master seed when `--seed` is
/// absent.
pub const SEED_ENV_VAR: &str = "CMSLAB_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "cmslab",
    version,
    about = "Conservative count-min sketch workbench: deterministic error sweeps over hash hypergraphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Uniform input at low loads: error and peel residual per lambda
    Subcritical(SubcriticalArgs),
    /// Uniform input at high loads, one curve per k-spec
    Supercritical(SupercriticalArgs),
    /// k=1 against a mixed k-spec across the supercritical range
    MixedSuper(MixedSuperArgs),
    /// Step input: hot-element error vs hot load, cold load fixed
    Step(StepArgs),
    /// Hot/cold mean-estimate convergence as the total load grows
    Convergence(ConvergenceArgs),
    /// Zipf input at one load: exact vs estimated values per frequency rank
    Zipf(ZipfArgs),
    /// Fraction of random hypergraphs that peel completely
    PeelCheck(PeelCheckArgs),
    /// Run the built-in example checks from every module
    Selftest,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Counter array size (hypergraph vertices)
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    /// Insertions per edge (stream length = multiplier * edges)
    #[arg(long, default_value_t = DEFAULT_MULTIPLIER)]
    pub multiplier: u64,
    /// Independent hypergraph draws per grid point
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: u32,
    /// Master seed; CMSLAB_SEED applies when this flag is absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for (lambda, rep) cells; default all cores
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output CSV path (default: <experiment>.csv)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a python plot script next to the CSV
    #[arg(long)]
    pub plot_script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SubcriticalArgs {
    /// K-spec: `k` or `(k1,k2;alpha)`
    #[arg(long, default_value = "3")]
    pub k: String,
    /// Load grid: `a:b:step` or a comma list
    #[arg(long, default_value = "0.05:1.0:0.05", conflicts_with = "dist")]
    pub lambdas: String,
    /// Pin a single `uniform:m` point instead of a lambda grid
    #[arg(long)]
    pub dist: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SupercriticalArgs {
    /// K-spec, repeatable for side-by-side curves
    #[arg(long, default_values = ["1", "2"])]
    pub k: Vec<String>,
    #[arg(long, default_value = "1:20:1", conflicts_with = "dist")]
    pub lambdas: String,
    /// Pin a single `uniform:m` point instead of a lambda grid
    #[arg(long)]
    pub dist: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct MixedSuperArgs {
    /// K-spec, repeatable; defaults to 1 vs (1,3;0.8)
    #[arg(long, default_values = ["1", "(1,3;0.8)"])]
    pub k: Vec<String>,
    #[arg(long, default_value = "5:80:5")]
    pub lambdas: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    /// K-spec for all elements (`3`) or hot/cold pair (`(2,5)`)
    #[arg(long, default_value = "3", conflicts_with_all = ["k_hot", "k_cold"])]
    pub k: String,
    /// Hot-element cardinality (with --k-cold, overrides --k)
    #[arg(long, requires = "k_cold")]
    pub k_hot: Option<u32>,
    /// Cold-element cardinality (with --k-hot, overrides --k)
    #[arg(long, requires = "k_hot")]
    pub k_cold: Option<u32>,
    /// Hot-load grid
    #[arg(long, default_value = "0.05:1.0:0.05", conflicts_with = "dist")]
    pub lambdas: String,
    /// Fixed cold load (0 drops cold elements entirely)
    #[arg(long, default_value_t = 5.0, conflicts_with = "dist")]
    pub lambda_c: f64,
    /// Gap factor: hot elements are G times more probable
    #[arg(long = "G", default_value_t = 20.0, conflicts_with = "dist")]
    pub gap: f64,
    /// Pin a single `step:mh,mc,G` point instead of the grid flags
    #[arg(long)]
    pub dist: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// K-spec, repeatable; uniform (`2`) or hot/cold pair (`(2,5)`)
    #[arg(long, default_values = ["2", "3", "(2,5)"])]
    pub k: Vec<String>,
    /// Total-load grid; the hot class holds a 0.1 fraction of edges
    #[arg(long, default_value = "2:50:4")]
    pub lambdas: String,
    /// Gap factor
    #[arg(long = "G", default_value_t = 10.0)]
    pub gap: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ZipfArgs {
    /// K-spec: `k` or `(k1,k2;alpha)`
    #[arg(long, default_value = "2")]
    pub k: String,
    /// Load factor (single point)
    #[arg(long, default_value_t = 5.0, conflicts_with = "dist")]
    pub lambda: f64,
    /// Zipf skewness
    #[arg(long, default_value_t = 0.7, conflicts_with = "dist")]
    pub beta: f64,
    /// Pin the distribution as `zipf:m,beta` instead of --lambda/--beta
    #[arg(long)]
    pub dist: Option<String>,
    /// Emit rank rows for only the top R ranks (0 = all)
    #[arg(long, default_value_t = 0)]
    pub top_ranks: usize,
    /// Give the smaller mixed cardinality to the most frequent elements
    /// instead of a seeded shuffle
    #[arg(long)]
    pub small_k_top_ranks: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PeelCheckArgs {
    /// Hypergraph vertices
    #[arg(long, default_value_t = DEFAULT_N)]
    pub n: usize,
    /// K-spec
    #[arg(long, default_value = "3")]
    pub k: String,
    /// Load factor
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Number of independent graphs
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: u32,
    /// Master seed; CMSLAB_SEED applies when this flag is absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses argv without exiting the process; used by tests and `main`.
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// `a:b:step` (inclusive, fixed stride) or a comma-separated list.
pub fn parse_lambda_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let t = text.trim();
    let grid: Vec<f64> = if t.contains(':') {
        let mut parts = t.splitn(3, ':');
        let mut field = |what: &str| -> anyhow::Result<f64> {
            parts
                .next()
                .ok_or_else(|| anyhow!("lambda grid `{t}` is missing its {what}"))?
                .trim()
                .parse()
                .with_context(|| format!("bad {what} in lambda grid `{t}`"))
        };
        let start = field("start")?;
        let end = field("end")?;
        let step = field("step")?;
        if !step.is_finite() || step <= 0.0 {
            bail!("lambda grid step must be positive");
        }
        if end < start {
            bail!("lambda grid end lies before its start");
        }
        let points = ((end - start) / step + 1e-9).floor() as usize + 1;
        (0..points).map(|i| start + i as f64 * step).collect()
    } else {
        t.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad lambda `{s}`"))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?
    };
    if grid.is_empty() {
        bail!("empty lambda grid");
    }
    Ok(grid)
}

/// Resolves the master seed: explicit flag, then the environment variable,
/// then the built-in default.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>) -> anyhow::Result<u64> {
    match (flag, env) {
        (Some(seed), _) => Ok(seed),
        (None, Some(text)) => text
            .trim()
            .parse()
            .map_err(|_| anyhow!("invalid {SEED_ENV_VAR} value `{text}`")),
        (None, None) => Ok(DEFAULT_SEED),
    }
}

fn seed_from_env(flag: Option<u64>) -> anyhow::Result<u64> {
    let env = std::env::var(SEED_ENV_VAR).ok();
    resolve_seed(flag, env.as_deref())
}

fn parse_kspecs(texts: &[String]) -> anyhow::Result<Vec<KSpec>> {
    texts
        .iter()
        .map(|t| KSpec::parse(t).with_context(|| format!("bad k-spec `{t}`")))
        .collect()
}

fn single_point(m: usize, n: usize) -> Vec<f64> {
    vec![m as f64 / n as f64]
}

/// Builds the experiment config for one subcommand, plus its common flags.
pub fn build_config(command: &Command) -> anyhow::Result<(ExperimentConfig, &CommonArgs)> {
    let (kind, common) = match command {
        Command::Subcritical(args) => {
            let kspec =
                KSpec::parse(&args.k).with_context(|| format!("bad k-spec `{}`", args.k))?;
            let lambdas = match &args.dist {
                Some(text) => match Distribution::parse(text)? {
                    Distribution::Uniform { m } => single_point(m, args.common.n),
                    other => bail!("subcritical sweeps take a uniform distribution, got `{other}`"),
                },
                None => parse_lambda_grid(&args.lambdas)?,
            };
            (
                ExperimentKind::SubcriticalSweep { kspec, lambdas },
                &args.common,
            )
        }
        Command::Supercritical(args) => {
            let kspecs = parse_kspecs(&args.k)?;
            let lambdas = match &args.dist {
                Some(text) => match Distribution::parse(text)? {
                    Distribution::Uniform { m } => single_point(m, args.common.n),
                    other => {
                        bail!("supercritical sweeps take a uniform distribution, got `{other}`")
                    }
                },
                None => parse_lambda_grid(&args.lambdas)?,
            };
            (
                ExperimentKind::SupercriticalSweep { kspecs, lambdas },
                &args.common,
            )
        }
        Command::MixedSuper(args) => {
            let kspecs = parse_kspecs(&args.k)?;
            let lambdas = parse_lambda_grid(&args.lambdas)?;
            (
                ExperimentKind::MixedSupercritical { kspecs, lambdas },
                &args.common,
            )
        }
        Command::Step(args) => {
            let kspec = match (args.k_hot, args.k_cold) {
                (Some(hot), Some(cold)) => {
                    KSpec::PerClass(vec![("hot".into(), hot), ("cold".into(), cold)])
                }
                _ => KSpec::parse(&args.k).with_context(|| format!("bad k-spec `{}`", args.k))?,
            };
            let (lambda_hs, lambda_c, gap) = match &args.dist {
                Some(text) => match Distribution::parse(text)? {
                    Distribution::Step { m_hot, m_cold, gap } => (
                        single_point(m_hot, args.common.n),
                        m_cold as f64 / args.common.n as f64,
                        gap,
                    ),
                    other => bail!("step sweeps take a step distribution, got `{other}`"),
                },
                None => (parse_lambda_grid(&args.lambdas)?, args.lambda_c, args.gap),
            };
            (
                ExperimentKind::StepHotSweep {
                    kspec,
                    lambda_hs,
                    lambda_c,
                    gap,
                },
                &args.common,
            )
        }
        Command::Convergence(args) => {
            let kspecs = parse_kspecs(&args.k)?;
            let lambdas = parse_lambda_grid(&args.lambdas)?;
            (
                ExperimentKind::Convergence {
                    kspecs,
                    lambdas,
                    gap: args.gap,
                    hot_fraction: 0.1,
                },
                &args.common,
            )
        }
        Command::Zipf(args) => {
            let kspec =
                KSpec::parse(&args.k).with_context(|| format!("bad k-spec `{}`", args.k))?;
            let (lambda, beta) = match &args.dist {
                Some(text) => match Distribution::parse(text)? {
                    Distribution::Zipf { m, beta } => (m as f64 / args.common.n as f64, beta),
                    other => bail!("zipf runs take a zipf distribution, got `{other}`"),
                },
                None => (args.lambda, args.beta),
            };
            (
                ExperimentKind::ZipfWaterfall {
                    kspec,
                    lambda,
                    beta,
                    small_k_top_ranks: args.small_k_top_ranks,
                    top_ranks: args.top_ranks,
                },
                &args.common,
            )
        }
        Command::PeelCheck(_) | Command::Selftest => {
            bail!("subcommand does not describe an experiment")
        }
    };
    let mut cfg = ExperimentConfig::new(kind);
    cfg.n = common.n;
    cfg.multiplier = common.multiplier;
    cfg.reps = common.reps;
    cfg.seed = seed_from_env(common.seed)?;
    Ok((cfg, common))
}

fn with_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .context("building the worker pool")?;
            Ok(pool.install(job))
        }
    }
}

/// Temp file in the target directory, then rename.
fn write_csv_atomic(rows: &[ResultRow], path: &Path) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).context("creating temp file")?;
    experiments::write_csv(rows, &mut tmp).context("writing CSV")?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn sorted_lambdas(rows: &[ResultRow], key: fn(&ResultRow) -> Option<f64>) -> Vec<f64> {
    let mut set = BTreeSet::new();
    for row in rows {
        if row.rep.is_some() {
            if let Some(l) = key(row) {
                set.insert(l.to_bits());
            }
        }
    }
    set.into_iter().map(f64::from_bits).collect()
}

fn sorted_kspecs(rows: &[ResultRow]) -> Vec<String> {
    let set: BTreeSet<String> = rows.iter().map(|r| r.kspec.clone()).collect();
    set.into_iter().collect()
}

/// One line per lambda on stderr, mean over reps per k-spec.
fn print_sweep_summary(rows: &[ResultRow], metric: &str, key: fn(&ResultRow) -> Option<f64>) {
    let kspecs = sorted_kspecs(rows);
    for lambda in sorted_lambdas(rows, key) {
        let mut line = format!("lambda {lambda:.4}:");
        for kspec in &kspecs {
            if let Some(mean) = mean_where(rows, metric, |r| {
                r.kspec == *kspec && key(r).is_some_and(|l| l == lambda)
            }) {
                line.push_str(&format!(" {metric}[k={kspec}]={mean:.6}"));
            }
        }
        eprintln!("{line}");
    }
}

fn print_zipf_summary(rows: &[ResultRow], summary: &ZipfSummary) {
    let lambda = rows.iter().find_map(|r| r.lambda).unwrap_or(f64::NAN);
    let err = mean_where(rows, "combined_error", |_| true).unwrap_or(f64::NAN);
    let near_exact = near_exact_prefix(summary, 0.05);
    eprintln!(
        "lambda {lambda:.4}: combined_error={err:.6} near_exact_top_ranks={near_exact} (rel err < 0.05)"
    );
}

fn run_experiment_command(command: &Command) -> anyhow::Result<()> {
    let (cfg, common) = build_config(command)?;
    let label = cfg.kind.label();
    let is_zipf = matches!(cfg.kind, ExperimentKind::ZipfWaterfall { .. });
    let (rows, zipf_summary) = with_pool(common.threads, || {
        if is_zipf {
            run_zipf_detailed(&cfg).map(|(rows, summary)| (rows, Some(summary)))
        } else {
            experiments::run(&cfg).map(|rows| (rows, None))
        }
    })??;

    match &cfg.kind {
        ExperimentKind::ZipfWaterfall { .. } => {
            print_zipf_summary(&rows, zipf_summary.as_ref().expect("zipf summary"));
        }
        ExperimentKind::StepHotSweep { .. } => {
            print_sweep_summary(&rows, "errhot", |r| r.lambda_h);
        }
        ExperimentKind::Convergence { .. } => {
            print_sweep_summary(&rows, "hot_cold_ratio", |r| r.lambda);
        }
        _ => print_sweep_summary(&rows, "combined_error", |r| r.lambda),
    }

    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{label}.csv")));
    write_csv_atomic(&rows, &out)?;
    eprintln!("wrote {} ({} rows)", out.display(), rows.len());
    if let Some(script) = &common.plot_script {
        write_plot_script(&cfg.kind, &out, script)?;
        eprintln!("wrote {}", script.display());
    }
    Ok(())
}

fn run_peel_check(args: &PeelCheckArgs) -> anyhow::Result<()> {
    use rayon::prelude::*;
    let kspec = KSpec::parse(&args.k).with_context(|| format!("bad k-spec `{}`", args.k))?;
    if kspec.max_cardinality() as usize > args.n {
        bail!("k-spec {kspec} exceeds the vertex count {}", args.n);
    }
    if matches!(kspec, KSpec::PerClass(_)) {
        bail!("peel-check takes a uniform or mixed k-spec");
    }
    if args.reps == 0 {
        bail!("reps must be at least 1");
    }
    if !args.lambda.is_finite() || args.lambda <= 0.0 {
        bail!("lambda must be finite and positive");
    }
    let m = (args.lambda * args.n as f64).round() as usize;
    let seed = seed_from_env(args.seed)?;
    let echo = kspec.to_string();
    let peelable: u32 = with_pool(args.threads, || {
        (0..args.reps)
            .into_par_iter()
            .map(|rep| {
                let base = derive_seed(seed, &[args.lambda.to_bits(), u64::from(rep)]);
                let plan = plan_cardinalities(&kspec, m, None, derive_seed(base, &[1]))
                    .expect("validated k-spec");
                let graph = build_hypergraph(args.n, &plan, derive_seed(base, &[2]));
                u32::from(is_peelable(&graph))
            })
            .sum()
    })?;
    println!(
        "peelable fraction: {:.4} ({peelable}/{} graphs, n={}, lambda={}, k={echo})",
        f64::from(peelable) / f64::from(args.reps),
        args.reps,
        args.n,
        args.lambda,
    );
    Ok(())
}

/// Executes a parsed invocation. The binary maps the error case to a nonzero
/// exit status.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Selftest => {
            let mut out = std::io::stdout().lock();
            let failures = selftest::run_all(&mut out)?;
            if failures > 0 {
                bail!("{failures} selftest check(s) failed");
            }
            Ok(())
        }
        Command::PeelCheck(args) => run_peel_check(args),
        other => run_experiment_command(other),
    }
}

fn plot_script_body(kind: &ExperimentKind, data_file: &str) -> String {
    let label = kind.label();
    match kind {
        ExperimentKind::ZipfWaterfall { .. } => format!(
            r#"#!/usr/bin/env python3
# Rank profile from a cmslab zipf run; run from the CSV's directory.
import csv

import matplotlib.pyplot as plt

DATA = "{data_file}"

occ = dict()
est = dict()
with open(DATA, newline="") as fh:
    for row in csv.DictReader(fh):
        if row["rep"] != "":
            continue  # rep-averaged rows only
        name = row["metric"]
        for prefix, bucket in (("occ_rank_", occ), ("est_rank_", est)):
            if name.startswith(prefix):
                bucket[int(name[len(prefix):])] = float(row["value"])

ranks = sorted(occ)
plt.figure(figsize=(7, 5))
plt.loglog(ranks, [max(occ[r], 1e-9) for r in ranks], label="exact")
plt.loglog(ranks, [max(est[r], 1e-9) for r in ranks], label="estimate")
plt.xlabel("frequency rank")
plt.ylabel("occurrences / estimate")
plt.legend()
plt.grid(True, alpha=0.3)
plt.tight_layout()
plt.savefig("{label}.png", dpi=150)
print("wrote {label}.png")
"#
        ),
        _ => {
            let (x_column, metrics) = match kind {
                ExperimentKind::StepHotSweep { .. } => ("lambda_h", r#"["errhot", "errcold"]"#),
                ExperimentKind::Convergence { .. } => {
                    ("lambda", r#"["hot_mean_estimate", "cold_mean_estimate"]"#)
                }
                _ => ("lambda", r#"["combined_error"]"#),
            };
            format!(
                r#"#!/usr/bin/env python3
# Rep-averaged sweep curves from a cmslab {label} run; run from the CSV's
# directory.
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

DATA = "{data_file}"
X_COLUMN = "{x_column}"
METRICS = {metrics}

series = defaultdict(lambda: defaultdict(list))
with open(DATA, newline="") as fh:
    for row in csv.DictReader(fh):
        if row["rep"] == "" or row["metric"] not in METRICS or row[X_COLUMN] == "":
            continue
        series[(row["kspec"], row["metric"])][float(row[X_COLUMN])].append(
            float(row["value"])
        )

plt.figure(figsize=(7, 5))
for key in sorted(series):
    pts = series[key]
    xs = sorted(pts)
    ys = [sum(pts[x]) / len(pts[x]) for x in xs]
    name = "k=" + key[0]
    if len(METRICS) > 1:
        name += " " + key[1]
    plt.plot(xs, ys, marker="o", markersize=3, label=name)
plt.xlabel(X_COLUMN)
plt.ylabel(" / ".join(METRICS))
plt.legend()
plt.grid(True, alpha=0.3)
plt.tight_layout()
plt.savefig("{label}.png", dpi=150)
print("wrote {label}.png")
"#
            )
        }
    }
}

/// Writes a plain-text python script that reads only the CSV's file name
/// (no absolute paths); it is never executed by this binary.
pub fn write_plot_script(
    kind: &ExperimentKind,
    csv_path: &Path,
    script_path: &Path,
) -> anyhow::Result<()> {
    let data_file = csv_path
        .file_name()
        .ok_or_else(|| anyhow!("output path has no file name"))?
        .to_string_lossy()
        .into_owned();
    let body = plot_script_body(kind, &data_file);
    std::fs::write(script_path, body)
        .with_context(|| format!("writing plot script {}", script_path.display()))?;
    Ok(())
}
