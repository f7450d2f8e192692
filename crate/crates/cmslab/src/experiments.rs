//! Parameter sweeps producing deterministic long-format result tables.
//!
//! Every (lambda, rep) cell owns its graph, sketch, and PRNGs; cells run in
//! parallel and rows are sorted before output, so tables are byte-identical
//! across reruns and thread counts. Per-cell seeds are derived from the
//! master seed, the experiment kind, the lambda value itself (not its grid
//! position), the rep index, and the k-spec echo. The stream seed omits the
//! k-spec component: configurations compared at the same (lambda, rep) see
//! the same input stream.

use rayon::prelude::*;
use thiserror::Error;

use crate::hashspace::{build_hypergraph, plan_cardinalities, EdgePlan, KSpec, KSpecError};
use crate::hypergraph::peel;
use crate::metrics::{combined_error, counter_stats, rank_profile, summarize};
use crate::sketch::{run_stream, Discipline, EmptySketch, Sketch};
use crate::streams::{Distribution, DistributionError, Sampler};
use crate::util::{derive_seed, fnv1a64};

pub const DEFAULT_N: usize = 1000;
pub const DEFAULT_MULTIPLIER: u64 = 5000;
pub const DEFAULT_REPS: u32 = 10;
pub const DEFAULT_SEED: u64 = 42;

/// What to sweep and over which grid.
#[derive(Clone, Debug, PartialEq)]
pub enum ExperimentKind {
    /// Uniform input, one k-spec, low loads; records error and peel residual.
    SubcriticalSweep { kspec: KSpec, lambdas: Vec<f64> },
    /// Uniform input, several k-specs side by side over high loads.
    SupercriticalSweep {
        kspecs: Vec<KSpec>,
        lambdas: Vec<f64>,
    },
    /// Same sweep, conventionally comparing `1` against a mixed spec.
    MixedSupercritical {
        kspecs: Vec<KSpec>,
        lambdas: Vec<f64>,
    },
    /// Step input; sweeps the hot load with the cold load fixed.
    /// `lambda_c = 0` degenerates to the no-cold baseline.
    StepHotSweep {
        kspec: KSpec,
        lambda_hs: Vec<f64>,
        lambda_c: f64,
        gap: f64,
    },
    /// Step input; sweeps the total load split `hot_fraction` /
    /// `1 - hot_fraction` and tracks mean hot and cold estimates.
    Convergence {
        kspecs: Vec<KSpec>,
        lambdas: Vec<f64>,
        gap: f64,
        hot_fraction: f64,
    },
    /// Zipf input at a single load; records per-rank exact and estimated
    /// values, averaged over reps.
    ZipfWaterfall {
        kspec: KSpec,
        lambda: f64,
        beta: f64,
        /// Assign the smaller mixed cardinality to the most frequent ids
        /// instead of a seeded shuffle.
        small_k_top_ranks: bool,
        /// Emit rank rows only for the top this-many ranks (0 = all).
        top_ranks: usize,
    },
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::SubcriticalSweep { .. } => "subcritical",
            ExperimentKind::SupercriticalSweep { .. } => "supercritical",
            ExperimentKind::MixedSupercritical { .. } => "mixed-super",
            ExperimentKind::StepHotSweep { .. } => "step",
            ExperimentKind::Convergence { .. } => "convergence",
            ExperimentKind::ZipfWaterfall { .. } => "zipf",
        }
    }

    fn tag(&self) -> u64 {
        match self {
            ExperimentKind::SubcriticalSweep { .. } => 1,
            ExperimentKind::SupercriticalSweep { .. } => 2,
            ExperimentKind::MixedSupercritical { .. } => 3,
            ExperimentKind::StepHotSweep { .. } => 4,
            ExperimentKind::Convergence { .. } => 5,
            ExperimentKind::ZipfWaterfall { .. } => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    /// Insertions per edge: the stream length is `multiplier * m`.
    pub multiplier: u64,
    /// Independent hypergraph draws per grid point.
    pub reps: u32,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            n: DEFAULT_N,
            multiplier: DEFAULT_MULTIPLIER,
            reps: DEFAULT_REPS,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        if self.n == 0 {
            return bad("counter array size must be at least 1".into());
        }
        if self.multiplier == 0 {
            return bad("stream multiplier must be at least 1".into());
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        let check_grid = |grid: &[f64], what: &str| -> Result<(), ExperimentError> {
            if grid.is_empty() {
                return Err(ExperimentError::InvalidConfig(format!("empty {what} grid")));
            }
            if grid.iter().any(|l| !l.is_finite() || *l <= 0.0) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "{what} grid entries must be finite and positive"
                )));
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ExperimentError::InvalidConfig(format!(
                    "{what} grid must be strictly increasing"
                )));
            }
            if round_count(grid[0] * self.n as f64) == 0 {
                return Err(ExperimentError::InvalidConfig(format!(
                    "{what} grid starts below one edge at n = {}",
                    self.n
                )));
            }
            Ok(())
        };
        let check_kspec = |kspec: &KSpec, classes: bool| -> Result<(), ExperimentError> {
            kspec.validate()?;
            if kspec.max_cardinality() as usize > self.n {
                return Err(ExperimentError::InvalidConfig(format!(
                    "k-spec {kspec} exceeds the counter array size {}",
                    self.n
                )));
            }
            match kspec {
                KSpec::PerClass(map) if !classes => Err(ExperimentError::InvalidConfig(format!(
                    "per-class k-spec ({}) needs a hot/cold experiment",
                    map.len()
                ))),
                KSpec::PerClass(map) => {
                    for label in ["hot", "cold"] {
                        if !map.iter().any(|(name, _)| name == label) {
                            return Err(ExperimentError::InvalidConfig(format!(
                                "per-class k-spec is missing the `{label}` class"
                            )));
                        }
                    }
                    Ok(())
                }
                KSpec::Mixed { .. } if classes => Err(ExperimentError::InvalidConfig(
                    "hot/cold experiments take a uniform or per-class k-spec".into(),
                )),
                _ => Ok(()),
            }
        };
        match &self.kind {
            ExperimentKind::SubcriticalSweep { kspec, lambdas } => {
                check_kspec(kspec, false)?;
                check_grid(lambdas, "lambda")
            }
            ExperimentKind::SupercriticalSweep { kspecs, lambdas }
            | ExperimentKind::MixedSupercritical { kspecs, lambdas } => {
                if kspecs.is_empty() {
                    return bad("need at least one k-spec".into());
                }
                for kspec in kspecs {
                    check_kspec(kspec, false)?;
                }
                check_grid(lambdas, "lambda")
            }
            ExperimentKind::StepHotSweep {
                kspec,
                lambda_hs,
                lambda_c,
                gap,
            } => {
                check_kspec(kspec, true)?;
                check_grid(lambda_hs, "lambda_h")?;
                if !lambda_c.is_finite() || *lambda_c < 0.0 {
                    return bad("lambda_c must be finite and non-negative".into());
                }
                if round_count(lambda_c * self.n as f64) > 0 && (!gap.is_finite() || *gap <= 1.0) {
                    return bad(format!("gap factor {gap} must be greater than 1"));
                }
                Ok(())
            }
            ExperimentKind::Convergence {
                kspecs,
                lambdas,
                gap,
                hot_fraction,
            } => {
                if kspecs.is_empty() {
                    return bad("need at least one k-spec".into());
                }
                for kspec in kspecs {
                    check_kspec(kspec, true)?;
                }
                check_grid(lambdas, "lambda")?;
                if !hot_fraction.is_finite() || *hot_fraction <= 0.0 || *hot_fraction >= 1.0 {
                    return bad("hot fraction must lie strictly between 0 and 1".into());
                }
                if !gap.is_finite() || *gap <= 1.0 {
                    return bad(format!("gap factor {gap} must be greater than 1"));
                }
                let lambda_min = lambdas[0];
                if round_count(hot_fraction * lambda_min * self.n as f64) == 0
                    || round_count((1.0 - hot_fraction) * lambda_min * self.n as f64) == 0
                {
                    return bad("smallest lambda leaves a hot or cold class empty".into());
                }
                Ok(())
            }
            ExperimentKind::ZipfWaterfall {
                kspec,
                lambda,
                beta,
                ..
            } => {
                check_kspec(kspec, false)?;
                if !lambda.is_finite() || *lambda <= 0.0 {
                    return bad("lambda must be finite and positive".into());
                }
                if round_count(lambda * self.n as f64) == 0 {
                    return bad("lambda rounds to an empty edge set".into());
                }
                if !beta.is_finite() || *beta < 0.0 {
                    return bad("beta must be finite and non-negative".into());
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("wrong experiment kind: expected {expected}, got {actual}")]
    WrongKind {
        expected: &'static str,
        actual: &'static str,
    },
    #[error(transparent)]
    KSpec(#[from] KSpecError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Sketch(#[from] EmptySketch),
}

/// One metric of one cell (or one rep-averaged aggregate, `rep = None`).
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub n: usize,
    pub kspec: String,
    pub dist: String,
    pub lambda: Option<f64>,
    pub lambda_h: Option<f64>,
    pub lambda_c: Option<f64>,
    pub gap: Option<f64>,
    pub beta: Option<f64>,
    pub multiplier: u64,
    pub rep: Option<u32>,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// `m = round(lambda * n)`, half away from zero (i.e. half-up for the
/// non-negative loads used here).
fn round_count(x: f64) -> usize {
    x.round() as usize
}

struct CellSeeds {
    plan: u64,
    graph: u64,
    stream: u64,
    /// Echoed in the seed column.
    echo: u64,
}

impl CellSeeds {
    fn new(master: u64, kind_tag: u64, floats: &[f64], rep: u32, kspec_echo: &str) -> CellSeeds {
        let mut parts: Vec<u64> = Vec::with_capacity(floats.len() + 2);
        parts.push(kind_tag);
        parts.extend(floats.iter().map(|f| f.to_bits()));
        parts.push(u64::from(rep));
        let base = derive_seed(master, &parts);
        let kspec_base = derive_seed(base, &[fnv1a64(kspec_echo.as_bytes())]);
        CellSeeds {
            plan: derive_seed(kspec_base, &[1]),
            graph: derive_seed(kspec_base, &[2]),
            stream: derive_seed(base, &[3]),
            echo: kspec_base,
        }
    }
}

/// Column echo shared by every row a cell emits.
#[derive(Clone)]
struct RowContext {
    experiment: &'static str,
    n: usize,
    kspec: String,
    dist: String,
    lambda: Option<f64>,
    lambda_h: Option<f64>,
    lambda_c: Option<f64>,
    gap: Option<f64>,
    beta: Option<f64>,
    multiplier: u64,
    rep: Option<u32>,
    seed: u64,
}

impl RowContext {
    fn row(&self, metric: impl Into<String>, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment,
            n: self.n,
            kspec: self.kspec.clone(),
            dist: self.dist.clone(),
            lambda: self.lambda,
            lambda_h: self.lambda_h,
            lambda_c: self.lambda_c,
            gap: self.gap,
            beta: self.beta,
            multiplier: self.multiplier,
            rep: self.rep,
            seed: self.seed,
            metric: metric.into(),
            value,
        }
    }
}

/// Runs whichever experiment the config describes.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    match &cfg.kind {
        ExperimentKind::SubcriticalSweep { .. } => run_subcritical(cfg),
        ExperimentKind::SupercriticalSweep { .. } | ExperimentKind::MixedSupercritical { .. } => {
            run_supercritical(cfg)
        }
        ExperimentKind::StepHotSweep { .. } => run_step(cfg),
        ExperimentKind::Convergence { .. } => run_convergence(cfg),
        ExperimentKind::ZipfWaterfall { .. } => run_zipf(cfg),
    }
}

/// Finished uniform-input cell, ready for metric extraction.
struct FinishedCell {
    graph: crate::hypergraph::HashHypergraph,
    sketch: Sketch,
    occurrences: Vec<u64>,
    estimates: Vec<u64>,
}

fn execute_cell(
    cfg: &ExperimentConfig,
    plan: &EdgePlan,
    dist: &Distribution,
    seeds: &CellSeeds,
) -> Result<FinishedCell, ExperimentError> {
    let graph = build_hypergraph(cfg.n, plan, seeds.graph);
    let total = cfg
        .multiplier
        .checked_mul(plan.len() as u64)
        .ok_or_else(|| ExperimentError::InvalidConfig("stream length overflows".into()))?;
    let mut sketch = Sketch::new(cfg.n, Discipline::Conservative)?;
    let occurrences = run_stream(
        &mut sketch,
        &graph,
        Sampler::new(dist, seeds.stream).take(total as usize),
    );
    let estimates: Vec<u64> = graph.edges().map(|e| sketch.estimate(e)).collect();
    Ok(FinishedCell {
        graph,
        sketch,
        occurrences,
        estimates,
    })
}

fn push_counter_rows(rows: &mut Vec<ResultRow>, ctx: &RowContext, sketch: &Sketch) {
    let stats = counter_stats(sketch);
    rows.push(ctx.row("counter_mean", stats.mean));
    rows.push(ctx.row("counter_cv", stats.coefficient_of_variation));
    rows.push(ctx.row("counter_zero_fraction", stats.zero_fraction));
}

fn uniform_cell(
    cfg: &ExperimentConfig,
    kspec: &KSpec,
    lambda: f64,
    rep: u32,
    with_peel: bool,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let m = round_count(lambda * cfg.n as f64);
    let echo = kspec.to_string();
    let seeds = CellSeeds::new(cfg.seed, cfg.kind.tag(), &[lambda], rep, &echo);
    let plan = plan_cardinalities(kspec, m, None, seeds.plan)?;
    let dist = Distribution::uniform(m)?;
    let cell = execute_cell(cfg, &plan, &dist, &seeds)?;
    let ctx = RowContext {
        experiment: cfg.kind.label(),
        n: cfg.n,
        kspec: echo,
        dist: dist.to_string(),
        lambda: Some(lambda),
        lambda_h: None,
        lambda_c: None,
        gap: None,
        beta: None,
        multiplier: cfg.multiplier,
        rep: Some(rep),
        seed: seeds.echo,
    };
    let mut rows = vec![ctx.row(
        "combined_error",
        combined_error(&cell.estimates, &cell.occurrences),
    )];
    push_counter_rows(&mut rows, &ctx, &cell.sketch);
    if with_peel {
        let report = peel(&cell.graph);
        rows.push(ctx.row("residual_edges", report.residual.len() as f64));
        rows.push(ctx.row("residual_fraction", report.residual.len() as f64 / m as f64));
    }
    Ok(rows)
}

pub fn run_subcritical(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let ExperimentKind::SubcriticalSweep { kspec, lambdas } = &cfg.kind else {
        return Err(ExperimentError::WrongKind {
            expected: "subcritical",
            actual: cfg.kind.label(),
        });
    };
    cfg.validate()?;
    let cells = grid_cells(lambdas, cfg.reps);
    let mut rows = flatten(
        cells
            .par_iter()
            .map(|&(lambda, rep)| uniform_cell(cfg, kspec, lambda, rep, true))
            .collect::<Result<Vec<_>, _>>()?,
    );
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn run_supercritical(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let (kspecs, lambdas) = match &cfg.kind {
        ExperimentKind::SupercriticalSweep { kspecs, lambdas }
        | ExperimentKind::MixedSupercritical { kspecs, lambdas } => (kspecs, lambdas),
        _ => {
            return Err(ExperimentError::WrongKind {
                expected: "supercritical or mixed-super",
                actual: cfg.kind.label(),
            })
        }
    };
    cfg.validate()?;
    let cells: Vec<(&KSpec, f64, u32)> = kspecs
        .iter()
        .flat_map(|k| {
            grid_cells(lambdas, cfg.reps)
                .into_iter()
                .map(move |(l, r)| (k, l, r))
        })
        .collect();
    let mut rows = flatten(
        cells
            .par_iter()
            .map(|&(kspec, lambda, rep)| uniform_cell(cfg, kspec, lambda, rep, false))
            .collect::<Result<Vec<_>, _>>()?,
    );
    sort_rows(&mut rows);
    Ok(rows)
}

fn step_cell(
    cfg: &ExperimentConfig,
    kspec: &KSpec,
    lambda_h: f64,
    lambda_c: f64,
    gap: f64,
    rep: u32,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let n = cfg.n;
    let m_hot = round_count(lambda_h * n as f64);
    let m_cold = round_count(lambda_c * n as f64);
    let m = m_hot + m_cold;
    let echo = kspec.to_string();
    let seeds = CellSeeds::new(
        cfg.seed,
        cfg.kind.tag(),
        &[lambda_h, lambda_c, gap],
        rep,
        &echo,
    );
    let labels: Vec<&str> = (0..m)
        .map(|i| if i < m_hot { "hot" } else { "cold" })
        .collect();
    let plan = plan_cardinalities(kspec, m, Some(&labels), seeds.plan)?;
    let dist = if m_cold == 0 {
        Distribution::uniform(m_hot)?
    } else {
        Distribution::step(m_hot, m_cold, gap)?
    };
    let cell = execute_cell(cfg, &plan, &dist, &seeds)?;
    let ctx = RowContext {
        experiment: cfg.kind.label(),
        n,
        kspec: echo,
        dist: dist.to_string(),
        lambda: Some(lambda_h + lambda_c),
        lambda_h: Some(lambda_h),
        lambda_c: Some(lambda_c),
        gap: Some(gap),
        beta: None,
        multiplier: cfg.multiplier,
        rep: Some(rep),
        seed: seeds.echo,
    };
    let mut classes = vec![("hot", 0..m_hot)];
    if m_cold > 0 {
        classes.push(("cold", m_hot..m));
    }
    let summary = summarize(&cell.estimates, &cell.occurrences, &classes, false);
    let mut rows = vec![ctx.row("combined_error", summary.combined_error)];
    for (label, error) in &summary.class_errors {
        rows.push(ctx.row(format!("err{label}"), *error));
    }
    push_counter_rows(&mut rows, &ctx, &cell.sketch);
    Ok(rows)
}

pub fn run_step(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let ExperimentKind::StepHotSweep {
        kspec,
        lambda_hs,
        lambda_c,
        gap,
    } = &cfg.kind
    else {
        return Err(ExperimentError::WrongKind {
            expected: "step",
            actual: cfg.kind.label(),
        });
    };
    cfg.validate()?;
    let cells = grid_cells(lambda_hs, cfg.reps);
    let mut rows = flatten(
        cells
            .par_iter()
            .map(|&(lambda_h, rep)| step_cell(cfg, kspec, lambda_h, *lambda_c, *gap, rep))
            .collect::<Result<Vec<_>, _>>()?,
    );
    sort_rows(&mut rows);
    Ok(rows)
}

fn convergence_cell(
    cfg: &ExperimentConfig,
    kspec: &KSpec,
    lambda: f64,
    gap: f64,
    hot_fraction: f64,
    rep: u32,
) -> Result<Vec<ResultRow>, ExperimentError> {
    let n = cfg.n;
    let m_hot = round_count(hot_fraction * lambda * n as f64);
    let m_cold = round_count((1.0 - hot_fraction) * lambda * n as f64);
    let m = m_hot + m_cold;
    let echo = kspec.to_string();
    let seeds = CellSeeds::new(
        cfg.seed,
        cfg.kind.tag(),
        &[lambda, gap, hot_fraction],
        rep,
        &echo,
    );
    let labels: Vec<&str> = (0..m)
        .map(|i| if i < m_hot { "hot" } else { "cold" })
        .collect();
    let plan = plan_cardinalities(kspec, m, Some(&labels), seeds.plan)?;
    let dist = Distribution::step(m_hot, m_cold, gap)?;
    let cell = execute_cell(cfg, &plan, &dist, &seeds)?;
    let mean = |range: std::ops::Range<usize>| -> f64 {
        let len = range.len();
        let sum: u128 = cell.estimates[range].iter().map(|&e| e as u128).sum();
        sum as f64 / len as f64
    };
    let hot_mean = mean(0..m_hot);
    let cold_mean = mean(m_hot..m);
    let ctx = RowContext {
        experiment: cfg.kind.label(),
        n,
        kspec: echo,
        dist: dist.to_string(),
        lambda: Some(lambda),
        lambda_h: Some(hot_fraction * lambda),
        lambda_c: Some((1.0 - hot_fraction) * lambda),
        gap: Some(gap),
        beta: None,
        multiplier: cfg.multiplier,
        rep: Some(rep),
        seed: seeds.echo,
    };
    let mut rows = vec![
        ctx.row("hot_mean_estimate", hot_mean),
        ctx.row("cold_mean_estimate", cold_mean),
        ctx.row("hot_cold_ratio", hot_mean / cold_mean),
    ];
    push_counter_rows(&mut rows, &ctx, &cell.sketch);
    Ok(rows)
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    let ExperimentKind::Convergence {
        kspecs,
        lambdas,
        gap,
        hot_fraction,
    } = &cfg.kind
    else {
        return Err(ExperimentError::WrongKind {
            expected: "convergence",
            actual: cfg.kind.label(),
        });
    };
    cfg.validate()?;
    let cells: Vec<(&KSpec, f64, u32)> = kspecs
        .iter()
        .flat_map(|k| {
            grid_cells(lambdas, cfg.reps)
                .into_iter()
                .map(move |(l, r)| (k, l, r))
        })
        .collect();
    let mut rows = flatten(
        cells
            .par_iter()
            .map(|&(kspec, lambda, rep)| {
                convergence_cell(cfg, kspec, lambda, *gap, *hot_fraction, rep)
            })
            .collect::<Result<Vec<_>, _>>()?,
    );
    sort_rows(&mut rows);
    Ok(rows)
}

/// Rep-averaged rank profile of a zipf run.
#[derive(Clone, Debug, PartialEq)]
pub struct ZipfSummary {
    /// Mean occurrence count of the rank-r element (index r - 1).
    pub mean_occ: Vec<f64>,
    /// Mean estimate of the rank-r element.
    pub mean_est: Vec<f64>,
}

/// Length of the initial run of ranks estimated within `tol` relative error
/// on the averaged profile (the waterfall break point).
pub fn near_exact_prefix(summary: &ZipfSummary, tol: f64) -> usize {
    summary
        .mean_occ
        .iter()
        .zip(&summary.mean_est)
        .take_while(|&(&occ, &est)| occ > 0.0 && (est - occ) / occ < tol)
        .count()
}

fn zipf_plan(
    kspec: &KSpec,
    m: usize,
    small_k_top_ranks: bool,
    seed: u64,
) -> Result<EdgePlan, ExperimentError> {
    match (kspec, small_k_top_ranks) {
        (KSpec::Mixed { k1, k2, alpha }, true) => {
            // Fraction `alpha` of edges keep cardinality k1; the smaller
            // cardinality goes to the smallest ids, which are the highest
            // Zipf ranks.
            let n1 = (alpha * m as f64).round() as usize;
            let (small, large, n_small) = if k1 < k2 {
                (*k1, *k2, n1)
            } else {
                (*k2, *k1, m - n1)
            };
            let mut cardinalities = vec![small; n_small];
            cardinalities.resize(m, large);
            Ok(EdgePlan {
                cardinalities,
                class_of: None,
            })
        }
        _ => Ok(plan_cardinalities(kspec, m, None, seed)?),
    }
}

struct ZipfCellOutput {
    rows: Vec<ResultRow>,
    profile: Vec<(u64, u64)>,
}

fn zipf_cell(
    cfg: &ExperimentConfig,
    kspec: &KSpec,
    lambda: f64,
    beta: f64,
    small_k_top_ranks: bool,
    rank_limit: usize,
    rep: u32,
) -> Result<ZipfCellOutput, ExperimentError> {
    let m = round_count(lambda * cfg.n as f64);
    let echo = kspec.to_string();
    let seeds = CellSeeds::new(cfg.seed, cfg.kind.tag(), &[lambda, beta], rep, &echo);
    let plan = zipf_plan(kspec, m, small_k_top_ranks, seeds.plan)?;
    let dist = Distribution::zipf(m, beta)?;
    let cell = execute_cell(cfg, &plan, &dist, &seeds)?;
    let ctx = RowContext {
        experiment: cfg.kind.label(),
        n: cfg.n,
        kspec: echo,
        dist: dist.to_string(),
        lambda: Some(lambda),
        lambda_h: None,
        lambda_c: None,
        gap: None,
        beta: Some(beta),
        multiplier: cfg.multiplier,
        rep: Some(rep),
        seed: seeds.echo,
    };
    let mut rows = vec![ctx.row(
        "combined_error",
        combined_error(&cell.estimates, &cell.occurrences),
    )];
    push_counter_rows(&mut rows, &ctx, &cell.sketch);
    let profile: Vec<(u64, u64)> = rank_profile(&cell.estimates, &cell.occurrences)
        .into_iter()
        .map(|entry| (entry.occ, entry.estimate))
        .collect();
    for (i, &(occ, est)) in profile.iter().take(rank_limit).enumerate() {
        let rank = i + 1;
        rows.push(ctx.row(format!("occ_rank_{rank}"), occ as f64));
        rows.push(ctx.row(format!("est_rank_{rank}"), est as f64));
    }
    Ok(ZipfCellOutput { rows, profile })
}

/// Runs the zipf waterfall and also returns the rep-averaged profile.
pub fn run_zipf_detailed(
    cfg: &ExperimentConfig,
) -> Result<(Vec<ResultRow>, ZipfSummary), ExperimentError> {
    let ExperimentKind::ZipfWaterfall {
        kspec,
        lambda,
        beta,
        small_k_top_ranks,
        top_ranks,
    } = &cfg.kind
    else {
        return Err(ExperimentError::WrongKind {
            expected: "zipf",
            actual: cfg.kind.label(),
        });
    };
    cfg.validate()?;
    let m = round_count(lambda * cfg.n as f64);
    let rank_limit = if *top_ranks == 0 {
        m
    } else {
        (*top_ranks).min(m)
    };
    let outputs: Vec<ZipfCellOutput> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            zipf_cell(
                cfg,
                kspec,
                *lambda,
                *beta,
                *small_k_top_ranks,
                rank_limit,
                rep,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let reps = cfg.reps as f64;
    let mut mean_occ = vec![0.0f64; m];
    let mut mean_est = vec![0.0f64; m];
    for output in &outputs {
        for (r, &(occ, est)) in output.profile.iter().enumerate() {
            mean_occ[r] += occ as f64 / reps;
            mean_est[r] += est as f64 / reps;
        }
    }

    let mut rows = flatten(outputs.into_iter().map(|o| o.rows).collect());
    let avg_ctx = RowContext {
        experiment: cfg.kind.label(),
        n: cfg.n,
        kspec: kspec.to_string(),
        dist: Distribution::zipf(m, *beta)?.to_string(),
        lambda: Some(*lambda),
        lambda_h: None,
        lambda_c: None,
        gap: None,
        beta: Some(*beta),
        multiplier: cfg.multiplier,
        rep: None,
        seed: cfg.seed,
    };
    for rank in 1..=rank_limit {
        rows.push(avg_ctx.row(format!("occ_rank_{rank}"), mean_occ[rank - 1]));
        rows.push(avg_ctx.row(format!("est_rank_{rank}"), mean_est[rank - 1]));
    }
    sort_rows(&mut rows);
    Ok((rows, ZipfSummary { mean_occ, mean_est }))
}

pub fn run_zipf(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, ExperimentError> {
    run_zipf_detailed(cfg).map(|(rows, _)| rows)
}

fn grid_cells(lambdas: &[f64], reps: u32) -> Vec<(f64, u32)> {
    lambdas
        .iter()
        .flat_map(|&l| (0..reps).map(move |r| (l, r)))
        .collect()
}

fn flatten(nested: Vec<Vec<ResultRow>>) -> Vec<ResultRow> {
    nested.into_iter().flatten().collect()
}

fn cmp_opt_f64(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.experiment
            .cmp(b.experiment)
            .then_with(|| a.kspec.cmp(&b.kspec))
            .then_with(|| a.dist.cmp(&b.dist))
            .then_with(|| cmp_opt_f64(a.lambda, b.lambda))
            .then_with(|| cmp_opt_f64(a.lambda_h, b.lambda_h))
            .then_with(|| cmp_opt_f64(a.lambda_c, b.lambda_c))
            .then_with(|| cmp_opt_f64(a.beta, b.beta))
            .then_with(|| {
                // Per-rep rows first, rep-averaged aggregates last.
                a.rep
                    .map_or(u64::MAX, u64::from)
                    .cmp(&b.rep.map_or(u64::MAX, u64::from))
            })
            .then_with(|| a.metric.cmp(&b.metric))
    });
}

/// Mean of a metric over the rows a predicate selects (per-rep rows only).
pub fn mean_where(
    rows: &[ResultRow],
    metric: &str,
    predicate: impl Fn(&ResultRow) -> bool,
) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in rows {
        if row.rep.is_some() && row.metric == metric && predicate(row) {
            total += row.value;
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Mean of a metric across reps for one (kspec, lambda) grid point.
pub fn mean_over_reps(rows: &[ResultRow], kspec: &str, lambda: f64, metric: &str) -> Option<f64> {
    mean_where(rows, metric, |row| {
        row.kspec == kspec && row.lambda.is_some_and(|l| l == lambda)
    })
}

/// Exactly 9 significant digits; the one float format every CSV field uses.
fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_sig9(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "n",
    "kspec",
    "dist",
    "lambda",
    "lambda_h",
    "lambda_c",
    "G",
    "beta",
    "multiplier",
    "rep",
    "seed",
    "metric",
    "value",
];

/// Long-format CSV: header, one metric per row, LF line endings, floats with
/// 9 significant digits.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], writer: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.write_record([
            row.experiment,
            &row.n.to_string(),
            &row.kspec,
            &row.dist,
            &opt_sig9(row.lambda),
            &opt_sig9(row.lambda_h),
            &opt_sig9(row.lambda_c),
            &opt_sig9(row.gap),
            &opt_sig9(row.beta),
            &row.multiplier.to_string(),
            &row.rep.map(|r| r.to_string()).unwrap_or_default(),
            &row.seed.to_string(),
            &row.metric,
            &fmt_sig9(row.value),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}
