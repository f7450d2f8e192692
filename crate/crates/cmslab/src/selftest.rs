//! Built-in example checks behind the `selftest` subcommand: small,
//! deterministic cases with hand-checkable outcomes from every module.

use crate::hashspace::{build_hypergraph, plan_cardinalities, KSpec, KSpecError};
use crate::hypergraph::{is_peelable, peel, HashHypergraph};
use crate::metrics::{class_error, combined_error, counter_stats, rank_profile, relative_error};
use crate::sketch::{run_stream, Discipline, Sketch};
use crate::streams::{sample_stream, Distribution, StreamSpec};

type CheckResult = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

macro_rules! ensure_eq {
    ($left:expr, $right:expr) => {{
        let (l, r) = (&$left, &$right);
        if l != r {
            return Err(format!("{} = {:?}, expected {:?}", stringify!($left), l, r));
        }
    }};
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn kspec_grammar() -> CheckResult {
    ensure_eq!(
        KSpec::parse("3").map_err(|e| e.to_string())?,
        KSpec::Uniform(3)
    );
    ensure_eq!(
        KSpec::parse("(3,14;0.885)").map_err(|e| e.to_string())?,
        KSpec::Mixed {
            k1: 3,
            k2: 14,
            alpha: 0.885
        }
    );
    ensure_eq!(
        KSpec::parse("(2,5)").map_err(|e| e.to_string())?,
        KSpec::PerClass(vec![("hot".into(), 2), ("cold".into(), 5)])
    );
    ensure!(
        matches!(
            KSpec::parse("(2,5;1.5)"),
            Err(KSpecError::AlphaOutOfRange(_))
        ),
        "out-of-range fraction accepted"
    );
    Ok(())
}

fn cardinality_plans() -> CheckResult {
    let plan = plan_cardinalities(&KSpec::Uniform(2), 4, None, 0).map_err(|e| e.to_string())?;
    ensure_eq!(plan.cardinalities, vec![2, 2, 2, 2]);
    let plan = plan_cardinalities(
        &KSpec::Mixed {
            k1: 1,
            k2: 3,
            alpha: 0.8,
        },
        10,
        None,
        1,
    )
    .map_err(|e| e.to_string())?;
    ensure_eq!(plan.cardinalities.iter().filter(|&&k| k == 1).count(), 8);
    let spec = KSpec::PerClass(vec![("hot".into(), 2), ("cold".into(), 5)]);
    let plan = plan_cardinalities(&spec, 3, Some(&["hot", "cold", "cold"]), 0)
        .map_err(|e| e.to_string())?;
    ensure_eq!(plan.cardinalities, vec![2, 5, 5]);
    Ok(())
}

fn hypergraph_construction() -> CheckResult {
    let plan = plan_cardinalities(&KSpec::Uniform(1), 1, None, 5).map_err(|e| e.to_string())?;
    let graph = build_hypergraph(5, &plan, 5);
    ensure_eq!(graph.edge_count(), 1);
    ensure_eq!(graph.edge(0).len(), 1);
    let plan = plan_cardinalities(&KSpec::Uniform(3), 818, None, 5).map_err(|e| e.to_string())?;
    let graph = build_hypergraph(1000, &plan, 5);
    ensure!(graph.load_factor() == 0.818, "load factor mismatch");
    Ok(())
}

fn peeling_basics() -> CheckResult {
    let empty = HashHypergraph::new(3, Vec::<Vec<u32>>::new());
    let report = peel(&empty);
    ensure!(report.residual.is_empty(), "empty graph has residual");
    ensure!(report.peel_order.is_empty(), "empty graph peeled edges");

    let triangle = HashHypergraph::new(3, vec![vec![0, 1], vec![1, 2], vec![2, 0]]);
    ensure_eq!(peel(&triangle).residual, vec![0, 1, 2]);
    ensure!(!is_peelable(&triangle), "cycle reported peelable");

    let single = HashHypergraph::new(2, vec![vec![0, 1]]);
    ensure!(is_peelable(&single), "single edge not peelable");
    Ok(())
}

fn sketch_updates() -> CheckResult {
    let mut s = Sketch::new(3, Discipline::Conservative).map_err(|e| e.to_string())?;
    ensure_eq!(s.counters(), &[0u64, 0, 0][..]);
    ensure!(Sketch::new(0, Discipline::Basic).is_err(), "n = 0 accepted");

    s.insert(&[0, 1]);
    ensure_eq!(s.counters(), &[1u64, 1, 0][..]);

    // Reach counters [2,1,0] via single-vertex edges, then update {0,2}.
    let state = |d: Discipline| -> Result<Sketch, String> {
        let mut s = Sketch::new(3, d).map_err(|e| e.to_string())?;
        for _ in 0..2 {
            s.insert(&[0]);
        }
        s.insert(&[1]);
        Ok(s)
    };
    let mut cons = state(Discipline::Conservative)?;
    cons.insert(&[0, 2]);
    ensure_eq!(cons.counters(), &[2u64, 1, 1][..]);
    let mut basic = state(Discipline::Basic)?;
    basic.insert(&[0, 2]);
    ensure_eq!(basic.counters(), &[3u64, 1, 1][..]);
    Ok(())
}

fn sketch_estimates() -> CheckResult {
    let mut s = Sketch::new(3, Discipline::Conservative).map_err(|e| e.to_string())?;
    for _ in 0..3 {
        s.insert(&[0]);
    }
    s.insert(&[1]);
    s.insert(&[2]);
    s.insert(&[2]);
    ensure_eq!(s.counters(), &[3u64, 1, 2][..]);
    ensure_eq!(s.estimate(&[0, 2]), 2);

    let fresh = Sketch::new(4, Discipline::Basic).map_err(|e| e.to_string())?;
    ensure_eq!(fresh.estimate(&[0, 3]), 0);

    let mut twice = Sketch::new(4, Discipline::Conservative).map_err(|e| e.to_string())?;
    twice.insert(&[0, 1]);
    twice.insert(&[0, 1]);
    ensure_eq!(twice.estimate(&[0, 1]), 2);
    Ok(())
}

fn stream_runs() -> CheckResult {
    let graph = HashHypergraph::new(4, vec![vec![0, 1], vec![2, 3]]);
    let mut s = Sketch::new(4, Discipline::Conservative).map_err(|e| e.to_string())?;
    let occ = run_stream(&mut s, &graph, std::iter::empty());
    ensure_eq!(occ, vec![0, 0]);
    ensure_eq!(s.insertions_processed(), 0);

    let occ = run_stream(&mut s, &graph, vec![0, 0, 1]);
    ensure_eq!(occ, vec![2, 1]);
    ensure_eq!(s.estimate(graph.edge(0)), 2);
    ensure_eq!(s.estimate(graph.edge(1)), 1);
    Ok(())
}

fn distribution_shapes() -> CheckResult {
    ensure_eq!(
        Distribution::uniform(4)
            .map_err(|e| e.to_string())?
            .probabilities(),
        vec![0.25; 4]
    );
    let p = Distribution::step(100, 1000, 10.0)
        .map_err(|e| e.to_string())?
        .probabilities();
    let hot: f64 = p[..100].iter().sum();
    ensure!(close(hot, 0.5, 1e-12), "hot mass {hot} != 0.5");
    let p = Distribution::zipf(8, 0.0)
        .map_err(|e| e.to_string())?
        .probabilities();
    ensure!(
        p.iter().all(|&x| close(x, 0.125, 1e-15)),
        "zero-skew zipf not uniform"
    );
    let spec = StreamSpec {
        distribution: Distribution::uniform(5).map_err(|e| e.to_string())?,
        length: 0,
        seed: 1,
    };
    ensure!(sample_stream(&spec).is_empty(), "empty stream not empty");
    for text in ["uniform:818", "step:100,1000,10", "zipf:1000,0.7"] {
        let d = Distribution::parse(text).map_err(|e| e.to_string())?;
        ensure_eq!(d.to_string(), text);
    }
    Ok(())
}

fn error_metrics() -> CheckResult {
    ensure_eq!(relative_error(5, 5), 0.0);
    ensure_eq!(relative_error(7, 5), 0.4);
    ensure_eq!(combined_error(&[4, 7], &[4, 7]), 0.0);
    ensure_eq!(combined_error(&[4, 2], &[2, 2]), 0.5);
    let estimates = [5, 9, 4];
    let occs = [5, 3, 4];
    ensure_eq!(
        class_error(&estimates, &occs, 0..3),
        combined_error(&estimates, &occs)
    );
    ensure_eq!(class_error(&estimates, &occs, [0, 2]), 0.0);
    let ids: Vec<usize> = rank_profile(&[1, 3, 2], &[1, 3, 2])
        .iter()
        .map(|e| e.id)
        .collect();
    ensure_eq!(ids, vec![1, 2, 0]);
    Ok(())
}

fn counter_statistics() -> CheckResult {
    let fresh = Sketch::new(4, Discipline::Basic).map_err(|e| e.to_string())?;
    let stats = counter_stats(&fresh);
    ensure_eq!(stats.mean, 0.0);
    ensure_eq!(stats.coefficient_of_variation, 0.0);
    ensure_eq!(stats.zero_fraction, 1.0);

    let mut level = Sketch::new(3, Discipline::Basic).map_err(|e| e.to_string())?;
    for _ in 0..7 {
        level.insert(&[0, 1, 2]);
    }
    let stats = counter_stats(&level);
    ensure_eq!(stats.coefficient_of_variation, 0.0);
    ensure_eq!(stats.zero_fraction, 0.0);
    Ok(())
}

type Check = (&'static str, fn() -> CheckResult);

/// All built-in checks with their names.
pub fn checks() -> Vec<Check> {
    vec![
        ("kspec grammar", kspec_grammar),
        ("cardinality plans", cardinality_plans),
        ("hypergraph construction", hypergraph_construction),
        ("peeling basics", peeling_basics),
        ("sketch updates", sketch_updates),
        ("sketch estimates", sketch_estimates),
        ("stream runs", stream_runs),
        ("distribution shapes", distribution_shapes),
        ("error metrics", error_metrics),
        ("counter statistics", counter_statistics),
    ]
}

/// Runs every check, printing one line each; returns the failure count.
pub fn run_all(out: &mut dyn std::io::Write) -> std::io::Result<usize> {
    let mut failures = 0;
    for (name, check) in checks() {
        match check() {
            Ok(()) => writeln!(out, "ok   {name}")?,
            Err(msg) => {
                failures += 1;
                writeln!(out, "FAIL {name}: {msg}")?;
            }
        }
    }
    Ok(failures)
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_check_passes() {
        for (name, check) in super::checks() {
            assert_eq!(check(), Ok(()), "selftest check `{name}` failed");
        }
    }
}
