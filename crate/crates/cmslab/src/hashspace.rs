//! Hash-cardinality policies and simulated fully-random hash draws.
//!
//! Elements are abstract ids `0..m`. Instead of evaluating hash functions per
//! query, each element's hash values are drawn once from a seeded PRNG when
//! the hypergraph is built; the resulting edge set is the only thing the rest
//! of the pipeline looks at.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hypergraph::HashHypergraph;

/// How many hash functions each element gets.
///
/// Text form: `3` (uniform), `(3,14;0.885)` (mixed, the fraction names the
/// share of first-cardinality edges), `(2,5)` (per-class, first entry `hot`,
/// second `cold`).
#[derive(Clone, Debug, PartialEq)]
pub enum KSpec {
    /// Every element hashes `k` times.
    Uniform(u32),
    /// A fraction `alpha` of elements hash `k1` times, the rest `k2` times.
    Mixed { k1: u32, k2: u32, alpha: f64 },
    /// Cardinality chosen by class label, in declaration order.
    PerClass(Vec<(String, u32)>),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum KSpecError {
    #[error("malformed k-spec `{0}`")]
    Malformed(String),
    #[error("hash cardinality must be at least 1")]
    ZeroCardinality,
    #[error("mixed fraction {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("mixed cardinalities must differ")]
    EqualMixedCardinalities,
    #[error("unknown class label `{0}`")]
    UnknownClass(String),
    #[error("per-class k-spec requires a class label per element")]
    MissingClassLabels,
}

impl KSpec {
    /// Parses the k-spec grammar: `INT` | `( INT , INT ; FLOAT )` | `( INT , INT )`,
    /// with optional whitespace.
    pub fn parse(text: &str) -> Result<KSpec, KSpecError> {
        let malformed = || KSpecError::Malformed(text.to_string());
        let t = text.trim();
        if t.is_empty() {
            return Err(malformed());
        }
        let spec = if let Some(inner) = t.strip_prefix('(') {
            let inner = inner.strip_suffix(')').ok_or_else(malformed)?;
            let (pair, alpha) = match inner.split_once(';') {
                Some((pair, frac)) => {
                    let alpha: f64 = frac.trim().parse().map_err(|_| malformed())?;
                    (pair, Some(alpha))
                }
                None => (inner, None),
            };
            let (a, b) = pair.split_once(',').ok_or_else(malformed)?;
            let k1: u32 = a.trim().parse().map_err(|_| malformed())?;
            let k2: u32 = b.trim().parse().map_err(|_| malformed())?;
            match alpha {
                Some(alpha) => KSpec::Mixed { k1, k2, alpha },
                None => KSpec::PerClass(vec![("hot".into(), k1), ("cold".into(), k2)]),
            }
        } else {
            KSpec::Uniform(t.parse().map_err(|_| malformed())?)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KSpecError> {
        match self {
            KSpec::Uniform(k) => {
                if *k == 0 {
                    return Err(KSpecError::ZeroCardinality);
                }
            }
            KSpec::Mixed { k1, k2, alpha } => {
                if *k1 == 0 || *k2 == 0 {
                    return Err(KSpecError::ZeroCardinality);
                }
                if k1 == k2 {
                    return Err(KSpecError::EqualMixedCardinalities);
                }
                if !(0.0..=1.0).contains(alpha) || !alpha.is_finite() {
                    return Err(KSpecError::AlphaOutOfRange(*alpha));
                }
            }
            KSpec::PerClass(classes) => {
                if classes.is_empty() || classes.iter().any(|(_, k)| *k == 0) {
                    return Err(KSpecError::ZeroCardinality);
                }
            }
        }
        Ok(())
    }

    /// Largest cardinality the spec can assign; must not exceed the counter
    /// array size.
    pub fn max_cardinality(&self) -> u32 {
        match self {
            KSpec::Uniform(k) => *k,
            KSpec::Mixed { k1, k2, .. } => (*k1).max(*k2),
            KSpec::PerClass(classes) => classes.iter().map(|(_, k)| *k).max().unwrap_or(0),
        }
    }
}

impl FromStr for KSpec {
    type Err = KSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KSpec::parse(s)
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Uniform(k) => write!(f, "{k}"),
            KSpec::Mixed { k1, k2, alpha } => write!(f, "({k1},{k2};{alpha})"),
            KSpec::PerClass(classes) => {
                write!(f, "(")?;
                for (i, (_, k)) in classes.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{k}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Per-element hash cardinalities for one hypergraph draw.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgePlan {
    /// Entry `i` is how many hash values element `i` draws.
    pub cardinalities: Vec<u32>,
    /// Class label per element, when the plan came from a per-class spec.
    pub class_of: Option<Vec<String>>,
}

impl EdgePlan {
    pub fn len(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cardinalities.is_empty()
    }
}

/// Materializes per-element cardinalities for `m` elements.
///
/// Mixed specs place exactly `round(alpha * m)` (half-up) `k1` entries at
/// positions chosen by a seeded shuffle, so the class counts are identical
/// across seeds and only the assignment varies. Per-class specs require one
/// label per element.
pub fn plan_cardinalities(
    spec: &KSpec,
    m: usize,
    classes: Option<&[&str]>,
    seed: u64,
) -> Result<EdgePlan, KSpecError> {
    spec.validate()?;
    match spec {
        KSpec::Uniform(k) => Ok(EdgePlan {
            cardinalities: vec![*k; m],
            class_of: None,
        }),
        KSpec::Mixed { k1, k2, alpha } => {
            let n1 = (alpha * m as f64).round() as usize;
            let mut cardinalities = vec![*k1; n1];
            cardinalities.resize(m, *k2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            cardinalities.shuffle(&mut rng);
            Ok(EdgePlan {
                cardinalities,
                class_of: None,
            })
        }
        KSpec::PerClass(map) => {
            let labels = classes.ok_or(KSpecError::MissingClassLabels)?;
            if labels.len() != m {
                return Err(KSpecError::MissingClassLabels);
            }
            let cardinalities = labels
                .iter()
                .map(|label| {
                    map.iter()
                        .find(|(name, _)| name == label)
                        .map(|(_, k)| *k)
                        .ok_or_else(|| KSpecError::UnknownClass(label.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EdgePlan {
                cardinalities,
                class_of: Some(labels.iter().map(|s| s.to_string()).collect()),
            })
        }
    }
}

/// Draws the hash hypergraph: element `i` gets `plan.cardinalities[i]`
/// independent uniform vertices in `[0, n)`, duplicates collapsed to a set
/// (so an edge's cardinality can come out below its plan entry).
/// Deterministic in `(n, plan, seed)`.
///
/// # Panics
///
/// Panics if `n == 0`, any planned cardinality is `0`, or any exceeds `n`.
pub fn build_hypergraph(n: usize, plan: &EdgePlan, seed: u64) -> HashHypergraph {
    assert!(n >= 1, "hypergraph needs at least one vertex");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch: Vec<u32> = Vec::new();
    let edges = plan.cardinalities.iter().map(|&k| {
        assert!(k >= 1, "edge cardinality must be at least 1");
        assert!(
            (k as usize) <= n,
            "edge cardinality {k} exceeds vertex count {n}"
        );
        scratch.clear();
        for _ in 0..k {
            scratch.push(rng.random_range(0..n as u32));
        }
        scratch.sort_unstable();
        scratch.dedup();
        scratch.clone()
    });
    // Collecting up front keeps the RNG consumption order independent of how
    // the graph constructor traverses the edges.
    let edges: Vec<Vec<u32>> = edges.collect();
    HashHypergraph::new(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_uniform() {
        assert_eq!(KSpec::parse("3").unwrap(), KSpec::Uniform(3));
        assert_eq!(KSpec::parse(" 7 ").unwrap(), KSpec::Uniform(7));
    }

    #[test]
    fn parse_mixed() {
        assert_eq!(
            KSpec::parse("(3,14;0.885)").unwrap(),
            KSpec::Mixed {
                k1: 3,
                k2: 14,
                alpha: 0.885
            }
        );
        assert_eq!(
            KSpec::parse("( 1 , 3 ; 0.8 )").unwrap(),
            KSpec::Mixed {
                k1: 1,
                k2: 3,
                alpha: 0.8
            }
        );
    }

    #[test]
    fn parse_per_class() {
        assert_eq!(
            KSpec::parse("(2,5)").unwrap(),
            KSpec::PerClass(vec![("hot".into(), 2), ("cold".into(), 5)])
        );
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert_eq!(
            KSpec::parse("(2,5;1.5)"),
            Err(KSpecError::AlphaOutOfRange(1.5))
        );
        assert_eq!(KSpec::parse("0"), Err(KSpecError::ZeroCardinality));
        assert_eq!(KSpec::parse("(0,5;0.5)"), Err(KSpecError::ZeroCardinality));
        assert_eq!(
            KSpec::parse("(2,2;0.5)"),
            Err(KSpecError::EqualMixedCardinalities)
        );
        for bad in [
            "", "  ", "(2,5", "2,5)", "(2;5)", "x", "3.5", "-1", "(1,2;x)",
        ] {
            assert!(
                matches!(KSpec::parse(bad), Err(KSpecError::Malformed(_))),
                "expected malformed: {bad:?}"
            );
        }
    }

    #[test]
    fn display_round_trips() {
        for text in ["3", "(3,14;0.885)", "(2,5)", "(1,3;0.8)"] {
            let spec = KSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(KSpec::parse(&spec.to_string()).unwrap(), spec);
        }
    }

    #[test]
    fn plan_uniform() {
        let plan = plan_cardinalities(&KSpec::Uniform(2), 4, None, 0).unwrap();
        assert_eq!(plan.cardinalities, vec![2, 2, 2, 2]);
        assert_eq!(plan.class_of, None);
    }

    #[test]
    fn plan_mixed_has_exact_counts() {
        let spec = KSpec::Mixed {
            k1: 1,
            k2: 3,
            alpha: 0.8,
        };
        let plan = plan_cardinalities(&spec, 10, None, 7).unwrap();
        assert_eq!(plan.cardinalities.iter().filter(|&&k| k == 1).count(), 8);
        assert_eq!(plan.cardinalities.iter().filter(|&&k| k == 3).count(), 2);
    }

    #[test]
    fn plan_per_class_maps_labels() {
        let spec = KSpec::PerClass(vec![("hot".into(), 2), ("cold".into(), 5)]);
        let plan = plan_cardinalities(&spec, 3, Some(&["hot", "cold", "cold"]), 0).unwrap();
        assert_eq!(plan.cardinalities, vec![2, 5, 5]);
        assert_eq!(
            plan.class_of,
            Some(vec!["hot".into(), "cold".into(), "cold".into()])
        );
    }

    #[test]
    fn plan_per_class_rejects_unknown_label() {
        let spec = KSpec::PerClass(vec![("hot".into(), 2)]);
        assert_eq!(
            plan_cardinalities(&spec, 1, Some(&["tepid"]), 0),
            Err(KSpecError::UnknownClass("tepid".into()))
        );
        assert_eq!(
            plan_cardinalities(&spec, 1, None, 0),
            Err(KSpecError::MissingClassLabels)
        );
    }

    #[test]
    fn single_vertex_edge() {
        let plan = EdgePlan {
            cardinalities: vec![1],
            class_of: None,
        };
        let graph = build_hypergraph(5, &plan, 3);
        assert_eq!(graph.edge_count(), 1);
        assert_eq!(graph.edge(0).len(), 1);
        assert!(graph.edge(0)[0] < 5);
    }

    #[test]
    fn expected_load_factor() {
        let plan = EdgePlan {
            cardinalities: vec![3; 818],
            class_of: None,
        };
        let graph = build_hypergraph(1000, &plan, 11);
        assert_eq!(graph.load_factor(), 0.818);
    }

    /// Re-derives the raw hash draws with the same PRNG and checks the edge
    /// is exactly their sorted dedup; scans seeds until a duplicate draw
    /// actually occurs so the collapse path is exercised.
    #[test]
    fn duplicate_draws_collapse() {
        let plan = EdgePlan {
            cardinalities: vec![2],
            class_of: None,
        };
        let mut saw_collapse = false;
        for seed in 0..64 {
            let graph = build_hypergraph(2, &plan, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draws = vec![rng.random_range(0..2u32), rng.random_range(0..2u32)];
            draws.sort_unstable();
            draws.dedup();
            assert_eq!(graph.edge(0), &draws[..]);
            if draws.len() == 1 {
                saw_collapse = true;
            }
        }
        assert!(saw_collapse, "no seed in range produced a duplicate draw");
    }

    proptest! {
        #[test]
        fn mixed_counts_match_round_half_up(
            m in 0usize..500,
            alpha in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let spec = KSpec::Mixed { k1: 2, k2: 5, alpha };
            let plan = plan_cardinalities(&spec, m, None, seed).unwrap();
            let expected = (alpha * m as f64).round() as usize;
            prop_assert_eq!(
                plan.cardinalities.iter().filter(|&&k| k == 2).count(),
                expected
            );
            prop_assert_eq!(plan.len(), m);
        }

        #[test]
        fn hypergraph_is_deterministic_and_well_formed(
            n in 1usize..60,
            m in 0usize..40,
            seed in any::<u64>(),
        ) {
            let k = 3.min(n as u32);
            let plan = plan_cardinalities(&KSpec::Uniform(k), m, None, seed).unwrap();
            let a = build_hypergraph(n, &plan, seed);
            let b = build_hypergraph(n, &plan, seed);
            prop_assert_eq!(a.edge_count(), m);
            for i in 0..m {
                prop_assert_eq!(a.edge(i), b.edge(i));
                prop_assert!(!a.edge(i).is_empty());
                prop_assert!(a.edge(i).iter().all(|&v| (v as usize) < n));
            }
        }
    }
}
