//! Counter array with basic and conservative update disciplines.

use std::fmt::Write as _;

use thiserror::Error;

use crate::hypergraph::HashHypergraph;

/// Update discipline applied on insertion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Discipline {
    /// Every counter of the edge is incremented.
    Basic,
    /// Only the counters currently equal to the edge minimum are incremented
    /// (all ties included).
    Conservative,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("counter array must have at least one counter")]
pub struct EmptySketch;

/// Count-min counter array. Estimates never undercount; the conservative
/// discipline only tightens them.
#[derive(Clone, Debug)]
pub struct Sketch {
    discipline: Discipline,
    counters: Vec<u64>,
    insertions: u64,
}

impl Sketch {
    pub fn new(n: usize, discipline: Discipline) -> Result<Sketch, EmptySketch> {
        if n == 0 {
            return Err(EmptySketch);
        }
        Ok(Sketch {
            discipline,
            counters: vec![0; n],
            insertions: 0,
        })
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    /// Number of insertions processed so far.
    pub fn insertions_processed(&self) -> u64 {
        self.insertions
    }

    /// Inserts one occurrence of the element whose hash positions are `edge`.
    /// Under either discipline the element's own estimate grows by exactly 1.
    ///
    /// # Panics
    ///
    /// Panics on an empty edge, an out-of-range index, or counter overflow
    /// (the last is unreachable at sane stream lengths and treated as fatal).
    #[inline]
    pub fn insert(&mut self, edge: &[u32]) {
        assert!(!edge.is_empty(), "edges must be nonempty");
        match self.discipline {
            Discipline::Basic => {
                for &v in edge {
                    bump(&mut self.counters[v as usize]);
                }
            }
            Discipline::Conservative => {
                let mut min = u64::MAX;
                for &v in edge {
                    min = min.min(self.counters[v as usize]);
                }
                for &v in edge {
                    let c = &mut self.counters[v as usize];
                    if *c == min {
                        bump(c);
                    }
                }
            }
        }
        self.insertions += 1;
    }

    /// Point query: minimum counter over the edge. Read-only.
    #[inline]
    pub fn estimate(&self, edge: &[u32]) -> u64 {
        edge.iter()
            .map(|&v| self.counters[v as usize])
            .min()
            .expect("edges must be nonempty")
    }

    /// Counter dump: one `index,value` line per counter.
    pub fn dump_counters(&self) -> String {
        let mut out = String::new();
        for (i, c) in self.counters.iter().enumerate() {
            writeln!(out, "{i},{c}").unwrap();
        }
        out
    }
}

#[inline]
fn bump(counter: &mut u64) {
    *counter = counter.checked_add(1).expect("sketch counter overflow");
}

/// Feeds a stream of element ids through the sketch, inserting each id's
/// edge, and returns the per-element occurrence tallies.
///
/// # Panics
///
/// Panics if an id is outside `0..graph.edge_count()`.
pub fn run_stream(
    sketch: &mut Sketch,
    graph: &HashHypergraph,
    stream: impl IntoIterator<Item = u32>,
) -> Vec<u64> {
    let mut occurrences = vec![0u64; graph.edge_count()];
    for id in stream {
        occurrences[id as usize] += 1;
        sketch.insert(graph.edge(id as usize));
    }
    occurrences
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sketch_with(discipline: Discipline, counters: &[u64]) -> Sketch {
        // Reach a target state through the public API with single-vertex
        // edges; both disciplines agree on those.
        let mut s = Sketch::new(counters.len(), discipline).unwrap();
        for (i, &c) in counters.iter().enumerate() {
            for _ in 0..c {
                s.insert(&[i as u32]);
            }
        }
        assert_eq!(s.counters(), counters);
        s
    }

    #[test]
    fn new_sketch_is_zeroed() {
        let s = Sketch::new(3, Discipline::Conservative).unwrap();
        assert_eq!(s.counters(), &[0, 0, 0]);
        assert_eq!(s.insertions_processed(), 0);
        let s = Sketch::new(1, Discipline::Basic).unwrap();
        assert_eq!(s.counters(), &[0]);
        assert_eq!(Sketch::new(0, Discipline::Basic).unwrap_err(), EmptySketch);
    }

    #[test]
    fn conservative_increments_all_tied_minima() {
        let mut s = Sketch::new(3, Discipline::Conservative).unwrap();
        s.insert(&[0, 1]);
        assert_eq!(s.counters(), &[1, 1, 0]);
    }

    #[test]
    fn conservative_increments_only_the_minimum() {
        let mut s = sketch_with(Discipline::Conservative, &[2, 1, 0]);
        s.insert(&[0, 2]);
        assert_eq!(s.counters(), &[2, 1, 1]);
    }

    #[test]
    fn basic_increments_every_position() {
        let mut s = sketch_with(Discipline::Basic, &[2, 1, 0]);
        s.insert(&[0, 2]);
        assert_eq!(s.counters(), &[3, 1, 1]);
    }

    #[test]
    fn estimate_is_edge_minimum() {
        let s = sketch_with(Discipline::Conservative, &[3, 1, 2]);
        assert_eq!(s.estimate(&[0, 2]), 2);
        let fresh = Sketch::new(4, Discipline::Basic).unwrap();
        assert_eq!(fresh.estimate(&[1, 3]), 0);
    }

    #[test]
    fn own_estimate_tracks_own_insertions() {
        let mut s = Sketch::new(4, Discipline::Conservative).unwrap();
        s.insert(&[0, 1]);
        s.insert(&[0, 1]);
        assert_eq!(s.estimate(&[0, 1]), 2);
    }

    #[test]
    fn empty_stream_changes_nothing() {
        let graph = HashHypergraph::new(3, vec![vec![0], vec![1, 2]]);
        let mut s = Sketch::new(3, Discipline::Conservative).unwrap();
        let occ = run_stream(&mut s, &graph, std::iter::empty());
        assert_eq!(occ, vec![0, 0]);
        assert_eq!(s.counters(), &[0, 0, 0]);
        assert_eq!(s.insertions_processed(), 0);
    }

    #[test]
    fn disjoint_edges_stay_exact() {
        let graph = HashHypergraph::new(4, vec![vec![0, 1], vec![2, 3]]);
        let mut s = Sketch::new(4, Discipline::Conservative).unwrap();
        let occ = run_stream(&mut s, &graph, vec![0, 0, 1]);
        assert_eq!(occ, vec![2, 1]);
        assert_eq!(s.estimate(graph.edge(0)), 2);
        assert_eq!(s.estimate(graph.edge(1)), 1);
        assert_eq!(s.insertions_processed(), 3);
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn out_of_range_id_is_fatal() {
        let graph = HashHypergraph::new(2, vec![vec![0]]);
        let mut s = Sketch::new(2, Discipline::Basic).unwrap();
        run_stream(&mut s, &graph, vec![1]);
    }

    #[test]
    fn dump_counters_format() {
        let s = sketch_with(Discipline::Basic, &[0, 7]);
        assert_eq!(s.dump_counters(), "0,0\n1,7\n");
    }

    /// Random small instance: n vertices, m edges with cardinalities 1..=3,
    /// plus a stream over the edges.
    fn small_instance(seed: u64) -> (HashHypergraph, Vec<u32>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=20usize);
        let m = rng.random_range(1..=15usize);
        let edges: Vec<Vec<u32>> = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=3.min(n));
                (0..k).map(|_| rng.random_range(0..n as u32)).collect()
            })
            .collect();
        let len = rng.random_range(0..=200usize);
        let stream = (0..len).map(|_| rng.random_range(0..m as u32)).collect();
        (HashHypergraph::new(n, edges), stream)
    }

    proptest! {
        #[test]
        fn never_underestimates(seed in any::<u64>()) {
            for discipline in [Discipline::Basic, Discipline::Conservative] {
                let (graph, stream) = small_instance(seed);
                let mut s = Sketch::new(graph.vertex_count(), discipline).unwrap();
                let occ = run_stream(&mut s, &graph, stream.iter().copied());
                for (e, &o) in occ.iter().enumerate() {
                    if o >= 1 {
                        prop_assert!(s.estimate(graph.edge(e)) >= o);
                    }
                }
            }
        }

        #[test]
        fn conservative_dominated_by_basic_pointwise(seed in any::<u64>()) {
            let (graph, stream) = small_instance(seed);
            let mut cons = Sketch::new(graph.vertex_count(), Discipline::Conservative).unwrap();
            let mut base = Sketch::new(graph.vertex_count(), Discipline::Basic).unwrap();
            for &id in &stream {
                cons.insert(graph.edge(id as usize));
                base.insert(graph.edge(id as usize));
                for (c, b) in cons.counters().iter().zip(base.counters()) {
                    prop_assert!(c <= b);
                }
            }
            for edge in graph.edges() {
                prop_assert!(cons.estimate(edge) <= base.estimate(edge));
            }
        }

        #[test]
        fn single_hash_disciplines_coincide(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..=10usize);
            let m = rng.random_range(1..=10usize);
            let edges: Vec<Vec<u32>> =
                (0..m).map(|_| vec![rng.random_range(0..n as u32)]).collect();
            let graph = HashHypergraph::new(n, edges);
            let stream: Vec<u32> =
                (0..150).map(|_| rng.random_range(0..m as u32)).collect();
            let mut cons = Sketch::new(n, Discipline::Conservative).unwrap();
            let mut base = Sketch::new(n, Discipline::Basic).unwrap();
            run_stream(&mut cons, &graph, stream.iter().copied());
            run_stream(&mut base, &graph, stream.iter().copied());
            prop_assert_eq!(cons.counters(), base.counters());
        }

        #[test]
        fn per_insertion_increment_counts(seed in any::<u64>()) {
            let (graph, stream) = small_instance(seed);
            for discipline in [Discipline::Basic, Discipline::Conservative] {
                let mut s = Sketch::new(graph.vertex_count(), discipline).unwrap();
                let mut prev_total: u64 = 0;
                for &id in &stream {
                    let edge = graph.edge(id as usize);
                    let before = s.estimate(edge);
                    s.insert(edge);
                    prop_assert_eq!(s.estimate(edge), before + 1);
                    let total: u64 = s.counters().iter().sum();
                    let delta = total - prev_total;
                    prev_total = total;
                    match discipline {
                        Discipline::Basic => prop_assert_eq!(delta, edge.len() as u64),
                        Discipline::Conservative => {
                            prop_assert!(delta >= 1 && delta <= edge.len() as u64)
                        }
                    }
                }
            }
        }
    }
}
