//! Hash hypergraphs and the peeling process.
//!
//! One vertex per counter, one edge per distinct element (the set of counter
//! indices the element hashes to). Peeling repeatedly deletes a vertex of
//! degree <= 1 together with its incident edge, if any; a graph is peelable
//! when this empties the edge set.

/// Asymptotic peelability thresholds for uniformly random k-uniform
/// hypergraphs, as reported in the random-hypergraph literature (Molloy-type
/// core analysis). Stored for reference and checked empirically by the test
/// suite, never computed here.
pub const PEEL_THRESHOLD_2_UNIFORM: f64 = 0.5;
pub const PEEL_THRESHOLD_3_UNIFORM: f64 = 0.818;
pub const PEEL_THRESHOLD_4_UNIFORM: f64 = 0.772;
/// Threshold for mixed edge cardinalities (3,14) with a 0.885 fraction of
/// 3-edges (Rink's mixed-hypergraph construction).
pub const PEEL_THRESHOLD_MIXED_3_14: f64 = 0.898;
/// Threshold for mixed edge cardinalities (3,21) with a 0.887 fraction of
/// 3-edges.
pub const PEEL_THRESHOLD_MIXED_3_21: f64 = 0.920;

/// Immutable hypergraph over vertices `0..n`, edges stored back to back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashHypergraph {
    n: usize,
    offsets: Vec<u32>,
    vertices: Vec<u32>,
}

impl HashHypergraph {
    /// Builds a graph from explicit edges. Edges are normalized to sorted
    /// vertex sets.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`, an edge is empty, or a vertex index is out of
    /// range.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Vec<u32>>) -> Self {
        assert!(n >= 1, "hypergraph needs at least one vertex");
        let mut offsets = vec![0u32];
        let mut vertices = Vec::new();
        for mut edge in edges {
            assert!(!edge.is_empty(), "edges must be nonempty");
            edge.sort_unstable();
            edge.dedup();
            assert!(
                (edge[edge.len() - 1] as usize) < n,
                "vertex index out of range"
            );
            vertices.extend_from_slice(&edge);
            offsets.push(vertices.len() as u32);
        }
        HashHypergraph {
            n,
            offsets,
            vertices,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Vertex set of edge `i`, ascending.
    #[inline]
    pub fn edge(&self, i: usize) -> &[u32] {
        &self.vertices[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.edge_count()).map(move |i| self.edge(i))
    }

    /// Load factor `m / n`.
    pub fn load_factor(&self) -> f64 {
        self.edge_count() as f64 / self.n as f64
    }

    /// Debug dump: one edge per line, space-separated vertex indices,
    /// ascending within a line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for edge in self.edges() {
            let mut first = true;
            for v in edge {
                if !first {
                    out.push(' ');
                }
                out.push_str(&v.to_string());
                first = false;
            }
            out.push('\n');
        }
        out
    }
}

/// Outcome of peeling: removal order, surviving edges, and how many removals
/// preceded each peeled edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeelReport {
    /// Edge indices in removal order.
    pub peel_order: Vec<usize>,
    /// Edges never removed, ascending.
    pub residual: Vec<usize>,
    /// `depth[e]` = number of edges removed strictly before `e`, i.e. its
    /// position in `peel_order`; `None` for residual edges.
    pub depth: Vec<Option<usize>>,
}

impl PeelReport {
    pub fn is_fully_peeled(&self) -> bool {
        self.residual.is_empty()
    }
}

/// Queue-based peel in O(sum of edge sizes) total work.
///
/// Vertices of degree <= 1 are discovered by an ascending initial scan and
/// processed FIFO afterwards; when an edge is removed its surviving vertices
/// are examined in ascending order. The residual edge set does not depend on
/// this order (peeling is confluent), only `peel_order`/`depth` do.
pub fn peel(graph: &HashHypergraph) -> PeelReport {
    let n = graph.vertex_count();
    let m = graph.edge_count();

    let mut degree = vec![0u32; n];
    for edge in graph.edges() {
        for &v in edge {
            degree[v as usize] += 1;
        }
    }
    // Incidence lists in CSR form.
    let mut inc_offsets = vec![0u32; n + 1];
    for edge in graph.edges() {
        for &v in edge {
            inc_offsets[v as usize + 1] += 1;
        }
    }
    for i in 0..n {
        inc_offsets[i + 1] += inc_offsets[i];
    }
    let mut inc = vec![0u32; inc_offsets[n] as usize];
    let mut cursor = inc_offsets.clone();
    for (e, edge) in graph.edges().enumerate() {
        for &v in edge {
            inc[cursor[v as usize] as usize] = e as u32;
            cursor[v as usize] += 1;
        }
    }

    let mut edge_alive = vec![true; m];
    let mut vertex_done = vec![false; n];
    let mut queue: std::collections::VecDeque<u32> =
        (0..n as u32).filter(|&v| degree[v as usize] <= 1).collect();
    let mut peel_order = Vec::new();

    while let Some(v) = queue.pop_front() {
        let v = v as usize;
        if vertex_done[v] {
            continue;
        }
        vertex_done[v] = true;
        let live_edge = inc[inc_offsets[v] as usize..inc_offsets[v + 1] as usize]
            .iter()
            .copied()
            .find(|&e| edge_alive[e as usize]);
        let Some(e) = live_edge else {
            continue; // degree 0 by now: delete the vertex alone
        };
        edge_alive[e as usize] = false;
        peel_order.push(e as usize);
        for &w in graph.edge(e as usize) {
            let w = w as usize;
            degree[w] -= 1;
            if !vertex_done[w] && degree[w] <= 1 {
                queue.push_back(w as u32);
            }
        }
    }

    let mut depth = vec![None; m];
    for (pos, &e) in peel_order.iter().enumerate() {
        depth[e] = Some(pos);
    }
    let residual = (0..m).filter(|&e| edge_alive[e]).collect();
    PeelReport {
        peel_order,
        residual,
        depth,
    }
}

/// True when peeling empties the edge set.
pub fn is_peelable(graph: &HashHypergraph) -> bool {
    peel(graph).is_fully_peeled()
}
