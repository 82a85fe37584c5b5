//! Compact metric graphs: a finite set of vertices joined by edges of
//! positive length, each edge identified with the interval `[0, l_e]`.
//!
//! Graphs are immutable after [`validate_graph`] and safe to share read-only
//! across solver runs. Vertex and edge ids are opaque strings from the input
//! file; internally everything is indexed by dense `usize` indices, and the
//! id ↔ index mapping is kept on the graph for traceability in reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Raw graph description as parsed from a JSON spec file.
///
/// Format: `{"vertices": ["a","b"], "edges": [{"id":"e1","from":"a","to":"b","length":4.0}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawGraph {
    pub vertices: Vec<String>,
    pub edges: Vec<RawEdge>,
}

/// One edge of a [`RawGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEdge {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
}

/// Errors detected while validating a raw graph description.
#[derive(Debug, Error)]
pub enum GraphError {
    /// An edge has zero, negative, or non-finite length.
    #[error("edge {edge_id:?} has non-positive or non-finite length {length}")]
    NonPositiveLength { edge_id: String, length: f64 },
    /// The graph has more than one connected component (or no vertices).
    #[error("graph is not connected")]
    Disconnected,
    /// An edge endpoint names a vertex that is not in the vertex list.
    #[error("edge {edge_id:?} references unknown vertex {vertex_id:?}")]
    DanglingEndpoint { edge_id: String, vertex_id: String },
    /// Two vertices or two edges share the same id.
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    /// A vertex has no incident edge (degree 0).
    #[error("vertex {vertex_id:?} has no incident edges")]
    IsolatedVertex { vertex_id: String },
}

/// One edge of a validated [`MetricGraph`], endpoints stored as dense vertex
/// indices with `a <= b` (canonical orientation: `a` is the lower index).
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    /// Index of the vertex sitting at local coordinate x = 0.
    pub a: usize,
    /// Index of the vertex sitting at local coordinate x = l.
    pub b: usize,
    pub length: f64,
}

/// A validated compact metric graph.
///
/// Invariants (established by [`validate_graph`]):
/// - every edge length is finite and positive,
/// - the graph is connected,
/// - every vertex has degree ≥ 1 (self-loops and parallel edges are allowed).
#[derive(Debug, Clone)]
pub struct MetricGraph {
    /// Vertex ids, position = dense vertex index.
    pub vertex_ids: Vec<String>,
    /// Edges in input order, position = dense edge index.
    pub edges: Vec<Edge>,
    /// `adjacency[v]` lists (edge index, end) pairs incident to vertex `v`,
    /// where `end` is 0 for the x = 0 end and 1 for the x = l end. A self-loop
    /// contributes two entries. Sorted by (edge, end) for determinism.
    pub adjacency: Vec<Vec<(usize, u8)>>,
}

/// A point on a metric graph: an edge together with a coordinate in `[0, l_e]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCoordinate {
    pub edge: usize,
    pub x: f64,
}

impl MetricGraph {
    /// Number of vertices.
    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }

    /// Number of edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Degree of vertex `v`; a self-loop counts twice.
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Dense index of the vertex with the given id, if present.
    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertex_ids.iter().position(|v| v == id)
    }

    /// Dense index of the edge with the given id, if present.
    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }
}

/// Validates a raw graph description and builds the canonical [`MetricGraph`].
///
/// Canonicalization: each edge is oriented so that its x = 0 endpoint is the
/// vertex with the lower dense index (vertex indices follow the input vertex
/// list order). Re-validating the output of this function yields an identical
/// graph.
pub fn validate_graph(raw: &RawGraph) -> Result<MetricGraph, GraphError> {
    let mut vertex_ids = Vec::with_capacity(raw.vertices.len());
    for id in &raw.vertices {
        if vertex_ids.contains(id) {
            return Err(GraphError::DuplicateId {
                kind: "vertex",
                id: id.clone(),
            });
        }
        vertex_ids.push(id.clone());
    }

    let index_of = |id: &str| vertex_ids.iter().position(|v| v == id);
    let mut edges = Vec::with_capacity(raw.edges.len());
    for e in &raw.edges {
        if edges.iter().any(|prev: &Edge| prev.id == e.id) {
            return Err(GraphError::DuplicateId {
                kind: "edge",
                id: e.id.clone(),
            });
        }
        if !(e.length > 0.0 && e.length.is_finite()) {
            return Err(GraphError::NonPositiveLength {
                edge_id: e.id.clone(),
                length: e.length,
            });
        }
        let from = index_of(&e.from).ok_or_else(|| GraphError::DanglingEndpoint {
            edge_id: e.id.clone(),
            vertex_id: e.from.clone(),
        })?;
        let to = index_of(&e.to).ok_or_else(|| GraphError::DanglingEndpoint {
            edge_id: e.id.clone(),
            vertex_id: e.to.clone(),
        })?;
        let (a, b) = if from <= to { (from, to) } else { (to, from) };
        edges.push(Edge {
            id: e.id.clone(),
            a,
            b,
            length: e.length,
        });
    }

    let mut adjacency = vec![Vec::new(); vertex_ids.len()];
    for (ei, e) in edges.iter().enumerate() {
        adjacency[e.a].push((ei, 0u8));
        adjacency[e.b].push((ei, 1u8));
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }

    for (vi, list) in adjacency.iter().enumerate() {
        if list.is_empty() {
            return Err(GraphError::IsolatedVertex {
                vertex_id: vertex_ids[vi].clone(),
            });
        }
    }

    // Connectivity by breadth-first search over the adjacency lists.
    if vertex_ids.is_empty() {
        return Err(GraphError::Disconnected);
    }
    let mut seen = vec![false; vertex_ids.len()];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for &(ei, _) in &adjacency[v] {
            let e = &edges[ei];
            for w in [e.a, e.b] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(GraphError::Disconnected);
    }

    Ok(MetricGraph {
        vertex_ids,
        edges,
        adjacency,
    })
}

/// Degree-1 vertices paired with their unique incident (terminal) edge.
///
/// Returned in vertex-index order.
pub fn terminal_vertices(g: &MetricGraph) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for v in 0..g.num_vertices() {
        if g.adjacency[v].len() == 1 {
            out.push((v, g.adjacency[v][0].0));
        }
    }
    out
}

/// Total length `|𝒢| = Σ_e l_e`.
pub fn total_length(g: &MetricGraph) -> f64 {
    g.edges.iter().map(|e| e.length).sum()
}

/// Convenience constructor for the graphs used throughout the tests and
/// experiments: an `n`-star with the given leaf edge lengths. Vertex ids are
/// `"c"` (center, index 0) and `"v1"..` (leaves); edge ids are `"e1"..`.
pub fn star_graph(leaf_lengths: &[f64]) -> Result<MetricGraph, GraphError> {
    let mut vertices = vec!["c".to_string()];
    let mut edges = Vec::new();
    for (i, &l) in leaf_lengths.iter().enumerate() {
        let leaf = format!("v{}", i + 1);
        edges.push(RawEdge {
            id: format!("e{}", i + 1),
            from: "c".to_string(),
            to: leaf.clone(),
            length: l,
        });
        vertices.push(leaf);
    }
    validate_graph(&RawGraph { vertices, edges })
}

/// Convenience constructor for a single edge `a – b` of the given length
/// (an interval graph). Vertex ids `"a"`, `"b"`; edge id `"e1"`.
pub fn interval_graph(length: f64) -> Result<MetricGraph, GraphError> {
    validate_graph(&RawGraph {
        vertices: vec!["a".to_string(), "b".to_string()],
        edges: vec![RawEdge {
            id: "e1".to_string(),
            from: "a".to_string(),
            to: "b".to_string(),
            length,
        }],
    })
}
