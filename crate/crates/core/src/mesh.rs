//! P1 finite-element discretization on a metric graph.
//!
//! Each edge carries a uniform mesh; the two end nodes of every edge share the
//! degree of freedom of the vertex they sit on, which encodes C⁰ continuity
//! across vertices. Kirchhoff conditions are never imposed: they are natural
//! in the weak form.
//!
//! Global dof layout (interior-major, vertices last):
//!
//! ```text
//! edge 0 interiors | edge 1 interiors | ... | vertex dofs
//!  0 .. m_0          m_0 .. m_0+m_1          num_interior .. num_interior+|V|
//! ```
//!
//! With this ordering every assembled bilinear form is "tridiagonal plus
//! arrow": a block-diagonal family of per-edge tridiagonal interior blocks,
//! a sparse interior↔vertex coupling (≤ 2 entries per edge), and a small dense
//! vertex block. [`SparseOperator`] stores exactly these pieces, and the
//! structured solver in [`crate::linalg`] factors them in O(n).

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{EdgeCoordinate, MetricGraph};
use crate::quad::{GAUSS4_NODES, GAUSS4_WEIGHTS};

/// Errors from mesh construction and point evaluation.
#[derive(Debug, Error)]
pub enum MeshError {
    /// The requested mesh width is not a positive finite number.
    #[error("h_target must be positive and finite, got {0}")]
    NonPositiveH(f64),
    /// An edge would receive fewer than 2 nodes. Unreachable with the node
    /// formula `max(2, ceil(l/h)+1)`; the guard is kept for defense in depth.
    #[error("h_target too large: edge {edge_id:?} would receive fewer than 2 nodes")]
    HTooLarge { edge_id: String },
    /// Refinement limit: an edge would receive an absurd number of nodes.
    #[error("edge {edge_id:?} would need {requested:.3e} nodes (limit {limit})")]
    TooManyNodes {
        edge_id: String,
        requested: f64,
        limit: usize,
    },
    /// An evaluation coordinate lies outside its edge or names a bad edge.
    #[error("coordinate x = {x} outside edge index {edge} (length {length})")]
    OutOfRange { edge: usize, x: f64, length: f64 },
}

/// Hard cap on per-edge node counts (≈ 5·10⁷ dofs on one edge).
const MAX_NODES_PER_EDGE: usize = 50_000_000;

/// A per-edge uniform P1 mesh over a metric graph with shared vertex dofs.
#[derive(Debug)]
pub struct Mesh {
    pub graph: Arc<MetricGraph>,
    /// Node count per edge, each ≥ 2 (the two edge-end nodes).
    pub nodes_per_edge: Vec<usize>,
    /// Uniform element width per edge: `h_e = l_e / (n_e - 1)`.
    pub edge_h: Vec<f64>,
    /// Start of each edge's interior-dof range; edge `e` owns global dofs
    /// `interior_offset[e] .. interior_offset[e] + (n_e - 2)`.
    pub interior_offset: Vec<usize>,
    /// Total number of interior dofs, `Σ_e (n_e - 2)`.
    pub num_interior: usize,
}

impl Mesh {
    /// Total dof count: `Σ_e (n_e − 2) + |V|`.
    pub fn num_dofs(&self) -> usize {
        self.num_interior + self.graph.num_vertices()
    }

    /// Global dof of vertex `v`.
    pub fn vertex_dof(&self, v: usize) -> usize {
        self.num_interior + v
    }

    /// Global dof of local node `k` (0-based, `0 ≤ k < n_e`) on edge `e`.
    /// Node 0 is the vertex at x = 0, node `n_e − 1` the vertex at x = l_e.
    pub fn dof(&self, e: usize, k: usize) -> usize {
        let n = self.nodes_per_edge[e];
        debug_assert!(k < n);
        if k == 0 {
            self.vertex_dof(self.graph.edges[e].a)
        } else if k == n - 1 {
            self.vertex_dof(self.graph.edges[e].b)
        } else {
            self.interior_offset[e] + k - 1
        }
    }

    /// Largest element width over all edges.
    pub fn max_h(&self) -> f64 {
        self.edge_h.iter().cloned().fold(0.0, f64::max)
    }
}

/// Builds a uniform per-edge mesh with `n_e = max(2, ceil(l_e/h_target) + 1)`
/// nodes on each edge, guaranteeing `h_e ≤ h_target` everywhere.
pub fn build_mesh(graph: &Arc<MetricGraph>, h_target: f64) -> Result<Mesh, MeshError> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(MeshError::NonPositiveH(h_target));
    }
    let mut nodes_per_edge = Vec::with_capacity(graph.num_edges());
    let mut edge_h = Vec::with_capacity(graph.num_edges());
    let mut interior_offset = Vec::with_capacity(graph.num_edges());
    let mut num_interior = 0usize;
    for edge in &graph.edges {
        let raw = (edge.length / h_target).ceil() + 1.0;
        if raw > MAX_NODES_PER_EDGE as f64 {
            return Err(MeshError::TooManyNodes {
                edge_id: edge.id.clone(),
                requested: raw,
                limit: MAX_NODES_PER_EDGE,
            });
        }
        let n = (raw as usize).max(2);
        if n < 2 {
            return Err(MeshError::HTooLarge {
                edge_id: edge.id.clone(),
            });
        }
        nodes_per_edge.push(n);
        edge_h.push(edge.length / (n - 1) as f64);
        interior_offset.push(num_interior);
        num_interior += n - 2;
    }
    Ok(Mesh {
        graph: Arc::clone(graph),
        nodes_per_edge,
        edge_h,
        interior_offset,
        num_interior,
    })
}

/// Nodal values of a P1 function on a mesh. Continuity at vertices holds by
/// construction because edge-end nodes share the vertex dof.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl DiscreteFunction {
    /// The zero function.
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        DiscreteFunction {
            mesh: Arc::clone(mesh),
            values: vec![0.0; mesh.num_dofs()],
        }
    }

    /// Wraps an existing coefficient vector (must have `num_dofs` entries).
    pub fn from_values(mesh: &Arc<Mesh>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.num_dofs());
        DiscreteFunction {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    /// Nodal interpolation of `f(edge, x_local)`. At a vertex the values of
    /// all incident edge ends are averaged; for functions continuous on the
    /// graph they agree and the average is exact.
    pub fn interpolate(mesh: &Arc<Mesh>, f: impl Fn(usize, f64) -> f64) -> Self {
        let mut values = vec![0.0; mesh.num_dofs()];
        for e in 0..mesh.graph.num_edges() {
            let n = mesh.nodes_per_edge[e];
            let h = mesh.edge_h[e];
            for k in 1..n - 1 {
                values[mesh.dof(e, k)] = f(e, k as f64 * h);
            }
        }
        for v in 0..mesh.graph.num_vertices() {
            let ends = &mesh.graph.adjacency[v];
            let mut acc = 0.0;
            for &(e, end) in ends {
                let x = if end == 0 {
                    0.0
                } else {
                    mesh.graph.edges[e].length
                };
                acc += f(e, x);
            }
            values[mesh.vertex_dof(v)] = acc / ends.len() as f64;
        }
        DiscreteFunction {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    /// Maximum nodal value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl serde::Serialize for DiscreteFunction {
    /// Serializes as the bare coefficient vector; the mesh travels separately
    /// in the record's mesh summary.
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.values.iter())
    }
}

/// Re-interpolates `u` onto another mesh over the same graph (nodal values of
/// the piecewise-linear interpolant; exact when the meshes coincide).
pub fn transfer(u: &DiscreteFunction, target: &Arc<Mesh>) -> DiscreteFunction {
    DiscreteFunction::interpolate(target, |e, x| {
        let l = target.graph.edges[e].length;
        evaluate(
            u,
            EdgeCoordinate {
                edge: e,
                x: x.clamp(0.0, l),
            },
        )
        .expect("transfer requires meshes over the same graph")
    })
}

/// Piecewise-linear evaluation of `u` at a point of the graph.
pub fn evaluate(u: &DiscreteFunction, at: EdgeCoordinate) -> Result<f64, MeshError> {
    let mesh = &u.mesh;
    if at.edge >= mesh.graph.num_edges() {
        return Err(MeshError::OutOfRange {
            edge: at.edge,
            x: at.x,
            length: f64::NAN,
        });
    }
    let l = mesh.graph.edges[at.edge].length;
    if !(0.0..=l).contains(&at.x) || at.x.is_nan() {
        return Err(MeshError::OutOfRange {
            edge: at.edge,
            x: at.x,
            length: l,
        });
    }
    let h = mesh.edge_h[at.edge];
    let n = mesh.nodes_per_edge[at.edge];
    let k = ((at.x / h).floor() as usize).min(n - 2);
    let t = (at.x - k as f64 * h) / h;
    let v0 = u.values[mesh.dof(at.edge, k)];
    let v1 = u.values[mesh.dof(at.edge, k + 1)];
    Ok((1.0 - t) * v0 + t * v1)
}

/// Symmetric sparse operator in global dof indexing, stored in the
/// "tridiagonal + arrow" blocks induced by the mesh layout:
///
/// - per-edge tridiagonal interior blocks (`int_diag`, `int_off`),
/// - one coupling entry from each edge's first/last interior node to the
///   vertex dof at its x = 0 / x = l end (`couple_a`, `couple_b`),
/// - a dense symmetric vertex block.
///
/// Edges with 2 nodes have no interior dofs; their element couples two vertex
/// dofs directly and lands in the vertex block.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub mesh: Arc<Mesh>,
    pub int_diag: Vec<Vec<f64>>,
    pub int_off: Vec<Vec<f64>>,
    pub couple_a: Vec<f64>,
    pub couple_b: Vec<f64>,
    pub vertex_block: DMatrix<f64>,
}

impl SparseOperator {
    /// The zero operator on `mesh`.
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        let ne = mesh.graph.num_edges();
        let nv = mesh.graph.num_vertices();
        SparseOperator {
            mesh: Arc::clone(mesh),
            int_diag: (0..ne)
                .map(|e| vec![0.0; mesh.nodes_per_edge[e] - 2])
                .collect(),
            int_off: (0..ne)
                .map(|e| vec![0.0; (mesh.nodes_per_edge[e] - 2).saturating_sub(1)])
                .collect(),
            couple_a: vec![0.0; ne],
            couple_b: vec![0.0; ne],
            vertex_block: DMatrix::zeros(nv, nv),
        }
    }

    /// Matrix dimension (= dof count).
    pub fn dim(&self) -> usize {
        self.mesh.num_dofs()
    }

    /// Adds the symmetric 2×2 element contribution for local nodes
    /// `(k, k+1)` of edge `e`: diagonal terms `d0`, `d1` and the symmetric
    /// off-diagonal term `o`.
    fn add_element(&mut self, e: usize, k: usize, d0: f64, d1: f64, o: f64) {
        self.add_diag(e, k, d0);
        self.add_diag(e, k + 1, d1);
        let n = self.mesh.nodes_per_edge[e];
        let m = n - 2;
        if k == 0 && k + 1 == n - 1 {
            // 2-node edge: both ends are vertex dofs (possibly the same one
            // for a self-loop; the double add then yields the correct 2o).
            let (a, b) = {
                let edge = &self.mesh.graph.edges[e];
                (edge.a, edge.b)
            };
            self.vertex_block[(a, b)] += o;
            self.vertex_block[(b, a)] += o;
        } else if k == 0 {
            self.couple_a[e] += o;
        } else if k + 1 == n - 1 {
            self.couple_b[e] += o;
        } else {
            debug_assert!(k >= 1 && k - 1 < m - 1);
            self.int_off[e][k - 1] += o;
        }
    }

    fn add_diag(&mut self, e: usize, k: usize, v: f64) {
        let n = self.mesh.nodes_per_edge[e];
        if k == 0 {
            let a = self.mesh.graph.edges[e].a;
            self.vertex_block[(a, a)] += v;
        } else if k == n - 1 {
            let b = self.mesh.graph.edges[e].b;
            self.vertex_block[(b, b)] += v;
        } else {
            self.int_diag[e][k - 1] += v;
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let mesh = &self.mesh;
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        y.fill(0.0);
        let nint = mesh.num_interior;
        for e in 0..mesh.graph.num_edges() {
            let m = mesh.nodes_per_edge[e] - 2;
            if m == 0 {
                continue;
            }
            let base = mesh.interior_offset[e];
            let d = &self.int_diag[e];
            let o = &self.int_off[e];
            for i in 0..m {
                y[base + i] += d[i] * x[base + i];
            }
            for i in 0..m - 1 {
                y[base + i] += o[i] * x[base + i + 1];
                y[base + i + 1] += o[i] * x[base + i];
            }
            let edge = &mesh.graph.edges[e];
            let (da, db) = (nint + edge.a, nint + edge.b);
            y[base] += self.couple_a[e] * x[da];
            y[da] += self.couple_a[e] * x[base];
            y[base + m - 1] += self.couple_b[e] * x[db];
            y[db] += self.couple_b[e] * x[base + m - 1];
        }
        let nv = mesh.graph.num_vertices();
        for i in 0..nv {
            let mut acc = 0.0;
            for j in 0..nv {
                acc += self.vertex_block[(i, j)] * x[nint + j];
            }
            y[nint + i] += acc;
        }
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| a * b).sum()
    }

    /// Linear combination `Σ c_i · A_i` of operators on the same mesh.
    pub fn combine(terms: &[(f64, &SparseOperator)]) -> SparseOperator {
        assert!(!terms.is_empty());
        let mut out = SparseOperator::zeros(&terms[0].1.mesh);
        for &(c, op) in terms {
            assert!(Arc::ptr_eq(&out.mesh, &op.mesh), "operators on different meshes");
            for e in 0..out.int_diag.len() {
                for (dst, src) in out.int_diag[e].iter_mut().zip(&op.int_diag[e]) {
                    *dst += c * src;
                }
                for (dst, src) in out.int_off[e].iter_mut().zip(&op.int_off[e]) {
                    *dst += c * src;
                }
                out.couple_a[e] += c * op.couple_a[e];
                out.couple_b[e] += c * op.couple_b[e];
            }
            out.vertex_block += c * &op.vertex_block;
        }
        out
    }

    /// Dense copy, for tests and small reference computations.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for j in 0..n {
            x[j] = 1.0;
            self.matvec(&x, &mut y);
            for i in 0..n {
                a[(i, j)] = y[i];
            }
            x[j] = 0.0;
        }
        a
    }
}

/// Assembles the stiffness matrix `K_ij = ∫𝒢 φ_i′ φ_j′`.
pub fn assemble_stiffness(mesh: &Arc<Mesh>) -> SparseOperator {
    let mut op = SparseOperator::zeros(mesh);
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        let (d, o) = (1.0 / h, -1.0 / h);
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            op.add_element(e, k, d, d, o);
        }
    }
    op
}

/// Assembles the mass matrix `M_ij = ∫𝒢 φ_i φ_j` (exact for P1).
pub fn assemble_mass(mesh: &Arc<Mesh>) -> SparseOperator {
    let mut op = SparseOperator::zeros(mesh);
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        let (d, o) = (h / 3.0, h / 6.0);
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            op.add_element(e, k, d, d, o);
        }
    }
    op
}

/// Assembles `A_λ = K + λM`, the operator of the `λ`-inner product. All
/// consumers of the λ-norm and the linear Kirchhoff solve go through this one
/// helper so their matrices agree bit for bit.
pub fn assemble_a_lambda(mesh: &Arc<Mesh>, lambda: f64) -> SparseOperator {
    let k = assemble_stiffness(mesh);
    let m = assemble_mass(mesh);
    SparseOperator::combine(&[(1.0, &k), (lambda, &m)])
}

/// `‖u‖_λ = sqrt(uᵀKu + λ uᵀMu)`, evaluated as the quadratic form of the
/// assembled `K + λM` (same assembly path as the solvers).
pub fn lambda_norm(u: &DiscreteFunction, lambda: f64) -> f64 {
    assemble_a_lambda(&u.mesh, lambda)
        .quadratic_form(&u.values)
        .max(0.0)
        .sqrt()
}

/// `L^q` norm `(∫𝒢 |u|^q)^{1/q}` by per-element 4-point Gauss quadrature of
/// the P1 interpolant.
pub fn lp_norm(u: &DiscreteFunction, q: f64) -> f64 {
    assert!(q >= 1.0);
    integrate(u, |t| t.abs().powf(q)).powf(1.0 / q)
}

/// `∫𝒢 g(u(x)) dx` by per-element 4-point Gauss quadrature, with `u`
/// evaluated pointwise from its P1 interpolant at the quadrature nodes.
pub fn integrate(u: &DiscreteFunction, g: impl Fn(f64) -> f64) -> f64 {
    let mesh = &u.mesh;
    let mut acc = 0.0;
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            let v0 = u.values[mesh.dof(e, k)];
            let v1 = u.values[mesh.dof(e, k + 1)];
            let mut elem = 0.0;
            for (&t, &w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
                elem += w * g((1.0 - t) * v0 + t * v1);
            }
            acc += elem * h;
        }
    }
    acc
}

/// Load vector `b_i = ∫𝒢 g(u(x)) φ_i(x) dx` (per-element 4-point Gauss,
/// pointwise composition at quadrature nodes — no nodal lumping).
pub fn load_vector(u: &DiscreteFunction, g: impl Fn(f64) -> f64) -> Vec<f64> {
    let mesh = &u.mesh;
    let mut b = vec![0.0; mesh.num_dofs()];
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            let (g0, g1) = (mesh.dof(e, k), mesh.dof(e, k + 1));
            let (v0, v1) = (u.values[g0], u.values[g1]);
            let (mut b0, mut b1) = (0.0, 0.0);
            for (&t, &w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
                let gv = g((1.0 - t) * v0 + t * v1);
                b0 += w * gv * (1.0 - t);
                b1 += w * gv * t;
            }
            b[g0] += b0 * h;
            b[g1] += b1 * h;
        }
    }
    b
}

/// Load vector `b_i = ∫𝒢 f(x) φ_i(x) dx` for an explicit function of the
/// graph coordinate (manufactured right-hand sides).
pub fn load_vector_fn(mesh: &Arc<Mesh>, f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_dofs()];
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            let x0 = k as f64 * h;
            let (g0, g1) = (mesh.dof(e, k), mesh.dof(e, k + 1));
            let (mut b0, mut b1) = (0.0, 0.0);
            for (&t, &w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
                let fv = f(e, x0 + t * h);
                b0 += w * fv * (1.0 - t);
                b1 += w * fv * t;
            }
            b[g0] += b0 * h;
            b[g1] += b1 * h;
        }
    }
    b
}

/// Weighted mass matrix `P_ij = ∫𝒢 g(u(x)) φ_i φ_j dx` (per-element 4-point
/// Gauss with pointwise composition). This is how linearizations of the
/// nonlinearity enter Hessians and spectral operators.
pub fn weighted_mass(u: &DiscreteFunction, g: impl Fn(f64) -> f64) -> SparseOperator {
    let mesh = &u.mesh;
    let mut op = SparseOperator::zeros(mesh);
    for e in 0..mesh.graph.num_edges() {
        let h = mesh.edge_h[e];
        for k in 0..mesh.nodes_per_edge[e] - 1 {
            let v0 = u.values[mesh.dof(e, k)];
            let v1 = u.values[mesh.dof(e, k + 1)];
            let (mut d0, mut d1, mut o) = (0.0, 0.0, 0.0);
            for (&t, &w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
                let gv = g((1.0 - t) * v0 + t * v1);
                d0 += w * gv * (1.0 - t) * (1.0 - t);
                d1 += w * gv * t * t;
                o += w * gv * (1.0 - t) * t;
            }
            op.add_element(e, k, d0 * h, d1 * h, o * h);
        }
    }
    op
}
