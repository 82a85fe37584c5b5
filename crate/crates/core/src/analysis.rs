//! Post-processing of computed solutions: peak detection, comparison against
//! the rescaled soliton profile, exponential-decay fits, and log-log scaling
//! fits across λ-sweeps.

use serde::Serialize;
use thiserror::Error;

use crate::functionals::{nehari_action, FunctionalError, ProblemParams};
use crate::graph::EdgeCoordinate;
use crate::mesh::DiscreteFunction;
use crate::profiles::{rescaled_soliton, soliton_norms};
use crate::solvers::SolutionRecord;

/// Errors from post-processing.
#[derive(Debug, Error)]
pub enum AnalysisError {
    /// Edge index does not exist on the graph.
    #[error("unknown edge index {0}")]
    UnknownEdge(usize),
    /// The requested edge has no degree-1 endpoint.
    #[error("edge {edge_id:?} is not a terminal edge")]
    EdgeNotTerminal { edge_id: String },
    /// Decay fitting needs strictly positive samples.
    #[error("non-positive sample in the fit window (log-linear fit impossible)")]
    NonPositiveSamples,
    /// The fit window is shorter than 5 mesh cells or lies outside the edge.
    #[error("invalid fit window [{x_lo}, {x_hi}] (need ≥ 5 mesh cells inside the edge)")]
    InvalidWindow { x_lo: f64, x_hi: f64 },
    /// Scaling fits need at least 3 data points.
    #[error("insufficient data: {got} points, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    /// Propagated functional-evaluation failure (e.g. off-Nehari record).
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

/// A strict local maximum of a discrete function.
#[derive(Debug, Clone, Serialize)]
pub struct PeakInfo {
    /// Edge-local position of the peak node (for a vertex peak: the first
    /// incident edge end in adjacency order).
    pub location: EdgeCoordinate,
    pub value: f64,
    pub is_vertex: bool,
    /// Dense vertex index when the peak sits on a vertex node.
    pub vertex: Option<usize>,
    /// Vertex id string when applicable (for reports).
    pub vertex_id: Option<String>,
}

/// Result of a log-linear decay fit `u ≈ c₁ λ^{1/(p−1)} e^{−ĉ₂ √λ x}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub c1: f64,
    /// Decay rate normalized by √λ (the soliton tail gives ĉ₂ → 1).
    pub c2: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
}

/// Least-squares slope of `log(observable)` against `log λ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub r_squared: f64,
}

/// Observables that [`fit_scaling`] understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    MassSq,
    CorrectionNorm,
    ResidualR,
}

/// Peak suppression threshold relative to the global maximum.
const PEAK_SUPPRESSION_RTOL: f64 = 1e-8;

/// All strict local maxima of `u` over the mesh graph, sorted by value
/// descending (ties by edge/node order). Vertex nodes compare against every
/// incident neighbor node; maxima below `1e−8·max u` (or ≤ 0) are suppressed.
pub fn find_peaks(u: &DiscreteFunction) -> Vec<PeakInfo> {
    let mesh = &u.mesh;
    let graph = &mesh.graph;
    let vmax = u.max_value();
    let threshold = PEAK_SUPPRESSION_RTOL * vmax;
    let mut peaks: Vec<PeakInfo> = Vec::new();

    // Interior nodes: compare with the two chain neighbors.
    for e in 0..graph.num_edges() {
        let n = mesh.nodes_per_edge[e];
        let h = mesh.edge_h[e];
        for k in 1..n - 1 {
            let v = u.values[mesh.dof(e, k)];
            if v > u.values[mesh.dof(e, k - 1)] && v > u.values[mesh.dof(e, k + 1)] {
                peaks.push(PeakInfo {
                    location: EdgeCoordinate { edge: e, x: k as f64 * h },
                    value: v,
                    is_vertex: false,
                    vertex: None,
                    vertex_id: None,
                });
            }
        }
    }

    // Vertex nodes: compare with the adjacent node on every incident edge end.
    for v in 0..graph.num_vertices() {
        let val = u.values[mesh.vertex_dof(v)];
        let mut strict = true;
        for &(e, end) in &graph.adjacency[v] {
            let n = mesh.nodes_per_edge[e];
            let neighbor = if end == 0 {
                mesh.dof(e, 1)
            } else {
                mesh.dof(e, n - 2)
            };
            if !(val > u.values[neighbor]) {
                strict = false;
                break;
            }
        }
        if strict {
            let &(e, end) = &graph.adjacency[v][0];
            let x = if end == 0 { 0.0 } else { graph.edges[e].length };
            peaks.push(PeakInfo {
                location: EdgeCoordinate { edge: e, x },
                value: val,
                is_vertex: true,
                vertex: Some(v),
                vertex_id: Some(graph.vertex_ids[v].clone()),
            });
        }
    }

    peaks.retain(|p| p.value > 0.0 && p.value >= threshold);
    peaks.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then(a.location.edge.cmp(&b.location.edge))
            .then(a.location.x.partial_cmp(&b.location.x).unwrap())
    });
    peaks
}

/// Orientation helper: distance from the measuring (terminal) end of `edge`.
/// If both ends are terminal the end with the larger nodal value is used, so
/// the profile is always measured from the peak side.
fn terminal_distance(
    u: &DiscreteFunction,
    edge: usize,
) -> Result<impl Fn(f64) -> f64 + '_, AnalysisError> {
    let graph = &u.mesh.graph;
    if edge >= graph.num_edges() {
        return Err(AnalysisError::UnknownEdge(edge));
    }
    let e = &graph.edges[edge];
    let (term_a, term_b) = (graph.degree(e.a) == 1, graph.degree(e.b) == 1);
    let from_a = match (term_a, term_b) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => {
            u.values[u.mesh.vertex_dof(e.a)] >= u.values[u.mesh.vertex_dof(e.b)]
        }
        (false, false) => {
            return Err(AnalysisError::EdgeNotTerminal {
                edge_id: e.id.clone(),
            })
        }
    };
    let length = e.length;
    Ok(move |x: f64| if from_a { x } else { length - x })
}

/// Sup-distance (over mesh nodes with distance ≤ l/2 from the terminal
/// vertex) between `u` and the concentrated profile, in rescaled form:
///
/// `max λ^{1/(1−p)} |u(x) − λ^{1/(p−1)} U(√λ·x)|`.
pub fn profile_error(
    u: &DiscreteFunction,
    params: &ProblemParams,
    edge: usize,
) -> Result<f64, AnalysisError> {
    let dist = terminal_distance(u, edge)?;
    let mesh = &u.mesh;
    let (lambda, p) = (params.lambda, params.p);
    let half = 0.5 * mesh.graph.edges[edge].length;
    let h = mesh.edge_h[edge];
    let mut err = 0.0f64;
    for k in 0..mesh.nodes_per_edge[edge] {
        let s = dist(k as f64 * h);
        if s > half {
            continue;
        }
        let diff = u.values[mesh.dof(edge, k)] - rescaled_soliton(p, lambda, s);
        err = err.max(lambda.powf(1.0 / (1.0 - p)) * diff.abs());
    }
    Ok(err)
}

/// Log-linear least squares of `u` on the window `[x_lo, x_hi]` (distances
/// from the terminal end of `edge`), in the normalized model
/// `u ≈ c₁ λ^{1/(p−1)} e^{−ĉ₂ √λ x}`.
pub fn decay_fit(
    u: &DiscreteFunction,
    params: &ProblemParams,
    edge: usize,
    window: (f64, f64),
) -> Result<DecayFit, AnalysisError> {
    let dist = terminal_distance(u, edge)?;
    let mesh = &u.mesh;
    let (x_lo, x_hi) = window;
    let h = mesh.edge_h[edge];
    let length = mesh.graph.edges[edge].length;
    if !(x_lo >= 0.0 && x_hi <= length && x_hi - x_lo >= 5.0 * h) {
        return Err(AnalysisError::InvalidWindow { x_lo, x_hi });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..mesh.nodes_per_edge[edge] {
        let s = dist(k as f64 * h);
        if s < x_lo || s > x_hi {
            continue;
        }
        let v = u.values[mesh.dof(edge, k)];
        if v <= 0.0 {
            return Err(AnalysisError::NonPositiveSamples);
        }
        xs.push(s);
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Err(AnalysisError::InvalidWindow { x_lo, x_hi });
    }

    let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
    let lambda = params.lambda;
    Ok(DecayFit {
        c1: (intercept.exp()) / lambda.powf(1.0 / (params.p - 1.0)),
        c2: -slope / lambda.sqrt(),
        fit_window: window,
        r_squared,
    })
}

/// Plain least squares `y ≈ intercept + slope·x` with r².
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r_squared)
}

/// Least-squares slope of `log(observable)` vs `log λ` over `(λ, value)`
/// pairs. Needs ≥ 3 strictly positive entries.
pub fn fit_scaling_points(points: &[(f64, f64)]) -> Result<ScalingFit, AnalysisError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(l, v)| *l > 0.0 && *v > 0.0)
        .cloned()
        .collect();
    if usable.len() < 3 {
        return Err(AnalysisError::InsufficientData {
            got: usable.len(),
            need: 3,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|(l, _)| l.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let (slope, _, r_squared) = linear_fit(&xs, &ys);
    Ok(ScalingFit { slope, r_squared })
}

/// Scaling fit of a sweep observable; see [`Observable`].
pub fn fit_scaling(
    sweep: &crate::solvers::SweepReport,
    observable: Observable,
) -> Result<ScalingFit, AnalysisError> {
    fit_scaling_points(&sweep.observable_table(observable))
}

/// Signed distance of the record's renormalized action from the limit value:
/// `nehari_action(u) − m_∞(p)` with `m_∞` recomputed from the soliton norms
/// (`p` normally equals `record.params.p`).
pub fn action_gap(record: &SolutionRecord, p: f64) -> Result<f64, AnalysisError> {
    let j = nehari_action(&record.u, &record.params)?;
    Ok(j - soliton_norms(p).m_inf)
}

/// Sum of outward one-sided difference quotients over the edge ends incident
/// to vertex `v`: the discrete Kirchhoff flux balance. Tends to 0 with `h` for
/// converged solutions (natural boundary/vertex conditions).
pub fn kirchhoff_flux(u: &DiscreteFunction, v: usize) -> f64 {
    let mesh = &u.mesh;
    let uv = u.values[mesh.vertex_dof(v)];
    let mut acc = 0.0;
    for &(e, end) in &mesh.graph.adjacency[v] {
        let n = mesh.nodes_per_edge[e];
        let next = if end == 0 {
            mesh.dof(e, 1)
        } else {
            mesh.dof(e, n - 2)
        };
        acc += (u.values[next] - uv) / mesh.edge_h[e];
    }
    acc
}
