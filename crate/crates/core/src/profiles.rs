//! The half-line soliton profile, its `λ`-rescaling, smooth cutoffs, and the
//! peaked ansatz built from them.
//!
//! The positive even solution of `−U'' + U = U^p` on ℝ that decays at
//! infinity is
//!
//! ```text
//! U(x) = ((p+1)/2)^{1/(p−1)} · cosh((p−1)x/2)^{−2/(p−1)}
//! ```
//!
//! (for p = 3 this is √2·sech x). The ansatz concentrated at a terminal
//! vertex `v` with frequency `λ` is `W_λ(x) = χ(x) · λ^{1/(p−1)} U(√λ·x)`,
//! where `x` is the distance from `v` along its terminal edge and `χ` a
//! smooth cutoff supported inside that edge; multi-peak ansatz functions sum
//! such profiles over distinct terminal edges.

use thiserror::Error;

use crate::mesh::{DiscreteFunction, Mesh};
use crate::quad::adaptive_simpson;
use std::sync::Arc;

/// Errors from profile and ansatz construction.
#[derive(Debug, Error)]
pub enum ProfileError {
    /// Nonlinearity power outside `p > 1`.
    #[error("p must exceed 1, got {0}")]
    InvalidP(f64),
    /// Frequency outside `λ > 0`.
    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),
    /// Peak vertex index does not exist on the graph.
    #[error("unknown vertex index {0}")]
    UnknownVertex(usize),
    /// The requested peak vertex has degree ≠ 1.
    #[error("vertex {vertex_id:?} has degree {degree}, peaks require degree 1")]
    PeakOnNonTerminalVertex { vertex_id: String, degree: usize },
    /// Cutoff support does not fit strictly inside the terminal edge.
    #[error("cutoff support {l_cut} does not fit inside edge {edge_id:?} of length {length}")]
    SupportTooLong {
        edge_id: String,
        l_cut: f64,
        length: f64,
    },
    /// Two peaks were requested on the same terminal edge.
    #[error("duplicate peak on edge {edge_id:?} (one peak per edge)")]
    DuplicatePeakEdge { edge_id: String },
}

/// Validated nonlinearity power for the soliton profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonParams {
    pub p: f64,
}

impl SolitonParams {
    pub fn new(p: f64) -> Result<Self, ProfileError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(ProfileError::InvalidP(p));
        }
        Ok(SolitonParams { p })
    }
}

/// `ln cosh z`, stable for large `|z|`.
fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// The soliton `U(x) = ((p+1)/2)^{1/(p−1)} cosh((p−1)x/2)^{−2/(p−1)}`:
/// even, strictly decreasing on `[0, ∞)`, exponentially decaying, and the
/// unique (up to translation) positive decaying solution of `−U''+U = U^p`.
pub fn soliton(p: f64, x: f64) -> f64 {
    debug_assert!(p > 1.0);
    let a = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    let c = 2.0 / (p - 1.0);
    a * (-c * ln_cosh(0.5 * (p - 1.0) * x)).exp()
}

/// `U'(x) = −U(x)·tanh((p−1)x/2)` (the product `b·c` of the cosh rate and
/// power is exactly 1).
pub fn soliton_derivative(p: f64, x: f64) -> f64 {
    -soliton(p, x) * (0.5 * (p - 1.0) * x).tanh()
}

/// Reference norms of the soliton.
#[derive(Debug, Clone, Copy)]
pub struct SolitonNorms {
    /// `‖U‖²_{H¹(ℝ)} = ∫_ℝ U'² + ∫_ℝ U²`.
    pub h1_sq: f64,
    /// `|U|²_{L²(ℝ⁺)} = ∫_0^∞ U²` (half the line value, by evenness).
    pub l2_halfline_sq: f64,
    /// `m_∞ = ½ (½ − 1/(p+1)) ‖U‖²_{H¹(ℝ)}`, the limit least action.
    pub m_inf: f64,
}

/// Computes [`SolitonNorms`] by adaptive quadrature on `[0, X]` with `X`
/// chosen so the exponential tail contributes below 1e−12, using even
/// symmetry for the ℝ integrals.
pub fn soliton_norms(p: f64) -> SolitonNorms {
    soliton_norms_capped(p, tail_cap(p))
}

/// `X` with `∫_X^∞ U² + U'² < 1e−14`: from `U(x) ≤ A·2^{c}·e^{−x}` and
/// `|U'| ≤ U`, solve `(A 2^c)² e^{−2X} < 1e−14` and pad generously.
fn tail_cap(p: f64) -> f64 {
    let a = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    let c = 2.0 / (p - 1.0);
    let amp = a * c.exp2();
    0.5 * ((amp * amp) / 1e-14).ln() + 5.0
}

fn soliton_norms_capped(p: f64, x_cap: f64) -> SolitonNorms {
    let tol = 1e-13;
    let l2_line = 2.0 * adaptive_simpson(0.0, x_cap, tol, |x| soliton(p, x).powi(2));
    let kinetic = 2.0 * adaptive_simpson(0.0, x_cap, tol, |x| soliton_derivative(p, x).powi(2));
    let h1_sq = kinetic + l2_line;
    SolitonNorms {
        h1_sq,
        l2_halfline_sq: 0.5 * l2_line,
        m_inf: 0.5 * (0.5 - 1.0 / (p + 1.0)) * h1_sq,
    }
}

/// `U_λ(x) = λ^{1/(p−1)} U(√λ·x)`, the concentrated rescaling that solves
/// `−u'' + λu = u^p` on the line.
pub fn rescaled_soliton(p: f64, lambda: f64, x: f64) -> f64 {
    debug_assert!(lambda > 0.0);
    lambda.powf(1.0 / (p - 1.0)) * soliton(p, lambda.sqrt() * x)
}

/// Smooth cutoff: `χ(x) = 1` for `x ≤ l_cut/2`, cosine ramp
/// `½(1 + cos(π(2x/l_cut − 1)))` on `[l_cut/2, l_cut]`, and `0` beyond.
/// C¹ with bounded second derivative, monotone on the ramp.
pub fn cutoff(x: f64, l_cut: f64) -> f64 {
    debug_assert!(l_cut > 0.0);
    if x <= 0.5 * l_cut {
        1.0
    } else if x >= l_cut {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (2.0 * x / l_cut - 1.0)).cos())
    }
}

/// One requested peak: a degree-1 vertex and an optional cutoff support
/// length (default: 0.9 × the terminal edge length).
#[derive(Debug, Clone, Copy)]
pub struct PeakSite {
    pub vertex: usize,
    pub l_cut: Option<f64>,
}

/// A collection of peaks on distinct terminal edges at frequency `λ`.
#[derive(Debug, Clone)]
pub struct PeakSpec {
    pub peaks: Vec<PeakSite>,
    pub lambda: f64,
}

/// Default cutoff support as a fraction of the terminal edge length.
pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.9;

/// A resolved peak: terminal edge, orientation, and cutoff length.
struct ResolvedPeak {
    edge: usize,
    /// 0 if the peak vertex sits at local coordinate x = 0, 1 if at x = l.
    end: u8,
    l_cut: f64,
}

fn resolve_peaks(mesh: &Mesh, peaks: &PeakSpec) -> Result<Vec<ResolvedPeak>, ProfileError> {
    if !(peaks.lambda > 0.0 && peaks.lambda.is_finite()) {
        return Err(ProfileError::InvalidLambda(peaks.lambda));
    }
    let graph = &mesh.graph;
    let mut resolved = Vec::with_capacity(peaks.peaks.len());
    let mut used_edges = Vec::new();
    for site in &peaks.peaks {
        if site.vertex >= graph.num_vertices() {
            return Err(ProfileError::UnknownVertex(site.vertex));
        }
        let degree = graph.degree(site.vertex);
        if degree != 1 {
            return Err(ProfileError::PeakOnNonTerminalVertex {
                vertex_id: graph.vertex_ids[site.vertex].clone(),
                degree,
            });
        }
        let (edge, end) = graph.adjacency[site.vertex][0];
        if used_edges.contains(&edge) {
            return Err(ProfileError::DuplicatePeakEdge {
                edge_id: graph.edges[edge].id.clone(),
            });
        }
        used_edges.push(edge);
        let length = graph.edges[edge].length;
        let l_cut = site.l_cut.unwrap_or(DEFAULT_CUTOFF_FRACTION * length);
        if !(l_cut > 0.0 && l_cut < length) {
            return Err(ProfileError::SupportTooLong {
                edge_id: graph.edges[edge].id.clone(),
                l_cut,
                length,
            });
        }
        resolved.push(ResolvedPeak { edge, end, l_cut });
    }
    Ok(resolved)
}

/// Builds the peaked ansatz `W_λ = Σ_i χ_i · U_λ` as the nodal interpolant of
/// the profile sum: concentrated at each requested terminal vertex, zero
/// outside the chosen terminal edges, and continuous (the cutoff vanishes at
/// the interior end of each support).
pub fn build_ansatz(
    mesh: &Arc<Mesh>,
    peaks: &PeakSpec,
    p: f64,
) -> Result<DiscreteFunction, ProfileError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(ProfileError::InvalidP(p));
    }
    let resolved = resolve_peaks(mesh, peaks)?;
    // Per-edge lookup for the interpolation closure.
    let mut by_edge: Vec<Option<(u8, f64)>> = vec![None; mesh.graph.num_edges()];
    for r in &resolved {
        by_edge[r.edge] = Some((r.end, r.l_cut));
    }
    let lambda = peaks.lambda;
    Ok(DiscreteFunction::interpolate(mesh, |e, x| {
        let Some((end, l_cut)) = by_edge[e] else {
            return 0.0;
        };
        let s = if end == 0 {
            x
        } else {
            mesh.graph.edges[e].length - x
        };
        cutoff(s, l_cut) * rescaled_soliton(p, lambda, s)
    }))
}
