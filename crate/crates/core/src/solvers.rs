//! Solvers for critical points of the action on a metric graph: linear
//! Kirchhoff solves, damped Newton iteration, Nehari-constrained descent to
//! the least-action state, the peaked-solution correction, and a warm-started
//! λ-continuation driver.
//!
//! Everything here is single-threaded and deterministic for a fixed
//! [`SolverConfig`] (randomized restarts draw from the seeded generator).

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{find_peaks, Observable, PeakInfo};
use crate::functionals::{self, FunctionalError, FunctionalReport, ProblemParams};
use crate::graph::{terminal_vertices, MetricGraph};
use crate::linalg::{self, LinAlgError, StructuredFactor};
use crate::mesh::{
    assemble_a_lambda, assemble_mass, build_mesh, transfer, DiscreteFunction, Mesh, MeshError,
    SparseOperator,
};
use crate::profiles::{build_ansatz, PeakSite, PeakSpec, ProfileError};

/// Armijo sufficient-decrease constant for the Newton line search.
const ARMIJO_C1: f64 = 1e-4;
/// Smallest accepted line-search step.
const MIN_STEP: f64 = 1e-8;
/// Relative action-decrease stop for the Nehari descent stage.
const FLOW_JTOL: f64 = 1e-10;
/// Seeded restarts after a constant-branch hit in [`least_action_solve`].
const MAX_RESTARTS: usize = 5;
/// Relative tolerance identifying the constant branch by its action value.
const CONSTANT_BRANCH_RTOL: f64 = 1e-6;

/// Solver knobs. The mesh width used for a solve at frequency λ is
/// `h = min(h_max, c_mesh·λ^{−mesh_exponent})` unless `h_target_override`
/// pins it explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative tolerance on the dual-λ-norm residual `‖i*_λ G(u)‖_λ`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Step size of the Nehari-projected descent (preconditioned by `A_λ⁻¹`).
    pub gradient_flow_step: f64,
    pub gradient_flow_max_iter: usize,
    /// Mesh-width coefficient: `h ~ c_mesh·λ^{−mesh_exponent}`.
    pub c_mesh: f64,
    /// Exponent of the mesh-width law (0.5 resolves the λ^{−1/2} length scale).
    pub mesh_exponent: f64,
    /// Cap on the mesh width regardless of λ.
    pub h_max: f64,
    /// Explicit mesh width; bypasses the λ law entirely when set.
    pub h_target_override: Option<f64>,
    pub random_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-9,
            newton_max_iter: 50,
            gradient_flow_step: 1.0,
            gradient_flow_max_iter: 2000,
            c_mesh: 0.1,
            mesh_exponent: 0.5,
            h_max: 0.05,
            h_target_override: None,
            random_seed: 0,
        }
    }
}

impl SolverConfig {
    /// Mesh width used for a solve at frequency `lambda`.
    pub fn h_target(&self, lambda: f64) -> f64 {
        self.h_target_override
            .unwrap_or_else(|| self.h_max.min(self.c_mesh * lambda.powf(-self.mesh_exponent)))
    }
}

/// Which branch a converged record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchTag {
    /// `u ≡ 0`.
    Trivial,
    /// `u ≡ λ^{1/(p−1)}`.
    Constant,
    LeastAction,
    /// Peaked state with the given number of peaks.
    Peaked(usize),
}

/// Mesh shape echoed into solution records.
#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub num_dofs: usize,
    pub max_h: f64,
    pub nodes_per_edge: Vec<usize>,
}

impl MeshSummary {
    fn of(mesh: &Mesh) -> Self {
        MeshSummary {
            num_dofs: mesh.num_dofs(),
            max_h: mesh.max_h(),
            nodes_per_edge: mesh.nodes_per_edge.clone(),
        }
    }
}

/// A converged critical point together with its diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionRecord {
    pub params: ProblemParams,
    pub mesh: MeshSummary,
    pub u: DiscreteFunction,
    pub report: FunctionalReport,
    /// `‖i*_λ G(u)‖_λ` at the final iterate.
    pub residual_norm: f64,
    pub peaks: Vec<PeakInfo>,
    pub newton_iters: usize,
    pub branch: BranchTag,
}

/// A peaked solution with the ansatz it was corrected from.
#[derive(Debug, Clone, Serialize)]
pub struct PeakedRecord {
    pub record: SolutionRecord,
    /// The ansatz `W_λ` on the same mesh as `record.u`.
    pub ansatz: DiscreteFunction,
    /// `‖u − W_λ‖_λ`.
    pub correction_norm: f64,
    /// `‖i*_λ(f(W_λ)) − W_λ‖_λ`, the fixed-point defect of the ansatz.
    pub residual_r_norm: f64,
}

/// Continuation mode: follow the least-action branch or a fixed peak set.
#[derive(Debug, Clone)]
pub enum SweepMode {
    LeastAction,
    Peaked(Vec<PeakSite>),
}

/// Per-λ result of a sweep.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOutcome {
    Solved(Box<SolutionRecord>),
    Peaked(Box<PeakedRecord>),
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub lambda: f64,
    pub outcome: SweepOutcome,
}

/// Result of [`continuation_sweep`]; entries in λ order, failures kept inline.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub p: f64,
    pub entries: Vec<SweepEntry>,
    /// Fitted slope of `log(mass²)` vs `log λ` over converged entries
    /// (`None` when fewer than 3 converged).
    pub mass_exponent: Option<f64>,
}

impl SweepReport {
    /// Converged solution records in λ order.
    pub fn records(&self) -> impl Iterator<Item = &SolutionRecord> {
        self.entries.iter().filter_map(|e| match &e.outcome {
            SweepOutcome::Solved(r) => Some(r.as_ref()),
            SweepOutcome::Peaked(pr) => Some(&pr.record),
            SweepOutcome::Failed { .. } => None,
        })
    }

    /// `(λ, J_λ)` pairs of the converged entries.
    pub fn action_values(&self) -> Vec<(f64, f64)> {
        self.records()
            .map(|r| (r.params.lambda, r.report.action_j))
            .collect()
    }

    /// `(λ, observable)` pairs; correction/residual tables are nonempty only
    /// for peaked sweeps.
    pub fn observable_table(&self, obs: Observable) -> Vec<(f64, f64)> {
        match obs {
            Observable::MassSq => self
                .records()
                .map(|r| (r.params.lambda, r.report.mass_sq))
                .collect(),
            Observable::CorrectionNorm | Observable::ResidualR => self
                .entries
                .iter()
                .filter_map(|e| match &e.outcome {
                    SweepOutcome::Peaked(pr) => Some((
                        pr.record.params.lambda,
                        if obs == Observable::CorrectionNorm {
                            pr.correction_norm
                        } else {
                            pr.residual_r_norm
                        },
                    )),
                    _ => None,
                })
                .collect(),
        }
    }
}

/// Solver failures.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("hessian factorization failed (singular to working precision)")]
    SingularHessian,
    #[error("linear Kirchhoff system is singular")]
    SingularSystem,
    #[error("no nonconstant critical point found after {attempts} initializations")]
    OnlyConstantBranchFound { attempts: usize },
    #[error("converged to a different branch: requested peaks at {expected:?}, found {found:?}")]
    PeakSetMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("sweep precondition violated: {0}")]
    SweepPrecondition(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

/// A factored `A_λ = K + λM`: the discrete `‖·‖_λ` inner product and the
/// direct solver implementing `i*_λ`.
struct LambdaSystem {
    a: SparseOperator,
    factor: StructuredFactor,
}

impl LambdaSystem {
    fn new(mesh: &Arc<Mesh>, lambda: f64) -> Result<Self, SolverError> {
        let a = assemble_a_lambda(mesh, lambda);
        let factor = linalg::factor(&a).map_err(|_| SolverError::SingularSystem)?;
        Ok(LambdaSystem { a, factor })
    }

    fn lambda_norm(&self, x: &[f64]) -> f64 {
        self.a.quadratic_form(x).max(0.0).sqrt()
    }

    /// `(A⁻¹g, ‖i* g‖_λ)` for a dual vector `g`.
    fn dual_residual(&self, g: &[f64]) -> (Vec<f64>, f64) {
        let z = self.factor.solve(g);
        let r2 = linalg::dot(g, &z).max(0.0);
        (z, r2.sqrt())
    }
}

/// Solves `(K+λM)u = Mf` for a function right-hand side `f`: the discrete
/// `i*_λ` applied to `f ∈ L²`.
pub fn linear_kirchhoff_solve(
    mesh: &Arc<Mesh>,
    lambda: f64,
    f: &DiscreteFunction,
) -> Result<DiscreteFunction, SolverError> {
    let sys = LambdaSystem::new(mesh, lambda)?;
    let m = assemble_mass(mesh);
    let mut rhs = vec![0.0; mesh.num_dofs()];
    m.matvec(&f.values, &mut rhs);
    Ok(DiscreteFunction::from_values(mesh, sys.factor.solve(&rhs)))
}

/// Solves `(K+λM)u = b` for a dual vector `b` (a loaded functional): the
/// discrete `i*_λ` applied to an `H¹` dual element.
pub fn linear_kirchhoff_solve_dual(
    mesh: &Arc<Mesh>,
    lambda: f64,
    b: &[f64],
) -> Result<DiscreteFunction, SolverError> {
    assert_eq!(b.len(), mesh.num_dofs());
    let sys = LambdaSystem::new(mesh, lambda)?;
    Ok(DiscreteFunction::from_values(mesh, sys.factor.solve(b)))
}

fn classify(u: &DiscreteFunction, params: &ProblemParams, peaks: &[PeakInfo]) -> BranchTag {
    let amp = params.lambda.powf(1.0 / (params.p - 1.0));
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &u.values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let scale = hi.abs().max(lo.abs());
    if scale <= 1e-10 * (1.0 + amp) {
        BranchTag::Trivial
    } else if hi - lo <= 1e-8 * scale {
        BranchTag::Constant
    } else {
        BranchTag::Peaked(peaks.len())
    }
}

fn build_record(
    u: DiscreteFunction,
    params: &ProblemParams,
    residual_norm: f64,
    newton_iters: usize,
) -> SolutionRecord {
    let report = functionals::report(&u, params);
    let peaks = find_peaks(&u);
    let branch = classify(&u, params, &peaks);
    SolutionRecord {
        params: *params,
        mesh: MeshSummary::of(&u.mesh),
        u,
        report,
        residual_norm,
        peaks,
        newton_iters,
        branch,
    }
}

/// Damped Newton iteration on `G(u) = 0` from the iterate `u0` (the mesh is
/// `u0`'s). Convergence criterion: `‖i*_λ G‖_λ ≤ newton_tol·(1 + ‖u‖_λ)`.
/// The line search backtracks on the merit `½‖i*_λ G‖²_λ`, for which the
/// Newton direction is always a descent direction.
pub fn newton_solve(
    u0: &DiscreteFunction,
    params: &ProblemParams,
    config: &SolverConfig,
) -> Result<SolutionRecord, SolverError> {
    let sys = LambdaSystem::new(&u0.mesh, params.lambda)?;
    newton_with(u0, params, config, &sys)
}

fn newton_with(
    u0: &DiscreteFunction,
    params: &ProblemParams,
    config: &SolverConfig,
    sys: &LambdaSystem,
) -> Result<SolutionRecord, SolverError> {
    let mut u = u0.clone();
    let mut last_res = f64::INFINITY;
    for iter in 0..=config.newton_max_iter {
        let g = functionals::gradient_with(&u, params, &sys.a);
        let (_, res) = sys.dual_residual(&g);
        last_res = res;
        if res <= config.newton_tol * (1.0 + sys.lambda_norm(&u.values)) {
            return Ok(build_record(u, params, res, iter));
        }
        if iter == config.newton_max_iter {
            break;
        }
        let h = functionals::hessian(&u, params);
        let hf = linalg::factor(&h).map_err(|_| SolverError::SingularHessian)?;
        let mut d = hf.solve_refined(&h, &g);
        linalg::scale(-1.0, &mut d);

        let phi = 0.5 * res * res;
        let mut alpha = 1.0;
        loop {
            let mut trial = u.values.clone();
            linalg::axpy(alpha, &d, &mut trial);
            let ut = DiscreteFunction::from_values(&u.mesh, trial);
            let gt = functionals::gradient_with(&ut, params, &sys.a);
            let (_, rest) = sys.dual_residual(&gt);
            let phit = 0.5 * rest * rest;
            if phit <= (1.0 - 2.0 * ARMIJO_C1 * alpha) * phi || alpha <= MIN_STEP {
                u = ut;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(SolverError::NoConvergence {
        iterations: config.newton_max_iter,
        residual: last_res,
    })
}

/// Ansatz seeded at the terminal vertex of the longest terminal edge.
fn ansatz_init(mesh: &Arc<Mesh>, params: &ProblemParams) -> Option<DiscreteFunction> {
    let g = &mesh.graph;
    let (v, _) = terminal_vertices(g).into_iter().max_by(|&(_, e1), &(_, e2)| {
        g.edges[e1]
            .length
            .partial_cmp(&g.edges[e2].length)
            .unwrap()
    })?;
    build_ansatz(
        mesh,
        &PeakSpec {
            peaks: vec![PeakSite { vertex: v, l_cut: None }],
            lambda: params.lambda,
        },
        params.p,
    )
    .ok()
}

/// Positive random bump at the scale of the constant branch.
fn random_init(mesh: &Arc<Mesh>, params: &ProblemParams, rng: &mut ChaCha8Rng) -> DiscreteFunction {
    let amp = params.lambda.powf(1.0 / (params.p - 1.0));
    let values = (0..mesh.num_dofs())
        .map(|_| amp * rng.gen_range(0.1..1.9))
        .collect();
    DiscreteFunction::from_values(mesh, values)
}

/// Nehari-projected descent: preconditioned step `u ← u − τ·A_λ⁻¹G(u)`
/// followed by re-projection `u ← t(u)·u`, until the (renormalized) action on
/// the manifold stops decreasing. Returns `None` if the iterate loses its
/// positive part (projection undefined).
fn descend(
    mut u: DiscreteFunction,
    params: &ProblemParams,
    config: &SolverConfig,
    sys: &LambdaSystem,
) -> Option<DiscreteFunction> {
    let c = 0.5 - 1.0 / (params.p + 1.0);
    let renorm = params.renorm_factor();
    let t = functionals::nehari_scale(&u, params).ok()?;
    linalg::scale(t, &mut u.values);
    let mut j_prev = renorm * c * sys.a.quadratic_form(&u.values);
    for _ in 0..config.gradient_flow_max_iter {
        let g = functionals::gradient_with(&u, params, &sys.a);
        let z = sys.factor.solve(&g);
        linalg::axpy(-config.gradient_flow_step, &z, &mut u.values);
        let t = functionals::nehari_scale(&u, params).ok()?;
        linalg::scale(t, &mut u.values);
        let j = renorm * c * sys.a.quadratic_form(&u.values);
        let done = (j - j_prev).abs() <= FLOW_JTOL * j.abs();
        j_prev = j;
        if done {
            break;
        }
    }
    Some(u)
}

/// Whether a converged record sits on the constant (or trivial) branch,
/// decided by comparing its Nehari action against the closed-form constant
/// value `λ^{1/2}(½ − 1/(p+1))·|𝒢|`.
fn constant_branch_hit(record: &SolutionRecord, params: &ProblemParams) -> bool {
    if matches!(record.branch, BranchTag::Trivial | BranchTag::Constant) {
        return true;
    }
    let j_const = params.constant_branch_action_density()
        * crate::graph::total_length(&record.u.mesh.graph);
    let c = 0.5 - 1.0 / (params.p + 1.0);
    let j = params.renorm_factor() * c * record.report.lambda_norm_sq;
    (j - j_const).abs() <= CONSTANT_BRANCH_RTOL * j_const.abs()
}

/// Minimizes the action over the Nehari manifold: descent from the
/// terminal-edge ansatz (or a random positive bump when the graph has no
/// terminal vertex), Newton polish, and constant-branch rejection with up to
/// [`MAX_RESTARTS`] seeded restarts. Returns the first — hence lowest-action —
/// nonconstant converged record.
pub fn least_action_solve(
    graph: &Arc<MetricGraph>,
    params: &ProblemParams,
    config: &SolverConfig,
) -> Result<SolutionRecord, SolverError> {
    let mesh = Arc::new(build_mesh(graph, config.h_target(params.lambda))?);
    let sys = LambdaSystem::new(&mesh, params.lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.random_seed);
    let mut attempts = 0;
    for attempt in 0..=MAX_RESTARTS {
        attempts = attempt + 1;
        let init = if attempt == 0 {
            ansatz_init(&mesh, params)
                .unwrap_or_else(|| random_init(&mesh, params, &mut rng))
        } else {
            random_init(&mesh, params, &mut rng)
        };
        let Some(flowed) = descend(init, params, config, &sys) else {
            continue;
        };
        let Ok(mut record) = newton_with(&flowed, params, config, &sys) else {
            continue;
        };
        if constant_branch_hit(&record, params) {
            continue;
        }
        record.branch = BranchTag::LeastAction;
        return Ok(record);
    }
    Err(SolverError::OnlyConstantBranchFound { attempts })
}

fn describe_peaks(peaks: &[PeakInfo], graph: &MetricGraph) -> Vec<String> {
    peaks
        .iter()
        .map(|p| match &p.vertex_id {
            Some(id) => format!("vertex {id}"),
            None => format!(
                "edge {} @ x = {:.4}",
                graph.edges[p.location.edge].id, p.location.x
            ),
        })
        .collect()
}

/// Builds the k-peak ansatz `W_λ`, corrects it with Newton, and reports the
/// correction and ansatz-residual norms. Fails with [`SolverError::PeakSetMismatch`]
/// if the converged state's peaks are not exactly the requested vertices.
pub fn peaked_solve(
    graph: &Arc<MetricGraph>,
    params: &ProblemParams,
    sites: &[PeakSite],
    config: &SolverConfig,
) -> Result<PeakedRecord, SolverError> {
    peaked_solve_impl(graph, params, sites, config, None)
}

fn peaked_solve_impl(
    graph: &Arc<MetricGraph>,
    params: &ProblemParams,
    sites: &[PeakSite],
    config: &SolverConfig,
    init: Option<&DiscreteFunction>,
) -> Result<PeakedRecord, SolverError> {
    let mesh = Arc::new(build_mesh(graph, config.h_target(params.lambda))?);
    let spec = PeakSpec {
        peaks: sites.to_vec(),
        lambda: params.lambda,
    };
    let w = build_ansatz(&mesh, &spec, params.p)?;
    let sys = LambdaSystem::new(&mesh, params.lambda)?;

    // Fixed-point defect of the ansatz: R = i*_λ(f(W)) − W in ‖·‖_λ, with the
    // nonlinear load recovered from N(W) = A_λ W − G(W).
    let gw = functionals::gradient_with(&w, params, &sys.a);
    let mut nw = vec![0.0; mesh.num_dofs()];
    sys.a.matvec(&w.values, &mut nw);
    for (ni, gi) in nw.iter_mut().zip(&gw) {
        *ni -= gi;
    }
    let mut r = sys.factor.solve(&nw);
    for (ri, wi) in r.iter_mut().zip(&w.values) {
        *ri -= wi;
    }
    let residual_r_norm = sys.lambda_norm(&r);

    let start = match init {
        Some(prev) if !Arc::ptr_eq(&prev.mesh, &mesh) => transfer(prev, &mesh),
        Some(prev) => prev.clone(),
        None => w.clone(),
    };
    let mut record = newton_with(&start, params, config, &sys)?;

    let mut expected: Vec<usize> = sites.iter().map(|s| s.vertex).collect();
    expected.sort_unstable();
    let mut found: Vec<usize> = record
        .peaks
        .iter()
        .filter_map(|p| if p.is_vertex { p.vertex } else { None })
        .collect();
    found.sort_unstable();
    let any_interior = record.peaks.iter().any(|p| !p.is_vertex);
    if any_interior || found != expected {
        return Err(SolverError::PeakSetMismatch {
            expected: expected
                .iter()
                .map(|&v| format!("vertex {}", graph.vertex_ids[v]))
                .collect(),
            found: describe_peaks(&record.peaks, graph),
        });
    }
    record.branch = BranchTag::Peaked(expected.len());

    let mut diff = record.u.values.clone();
    for (di, wi) in diff.iter_mut().zip(&w.values) {
        *di -= wi;
    }
    let correction_norm = sys.lambda_norm(&diff);
    Ok(PeakedRecord {
        record,
        ansatz: w,
        correction_norm,
        residual_r_norm,
    })
}

/// Tolerated relative increase of `J` along a warm-started least-action
/// branch; a larger jump means Newton derailed onto an excited state.
const WARM_TREND_RTOL: f64 = 0.05;

/// Least-action step inside a sweep: try Newton from the warm start first,
/// fall back to the full descent pipeline if it derails (constant branch or
/// an action jump above the trend guard).
fn least_action_step(
    graph: &Arc<MetricGraph>,
    params: &ProblemParams,
    config: &SolverConfig,
    warm: Option<&DiscreteFunction>,
    prev_action_j: Option<f64>,
) -> Result<SolutionRecord, SolverError> {
    if let Some(prev) = warm {
        let mesh = Arc::new(build_mesh(graph, config.h_target(params.lambda))?);
        let sys = LambdaSystem::new(&mesh, params.lambda)?;
        let start = if Arc::ptr_eq(&prev.mesh, &mesh) {
            prev.clone()
        } else {
            transfer(prev, &mesh)
        };
        if let Ok(mut record) = newton_with(&start, params, config, &sys) {
            let on_trend = prev_action_j
                .map(|j| record.report.action_j <= j * (1.0 + WARM_TREND_RTOL))
                .unwrap_or(true);
            if on_trend && !constant_branch_hit(&record, params) {
                record.branch = BranchTag::LeastAction;
                return Ok(record);
            }
        }
    }
    least_action_solve(graph, params, config)
}

/// Solves along an ascending λ list (≥ 3 entries), warm-starting each solve
/// from the previous solution rescaled nodally by `(λ_{i+1}/λ_i)^{1/(p−1)}`
/// (amplitude only; the mesh is rebuilt per λ and values re-interpolated).
/// Per-λ failures are recorded inline; a peak-set mismatch aborts the branch.
pub fn continuation_sweep(
    graph: &Arc<MetricGraph>,
    p: f64,
    lambdas: &[f64],
    mode: &SweepMode,
    config: &SolverConfig,
) -> Result<SweepReport, SolverError> {
    if lambdas.len() < 3 {
        return Err(SolverError::SweepPrecondition(format!(
            "need at least 3 lambda values, got {}",
            lambdas.len()
        )));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SolverError::SweepPrecondition(
            "lambda values must be strictly ascending".into(),
        ));
    }

    let mut entries = Vec::with_capacity(lambdas.len());
    let mut prev: Option<(f64, DiscreteFunction, f64)> = None;
    for &lambda in lambdas {
        let params = match ProblemParams::new(lambda, p) {
            Ok(q) => q,
            Err(e) => {
                entries.push(SweepEntry {
                    lambda,
                    outcome: SweepOutcome::Failed { error: e.to_string() },
                });
                continue;
            }
        };
        let warm = prev.as_ref().map(|(l_prev, u_prev, _)| {
            let s = (lambda / l_prev).powf(1.0 / (p - 1.0));
            let mut scaled = u_prev.clone();
            linalg::scale(s, &mut scaled.values);
            scaled
        });
        let prev_j = prev.as_ref().map(|&(_, _, j)| j);

        let mut abort = false;
        let outcome = match mode {
            SweepMode::Peaked(sites) => {
                match peaked_solve_impl(graph, &params, sites, config, warm.as_ref()) {
                    Ok(pr) => {
                        prev = Some((lambda, pr.record.u.clone(), pr.record.report.action_j));
                        SweepOutcome::Peaked(Box::new(pr))
                    }
                    Err(e) => {
                        abort = matches!(e, SolverError::PeakSetMismatch { .. });
                        SweepOutcome::Failed { error: e.to_string() }
                    }
                }
            }
            SweepMode::LeastAction => {
                match least_action_step(graph, &params, config, warm.as_ref(), prev_j) {
                    Ok(record) => {
                        prev = Some((lambda, record.u.clone(), record.report.action_j));
                        SweepOutcome::Solved(Box::new(record))
                    }
                    Err(e) => SweepOutcome::Failed { error: e.to_string() },
                }
            }
        };
        entries.push(SweepEntry { lambda, outcome });
        if abort {
            break;
        }
    }

    let mut report = SweepReport {
        p,
        entries,
        mass_exponent: None,
    };
    report.mass_exponent =
        crate::analysis::fit_scaling_points(&report.observable_table(Observable::MassSq))
            .ok()
            .map(|f| f.slope);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{interval_graph, star_graph};
    use crate::mesh::evaluate;
    use crate::profiles::soliton_norms;
    use approx::assert_relative_eq;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn linear_solve_reproduces_constants() {
        let g = Arc::new(star_graph(&[1.0, 2.0, 0.5]).unwrap());
        let mesh = Arc::new(build_mesh(&g, 0.05).unwrap());
        let lambda = 2.0;
        let f = DiscreteFunction::from_values(&mesh, vec![lambda * 1.5; mesh.num_dofs()]);
        let u = linear_kirchhoff_solve(&mesh, lambda, &f).unwrap();
        for &v in &u.values {
            assert_relative_eq!(v, 1.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn linear_solve_matches_manufactured_solution() {
        // −u″ + u = (1+π²)cos(πx) on [0,1] with natural ends → u = cos(πx).
        let g = Arc::new(interval_graph(1.0).unwrap());
        let mesh = Arc::new(build_mesh(&g, 0.005).unwrap());
        let f = DiscreteFunction::interpolate(&mesh, |_, x| {
            (1.0 + std::f64::consts::PI.powi(2)) * (std::f64::consts::PI * x).cos()
        });
        let u = linear_kirchhoff_solve(&mesh, 1.0, &f).unwrap();
        let mut err = 0.0f64;
        for k in 0..mesh.nodes_per_edge[0] {
            let x = k as f64 * mesh.edge_h[0];
            err = err.max((u.values[mesh.dof(0, k)] - (std::f64::consts::PI * x).cos()).abs());
        }
        assert!(err < 2e-4, "nodal error {err}");
    }

    #[test]
    fn dual_solve_satisfies_adjoint_identity() {
        let g = Arc::new(star_graph(&[1.0, 1.5]).unwrap());
        let mesh = Arc::new(build_mesh(&g, 0.1).unwrap());
        let lambda = 3.0;
        let a = assemble_a_lambda(&mesh, lambda);
        let m = assemble_mass(&mesh);
        let f: Vec<f64> = (0..mesh.num_dofs()).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..mesh.num_dofs()).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut mf = vec![0.0; mesh.num_dofs()];
        m.matvec(&f, &mut mf);
        let istar_f = linear_kirchhoff_solve_dual(&mesh, lambda, &mf).unwrap();
        // ⟨i*f, v⟩_λ = ⟨f, v⟩_{L²}
        let mut av = vec![0.0; mesh.num_dofs()];
        a.matvec(&v, &mut av);
        let lhs = linalg::dot(&istar_f.values, &av);
        let rhs = linalg::dot(&mf, &v);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-11);
    }

    #[test]
    fn newton_accepts_the_constant_branch_quickly() {
        let g = Arc::new(star_graph(&[1.0, 1.0, 1.0]).unwrap());
        let mesh = Arc::new(build_mesh(&g, 0.02).unwrap());
        let params = ProblemParams::new(2.0, 3.0).unwrap();
        let c = params.lambda.powf(1.0 / (params.p - 1.0));
        let u0 = DiscreteFunction::from_values(&mesh, vec![c; mesh.num_dofs()]);
        let rec = newton_solve(&u0, &params, &cfg()).unwrap();
        assert!(rec.newton_iters <= 2, "iters = {}", rec.newton_iters);
        assert_eq!(rec.branch, BranchTag::Constant);
        assert!(rec.peaks.is_empty());
    }

    #[test]
    fn newton_keeps_the_trivial_solution() {
        let g = Arc::new(interval_graph(2.0).unwrap());
        let mesh = Arc::new(build_mesh(&g, 0.05).unwrap());
        let params = ProblemParams::new(5.0, 3.0).unwrap();
        let rec = newton_solve(&DiscreteFunction::zeros(&mesh), &params, &cfg()).unwrap();
        assert_eq!(rec.branch, BranchTag::Trivial);
        assert_eq!(rec.newton_iters, 0);
        assert!(rec.u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn newton_converges_from_the_one_peak_ansatz() {
        let g = Arc::new(interval_graph(4.0).unwrap());
        let params = ProblemParams::new(100.0, 3.0).unwrap();
        let config = cfg();
        let mesh = Arc::new(build_mesh(&g, config.h_target(params.lambda)).unwrap());
        let w = build_ansatz(
            &mesh,
            &PeakSpec { peaks: vec![PeakSite { vertex: 0, l_cut: None }], lambda: 100.0 },
            3.0,
        )
        .unwrap();
        let rec = newton_solve(&w, &params, &config).unwrap();
        assert_eq!(rec.branch, BranchTag::Peaked(1));
        let unorm = rec.report.lambda_norm_sq.sqrt();
        assert!(rec.residual_norm <= config.newton_tol * (1.0 + unorm));
        // Positivity up to tolerance and a single vertex peak.
        assert!(rec.u.values.iter().all(|&v| v >= -10.0 * config.newton_tol));
        assert_eq!(rec.peaks.len(), 1);
        assert!(rec.peaks[0].is_vertex);
        assert_eq!(rec.peaks[0].vertex, Some(0));
        // Peak value only slightly below the constant-state amplitude λ^{1/(p−1)}.
        assert!(rec.peaks[0].value >= 0.99 * 10.0);
    }

    #[test]
    fn least_action_on_an_interval_approaches_the_limit_action() {
        let g = Arc::new(interval_graph(4.0).unwrap());
        let params = ProblemParams::new(100.0, 3.0).unwrap();
        let rec = least_action_solve(&g, &params, &cfg()).unwrap();
        assert_eq!(rec.branch, BranchTag::LeastAction);
        let m_inf = soliton_norms(3.0).m_inf;
        let j = crate::functionals::nehari_action(&rec.u, &params).unwrap();
        assert_relative_eq!(j, m_inf, max_relative = 1e-2);
        assert_eq!(rec.peaks.len(), 1);
        assert!(rec.peaks[0].is_vertex);
        let v = rec.peaks[0].vertex.unwrap();
        assert_eq!(g.degree(v), 1);
    }

    #[test]
    fn least_action_on_a_star_peaks_at_one_leaf() {
        let g = Arc::new(star_graph(&[1.0, 1.0, 1.0]).unwrap());
        let params = ProblemParams::new(100.0, 3.0).unwrap();
        let rec = least_action_solve(&g, &params, &cfg()).unwrap();
        assert_eq!(rec.peaks.len(), 1);
        assert!(rec.peaks[0].is_vertex);
        let v = rec.peaks[0].vertex.unwrap();
        assert_eq!(g.degree(v), 1, "peak must sit on a leaf, got vertex {v}");
    }

    #[test]
    fn least_action_reports_constant_branch_at_small_lambda() {
        let g = Arc::new(star_graph(&[1.0, 1.0, 1.0]).unwrap());
        let params = ProblemParams::new(0.1, 3.0).unwrap();
        match least_action_solve(&g, &params, &cfg()) {
            Err(SolverError::OnlyConstantBranchFound { attempts }) => {
                assert_eq!(attempts, MAX_RESTARTS + 1)
            }
            other => panic!("expected OnlyConstantBranchFound, got {other:?}"),
        }
    }

    #[test]
    fn peaked_three_star_full_peak_set() {
        let g = Arc::new(star_graph(&[1.0, 1.0, 1.0]).unwrap());
        let params = ProblemParams::new(400.0, 3.0).unwrap();
        let sites: Vec<PeakSite> = (1..=3).map(|v| PeakSite { vertex: v, l_cut: None }).collect();
        let pr = peaked_solve(&g, &params, &sites, &cfg()).unwrap();
        assert_eq!(pr.record.branch, BranchTag::Peaked(3));
        let w_lambda_norm = crate::mesh::lambda_norm(&pr.ansatz, params.lambda);
        assert!(
            pr.correction_norm / w_lambda_norm <= 1e-2,
            "relative correction {}",
            pr.correction_norm / w_lambda_norm
        );
        assert!(pr.residual_r_norm > 0.0);
    }

    #[test]
    fn peaked_single_edge_mass_matches_the_soliton_mass() {
        let g = Arc::new(interval_graph(4.0).unwrap());
        let params = ProblemParams::new(400.0, 3.0).unwrap();
        let pr = peaked_solve(&g, &params, &[PeakSite { vertex: 0, l_cut: None }], &cfg()).unwrap();
        let expected = params.lambda.sqrt() * soliton_norms(3.0).l2_halfline_sq;
        assert_relative_eq!(pr.record.report.mass_sq, expected, max_relative = 5e-2);
    }

    #[test]
    fn peaked_solve_rejects_wrong_branch() {
        // Below the first bifurcation value (2λ < (π/l)² here) no nonconstant
        // positive state exists: Newton from the ansatz must fall onto the
        // constant/trivial branch and the peak check must catch it.
        let g = Arc::new(interval_graph(4.0).unwrap());
        let params = ProblemParams::new(0.2, 3.0).unwrap();
        let out = peaked_solve(&g, &params, &[PeakSite { vertex: 0, l_cut: None }], &cfg());
        match out {
            Err(SolverError::PeakSetMismatch { expected, .. }) => {
                assert_eq!(expected, vec!["vertex a".to_string()])
            }
            Err(SolverError::NoConvergence { .. }) => {}
            other => panic!("expected a branch rejection, got {other:?}"),
        }
    }

    #[test]
    fn peaked_solve_propagates_ansatz_errors() {
        let g = Arc::new(star_graph(&[1.0, 1.0, 1.0]).unwrap());
        let params = ProblemParams::new(100.0, 3.0).unwrap();
        // Vertex 0 is the degree-3 center.
        let out = peaked_solve(&g, &params, &[PeakSite { vertex: 0, l_cut: None }], &cfg());
        assert!(matches!(
            out,
            Err(SolverError::Profile(ProfileError::PeakOnNonTerminalVertex { .. }))
        ));
    }

    #[test]
    fn sweep_preconditions() {
        let g = Arc::new(interval_graph(2.0).unwrap());
        let config = cfg();
        assert!(matches!(
            continuation_sweep(&g, 3.0, &[], &SweepMode::LeastAction, &config),
            Err(SolverError::SweepPrecondition(_))
        ));
        assert!(matches!(
            continuation_sweep(&g, 3.0, &[100.0, 50.0, 200.0], &SweepMode::LeastAction, &config),
            Err(SolverError::SweepPrecondition(_))
        ));
    }

    #[test]
    fn least_action_sweep_descends_toward_the_limit() {
        // Under the h ~ c/λ mesh law the discretization bias of J shrinks
        // like 1/λ and dominates the (also shrinking) boundary tails, so the
        // renormalized action decreases monotonically toward m_∞.
        let g = Arc::new(interval_graph(1.0).unwrap());
        let lambdas = [50.0, 100.0, 200.0];
        let config = SolverConfig {
            c_mesh: 0.4,
            mesh_exponent: 1.0,
            ..SolverConfig::default()
        };
        let report =
            continuation_sweep(&g, 3.0, &lambdas, &SweepMode::LeastAction, &config).unwrap();
        assert_eq!(report.entries.len(), 3);
        let actions = report.action_values();
        assert_eq!(actions.len(), 3, "all entries must converge");
        for w in actions.windows(2) {
            assert!(w[1].1 < w[0].1, "J must decrease: {actions:?}");
        }
        let m_inf = soliton_norms(3.0).m_inf;
        assert!((actions[2].1 - m_inf).abs() / m_inf < 2e-2);
        // Mass law for p = 3: ρ² ~ λ^{1/2}.
        let slope = report.mass_exponent.unwrap();
        assert!((slope - 0.5).abs() < 0.05, "mass exponent {slope}");
    }

    #[test]
    fn warm_start_transfer_is_consistent() {
        // transfer() must reproduce nodal values when evaluated back.
        let g = Arc::new(interval_graph(3.0).unwrap());
        let coarse = Arc::new(build_mesh(&g, 0.2).unwrap());
        let fine = Arc::new(build_mesh(&g, 0.07).unwrap());
        let u = DiscreteFunction::interpolate(&coarse, |_, x| (x - 1.0).abs());
        let v = transfer(&u, &fine);
        for k in 0..fine.nodes_per_edge[0] {
            let x = k as f64 * fine.edge_h[0];
            let expect = evaluate(&u, crate::graph::EdgeCoordinate { edge: 0, x }).unwrap();
            assert_relative_eq!(v.values[fine.dof(0, k)], expect, epsilon = 1e-12);
        }
    }
}
