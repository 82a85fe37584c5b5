//! Experiment orchestration: one entry per mode, plus report emission.
//! Every run writes `manifest.json`; wall-clock data lives only there so the
//! data files are byte-reproducible for a fixed config and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nlsgraph_core::analysis::{self, DecayFit};
use nlsgraph_core::functionals::ProblemParams;
use nlsgraph_core::graph::{total_length, MetricGraph};
use nlsgraph_core::mesh::{build_mesh, DiscreteFunction};
use nlsgraph_core::profiles::{rescaled_soliton, soliton_norms, PeakSite};
use nlsgraph_core::solvers::{
    continuation_sweep, least_action_solve, newton_solve, peaked_solve, SolutionRecord,
    SolverError, SweepEntry, SweepMode, SweepOutcome, SweepReport,
};
use nlsgraph_core::spectral::{linearized_operator, smallest_eigenpairs, EigenReport, SpectralError};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Mode, Plan};

/// Anything that can abort a run. Config problems exit 2, the rest exit 1.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failed at lambda = {lambda}: {source}")]
    Solver {
        lambda: f64,
        #[source]
        source: SolverError,
    },
    #[error("sweep entry at lambda = {lambda} failed: {message}")]
    SweepEntry { lambda: f64, message: String },
    #[error("eigensolver failed at lambda = {lambda}: {source}")]
    Spectral {
        lambda: f64,
        #[source]
        source: SpectralError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form, printed to stdout on failure. `lambda` is the
    /// failing frequency when the error is tied to one.
    pub fn to_json(&self) -> serde_json::Value {
        let (kind, lambda) = match self {
            RunError::Config(_) => ("config", None),
            RunError::Solver { lambda, .. } => ("solver", Some(*lambda)),
            RunError::SweepEntry { lambda, .. } => ("solver", Some(*lambda)),
            RunError::Spectral { lambda, .. } => ("spectral", Some(*lambda)),
            RunError::Io { .. } => ("io", None),
        };
        json!({ "error": { "kind": kind, "lambda": lambda, "message": self.to_string() } })
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, source: csv::Error) -> RunError {
    io_err(path, std::io::Error::other(source))
}

/// Executes the plan and writes all reports into `plan.out`.
pub fn run(plan: &Plan) -> Result<(), RunError> {
    let clock = Instant::now();
    let started = SystemTime::now();
    fs::create_dir_all(&plan.out).map_err(|e| io_err(&plan.out, e))?;
    match plan.mode {
        Mode::Solve => run_solve(plan)?,
        Mode::Sweep => run_sweep(plan)?,
        Mode::Peaked => run_peaked(plan)?,
        Mode::Spectrum => run_spectrum(plan)?,
        Mode::ProfileCheck => run_profile_check(plan)?,
    }
    write_manifest(plan, started, clock)
}

fn run_solve(plan: &Plan) -> Result<(), RunError> {
    let mut records = Vec::new();
    for &lambda in &plan.lambdas {
        let params = ProblemParams { lambda, p: plan.p };
        let record = least_action_solve(&plan.graph, &params, &plan.solver)
            .map_err(|source| RunError::Solver { lambda, source })?;
        write_solution_csv(plan, &record)?;
        records.push(record);
    }
    write_json(&plan.out.join("records.json"), &records)
}

fn run_sweep(plan: &Plan) -> Result<(), RunError> {
    let report = continuation_sweep(
        &plan.graph,
        plan.p,
        &plan.lambdas,
        &SweepMode::LeastAction,
        &plan.solver,
    )
    .map_err(|source| RunError::Solver { lambda: plan.lambdas[0], source })?;
    emit_sweep(plan, &report)
}

fn run_peaked(plan: &Plan) -> Result<(), RunError> {
    let sites = peak_sites(plan);
    if plan.lambdas.len() == 1 {
        let lambda = plan.lambdas[0];
        let params = ProblemParams { lambda, p: plan.p };
        let peaked = peaked_solve(&plan.graph, &params, &sites, &plan.solver)
            .map_err(|source| RunError::Solver { lambda, source })?;
        write_solution_csv(plan, &peaked.record)?;
        return write_json(&plan.out.join("records.json"), &[&peaked]);
    }
    let report = continuation_sweep(
        &plan.graph,
        plan.p,
        &plan.lambdas,
        &SweepMode::Peaked(sites),
        &plan.solver,
    )
    .map_err(|source| RunError::Solver { lambda: plan.lambdas[0], source })?;
    emit_sweep(plan, &report)
}

fn run_spectrum(plan: &Plan) -> Result<(), RunError> {
    let lambda = plan.lambdas[0];
    let params = ProblemParams { lambda, p: plan.p };
    let record = solve_state(plan, &params)?;
    let operator = linearized_operator(&record.u, &record.params);
    let eig = smallest_eigenpairs(&operator, plan.k)
        .map_err(|source| RunError::Spectral { lambda, source })?;
    write_solution_csv(plan, &record)?;
    write_json(&plan.out.join("records.json"), &[&record])?;

    #[derive(Serialize)]
    struct SpectrumReport<'a> {
        lambda: f64,
        p: f64,
        k: usize,
        kernel_tol: f64,
        /// Number of eigenvalues with `|μ| ≤ kernel_tol`.
        kernel_count: usize,
        #[serde(flatten)]
        eig: &'a EigenReport,
    }
    let report = SpectrumReport {
        lambda,
        p: plan.p,
        k: plan.k,
        kernel_tol: plan.kernel_tol,
        kernel_count: eig.kernel_count(plan.kernel_tol),
        eig: &eig,
    };
    write_json(&plan.out.join("spectrum.json"), &report)
}

fn run_profile_check(plan: &Plan) -> Result<(), RunError> {
    let lambda = plan.lambdas[0];
    let params = ProblemParams { lambda, p: plan.p };
    let record = solve_state(plan, &params)?;
    write_solution_csv(plan, &record)?;
    write_json(&plan.out.join("records.json"), &[&record])?;

    #[derive(Serialize)]
    struct PeakCheck {
        vertex: Option<String>,
        edge: String,
        value: f64,
        profile_error: Option<f64>,
        decay: Option<DecayFit>,
        /// Diagnostics that could not be computed, with the reason.
        note: Option<String>,
    }
    #[derive(Serialize)]
    struct ProfileReport {
        lambda: f64,
        p: f64,
        action_j: f64,
        /// `J − n·m_∞` where `n` is the peak count.
        action_gap: Option<f64>,
        /// Limit action `m_∞` of a single half-line peak.
        m_inf: f64,
        peaks: Vec<PeakCheck>,
    }

    let graph = &record.u.mesh.graph;
    let mut peaks = Vec::new();
    for peak in &record.peaks {
        let edge = peak.location.edge;
        let length = graph.edges[edge].length;
        let profile = analysis::profile_error(&record.u, &record.params, edge);
        let decay = analysis::decay_fit(
            &record.u,
            &record.params,
            edge,
            (0.25 * length, 0.375 * length),
        );
        let mut notes = Vec::new();
        if let Err(e) = &profile {
            notes.push(format!("profile_error: {e}"));
        }
        if let Err(e) = &decay {
            notes.push(format!("decay: {e}"));
        }
        peaks.push(PeakCheck {
            vertex: peak.vertex_id.clone(),
            edge: graph.edges[edge].id.clone(),
            value: peak.value,
            profile_error: profile.ok(),
            decay: decay.ok(),
            note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        });
    }
    let report = ProfileReport {
        lambda,
        p: plan.p,
        action_j: record.report.action_j,
        action_gap: analysis::action_gap(&record, plan.p).ok(),
        m_inf: soliton_norms(plan.p).m_inf,
        peaks,
    };
    write_json(&plan.out.join("profile.json"), &report)
}

fn peak_sites(plan: &Plan) -> Vec<PeakSite> {
    plan.peaks
        .iter()
        .map(|&(vertex, _)| PeakSite { vertex, l_cut: None })
        .collect()
}

/// State selection shared by spectrum and profile-check: an explicit peak set
/// wins, then a soliton centered at `center`, then the least-action search.
fn solve_state(plan: &Plan, params: &ProblemParams) -> Result<SolutionRecord, RunError> {
    let lambda = params.lambda;
    let wrap = |source| RunError::Solver { lambda, source };
    if !plan.peaks.is_empty() {
        let sites = peak_sites(plan);
        return peaked_solve(&plan.graph, params, &sites, &plan.solver)
            .map(|peaked| peaked.record)
            .map_err(wrap);
    }
    if let Some(center) = plan.center {
        let h = plan.solver.h_target(lambda);
        let mesh = Arc::new(build_mesh(&plan.graph, h).map_err(|e| wrap(e.into()))?);
        let dist = vertex_distances(&plan.graph, center);
        let u0 = DiscreteFunction::interpolate(&mesh, |e, x| {
            let edge = &mesh.graph.edges[e];
            let d = (dist[edge.a] + x).min(dist[edge.b] + (edge.length - x));
            rescaled_soliton(params.p, lambda, d)
        });
        return newton_solve(&u0, params, &plan.solver).map_err(wrap);
    }
    least_action_solve(&plan.graph, params, &plan.solver).map_err(wrap)
}

/// Shortest path distance from `source` to every vertex (Dijkstra; the graphs
/// are small enough that the quadratic scan is fine).
fn vertex_distances(g: &MetricGraph, source: usize) -> Vec<f64> {
    let n = g.num_vertices();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[source] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for (v, &d) in dist.iter().enumerate() {
            if !done[v] && d < best {
                best = d;
                u = v;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for &(e, end) in &g.adjacency[u] {
            let edge = &g.edges[e];
            let w = if end == 0 { edge.b } else { edge.a };
            let candidate = dist[u] + edge.length;
            if candidate < dist[w] {
                dist[w] = candidate;
            }
        }
    }
    dist
}

/// One `sweep.csv` row; `None` fields are written as empty cells.
struct SweepRow {
    lambda: f64,
    action_j: Option<f64>,
    mass_sq: Option<f64>,
    peak_vertex: Option<String>,
    profile_error: Option<f64>,
    decay_c2: Option<f64>,
    correction_norm: Option<f64>,
    residual_r: Option<f64>,
}

fn sweep_row(entry: &SweepEntry) -> SweepRow {
    let (record, peaked) = match &entry.outcome {
        SweepOutcome::Solved(r) => (Some(r.as_ref()), None),
        SweepOutcome::Peaked(pr) => (
            Some(&pr.record),
            Some((pr.correction_norm, pr.residual_r_norm)),
        ),
        SweepOutcome::Failed { .. } => (None, None),
    };
    let mut row = SweepRow {
        lambda: entry.lambda,
        action_j: None,
        mass_sq: None,
        peak_vertex: None,
        profile_error: None,
        decay_c2: None,
        correction_norm: peaked.map(|(c, _)| c),
        residual_r: peaked.map(|(_, r)| r),
    };
    let Some(rec) = record else {
        return row;
    };
    row.action_j = Some(rec.report.action_j);
    row.mass_sq = Some(rec.report.mass_sq);
    if let Some(peak) = rec.peaks.first() {
        row.peak_vertex = peak.vertex_id.clone();
        let edge = peak.location.edge;
        let length = rec.u.mesh.graph.edges[edge].length;
        row.profile_error = analysis::profile_error(&rec.u, &rec.params, edge).ok();
        row.decay_c2 = analysis::decay_fit(
            &rec.u,
            &rec.params,
            edge,
            (0.25 * length, 0.375 * length),
        )
        .ok()
        .map(|fit| fit.c2);
    }
    row
}

/// Writes the full sweep report set, then surfaces the first failed entry (if
/// any) as the run error so automation sees a nonzero exit.
fn emit_sweep(plan: &Plan, report: &SweepReport) -> Result<(), RunError> {
    write_json(&plan.out.join("records.json"), report)?;
    for record in report.records() {
        write_solution_csv(plan, record)?;
    }
    let rows: Vec<SweepRow> = report.entries.iter().map(sweep_row).collect();
    write_sweep_csv(&plan.out.join("sweep.csv"), &rows)?;
    write_dat_files(plan, &rows)?;
    for entry in &report.entries {
        if let SweepOutcome::Failed { error } = &entry.outcome {
            return Err(RunError::SweepEntry {
                lambda: entry.lambda,
                message: error.clone(),
            });
        }
    }
    Ok(())
}

/// `{}` formatting (shortest round-trip for floats) keeps every data file
/// deterministic for a fixed config and seed.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "lambda",
        "action_j",
        "mass_sq",
        "peak_vertex",
        "profile_error",
        "decay_c2",
        "correction_norm",
        "residual_r",
    ])
    .map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record([
            row.lambda.to_string(),
            cell(row.action_j),
            cell(row.mass_sq),
            row.peak_vertex.clone().unwrap_or_default(),
            cell(row.profile_error),
            cell(row.decay_c2),
            cell(row.correction_norm),
            cell(row.residual_r),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Two-column gnuplot files, one per observable with data.
fn write_dat_files(plan: &Plan, rows: &[SweepRow]) -> Result<(), RunError> {
    type Get = fn(&SweepRow) -> Option<f64>;
    let series: [(&str, Get); 6] = [
        ("action_j", |r| r.action_j),
        ("mass_sq", |r| r.mass_sq),
        ("profile_error", |r| r.profile_error),
        ("decay_c2", |r| r.decay_c2),
        ("correction_norm", |r| r.correction_norm),
        ("residual_r", |r| r.residual_r),
    ];
    for (name, get) in series {
        let mut text = String::new();
        for row in rows {
            if let Some(v) = get(row) {
                text.push_str(&format!("{} {}\n", row.lambda, v));
            }
        }
        if text.is_empty() {
            continue;
        }
        let path = plan.out.join(format!("{name}.dat"));
        let body = format!("# lambda {name}\n{text}");
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Nodal values as `edge,x,value` rows, edge-major in mesh order.
fn write_solution_csv(plan: &Plan, record: &SolutionRecord) -> Result<(), RunError> {
    let path = plan.out.join(format!("solution_{}.csv", record.params.lambda));
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["edge", "x", "value"]).map_err(|e| csv_err(&path, e))?;
    let mesh = &record.u.mesh;
    for (e, edge) in mesh.graph.edges.iter().enumerate() {
        let h = mesh.edge_h[e];
        for k in 0..mesh.nodes_per_edge[e] {
            w.write_record([
                edge.id.clone(),
                (k as f64 * h).to_string(),
                record.u.values[mesh.dof(e, k)].to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| io_err(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn write_manifest(plan: &Plan, started: SystemTime, clock: Instant) -> Result<(), RunError> {
    #[derive(Serialize)]
    struct GraphSummary<'a> {
        path: &'a Path,
        vertices: usize,
        edges: usize,
        total_length: f64,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        tool_version: &'static str,
        seed: u64,
        started_unix_secs: u64,
        wall_time_ms: u128,
        graph: GraphSummary<'a>,
        /// The effective configuration after flag merging.
        config: &'a ExperimentConfig,
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: plan.solver.random_seed,
        started_unix_secs: started
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs(),
        wall_time_ms: clock.elapsed().as_millis(),
        graph: GraphSummary {
            path: &plan.graph_path,
            vertices: plan.graph.num_vertices(),
            edges: plan.graph.num_edges(),
            total_length: total_length(&plan.graph),
        },
        config: &plan.echo,
    };
    write_json(&plan.out.join("manifest.json"), &manifest)
}
