//! Experiment configuration: JSON config file merged with command-line
//! overrides into a validated run plan. Precedence is flags > config file >
//! defaults; unknown config keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlsgraph_core::graph::{validate_graph, MetricGraph, RawGraph};
use nlsgraph_core::solvers::SolverConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Configuration and input errors. These exit with code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Independent least-action solves, one per λ.
    Solve,
    /// Warm-started least-action continuation over an ascending λ grid.
    Sweep,
    /// Peaked ansatz correction at one λ, or peaked continuation over a grid.
    Peaked,
    /// Eigenpairs of the linearization at a solved state (single λ).
    Spectrum,
    /// Peak location, profile error and decay fit of a solved state (single λ).
    ProfileCheck,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
            Mode::Peaked => "peaked",
            Mode::Spectrum => "spectrum",
            Mode::ProfileCheck => "profile-check",
        }
    }
}

/// λ grid specified as endpoints and a count instead of an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Geometric spacing instead of linear.
    #[serde(default)]
    pub log: bool,
}

impl LambdaRange {
    fn expand(&self) -> Result<Vec<f64>, ConfigError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "lambda_range.min = {} must be positive and finite",
                self.min
            )));
        }
        if self.count == 0 {
            return Err(ConfigError::Invalid("lambda_range.count must be at least 1".into()));
        }
        if self.count > 1 && !(self.max > self.min) {
            return Err(ConfigError::Invalid(format!(
                "lambda_range.max = {} must exceed min = {}",
                self.max, self.min
            )));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        let n = self.count;
        let grid = (0..n).map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if self.log {
                (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp()
            } else {
                self.min + t * (self.max - self.min)
            }
        });
        Ok(grid.collect())
    }
}

/// Contents of an experiment config file. Every field is optional here;
/// [`resolve`] fills defaults and checks mode-specific requirements.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Path to the graph spec JSON (vertices + edges with lengths).
    pub graph: Option<PathBuf>,
    /// Run mode; the subcommand overrides this when both are given.
    pub mode: Option<Mode>,
    /// Nonlinearity power (default 3).
    pub p: Option<f64>,
    /// Explicit λ list; mutually exclusive with `lambda_range`.
    pub lambda: Option<Vec<f64>>,
    pub lambda_range: Option<LambdaRange>,
    /// Peak vertex ids (peaked mode; optional for spectrum / profile-check).
    pub peaks: Option<Vec<String>>,
    /// Vertex id for a soliton-centered initial state (spectrum mode only).
    pub center: Option<String>,
    /// Number of eigenpairs (spectrum mode only, default 6).
    pub k: Option<usize>,
    /// |μ| threshold for counting near-kernel eigenvalues (default 1e-3).
    pub kernel_tol: Option<f64>,
    /// Discretization and Newton parameters; omitted fields take defaults.
    pub solver: Option<SolverConfig>,
    /// Output directory (default `out`).
    pub out: Option<PathBuf>,
}

/// Command-line overrides; `None` means the flag was not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub graph: Option<PathBuf>,
    pub p: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub lambda_range: Option<LambdaRange>,
    pub h_target: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub peaks: Option<Vec<String>>,
}

/// A fully validated run plan.
#[derive(Debug, Clone)]
pub struct Plan {
    pub graph_path: PathBuf,
    pub graph: Arc<MetricGraph>,
    pub mode: Mode,
    pub p: f64,
    pub lambdas: Vec<f64>,
    /// Peak vertex indices with their ids, in input order.
    pub peaks: Vec<(usize, String)>,
    /// Center vertex index for spectrum initialization.
    pub center: Option<usize>,
    pub k: usize,
    pub kernel_tol: f64,
    pub solver: SolverConfig,
    pub out: PathBuf,
    /// Effective configuration, echoed into the manifest.
    pub echo: ExperimentConfig,
}

/// Parses a config file, rejecting unknown keys with line/column diagnostics.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parses and validates a graph spec file.
pub fn load_graph(path: &Path) -> Result<Arc<MetricGraph>, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawGraph = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    validate_graph(&raw)
        .map(Arc::new)
        .map_err(|e| ConfigError::Invalid(format!("{}: {}", path.display(), e)))
}

/// Merges the config file with flag overrides and validates the result.
pub fn resolve(
    mode: Mode,
    file: Option<ExperimentConfig>,
    over: Overrides,
) -> Result<Plan, ConfigError> {
    let mut cfg = file.unwrap_or_default();
    cfg.mode = Some(mode);
    if over.graph.is_some() {
        cfg.graph = over.graph;
    }
    if over.p.is_some() {
        cfg.p = over.p;
    }
    if over.lambda.is_some() {
        cfg.lambda = over.lambda;
        cfg.lambda_range = None;
    }
    if over.lambda_range.is_some() {
        cfg.lambda_range = over.lambda_range;
        cfg.lambda = None;
    }
    if over.peaks.is_some() {
        cfg.peaks = over.peaks;
    }
    if over.out.is_some() {
        cfg.out = over.out;
    }

    let mut solver = cfg.solver.unwrap_or_default();
    if let Some(h) = over.h_target {
        if !(h.is_finite() && h > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "h_target = {h} must be positive and finite"
            )));
        }
        solver.h_target_override = Some(h);
    }
    if let Some(s) = over.seed {
        solver.random_seed = s;
    }
    validate_solver(&solver)?;
    cfg.solver = Some(solver);

    let p = cfg.p.unwrap_or(3.0);
    if !(p.is_finite() && p > 1.0) {
        return Err(ConfigError::Invalid(format!("p = {p} must be finite and > 1")));
    }
    cfg.p = Some(p);

    let lambdas = match (&cfg.lambda, &cfg.lambda_range) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Invalid(
                "give either lambda or lambda_range, not both".into(),
            ))
        }
        (None, None) => {
            return Err(ConfigError::Invalid(
                "no lambda values given (use --lambda or --lambda-range)".into(),
            ))
        }
        (Some(list), None) => {
            for (i, &l) in list.iter().enumerate() {
                if !(l.is_finite() && l > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "lambda[{i}] = {l} must be positive and finite"
                    )));
                }
            }
            list.clone()
        }
        (None, Some(range)) => range.expand()?,
    };
    cfg.lambda = Some(lambdas.clone());
    cfg.lambda_range = None;

    let graph_path = cfg
        .graph
        .clone()
        .ok_or_else(|| ConfigError::Invalid("no graph file given (use --graph)".into()))?;
    let graph = load_graph(&graph_path)?;

    let peak_ids = cfg.peaks.clone().unwrap_or_default();
    let mut peaks = Vec::with_capacity(peak_ids.len());
    for id in &peak_ids {
        let v = graph.vertex_index(id).ok_or_else(|| {
            ConfigError::Invalid(format!("peak vertex '{id}' is not in the graph"))
        })?;
        peaks.push((v, id.clone()));
    }
    let center = match &cfg.center {
        Some(id) => Some(graph.vertex_index(id).ok_or_else(|| {
            ConfigError::Invalid(format!("center vertex '{id}' is not in the graph"))
        })?),
        None => None,
    };

    check_mode_requirements(mode, &cfg, &lambdas, &peaks)?;

    let k = cfg.k.unwrap_or(6);
    if k == 0 {
        return Err(ConfigError::Invalid("k must be at least 1".into()));
    }
    let kernel_tol = cfg.kernel_tol.unwrap_or(1e-3);
    if !(kernel_tol.is_finite() && kernel_tol > 0.0) {
        return Err(ConfigError::Invalid(format!(
            "kernel_tol = {kernel_tol} must be positive and finite"
        )));
    }

    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = Some(out.clone());

    Ok(Plan {
        graph_path,
        graph,
        mode,
        p,
        lambdas,
        peaks,
        center,
        k,
        kernel_tol,
        solver: cfg.solver.unwrap(),
        out,
        echo: cfg,
    })
}

fn validate_solver(s: &SolverConfig) -> Result<(), ConfigError> {
    let positive: [(&str, f64); 4] = [
        ("solver.newton_tol", s.newton_tol),
        ("solver.c_mesh", s.c_mesh),
        ("solver.h_max", s.h_max),
        ("solver.gradient_flow_step", s.gradient_flow_step),
    ];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            return Err(ConfigError::Invalid(format!("{name} = {v} must be positive and finite")));
        }
    }
    if !s.mesh_exponent.is_finite() || s.mesh_exponent < 0.0 {
        return Err(ConfigError::Invalid(format!(
            "solver.mesh_exponent = {} must be nonnegative",
            s.mesh_exponent
        )));
    }
    if let Some(h) = s.h_target_override {
        if !(h.is_finite() && h > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "solver.h_target_override = {h} must be positive and finite"
            )));
        }
    }
    Ok(())
}

fn check_mode_requirements(
    mode: Mode,
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    peaks: &[(usize, String)],
) -> Result<(), ConfigError> {
    let single_lambda = matches!(mode, Mode::Spectrum | Mode::ProfileCheck);
    if single_lambda && lambdas.len() != 1 {
        return Err(ConfigError::Invalid(format!(
            "{} mode takes exactly one lambda, got {}",
            mode.name(),
            lambdas.len()
        )));
    }
    let sweep_like = mode == Mode::Sweep || (mode == Mode::Peaked && lambdas.len() > 1);
    if sweep_like {
        if lambdas.len() < 3 {
            return Err(ConfigError::Invalid(format!(
                "{} mode needs at least 3 lambda values, got {}",
                mode.name(),
                lambdas.len()
            )));
        }
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ConfigError::Invalid(
                "lambda values must be strictly ascending for a sweep".into(),
            ));
        }
    }
    if mode == Mode::Peaked && peaks.is_empty() {
        return Err(ConfigError::Invalid(
            "peaked mode requires a peak set (use --peaks v1,v2,...)".into(),
        ));
    }
    if !peaks.is_empty() && matches!(mode, Mode::Solve | Mode::Sweep) {
        return Err(ConfigError::Invalid(format!(
            "peaks only apply to peaked, spectrum or profile-check mode, not {}",
            mode.name()
        )));
    }
    if cfg.center.is_some() && mode != Mode::Spectrum {
        return Err(ConfigError::Invalid("center only applies to spectrum mode".into()));
    }
    if (cfg.k.is_some() || cfg.kernel_tol.is_some()) && mode != Mode::Spectrum {
        return Err(ConfigError::Invalid(
            "k and kernel_tol only apply to spectrum mode".into(),
        ));
    }
    Ok(())
}
