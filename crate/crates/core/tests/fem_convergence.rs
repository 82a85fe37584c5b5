//! Manufactured-solution convergence of the linear Kirchhoff solver and the
//! discrete vertex flux balance of converged nonlinear states.

use std::sync::Arc;

use nlsgraph_core::analysis::{fit_scaling_points, kirchhoff_flux};
use nlsgraph_core::functionals::ProblemParams;
use nlsgraph_core::graph::interval_graph;
use nlsgraph_core::mesh::{assemble_mass, build_mesh, DiscreteFunction};
use nlsgraph_core::profiles::{build_ansatz, PeakSite, PeakSpec};
use nlsgraph_core::solvers::{linear_kirchhoff_solve, newton_solve, SolverConfig};

/// `−u″ + λu = f` on a unit edge with `u = cos(πx)`: Neumann-compatible, so
/// the Kirchhoff weak form reproduces it. Discrete L² error is second order.
#[test]
fn manufactured_neumann_problem_converges_at_order_two() {
    let g = Arc::new(interval_graph(1.0).unwrap());
    let lambda = 1.0;
    let exact = |x: f64| (std::f64::consts::PI * x).cos();
    let forcing =
        |x: f64| (std::f64::consts::PI.powi(2) + lambda) * (std::f64::consts::PI * x).cos();

    let mut points = Vec::new();
    for k in 0..5 {
        let h = 0.1 / f64::powi(2.0, k);
        let mesh = Arc::new(build_mesh(&g, h).unwrap());
        let f = DiscreteFunction::interpolate(&mesh, |_, x| forcing(x));
        let u = linear_kirchhoff_solve(&mesh, lambda, &f).unwrap();
        let ue = DiscreteFunction::interpolate(&mesh, |_, x| exact(x));
        let diff: Vec<f64> = u
            .values
            .iter()
            .zip(&ue.values)
            .map(|(a, b)| a - b)
            .collect();
        let m = assemble_mass(&mesh);
        let err = m.quadratic_form(&diff).sqrt();
        assert!(err > 0.0, "error unexpectedly zero at h = {h}");
        points.push((h, err));
    }

    let fit = fit_scaling_points(&points).unwrap();
    assert!(
        (fit.slope - 2.0).abs() <= 0.1,
        "L² convergence order {} outside 2.0 ± 0.1",
        fit.slope
    );
    assert!(fit.r_squared > 0.999);
}

/// The outward difference-quotient sum at a vertex of a converged state is
/// first order in `h`: it tracks `(h/2)·u″` at the vertex.
#[test]
fn vertex_flux_balance_vanishes_linearly_in_h() {
    let g = Arc::new(interval_graph(4.0).unwrap());
    let params = ProblemParams::new(25.0, 3.0).unwrap();
    let config = SolverConfig::default();

    let mut fluxes = Vec::new();
    for &h in &[0.02, 0.01, 0.005] {
        let mesh = Arc::new(build_mesh(&g, h).unwrap());
        let spec = PeakSpec {
            peaks: vec![PeakSite {
                vertex: 0,
                l_cut: None,
            }],
            lambda: params.lambda,
        };
        let w = build_ansatz(&mesh, &spec, params.p).unwrap();
        let record = newton_solve(&w, &params, &config).unwrap();

        let flux = kirchhoff_flux(&record.u, 0);
        let u0 = record.u.values[mesh.vertex_dof(0)];
        let curvature = params.lambda * u0 - u0.powi(3);
        // Flux ≈ (h/2)·u″(0) for the one-sided quotient at a degree-1 vertex.
        assert!(
            flux.abs() <= 1.2 * (h / 2.0) * curvature.abs() + 1e-9,
            "flux {flux} exceeds the first-order bound at h = {h}"
        );
        fluxes.push(flux.abs());
    }

    assert!(fluxes[1] <= 0.65 * fluxes[0]);
    assert!(fluxes[2] <= 0.65 * fluxes[1]);
}
