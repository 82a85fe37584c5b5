//! Branch structure of converged states: at large λ the least-action state
//! has a single peak at a degree-1 vertex, is nonnegative, and its second
//! variation has no eigenvalue near zero.

mod common;

use std::sync::Arc;

use nlsgraph_core::functionals::ProblemParams;
use nlsgraph_core::graph::{interval_graph, star_graph, MetricGraph};
use nlsgraph_core::solvers::{least_action_solve, BranchTag, SolutionRecord, SolverConfig};
use nlsgraph_core::spectral::{linearized_operator, smallest_eigenpairs};

fn assert_single_terminal_peak(g: &Arc<MetricGraph>, record: &SolutionRecord) {
    let lambda = record.params.lambda;
    assert!(
        matches!(record.branch, BranchTag::LeastAction),
        "{:?}",
        record.branch
    );
    assert_eq!(record.peaks.len(), 1);
    let peak = &record.peaks[0];
    assert!(peak.is_vertex);
    let v = peak.vertex.unwrap();
    assert_eq!(g.degree(v), 1, "peak not at a degree-1 vertex");
    assert!(
        peak.value >= 0.99 * lambda.powf(1.0 / (record.params.p - 1.0)),
        "peak value {} below the λ^(1/(p−1)) bound",
        peak.value
    );
    let tol = SolverConfig::default().newton_tol;
    assert!(record.u.values.iter().all(|&x| x >= -10.0 * tol));
}

#[test]
fn least_action_peak_sits_at_the_interval_end() {
    let g = Arc::new(interval_graph(4.0).unwrap());
    let params = ProblemParams::new(100.0, 3.0).unwrap();
    let record = least_action_solve(&g, &params, &SolverConfig::default()).unwrap();
    assert_single_terminal_peak(&g, &record);
}

#[test]
fn least_action_peak_sits_at_a_star_leaf() {
    let g = Arc::new(star_graph(&[2.0, 2.0, 2.0]).unwrap());
    let params = ProblemParams::new(150.0, 3.0).unwrap();
    let record = least_action_solve(&g, &params, &SolverConfig::default()).unwrap();
    assert_single_terminal_peak(&g, &record);
}

#[test]
fn least_action_peak_avoids_the_cycle() {
    let g = common::triangle_with_tail();
    let params = ProblemParams::new(100.0, 3.0).unwrap();
    let record = least_action_solve(&g, &params, &SolverConfig::default()).unwrap();
    assert_single_terminal_peak(&g, &record);
    // The only degree-1 vertex is the tail end "d".
    assert_eq!(record.peaks[0].vertex_id.as_deref(), Some("d"));
}

/// The linearization at the converged one-peak state is nondegenerate: the
/// two eigenvalues closest to zero stay out of the band ±1e−4.
#[test]
fn converged_peak_state_has_a_nondegenerate_linearization() {
    let g = Arc::new(interval_graph(4.0).unwrap());
    let params = ProblemParams::new(100.0, 3.0).unwrap();
    let record = least_action_solve(&g, &params, &SolverConfig::default()).unwrap();

    let op = linearized_operator(&record.u, &record.params);
    let rep = smallest_eigenpairs(&op, 2).unwrap();
    for &mu in &rep.eigenvalues {
        assert!(
            mu.abs() >= 1e-4,
            "eigenvalue {mu} inside the degeneracy band"
        );
    }
}
