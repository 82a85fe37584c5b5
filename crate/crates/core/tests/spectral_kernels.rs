//! Near-kernel structure of the linearization at soliton-shaped states on
//! truncated stars, half-lines, and full lines.

use std::sync::Arc;

use nlsgraph_core::functionals::ProblemParams;
use nlsgraph_core::graph::{interval_graph, star_graph};
use nlsgraph_core::linalg::dot;
use nlsgraph_core::mesh::{assemble_mass, build_mesh, DiscreteFunction};
use nlsgraph_core::profiles::{soliton, soliton_derivative};
use nlsgraph_core::spectral::{linearized_operator, smallest_eigenpairs};

const H: f64 = 0.025;

/// Least-squares coefficient of `v` against the soliton derivative profile
/// over the nodes of edge `e` (distance measured from the star center).
fn edge_profile_coefficient(v: &DiscreteFunction, e: usize) -> f64 {
    let mesh = &v.mesh;
    let h = mesh.edge_h[e];
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..mesh.nodes_per_edge[e] {
        let d = soliton_derivative(3.0, k as f64 * h);
        num += v.values[mesh.dof(e, k)] * d;
        den += d * d;
    }
    num / den
}

/// On an n-star carrying the symmetric soliton state, the linearization has
/// an (n−1)-dimensional near-kernel spanned by derivative differences whose
/// per-edge coefficients sum to zero.
#[test]
fn star_kernel_dimension_matches_the_leg_count() {
    for n in [3usize, 4, 5] {
        let legs = vec![30.0; n];
        let g = Arc::new(star_graph(&legs).unwrap());
        let mesh = Arc::new(build_mesh(&g, H).unwrap());
        let u = DiscreteFunction::interpolate(&mesh, |_, x| soliton(3.0, x));
        let params = ProblemParams::new(1.0, 3.0).unwrap();
        let op = linearized_operator(&u, &params);

        let rep = smallest_eigenpairs(&op, n + 1).unwrap();
        assert_eq!(rep.kernel_count(1e-3), n - 1, "kernel dimension at n = {n}");
        assert!(rep.eigenvalues[0] >= -1e-3);
        assert!(
            rep.eigenvalues[n - 1] >= 0.1,
            "gap above the kernel at n = {n}: {}",
            rep.eigenvalues[n - 1]
        );

        for v in &rep.eigenvectors[..n - 1] {
            let sum: f64 = (0..n).map(|e| edge_profile_coefficient(v, e)).sum();
            assert!(
                sum.abs() <= 1e-2,
                "derivative coefficients sum to {sum} at n = {n}"
            );
        }
    }
}

/// A soliton peaked at the end of a half-line: the translation mode violates
/// the natural condition at the peak vertex, so there is no kernel.
#[test]
fn half_line_state_has_no_kernel() {
    let g = Arc::new(interval_graph(30.0).unwrap());
    let mesh = Arc::new(build_mesh(&g, H).unwrap());
    let u = DiscreteFunction::interpolate(&mesh, |_, x| soliton(3.0, x));
    let params = ProblemParams::new(1.0, 3.0).unwrap();
    let op = linearized_operator(&u, &params);

    let rep = smallest_eigenpairs(&op, 3).unwrap();
    assert_eq!(rep.kernel_count(1e-3), 0);
    assert!(rep.eigenvalues[0] > 0.5);
}

/// A soliton centered on a long edge: translation invariance survives, so
/// the kernel is one-dimensional and spanned by the profile derivative.
#[test]
fn full_line_state_has_a_translation_kernel() {
    let g = Arc::new(interval_graph(60.0).unwrap());
    let mesh = Arc::new(build_mesh(&g, H).unwrap());
    let u = DiscreteFunction::interpolate(&mesh, |_, x| soliton(3.0, x - 30.0));
    let params = ProblemParams::new(1.0, 3.0).unwrap();
    let op = linearized_operator(&u, &params);

    let rep = smallest_eigenpairs(&op, 3).unwrap();
    assert_eq!(rep.kernel_count(1e-3), 1);
    assert!(rep.eigenvalues[1] >= 0.1);

    let ker = &rep.eigenvectors[0];
    let w = DiscreteFunction::interpolate(&mesh, |_, x| soliton_derivative(3.0, x - 30.0));
    let b = assemble_mass(&mesh);
    let mut bw = vec![0.0; mesh.num_dofs()];
    b.matvec(&w.values, &mut bw);
    let corr = dot(&ker.values, &bw).abs()
        / (b.quadratic_form(&ker.values).sqrt() * b.quadratic_form(&w.values).sqrt());
    assert!(corr > 0.99, "translation-mode correlation {corr}");
}
