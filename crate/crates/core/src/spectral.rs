//! Generalized eigenanalysis of the linearization around a state:
//! `Aψ = μBψ` with `A = K + λM − P(u)` (the action Hessian) and `B = M`.
//!
//! The solver is shift-invert subspace iteration with a Rayleigh–Ritz step:
//! it resolves the eigenvalues *nearest the shift* (default just below zero),
//! which is what kernel counting and nondegeneracy checks need. For operators
//! whose spectrum is bounded below by a near-zero cluster — every base state
//! used here — these coincide with the algebraically smallest eigenvalues.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::functionals::{hessian, ProblemParams};
use crate::linalg::{self, LinAlgError};
use crate::mesh::{assemble_mass, DiscreteFunction, Mesh, SparseOperator};

/// Shift just below zero, so near-kernel clusters are resolved first.
pub const DEFAULT_SHIFT: f64 = -1e-6;
/// Relative residual target `‖Av − μBv‖ ≤ max(ATOL, RTOL·|μ|)·‖Bv‖`. The
/// absolute floor absorbs the roundoff level of degenerate clusters.
const EIG_RTOL: f64 = 1e-10;
const EIG_ATOL: f64 = 5e-9;
const EIG_MAX_ITER: usize = 1000;

/// Errors from the eigensolver.
#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("k = {k} out of range (need 1 ≤ k < {dofs})")]
    InvalidK { k: usize, dofs: usize },
    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
}

/// The pencil `(A, B)` of the linearization around a base state.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    /// `K + λM − P(u)`; assembled by the exact same path as the action
    /// Hessian, so the two agree bit for bit.
    pub a: SparseOperator,
    /// Mass matrix `M` (symmetric positive definite).
    pub b: SparseOperator,
    pub mesh: Arc<Mesh>,
    pub params: ProblemParams,
}

/// Builds the linearized operator around `u`.
pub fn linearized_operator(u: &DiscreteFunction, params: &ProblemParams) -> LinearizedOperator {
    LinearizedOperator {
        a: hessian(u, params),
        b: assemble_mass(&u.mesh),
        mesh: Arc::clone(&u.mesh),
        params: *params,
    }
}

/// Eigenvalues (ascending) with B-orthonormal eigenvectors.
#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DiscreteFunction>,
    /// Shift the pairs were resolved around.
    pub shift: f64,
}

impl EigenReport {
    /// Number of computed eigenvalues with `|μ| < tol`.
    pub fn kernel_count(&self, tol: f64) -> usize {
        assert!(tol > 0.0, "kernel tolerance must be positive");
        self.eigenvalues.iter().filter(|m| m.abs() < tol).count()
    }
}

/// B-orthonormalizes the columns in place (modified Gram–Schmidt with
/// reorthogonalization). Collapsed columns are replaced by fresh random data.
fn b_orthonormalize(v: &mut [Vec<f64>], b: &SparseOperator, rng: &mut ChaCha8Rng) {
    let n = v[0].len();
    let mut bvi = vec![0.0; n];
    for i in 0..v.len() {
        'retry: loop {
            for _ in 0..2 {
                for j in 0..i {
                    b.matvec(&v[i], &mut bvi);
                    let c = linalg::dot(&v[j], &bvi);
                    let vj = v[j].clone();
                    linalg::axpy(-c, &vj, &mut v[i]);
                }
            }
            b.matvec(&v[i], &mut bvi);
            let norm = linalg::dot(&v[i], &bvi).max(0.0).sqrt();
            if norm > 1e-14 {
                linalg::scale(1.0 / norm, &mut v[i]);
                break 'retry;
            }
            for x in v[i].iter_mut() {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
    }
}

/// The `k` eigenpairs of `Av = μBv` nearest the default shift (equivalently
/// the algebraically smallest ones for spectra bounded below near zero),
/// eigenvalues ascending, eigenvectors B-orthonormal.
pub fn smallest_eigenpairs(
    op: &LinearizedOperator,
    k: usize,
) -> Result<EigenReport, SpectralError> {
    let n = op.a.dim();
    if k == 0 || k >= n {
        return Err(SpectralError::InvalidK { k, dofs: n });
    }
    let sigma = DEFAULT_SHIFT;
    let shifted = SparseOperator::combine(&[(1.0, &op.a), (-sigma, &op.b)]);
    let factor = linalg::factor(&shifted)?;

    // Generous padding: graph symmetries produce exactly degenerate interior
    // multiplets, and a subspace boundary cutting through one stalls the
    // iteration.
    let m = (k + 8).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    b_orthonormalize(&mut v, &op.b, &mut rng);

    let mut worst = f64::INFINITY;
    let mut scratch = vec![0.0; n];
    for _iter in 0..EIG_MAX_ITER {
        // Power step through the shifted inverse: Z = (A−σB)⁻¹ B V.
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        for col in &v {
            op.b.matvec(col, &mut scratch);
            z.push(factor.solve_refined(&shifted, &scratch));
        }
        b_orthonormalize(&mut z, &op.b, &mut rng);

        // Rayleigh–Ritz on A over the subspace.
        let az: Vec<Vec<f64>> = z
            .iter()
            .map(|col| {
                let mut y = vec![0.0; n];
                op.a.matvec(col, &mut y);
                y
            })
            .collect();
        let mut s = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let val = linalg::dot(&z[i], &az[j]);
                s[(i, j)] = val;
                s[(j, i)] = val;
            }
        }
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            (eig.eigenvalues[i] - sigma)
                .abs()
                .partial_cmp(&(eig.eigenvalues[j] - sigma).abs())
                .unwrap()
        });

        // Rotate the basis so the k pairs nearest the shift lead.
        let mut rotated: Vec<Vec<f64>> = Vec::with_capacity(m);
        for &t in &order {
            let mut col = vec![0.0; n];
            for (srow, zcol) in z.iter().enumerate() {
                linalg::axpy(eig.eigenvectors[(srow, t)], zcol, &mut col);
            }
            rotated.push(col);
        }
        v = rotated;

        // Residual check on the k leading pairs.
        worst = 0.0;
        let mut ok = true;
        for (idx, &t) in order.iter().take(k).enumerate() {
            let theta = eig.eigenvalues[t];
            let mut r = vec![0.0; n];
            op.a.matvec(&v[idx], &mut r);
            op.b.matvec(&v[idx], &mut scratch);
            linalg::axpy(-theta, &scratch, &mut r);
            let res = linalg::norm2(&r) / linalg::norm2(&scratch);
            worst = worst.max(res);
            if !(res <= EIG_ATOL.max(EIG_RTOL * theta.abs())) {
                ok = false;
            }
        }
        if ok {
            let mut pairs: Vec<(f64, Vec<f64>)> = order
                .iter()
                .take(k)
                .enumerate()
                .map(|(idx, &t)| (eig.eigenvalues[t], std::mem::take(&mut v[idx])))
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            return Ok(EigenReport {
                eigenvalues: pairs.iter().map(|(t, _)| *t).collect(),
                eigenvectors: pairs
                    .into_iter()
                    .map(|(_, col)| DiscreteFunction::from_values(&op.mesh, col))
                    .collect(),
                shift: sigma,
            });
        }
    }
    Err(SpectralError::EigenNoConvergence {
        iterations: EIG_MAX_ITER,
        residual: worst,
    })
}
