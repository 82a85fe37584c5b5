//! The action functional, its derivatives, and Nehari-manifold helpers for
//! `-u'' + λu = (u⁺)^p` on a metric graph.
//!
//! Discretely, with stiffness `K`, mass `M`, and 4-point Gauss quadrature of
//! the nonlinear terms:
//!
//! ```text
//! I⁺(u) = ½ uᵀ(K+λM)u − 1/(p+1) ∫ (u⁺)^{p+1}
//! G(u)  = (K+λM)u − N(u),      N(u)_i = ∫ (u⁺)^p φ_i
//! H(u)  = K+λM − P(u),         P(u)_ij = ∫ p(u⁺)^{p−1} φ_i φ_j
//! ```
//!
//! Because the same quadrature rule evaluates the action, the load vector and
//! the weighted mass, `G` is the exact gradient of the discrete `I⁺` and `H`
//! its exact Hessian — finite differences of one reproduce the next to O(ε²).
//!
//! The renormalized action is `J_λ(u) = λ^{1/2−(p+1)/(p−1)} I⁺(u)`; restricted
//! to the Nehari set `‖u‖²_λ = |u⁺|^{p+1}_{p+1}` it reduces to
//! `λ^{1/2−(p+1)/(p−1)} (½ − 1/(p+1)) ‖u‖²_λ`.

use serde::Serialize;
use thiserror::Error;

use crate::mesh::{
    assemble_a_lambda, assemble_mass, integrate, load_vector, weighted_mass, DiscreteFunction,
    SparseOperator,
};

/// Relative Nehari-defect tolerance accepted by [`nehari_action`]: the defect
/// `‖u‖²_λ − |u⁺|^{p+1}_{p+1}` must satisfy `|defect| ≤ RTOL·‖u‖²_λ`.
pub const NEHARI_DEFECT_RTOL: f64 = 1e-8;

/// Equation parameters: frequency `λ > 0` and nonlinearity power `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    pub lambda: f64,
    pub p: f64,
}

/// Errors from functional evaluation.
#[derive(Debug, Error)]
pub enum FunctionalError {
    /// Parameters outside `λ > 0`, `p > 1`.
    #[error("invalid parameters: lambda = {lambda}, p = {p} (need lambda > 0, p > 1)")]
    InvalidParams { lambda: f64, p: f64 },
    /// The positive part vanishes identically; no Nehari projection exists.
    #[error("function has no positive part; Nehari projection undefined")]
    NoPositivePart,
    /// The relative Nehari defect exceeds the tolerance.
    #[error("function is not on the Nehari manifold: relative defect {defect_rel:.3e} > {tol:.1e}")]
    NotOnNehari { defect_rel: f64, tol: f64 },
}

impl ProblemParams {
    /// Validates `λ > 0`, `p > 1`.
    pub fn new(lambda: f64, p: f64) -> Result<Self, FunctionalError> {
        if !(lambda > 0.0 && lambda.is_finite() && p > 1.0 && p.is_finite()) {
            return Err(FunctionalError::InvalidParams { lambda, p });
        }
        Ok(ProblemParams { lambda, p })
    }

    /// Renormalization exponent `1/2 − (p+1)/(p−1)` of `J_λ = λ^{…} I⁺`.
    pub fn renorm_exponent(&self) -> f64 {
        0.5 - (self.p + 1.0) / (self.p - 1.0)
    }

    /// The factor `λ^{1/2−(p+1)/(p−1)}`.
    pub fn renorm_factor(&self) -> f64 {
        self.lambda.powf(self.renorm_exponent())
    }

    /// Action of the constant positive solution `u ≡ λ^{1/(p−1)}` in
    /// renormalized form: `λ^{1/2} (½ − 1/(p+1)) |𝒢|` per unit `|𝒢|`.
    /// Multiply by the total graph length to get `J_λ` of that branch.
    pub fn constant_branch_action_density(&self) -> f64 {
        self.lambda.sqrt() * (0.5 - 1.0 / (self.p + 1.0))
    }
}

/// Scalar diagnostics of a function under given parameters.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalReport {
    /// `I⁺(u)`.
    pub action_i: f64,
    /// `J_λ(u) = λ^{1/2−(p+1)/(p−1)} I⁺(u)`.
    pub action_j: f64,
    /// Squared mass `|u|²_{L²} = uᵀMu`.
    pub mass_sq: f64,
    /// `‖u‖²_λ = uᵀ(K+λM)u`.
    pub lambda_norm_sq: f64,
    /// `‖u‖²_λ − |u⁺|^{p+1}_{p+1}` (absolute; divide by `lambda_norm_sq`
    /// for the relative defect used in tolerancing).
    pub nehari_defect: f64,
}

/// `|u⁺|^{p+1}_{p+1} = ∫ (u⁺)^{p+1}` under the assembly quadrature.
pub fn positive_part_power(u: &DiscreteFunction, p: f64) -> f64 {
    integrate(u, |t| if t > 0.0 { t.powf(p + 1.0) } else { 0.0 })
}

/// The action `I⁺(u) = ½∫|u′|² + (λ/2)∫u² − 1/(p+1)∫(u⁺)^{p+1}`.
pub fn action(u: &DiscreteFunction, params: &ProblemParams) -> f64 {
    let a = assemble_a_lambda(&u.mesh, params.lambda);
    0.5 * a.quadratic_form(&u.values) - positive_part_power(u, params.p) / (params.p + 1.0)
}

/// Exact gradient of the discrete action: `G(u) = (K+λM)u − N(u)`.
pub fn gradient(u: &DiscreteFunction, params: &ProblemParams) -> Vec<f64> {
    let a = assemble_a_lambda(&u.mesh, params.lambda);
    gradient_with(u, params, &a)
}

/// Gradient against a pre-assembled `K + λM` (must come from
/// [`assemble_a_lambda`] on the same mesh so all paths agree bit for bit).
pub fn gradient_with(
    u: &DiscreteFunction,
    params: &ProblemParams,
    a_lambda: &SparseOperator,
) -> Vec<f64> {
    let p = params.p;
    let mut g = vec![0.0; u.values.len()];
    a_lambda.matvec(&u.values, &mut g);
    let n = load_vector(u, |t| if t > 0.0 { t.powf(p) } else { 0.0 });
    for (gi, ni) in g.iter_mut().zip(&n) {
        *gi -= ni;
    }
    g
}

/// Exact Hessian of the discrete action: `H(u) = K + λM − P(u)` with
/// `P_ij = ∫ p(u⁺)^{p−1} φ_i φ_j`.
pub fn hessian(u: &DiscreteFunction, params: &ProblemParams) -> SparseOperator {
    let a = assemble_a_lambda(&u.mesh, params.lambda);
    let p = params.p;
    let pw = weighted_mass(u, |t| if t > 0.0 { p * t.powf(p - 1.0) } else { 0.0 });
    SparseOperator::combine(&[(1.0, &a), (-1.0, &pw)])
}

/// Full scalar report for `u`.
pub fn report(u: &DiscreteFunction, params: &ProblemParams) -> FunctionalReport {
    let a = assemble_a_lambda(&u.mesh, params.lambda);
    let m = assemble_mass(&u.mesh);
    let lambda_norm_sq = a.quadratic_form(&u.values);
    let nonlin = positive_part_power(u, params.p);
    let action_i = 0.5 * lambda_norm_sq - nonlin / (params.p + 1.0);
    FunctionalReport {
        action_i,
        action_j: params.renorm_factor() * action_i,
        mass_sq: m.quadratic_form(&u.values),
        lambda_norm_sq,
        nehari_defect: lambda_norm_sq - nonlin,
    }
}

/// Nehari projection scale: `t = (‖u‖²_λ / |u⁺|^{p+1}_{p+1})^{1/(p−1)}`, so
/// that `t·u` has zero Nehari defect.
pub fn nehari_scale(u: &DiscreteFunction, params: &ProblemParams) -> Result<f64, FunctionalError> {
    let a = assemble_a_lambda(&u.mesh, params.lambda);
    let norm_sq = a.quadratic_form(&u.values);
    let nonlin = positive_part_power(u, params.p);
    if nonlin <= 0.0 || norm_sq <= 0.0 {
        return Err(FunctionalError::NoPositivePart);
    }
    Ok((norm_sq / nonlin).powf(1.0 / (params.p - 1.0)))
}

/// The renormalized action evaluated through the Nehari identity,
/// `λ^{1/2−(p+1)/(p−1)} (½ − 1/(p+1)) ‖u‖²_λ`. Rejects inputs whose relative
/// Nehari defect exceeds [`NEHARI_DEFECT_RTOL`].
pub fn nehari_action(u: &DiscreteFunction, params: &ProblemParams) -> Result<f64, FunctionalError> {
    let r = report(u, params);
    let defect_rel = (r.nehari_defect / r.lambda_norm_sq).abs();
    if !(defect_rel <= NEHARI_DEFECT_RTOL) {
        return Err(FunctionalError::NotOnNehari {
            defect_rel,
            tol: NEHARI_DEFECT_RTOL,
        });
    }
    Ok(params.renorm_factor() * (0.5 - 1.0 / (params.p + 1.0)) * r.lambda_norm_sq)
}
