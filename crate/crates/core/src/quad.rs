//! Quadrature rules.
//!
//! Two consumers with different needs:
//! - element assembly uses a fixed 4-point Gauss–Legendre rule (exact for
//!   polynomials of degree ≤ 7, far beyond what P1 interpolation can resolve),
//! - reference-value computation (soliton norms, profile errors) uses adaptive
//!   Simpson quadrature with an absolute-error tolerance.

/// 4-point Gauss–Legendre nodes on the reference interval `[0, 1]`.
///
/// Tabulated to full published precision; the literals round to the nearest
/// `f64`.
#[allow(clippy::excessive_precision)]
pub const GAUSS4_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_13,
    0.930_568_155_797_026_3,
];

/// Weights matching [`GAUSS4_NODES`]; they sum to 1.
#[allow(clippy::excessive_precision)]
pub const GAUSS4_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_92,
    0.326_072_577_431_273_08,
    0.326_072_577_431_273_08,
    0.173_927_422_568_726_92,
];

/// Integrates `f` over `[a, b]` with the 4-point Gauss rule.
pub fn gauss4<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let h = b - a;
    let mut acc = 0.0;
    for (&t, &w) in GAUSS4_NODES.iter().zip(GAUSS4_WEIGHTS.iter()) {
        acc += w * f(a + t * h);
    }
    acc * h
}

/// Integrates `f` over `[a, b]` by adaptive Simpson quadrature to absolute
/// tolerance `tol`.
///
/// Classic bisection scheme with the 1/15 Richardson error estimate; recursion
/// depth is capped at 60, at which point the current estimate is accepted
/// (interval widths are then ~(b-a)/2⁶⁰, below resolvable spacing).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(a: f64, b: f64, tol: f64, f: F) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}
