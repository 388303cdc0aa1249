//! Constants of the critical online nearest neighbour variance and the
//! Gilbert variance coefficients.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ball_intersection_fraction, reg_inc_beta, unit_ball_volume};
use crate::quadrature::{integrate, integrate_pair, QuadOptions};

/// Lower cut of the inner variable; the omitted piece is added analytically.
pub const INNER_CUT: f64 = 1e-12;

/// Subdivision limit per axis.
pub const SUBDIVISION_LIMIT: usize = 200;

/// Largest dimension accepted by [`c_constant`].
pub const MAX_C_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrationResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

/// `g(u) = π/2 u² + (1 − u²) atan(u) − u`.
pub fn g_function(u: f64) -> f64 {
    if u > 1.0 {
        // π/2 − atan(u) = atan(1/u) avoids cancelling two O(u²) terms
        u * u * (1.0 / u).atan() + u.atan() - u
    } else {
        FRAC_PI_2 * u * u + (1.0 - u * u) * u.atan() - u
    }
}

/// Closed form `(5/2 − √2)π − 2√2` of `c(1)`.
pub fn c1_closed_form() -> f64 {
    (2.5 - 2f64.sqrt()) * PI - 2.0 * 2f64.sqrt()
}

/// The two-ball overlap integrand in the radial variables `(r, a)`.
fn c_integrand(r: f64, a: f64, d: usize) -> f64 {
    let df = d as f64;
    let ad = a.powi(d as i32);
    let overlap = ball_intersection_fraction(r, 1.0, a, d).unwrap_or(0.0);
    let q1 = 1.0 + ad - overlap;
    let q2 = 1.0 + ad;
    0.5 * df * df * r.powi(d as i32 - 1) / a.powf(0.5 * df + 1.0) * (1.0 / q1 - 1.0 / q2)
}

/// `∫_0^cut` of the integrand for `r < 1`, where the small ball lies inside
/// the unit ball and the integrand is `d²/2 r^{d−1} a^{d/2−1} / (1 + a^d)`.
fn small_a_tail(r: f64, cut: f64, d: usize) -> f64 {
    if r >= 1.0 - cut {
        return 0.0;
    }
    let df = d as f64;
    df * r.powi(d as i32 - 1) * cut.powf(0.5 * df)
}

fn c_constant_with_cut(d: usize, tol: f64, cut: f64) -> Result<(IntegrationResult, f64)> {
    let evals = Cell::new(0usize);
    let min_term = Cell::new(0.0f64);
    let inner_opts = QuadOptions {
        abs_tol: 0.05 * tol,
        rel_tol: 0.0,
        limit: SUBDIVISION_LIMIT,
    };
    let inner = |r: f64| -> (f64, f64) {
        // outside [|1 − r|, r] ∪ [0, 1 − r] the balls are disjoint and the
        // integrand vanishes
        let lo = if r > 1.0 { r - 1.0 } else { cut };
        let split = (1.0 - r).abs();
        let f = |a: f64| {
            let v = c_integrand(r, a, d);
            if v < min_term.get() {
                min_term.set(v);
            }
            v
        };
        let mut value = small_a_tail(r, cut, d);
        let mut err = 0.0;
        let pieces: &[(f64, f64)] = if split > lo && split < r {
            &[(lo, split), (split, r)]
        } else {
            &[(lo, r)]
        };
        for &(a0, a1) in pieces {
            if a1 > a0 {
                let res = integrate(f, a0, a1, inner_opts);
                evals.set(evals.get() + res.evaluations);
                value += res.value;
                err += res.abs_error;
            }
        }
        (value, err)
    };
    let outer_opts = QuadOptions {
        abs_tol: 0.5 * tol,
        rel_tol: 0.0,
        limit: SUBDIVISION_LIMIT,
    };
    // r = u / (1 − u) maps [0, 1) onto [0, ∞); split at r = 1 (u = 1/2)
    let mapped = |u: f64| -> (f64, f64) {
        if u >= 1.0 {
            return (0.0, 0.0);
        }
        let r = u / (1.0 - u);
        let jac = 1.0 / ((1.0 - u) * (1.0 - u));
        let (v, e) = inner(r);
        (v * jac, e * jac)
    };
    let mut value = 0.0;
    let mut err = 0.0;
    for (u0, u1) in [(0.0, 0.5), (0.5, 1.0)] {
        let res = integrate_pair(mapped, u0, u1, outer_opts);
        value += res.value;
        err += res.abs_error;
    }
    Ok((
        IntegrationResult {
            value,
            abs_error_estimate: err,
            evaluations: evals.get(),
        },
        min_term.get(),
    ))
}

/// `c(d)` by nested adaptive Gauss–Kronrod quadrature.
///
/// The inner variable is opened at [`INNER_CUT`]; the result is recomputed
/// with half the cut and the difference is added to the error estimate.
pub fn c_constant(d: usize, tol: f64) -> Result<IntegrationResult> {
    if d == 0 || d > MAX_C_DIM {
        return Err(Error::arg(format!("c(d) supports 1 <= d <= {MAX_C_DIM}, got {d}")));
    }
    if !(tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    let (full, min_term) = c_constant_with_cut(d, tol, INNER_CUT)?;
    let (half, min_half) = c_constant_with_cut(d, tol, 0.5 * INNER_CUT)?;
    let scale = full.value.abs().max(1.0);
    if min_term.min(min_half) < -1e-12 * scale {
        return Err(Error::numeric(format!(
            "negative integrand value {} in c({d})",
            min_term.min(min_half)
        )));
    }
    let result = IntegrationResult {
        value: full.value,
        abs_error_estimate: full.abs_error_estimate + (full.value - half.value).abs(),
        evaluations: full.evaluations + half.evaluations,
    };
    if !(result.value.is_finite()) || result.abs_error_estimate > tol {
        return Err(Error::Integration {
            value: result.value,
            abs_error: result.abs_error_estimate,
        });
    }
    Ok(result)
}

fn symmetric_beta(x: f64, d: usize) -> Result<f64> {
    let p = 0.5 * (d as f64 + 1.0);
    reg_inc_beta(x, p, p)
}

/// `β₁(d) = Σ_{i=1}^{20} g((2 − (i−1)/10)^{d/2}) [I_{i/40} − I_{(i−1)/40}]`
/// with `I = I(·; (d+1)/2, (d+1)/2)`.
pub fn beta1(d: usize) -> Result<f64> {
    if !(3..=9).contains(&d) {
        return Err(Error::arg(format!("beta1 is tabulated for 3 <= d <= 9, got {d}")));
    }
    let mut sum = 0.0;
    for i in 1..=20 {
        let fi = i as f64;
        let u = (2.0 - (fi - 1.0) / 10.0).powf(0.5 * d as f64);
        let w = symmetric_beta(fi / 40.0, d)? - symmetric_beta((fi - 1.0) / 40.0, d)?;
        sum += g_function(u) * w;
    }
    Ok(sum)
}

/// `β₂(d) = π/2 (I_{0.32}((d+1)/2, (d+1)/2) + 2^{d−1} 0.36^d)`.
pub fn beta2(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::arg(format!("beta2 requires d >= 3, got {d}")));
    }
    let i = symmetric_beta(0.32, d)?;
    Ok(FRAC_PI_2 * (i + 2f64.powi(d as i32 - 1) * 0.36f64.powi(d as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GilbertCoeffs {
    pub sigma1: f64,
    pub sigma2: f64,
}

/// `σ₁ = dκ_d / (2(d + 2α))`, `σ₂ = d²κ_d² / (α + d)²`.
pub fn gilbert_variance_coeffs(d: usize, alpha: f64) -> Result<GilbertCoeffs> {
    if d == 0 {
        return Err(Error::arg("dimension must be positive"));
    }
    let df = d as f64;
    if !(alpha > -0.5 * df) {
        return Err(Error::arg(format!("alpha must exceed -d/2, got {alpha}")));
    }
    let k = unit_ball_volume(d);
    Ok(GilbertCoeffs {
        sigma1: df * k / (2.0 * (df + 2.0 * alpha)),
        sigma2: df * df * k * k / ((alpha + df) * (alpha + df)),
    })
}

/// Leading-order Gilbert variance `|W| (σ₁ t² ε^{2α+d} + σ₂ t³ ε^{2α+2d})`
/// for intensity `t` on a window of volume `|W|`, ignoring boundary effects.
pub fn gilbert_variance_leading(
    d: usize,
    alpha: f64,
    t: f64,
    epsilon: f64,
    window_volume: f64,
) -> Result<f64> {
    let c = gilbert_variance_coeffs(d, alpha)?;
    let df = d as f64;
    Ok(window_volume
        * (c.sigma1 * t * t * epsilon.powf(2.0 * alpha + df)
            + c.sigma2 * t.powi(3) * epsilon.powf(2.0 * alpha + 2.0 * df)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_values() {
        assert_eq!(g_function(0.0), 0.0);
        assert!((g_function(1.0) - (FRAC_PI_2 - 1.0)).abs() < 1e-15);
        assert!((g_function(1e6) - FRAC_PI_2).abs() < 1e-5);
    }

    #[test]
    fn g_strictly_increasing() {
        for k in 0..2000 {
            let u = k as f64 * 0.01;
            assert!(g_function(u + 1e-6) > g_function(u), "u={u}");
        }
    }

    #[test]
    fn c1_against_closed_form() {
        let r = c_constant(1, 1e-6).unwrap();
        assert!((r.value - c1_closed_form()).abs() < 1e-5, "{r:?}");
        assert!(r.abs_error_estimate <= 1e-6);
        assert!(r.evaluations > 0);
    }

    #[test]
    fn c_rejects_bad_arguments() {
        assert!(c_constant(0, 1e-6).is_err());
        assert!(c_constant(MAX_C_DIM + 1, 1e-6).is_err());
        assert!(c_constant(2, 0.0).is_err());
    }

    #[test]
    fn beta_tables() {
        let table = [0.203, 0.175, 0.150, 0.128, 0.110, 0.094, 0.081];
        for (k, want) in table.iter().enumerate() {
            let got = beta1(k + 3).unwrap();
            assert!((got - want).abs() <= 5e-4, "d={} {got}", k + 3);
        }
        assert!(beta1(2).is_err());
        assert!(beta1(10).is_err());
        assert!((beta2(10).unwrap() - 0.208).abs() < 2e-3);
        assert!(beta2(11).unwrap() <= beta2(10).unwrap());
        assert!(beta2(2).is_err());
    }

    #[test]
    fn gilbert_coeffs() {
        let c = gilbert_variance_coeffs(2, 0.0).unwrap();
        assert!((c.sigma1 - FRAC_PI_2).abs() < 1e-14);
        assert!((c.sigma2 - PI * PI).abs() < 1e-13);
        let c = gilbert_variance_coeffs(1, 1.0).unwrap();
        assert!((c.sigma1 - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.sigma2 - 1.0).abs() < 1e-15);
        assert!(gilbert_variance_coeffs(2, -1.0).is_err());
    }
}
