//! Scalar special functions shared by the statistical modules.
//!
//! The modified Bessel functions are only needed for orders 0, 1 and 2 and
//! for arguments of the form `2θ`, so everything here is built on the
//! ascending power series
//!
//! ```text
//! I_ν(x) = Σ_{j≥0} (x/2)^{2j+ν} / (j! (j+ν)!)
//! ```
//!
//! evaluated with a running-term recursion. Exponentially scaled variants
//! fold `e^{-x}` into the leading term so nothing overflows.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// Truncation control for infinite series over the count support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTolerance {
    /// Absolute bound on the neglected tail.
    pub eps: f64,
    /// Hard cap on the number of summed terms.
    pub max_terms: usize,
}

impl SeriesTolerance {
    pub fn new(eps: f64, max_terms: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < 1e-3) {
            return domain(format!("series tolerance eps must lie in (0, 1e-3), got {eps}"));
        }
        if max_terms < 1000 {
            return domain(format!("max_terms must be at least 1000, got {max_terms}"));
        }
        Ok(Self { eps, max_terms })
    }
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        Self {
            eps: 1e-12,
            max_terms: 100_000,
        }
    }
}

const BESSEL_MAX_TERMS: usize = 100_000;
/// Above this argument `I_ν(x)` overflows `f64` (I₀(713) ≈ 1.7e308).
const UNSCALED_LIMIT: f64 = 700.0;
/// Below this argument `e^{-x}` is folded directly into the first term.
const DIRECT_SCALING_LIMIT: f64 = 600.0;

/// Sums `Σ_j a_j w(j)` where `a_j = s · h^{2j+ν} / (j! (j+ν)!)`.
///
/// `start` is the index the recursion starts from and `a_start` its term;
/// the recursion walks up from there and, if `start > 0`, back down to 0.
fn ascending_series(h: f64, nu: u32, start: usize, a_start: f64, w: impl Fn(usize) -> f64) -> Result<f64> {
    let nu = f64::from(nu);
    let h2 = h * h;
    let mut sum = a_start * w(start);
    let mut abs_sum = sum.abs().max(a_start);

    let mut term = a_start;
    let mut j = start;
    loop {
        let jf = j as f64;
        term *= h2 / ((jf + 1.0) * (jf + 1.0 + nu));
        j += 1;
        let contrib = term * w(j);
        sum += contrib;
        abs_sum += contrib.abs();
        // Terms only decrease once j exceeds h.
        if jf + 1.0 > h && term.max(contrib.abs()) <= 1e-17 * abs_sum {
            break;
        }
        if j - start > BESSEL_MAX_TERMS {
            return Err(Error::Convergence {
                what: "Bessel series".into(),
                iterations: BESSEL_MAX_TERMS,
            });
        }
    }

    let mut term = a_start;
    let mut j = start;
    while j > 0 {
        let jf = j as f64;
        term *= jf * (jf + nu) / h2;
        j -= 1;
        let contrib = term * w(j);
        sum += contrib;
        abs_sum += contrib.abs();
        if term.max(contrib.abs()) <= 1e-17 * abs_sum {
            break;
        }
    }
    Ok(sum)
}

fn check_order(order: u32, x: f64) -> Result<()> {
    if order > 2 {
        return domain(format!("Bessel order must be 0, 1 or 2, got {order}"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("Bessel argument must be finite and non-negative, got {x}"));
    }
    Ok(())
}

/// Scaled sum `e^{-x} Σ_j h^{2j+ν}/(j!(j+ν)!) w(j)` with `h = x/2`.
fn scaled_series(x: f64, nu: u32, w: impl Fn(usize) -> f64) -> Result<f64> {
    let h = 0.5 * x;
    let nu_fact = f64::from((1..=nu).product::<u32>());
    if x <= DIRECT_SCALING_LIMIT {
        let a0 = (-x).exp() * h.powi(nu as i32) / nu_fact;
        return ascending_series(h, nu, 0, a0, w);
    }
    // Start from the largest term, computed in log space, so that neither
    // the scale factor nor the raw terms leave the f64 range.
    let start = h.floor() as usize;
    let s = start as f64;
    let ln_a = -x + (2.0 * s + f64::from(nu)) * h.ln() - ln_gamma(s + 1.0) - ln_gamma(s + f64::from(nu) + 1.0);
    ascending_series(h, nu, start, ln_a.exp(), w)
}

/// Modified Bessel function of the first kind `I_order(x)` for order 0, 1 or 2.
pub fn bessel_i(order: u32, x: f64) -> Result<f64> {
    check_order(order, x)?;
    if x > UNSCALED_LIMIT {
        return Err(Error::Overflow(format!(
            "I_{order}({x}) exceeds the f64 range; use bessel_i_scaled"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    let h = 0.5 * x;
    let nu_fact = f64::from((1..=order).product::<u32>());
    ascending_series(h, order, 0, h.powi(order as i32) / nu_fact, |_| 1.0)
}

/// Exponentially scaled Bessel function `e^{-x} I_order(x)`, finite for every `x ≥ 0`.
pub fn bessel_i_scaled(order: u32, x: f64) -> Result<f64> {
    check_order(order, x)?;
    if x == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    scaled_series(x, order, |_| 1.0)
}

/// `e^{-2θ} [(1+θ) I₀(2θ) + I₁(2θ) − θ I₂(2θ)]`, fused into one scaled series.
///
/// This is the factor `s(θ)` with `∂Δ₂:₂/∂p |_{p=0} = θ (1 − s(θ))`; it lies
/// in (0, 1) and tends to 1 as θ → 0.
pub fn scaled_bessel_term(theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("theta must be positive and finite, got {theta}"));
    }
    // With h = θ the I₁ and I₂ terms share the I₀ base term:
    //   h^{2j+1}/(j!(j+1)!) = a_j θ/(j+1),  h^{2j+2}/(j!(j+2)!) = a_j θ²/((j+1)(j+2)).
    let t = theta;
    let t3 = t * t * t;
    scaled_series(2.0 * theta, 0, |j| {
        let j = j as f64;
        (1.0 + t) + t / (j + 1.0) - t3 / ((j + 1.0) * (j + 2.0))
    })
}

/// `e^θ − 1 − θ` without cancellation for small θ.
pub fn expm1_minus_x(theta: f64) -> f64 {
    if theta.abs() < 0.1 {
        // θ²/2! + θ³/3! + …
        let mut term = theta * theta / 2.0;
        let mut sum = term;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs() {
            k += 1.0;
            term *= theta / k;
            sum += term;
        }
        sum
    } else {
        theta.exp_m1() - theta
    }
}

/// `ln(e^θ − 1 − θ)` for θ > 0, finite even where `e^θ` overflows.
pub fn ln_expm1_minus_x(theta: f64) -> f64 {
    if theta < 30.0 {
        expm1_minus_x(theta).ln()
    } else {
        theta + (-(1.0 + theta) * (-theta).exp()).ln_1p()
    }
}

/// `ln Γ(r + v) − ln Γ(r)`, summed directly for small `v` to avoid
/// cancellation when `r` is large.
pub fn ln_rising(r: f64, v: u64) -> f64 {
    if v <= 64 {
        (0..v).map(|i| (r + i as f64).ln()).sum()
    } else {
        ln_gamma(r + v as f64) - ln_gamma(r)
    }
}

/// `ln j!`.
pub fn ln_factorial(j: u64) -> f64 {
    if j < 2 {
        0.0
    } else {
        ln_gamma(j as f64 + 1.0)
    }
}
