//! Expected extreme order statistics.
//!
//! For `k` independent copies of a count variable with cdf `F`,
//!
//! ```text
//! E Y_{k:k} = Σ_{i≥0} [1 − F(i)^k],     E Y_{1:k} = Σ_{i≥0} [1 − F(i)]^k.
//! ```
//!
//! Model-based values sum these series until a rigorous tail bound drops
//! below the requested tolerance. Plug-in values replace `F` by the
//! empirical cdf of a sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{CountSample, DistributionSpec};
use crate::error::{domain, Error, Result};
use crate::numerics::{bessel_i_scaled, SeriesTolerance};

/// Which extreme a discrepancy compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Max,
    Min,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Max => "max",
            Side::Min => "min",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(Side::Max),
            "min" => Ok(Side::Min),
            other => Err(Error::Parse(format!("side must be `max` or `min`, got `{other}`"))),
        }
    }
}

/// Selects `Δ_{k:k}`/`Λ_{k:k}` (side = max) or `Δ_{1:k}`/`Λ_{1:k}` (side = min).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscrepancySpec {
    pub side: Side,
    pub k: u32,
}

impl DiscrepancySpec {
    pub fn new(side: Side, k: u32) -> Result<Self> {
        if k < 2 {
            return domain(format!("discrepancy needs k ≥ 2, got {k}"));
        }
        Ok(Self { side, k })
    }
}

impl fmt::Display for DiscrepancySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.side {
            Side::Max => write!(f, "{k}:{k}", k = self.k),
            Side::Min => write!(f, "1:{}", self.k),
        }
    }
}

fn expected_extreme(spec: &DistributionSpec, k: u32, side: Side, tol: &SeriesTolerance) -> Result<f64> {
    spec.validate()?;
    if k == 0 {
        return domain("k must be at least 1");
    }
    let kf = f64::from(k);
    let power = k as i32;
    let mut cdf = 0.0f64;
    let mut sum = 0.0f64;
    for (i, pmf) in spec.pmf_walk().enumerate() {
        if i >= tol.max_terms {
            return Err(Error::Convergence {
                what: format!("expected {side} series for {spec}"),
                iterations: tol.max_terms,
            });
        }
        cdf = (cdf + pmf).min(1.0);
        sum += match side {
            Side::Max => 1.0 - cdf.powi(power),
            Side::Min => (1.0 - cdf).powi(power),
        };
        if let Some(tail) = spec.survival_sum_bound(i as u64, pmf) {
            // 1 − F^k ≤ k(1 − F) and (1 − F)^k ≤ 1 − F.
            let bound = match side {
                Side::Max => kf * tail,
                Side::Min => tail,
            };
            if bound <= tol.eps {
                break;
            }
        }
    }
    Ok(sum)
}

/// `E Y_{k:k}`, the expected maximum of `k` independent copies.
pub fn expected_max(spec: &DistributionSpec, k: u32, tol: &SeriesTolerance) -> Result<f64> {
    expected_extreme(spec, k, Side::Max, tol)
}

/// `E Y_{1:k}`, the expected minimum of `k` independent copies.
pub fn expected_min(spec: &DistributionSpec, k: u32, tol: &SeriesTolerance) -> Result<f64> {
    expected_extreme(spec, k, Side::Min, tol)
}

pub fn expected_extreme_for(spec: &DistributionSpec, d: DiscrepancySpec, tol: &SeriesTolerance) -> Result<f64> {
    expected_extreme(spec, d.k, d.side, tol)
}

/// Expected maximum of two independent Poisson(θ) variables:
/// `M₂(θ) = θ + θ e^{-2θ} (I₀(2θ) + I₁(2θ))`.
pub fn m2(theta: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("theta must be positive and finite, got {theta}"));
    }
    let x = 2.0 * theta;
    Ok(theta + theta * (bessel_i_scaled(0, x)? + bessel_i_scaled(1, x)?))
}

fn plug_in(sample: &CountSample, k: u32, weight: impl Fn(f64, f64) -> f64) -> Result<f64> {
    if k == 0 {
        return domain("k must be at least 1");
    }
    let n = sample.n() as f64;
    let mut below = 0usize;
    let mut sum = 0.0;
    // Tied order statistics share a value, so their weights telescope into
    // one weight per distinct value.
    for &(value, count) in sample.frequencies() {
        let a = below as f64 / n;
        let b = (below + count) as f64 / n;
        sum += weight(a, b) * value as f64;
        below += count;
    }
    Ok(sum)
}

/// Plug-in estimate `Σ_i [(i/n)^k − ((i−1)/n)^k] Y_{i:n}` of `E Y_{k:k}`.
pub fn empirical_expected_max(sample: &CountSample, k: u32) -> Result<f64> {
    let p = k as i32;
    plug_in(sample, k, |a, b| b.powi(p) - a.powi(p))
}

/// Plug-in estimate `Σ_i [(1 − (i−1)/n)^k − (1 − i/n)^k] Y_{i:n}` of `E Y_{1:k}`.
pub fn empirical_expected_min(sample: &CountSample, k: u32) -> Result<f64> {
    let p = k as i32;
    plug_in(sample, k, |a, b| (1.0 - a).powi(p) - (1.0 - b).powi(p))
}

pub fn empirical_expected_extreme(sample: &CountSample, d: DiscrepancySpec) -> Result<f64> {
    match d.side {
        Side::Max => empirical_expected_max(sample, d.k),
        Side::Min => empirical_expected_min(sample, d.k),
    }
}

/// Gaps between two laws at one subsample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeGap {
    pub k: u32,
    /// `E upper_{k:k} − E lower_{k:k}`.
    pub max_gap: f64,
    /// `E lower_{1:k} − E upper_{1:k}`.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub lower: DistributionSpec,
    pub upper: DistributionSpec,
    pub gaps: Vec<ExtremeGap>,
    pub tol: f64,
    /// Some gap fell below `−tol`.
    pub violated: bool,
    /// Some gap exceeded `tol`.
    pub strict: bool,
}

impl DominanceReport {
    /// No violation and at least one strictly positive gap.
    pub fn passes_strict(&self) -> bool {
        !self.violated && self.strict
    }
}

/// Checks the expected-extremes consequences of `lower ≤_cx upper` for
/// `k = 2..=k_max`: the maxima of `upper` must be larger and its minima
/// smaller. Only these necessary conditions are tested.
pub fn check_convex_dominance(
    lower: &DistributionSpec,
    upper: &DistributionSpec,
    k_max: u32,
    tol: f64,
) -> Result<DominanceReport> {
    let (ml, mu) = (lower.mean()?, upper.mean()?);
    if (ml - mu).abs() > tol {
        return Err(Error::MeanMismatch { lower: ml, upper: mu });
    }
    if k_max < 2 {
        return domain("k_max must be at least 2");
    }
    let series = SeriesTolerance::default();
    let mut gaps = Vec::with_capacity(k_max as usize - 1);
    for k in 2..=k_max {
        gaps.push(ExtremeGap {
            k,
            max_gap: expected_max(upper, k, &series)? - expected_max(lower, k, &series)?,
            min_gap: expected_min(lower, k, &series)? - expected_min(upper, k, &series)?,
        });
    }
    let violated = gaps.iter().any(|g| g.max_gap < -tol || g.min_gap < -tol);
    let strict = gaps.iter().any(|g| g.max_gap > tol || g.min_gap > tol);
    Ok(DominanceReport {
        lower: *lower,
        upper: *upper,
        gaps,
        tol,
        violated,
        strict,
    })
}
