//! Maximum-likelihood fits of the Poisson, ZIP and NB null models.
//!
//! All three families are parametrized by their mean, so `θ̂` is always the
//! sample mean and only the extra parameter (`p` or `t`) needs a search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{CountSample, DistributionSpec};
use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, ln_rising};

/// Families that can be fitted to a sample and used as a null model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullFamily {
    Poisson,
    Zip,
    Nb,
}

impl NullFamily {
    pub fn fit(self, sample: &CountSample) -> Result<FitResult> {
        match self {
            NullFamily::Poisson => fit_poisson(sample),
            NullFamily::Zip => fit_zip(sample),
            NullFamily::Nb => fit_nb(sample),
        }
    }
}

impl fmt::Display for NullFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullFamily::Poisson => "poisson",
            NullFamily::Zip => "zip",
            NullFamily::Nb => "nb",
        })
    }
}

impl FromStr for NullFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(NullFamily::Poisson),
            "zip" => Ok(NullFamily::Zip),
            "nb" => Ok(NullFamily::Nb),
            other => Err(Error::Parse(format!(
                "null family must be poisson, zip or nb, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: DistributionSpec,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// An estimate sits on the edge of the parameter space.
    pub boundary: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Largest NB dispersion searched.
pub const NB_T_MAX: f64 = 1e4;
/// Guard keeping the ZIP search away from the `p → 1` singularity.
const ZIP_P_GUARD: f64 = 1e-12;

pub fn log_likelihood(spec: &DistributionSpec, sample: &CountSample) -> Result<f64> {
    let mut ll = 0.0;
    for &(value, count) in sample.frequencies() {
        ll += count as f64 * spec.ln_pmf(value)?;
    }
    Ok(ll)
}

/// Poisson fit: `θ̂ = Ȳ`.
pub fn fit_poisson(sample: &CountSample) -> Result<FitResult> {
    let theta = sample.mean();
    if theta == 0.0 {
        return Err(Error::Degenerate("all counts are zero; the Poisson mean is not positive".into()));
    }
    let spec = DistributionSpec::poisson(theta)?;
    Ok(FitResult {
        spec,
        loglik: log_likelihood(&spec, sample)?,
        converged: true,
        iterations: 0,
        boundary: false,
        note: None,
    })
}

/// `g(p) = (1 − p)(1 − e^{−θ/(1−p)}) − (1 − n₀/n)`, strictly decreasing in `p < 1`.
fn zip_score(theta: f64, nonzero_fraction: f64, p: f64) -> f64 {
    let u = 1.0 - p;
    -u * (-theta / u).exp_m1() - nonzero_fraction
}

fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, usize) {
    let mut iterations = 0;
    let mut mid = 0.5 * (lo + hi);
    while iterations < 200 {
        iterations += 1;
        mid = 0.5 * (lo + hi);
        let g = f(mid);
        if g == 0.0 || (hi - lo) <= 4.0 * f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (mid, iterations)
}

/// ZIP fit: `θ̂ = Ȳ` and `p̂` solving
/// `p = 1 − (1 − n₀/n) / (1 − exp(−θ̂/(1 − p)))` on `[0, 1)`.
///
/// When the sample has no more zeros than a Poisson with mean `Ȳ` predicts,
/// the root would be negative and `p̂` is clamped to 0.
pub fn fit_zip(sample: &CountSample) -> Result<FitResult> {
    let n = sample.n();
    if sample.n0() == n {
        return Err(Error::Degenerate("all counts are zero; p is not identifiable".into()));
    }
    let theta = sample.mean();
    let nonzero = 1.0 - sample.n0() as f64 / n as f64;
    let g = |p: f64| zip_score(theta, nonzero, p);

    let (p_hat, iterations, boundary) = if g(0.0) <= 0.0 {
        (0.0, 0, true)
    } else {
        let (p, it) = bisect_decreasing(g, 0.0, 1.0 - ZIP_P_GUARD);
        (p, it, false)
    };
    let spec = DistributionSpec::zip(theta, p_hat)?;
    Ok(FitResult {
        spec,
        loglik: log_likelihood(&spec, sample)?,
        converged: true,
        iterations,
        boundary,
        note: boundary.then(|| "p clamped at 0: no excess zeros".to_string()),
    })
}

/// Root of the ZIP likelihood equation without the `p ≥ 0` restriction.
///
/// Negative roots describe zero deflation. Returns `None` when no finite root
/// exists (all counts zero, or all counts in {0, 1}).
pub fn zip_unrestricted_p(sample: &CountSample) -> Option<f64> {
    let n = sample.n();
    if sample.n0() == n {
        return None;
    }
    let theta = sample.mean();
    let nonzero = 1.0 - sample.n0() as f64 / n as f64;
    let g = |p: f64| zip_score(theta, nonzero, p);
    if g(0.0) >= 0.0 {
        return Some(bisect_decreasing(g, 0.0, 1.0 - ZIP_P_GUARD).0);
    }
    let mut lo = -1.0;
    while g(lo) <= 0.0 {
        lo *= 2.0;
        if lo < -1e12 {
            return None;
        }
    }
    Some(bisect_decreasing(g, lo, 0.0).0)
}

/// NB profile log-likelihood in `t` at fixed mean `θ`.
fn nb_profile_loglik(sample: &CountSample, theta: f64, t: f64) -> f64 {
    let r = 1.0 / t;
    let odds = theta * t;
    let (ln_odds, ln_1p_odds) = (odds.ln(), odds.ln_1p());
    sample
        .frequencies()
        .iter()
        .map(|&(v, c)| {
            let vf = v as f64;
            c as f64 * (ln_rising(r, v) - ln_factorial(v) + vf * ln_odds - (vf + r) * ln_1p_odds)
        })
        .sum()
}

/// NB fit: `θ̂ = Ȳ` and `t̂` maximizing the profile likelihood on `(0, 10⁴]`.
///
/// The profile score at `t → 0` is `½[Σ(Y − Ȳ)² − ΣY]`; when it is not
/// positive the maximum sits on the Poisson boundary and the fitted spec is
/// `Poisson(θ̂)` with `boundary = true`.
pub fn fit_nb(sample: &CountSample) -> Result<FitResult> {
    let theta = sample.mean();
    let ss = sample.sum_sq_dev();
    if ss == 0.0 {
        return Err(Error::Degenerate("zero sample variance; NB dispersion is not identifiable".into()));
    }
    if ss <= sample.sum() as f64 {
        let spec = DistributionSpec::poisson(theta)?;
        return Ok(FitResult {
            spec,
            loglik: log_likelihood(&spec, sample)?,
            converged: true,
            iterations: 0,
            boundary: true,
            note: Some("Poisson-boundary: t = 0".into()),
        });
    }

    let ll = |t: f64| nb_profile_loglik(sample, theta, t);
    // Coarse log grid from 1e-6 to t_max, then golden section on the
    // bracket around the best grid point.
    const GRID: usize = 101;
    let grid: Vec<f64> = (0..GRID)
        .map(|i| 1e-6 * (NB_T_MAX / 1e-6).powf(i as f64 / (GRID - 1) as f64))
        .collect();
    let best = grid
        .iter()
        .map(|&t| ll(t))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    if best == GRID - 1 {
        return Err(Error::Convergence {
            what: format!("NB dispersion search (t̂ ≥ {NB_T_MAX})"),
            iterations: GRID,
        });
    }
    let mut lo = if best == 0 { 0.0 } else { grid[best - 1] };
    let mut hi = grid[best + 1];

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (ll(x1), ll(x2));
    let mut iterations = GRID;
    while hi - lo > 1e-8 {
        iterations += 1;
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = ll(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = ll(x1);
        }
    }
    let t_hat = 0.5 * (lo + hi);
    let spec = DistributionSpec::nb(theta, t_hat)?;
    Ok(FitResult {
        spec,
        loglik: log_likelihood(&spec, sample)?,
        converged: true,
        iterations,
        boundary: false,
        note: None,
    })
}
