//! Tests of zero inflation and overdispersion.
//!
//! Δ statistics compare model-based expected extremes of the fitted ZIP with
//! those of the null ZIP(θ̂, p₀); Λ statistics compare plug-in expected
//! extremes of the sample with those of a fitted null family. Both are
//! calibrated by a parametric bootstrap. The asymptotic Δ₂:₂ test and the
//! classical zero-count score test are also provided.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::distributions::{CountSample, DistributionSpec};
use crate::error::{domain, Error, Result};
use crate::estimation::{fit_zip, zip_unrestricted_p, NullFamily};
use crate::extremes::{empirical_expected_extreme, expected_extreme_for, m2, DiscrepancySpec, Side};
use crate::numerics::{expm1_minus_x, ln_expm1_minus_x, scaled_bessel_term, SeriesTolerance};
use crate::random::RandomStream;

/// Cap on redraws of a single bootstrap replicate.
pub const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Bootstrap,
    Asymptotic,
    Score,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Bootstrap => "bootstrap",
            TestMethod::Asymptotic => "asymptotic",
            TestMethod::Score => "score",
        })
    }
}

impl FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bootstrap" => Ok(TestMethod::Bootstrap),
            "asymptotic" => Ok(TestMethod::Asymptotic),
            "score" => Ok(TestMethod::Score),
            other => Err(Error::Parse(format!("unknown test method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub tol: SeriesTolerance,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            replicates,
            seed,
            alpha,
            tol: SeriesTolerance::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tol(mut self, tol: SeriesTolerance) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 99 {
            return domain(format!("B must be at least 99, got {}", self.replicates));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Bootstrap critical value; `None` for other methods or when `B` is
    /// too small for the requested α.
    pub critical_value: Option<f64>,
    pub alpha: f64,
    pub method: TestMethod,
    pub discrepancy: Option<DiscrepancySpec>,
    #[serde(rename = "B")]
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub reject: bool,
    pub fitted_null: DistributionSpec,
    pub fitted_alt: Option<DistributionSpec>,
    /// Bootstrap replicates redrawn because their refit failed.
    pub redraws: usize,
    /// Signed square root of the score statistic.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub signed_root: Option<f64>,
}

fn delta_from_fit(theta: f64, p_hat: f64, p0: f64, d: DiscrepancySpec, tol: &SeriesTolerance) -> Result<f64> {
    let fitted = DistributionSpec::zip(theta, p_hat)?;
    let null = DistributionSpec::zip(theta, p0)?;
    let e_fit = expected_extreme_for(&fitted, d, tol)?;
    let e_null = expected_extreme_for(&null, d, tol)?;
    Ok(match d.side {
        Side::Max => e_fit - e_null,
        Side::Min => e_null - e_fit,
    })
}

fn check_p0(p0: f64) -> Result<()> {
    if (0.0..1.0).contains(&p0) {
        Ok(())
    } else {
        domain(format!("p0 must lie in [0, 1), got {p0}"))
    }
}

/// `Δ_{k:k}` (side max) or `Δ_{1:k}` (side min) at the ZIP fit of `sample`.
pub fn delta_statistic(sample: &CountSample, p0: f64, d: DiscrepancySpec, tol: &SeriesTolerance) -> Result<f64> {
    check_p0(p0)?;
    let fit = fit_zip(sample)?;
    delta_from_fit(fit.spec.theta(), fit.spec.p(), p0, d, tol)
}

fn delta22_unchecked(theta: f64, p: f64) -> Result<f64> {
    if p == 0.0 {
        return Ok(0.0);
    }
    let u = 1.0 - p;
    Ok(2.0 * p * theta + u * u * m2(theta / u)? - m2(theta)?)
}

/// `Δ₂:₂ = 2pθ + (1 − p)² M₂(θ/(1 − p)) − M₂(θ)`.
pub fn delta22_closed_form(theta_hat: f64, p_hat: f64) -> Result<f64> {
    if !(theta_hat > 0.0) || !theta_hat.is_finite() {
        return domain(format!("theta must be positive and finite, got {theta_hat}"));
    }
    check_p0(p_hat)?;
    delta22_unchecked(theta_hat, p_hat)
}

/// Asymptotic standard deviation of `√n Δ₂:₂` under `p = 0`:
/// `σ(θ) = θ (1 − s(θ)) / √(e^θ − 1 − θ)`.
pub fn sigma_hat(theta_hat: f64) -> Result<f64> {
    if !(theta_hat > 0.0) || !theta_hat.is_finite() {
        return domain(format!("theta must be positive and finite, got {theta_hat}"));
    }
    let slope = theta_hat * (1.0 - scaled_bessel_term(theta_hat)?);
    Ok((slope.ln() - 0.5 * ln_expm1_minus_x(theta_hat)).exp())
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// One-sided test of `p = 0` against `p > 0` using the normal limit of
/// `√n Δ₂:₂ / σ(θ̂)` at the clamped ZIP fit.
pub fn asymptotic_zip_test(sample: &CountSample, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if sample.n() < 2 {
        return domain("the asymptotic test needs n ≥ 2");
    }
    let fit = fit_zip(sample)?;
    let (theta, p_hat) = (fit.spec.theta(), fit.spec.p());
    let statistic = (sample.n() as f64).sqrt() * delta22_closed_form(theta, p_hat)? / sigma_hat(theta)?;
    let z = standard_normal();
    let p_value = z.sf(statistic);
    Ok(TestResult {
        statistic,
        p_value,
        critical_value: None,
        alpha,
        method: TestMethod::Asymptotic,
        discrepancy: Some(DiscrepancySpec { side: Side::Max, k: 2 }),
        replicates: None,
        seed: None,
        reject: statistic > z.inverse_cdf(1.0 - alpha),
        fitted_null: DistributionSpec::poisson(theta)?,
        fitted_alt: Some(fit.spec),
        redraws: 0,
        signed_root: None,
    })
}

/// `√n Δ₂:₂(θ̂, p̃) / σ(θ̂)` where `p̃` is the root of the ZIP likelihood
/// equation without the `p ≥ 0` restriction.
///
/// Under `p = 0` this statistic is asymptotically standard normal; the
/// clamped version used by [`asymptotic_zip_test`] is its positive part.
pub fn standardized_delta22_unrestricted(sample: &CountSample) -> Result<f64> {
    let theta = sample.mean();
    if theta == 0.0 {
        return Err(Error::Degenerate("all counts are zero".into()));
    }
    let p = zip_unrestricted_p(sample)
        .ok_or_else(|| Error::Degenerate("no finite root of the ZIP likelihood equation".into()))?;
    Ok((sample.n() as f64).sqrt() * delta22_unchecked(theta, p)? / sigma_hat(theta)?)
}

/// Classical score test of Poisson against ZIP:
/// `S = (n₀ e^θ̂ − n)² / (n (e^θ̂ − 1 − θ̂))`, referred to χ²₁.
pub fn score_test(sample: &CountSample, alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    let n = sample.n() as f64;
    if sample.n() < 2 {
        return domain("the score test needs n ≥ 2");
    }
    let theta = sample.mean();
    if theta == 0.0 {
        return Err(Error::Degenerate("all counts are zero".into()));
    }
    if theta >= 700.0 {
        return Err(Error::Inapplicable(format!("score statistic overflows at theta = {theta}")));
    }
    let den = n * expm1_minus_x(theta);
    if !(den > 0.0) {
        return Err(Error::Inapplicable("score denominator is not positive".into()));
    }
    let num = sample.n0() as f64 * theta.exp() - n;
    let statistic = num * num / den;
    let root = num.signum() * statistic.sqrt();
    let p_value = (2.0 * standard_normal().sf(statistic.sqrt())).min(1.0);
    Ok(TestResult {
        statistic,
        p_value,
        critical_value: None,
        alpha,
        method: TestMethod::Score,
        discrepancy: None,
        replicates: None,
        seed: None,
        reject: p_value <= alpha,
        fitted_null: DistributionSpec::poisson(theta)?,
        fitted_alt: None,
        redraws: 0,
        signed_root: Some(root),
    })
}

/// Replicate statistics drawn from `null` with samples of size `n`.
///
/// Replicate `b` uses stream `root.child(b)`; a replicate whose statistic
/// cannot be computed because the resample is degenerate is redrawn from
/// `root.child(b).child(attempt)`.
pub(crate) fn parametric_replicates<F>(
    null: &DistributionSpec,
    n: usize,
    replicates: usize,
    seed: u64,
    stat: F,
) -> Result<(Vec<Vec<f64>>, usize)>
where
    F: Fn(&CountSample) -> Result<Vec<f64>> + Sync,
{
    let root = RandomStream::new(seed);
    let out: Vec<Result<(Vec<f64>, usize)>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let base = root.child(b);
            let mut buf = Vec::with_capacity(n);
            for attempt in 0..=MAX_REDRAWS {
                let mut stream = if attempt == 0 { base.clone() } else { base.child(attempt) };
                buf.clear();
                null.sample_into(n, &mut stream, &mut buf)?;
                let resample = CountSample::new(std::mem::take(&mut buf))?;
                match stat(&resample) {
                    Ok(values) => return Ok((values, attempt as usize)),
                    Err(Error::Degenerate(_)) | Err(Error::Convergence { .. }) => {
                        buf = resample.into_counts();
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Degenerate(format!(
                "bootstrap replicate {b} degenerate after {MAX_REDRAWS} redraws"
            )))
        })
        .collect();
    let mut values = Vec::with_capacity(replicates);
    let mut redraws = 0;
    for r in out {
        let (v, extra) = r?;
        values.push(v);
        redraws += extra;
    }
    Ok((values, redraws))
}

/// Critical value and p-value from replicate statistics.
///
/// The critical value is the `⌈(1 − α)(B + 1)⌉`-th order statistic (absent
/// when that index exceeds `B`); the p-value is `(1 + #{Δ*_b ≥ Δ}) / (B + 1)`.
pub fn bootstrap_calibration(statistic: f64, replicates: &[f64], alpha: f64) -> (Option<f64>, f64) {
    let b = replicates.len();
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((1.0 - alpha) * (b + 1) as f64 - 1e-9).ceil() as usize;
    let critical = (idx >= 1 && idx <= b).then(|| sorted[idx - 1]);
    let exceed = replicates.iter().filter(|&&x| x >= statistic).count();
    (critical, (1 + exceed) as f64 / (b + 1) as f64)
}

fn bootstrap_result(
    statistic: f64,
    replicates: &[f64],
    cfg: &BootstrapConfig,
    d: DiscrepancySpec,
    fitted_null: DistributionSpec,
    fitted_alt: Option<DistributionSpec>,
    redraws: usize,
) -> TestResult {
    let (critical_value, p_value) = bootstrap_calibration(statistic, replicates, cfg.alpha);
    TestResult {
        statistic,
        p_value,
        critical_value,
        alpha: cfg.alpha,
        method: TestMethod::Bootstrap,
        discrepancy: Some(d),
        replicates: Some(cfg.replicates),
        seed: Some(cfg.seed),
        reject: critical_value.is_some_and(|c| statistic > c),
        fitted_null,
        fitted_alt,
        redraws,
        signed_root: None,
    }
}

/// Parametric bootstrap test of `H₀: p ≤ p₀` against `p > p₀` based on Δ.
pub fn bootstrap_zero_test(
    sample: &CountSample,
    p0: f64,
    d: DiscrepancySpec,
    cfg: &BootstrapConfig,
) -> Result<TestResult> {
    cfg.validate()?;
    check_p0(p0)?;
    let fit = fit_zip(sample)?;
    let theta = fit.spec.theta();
    let statistic = delta_from_fit(theta, fit.spec.p(), p0, d, &cfg.tol)?;
    let null = DistributionSpec::zip(theta, p0)?;
    let (reps, redraws) = parametric_replicates(&null, sample.n(), cfg.replicates, cfg.seed, |s| {
        let f = fit_zip(s)?;
        Ok(vec![delta_from_fit(f.spec.theta(), f.spec.p(), p0, d, &cfg.tol)?])
    })?;
    let reps: Vec<f64> = reps.into_iter().map(|v| v[0]).collect();
    Ok(bootstrap_result(statistic, &reps, cfg, d, null, Some(fit.spec), redraws))
}

pub(crate) fn lambda_from_fit(
    sample: &CountSample,
    fitted: &DistributionSpec,
    d: DiscrepancySpec,
    tol: &SeriesTolerance,
) -> Result<f64> {
    let plug_in = empirical_expected_extreme(sample, d)?;
    let model = expected_extreme_for(fitted, d, tol)?;
    Ok(match d.side {
        Side::Max => plug_in - model,
        Side::Min => model - plug_in,
    })
}

/// `Λ_{k:k} = E_{F_n} Y_{k:k} − E_θ̂ Y_{k:k}` (side max) or
/// `Λ_{1:k} = E_θ̂ Y_{1:k} − E_{F_n} Y_{1:k}` (side min).
pub fn lambda_statistic(
    sample: &CountSample,
    null_family: NullFamily,
    d: DiscrepancySpec,
    tol: &SeriesTolerance,
) -> Result<f64> {
    let fit = null_family.fit(sample)?;
    lambda_from_fit(sample, &fit.spec, d, tol)
}

/// How the null model is re-estimated on each bootstrap resample of an
/// overdispersion test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullRefit {
    /// Re-run the full maximum-likelihood fit of the null family.
    #[default]
    Full,
    /// Re-estimate only the mean `θ̂* = Ȳ*`; shape parameters (`p`, `t`)
    /// stay at their values fitted on the observed sample. The replicate
    /// statistics then ignore the shape-estimation noise present in the
    /// observed statistic, so this variant is conservative.
    MeanOnly,
}

impl fmt::Display for NullRefit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullRefit::MeanOnly => "mean-only",
            NullRefit::Full => "full",
        })
    }
}

impl FromStr for NullRefit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean-only" => Ok(NullRefit::MeanOnly),
            "full" => Ok(NullRefit::Full),
            other => Err(Error::Parse(format!("refit must be mean-only or full, got `{other}`"))),
        }
    }
}

/// Parametric bootstrap overdispersion tests for several discrepancies
/// sharing the same bootstrap resamples, with the null refit in full.
pub fn bootstrap_overdispersion_tests(
    sample: &CountSample,
    null_family: NullFamily,
    ds: &[DiscrepancySpec],
    cfg: &BootstrapConfig,
) -> Result<Vec<TestResult>> {
    bootstrap_overdispersion_tests_with(sample, null_family, ds, cfg, NullRefit::Full)
}

pub fn bootstrap_overdispersion_tests_with(
    sample: &CountSample,
    null_family: NullFamily,
    ds: &[DiscrepancySpec],
    cfg: &BootstrapConfig,
    refit: NullRefit,
) -> Result<Vec<TestResult>> {
    cfg.validate()?;
    let fit = null_family.fit(sample)?;
    let stats = ds
        .iter()
        .map(|&d| lambda_from_fit(sample, &fit.spec, d, &cfg.tol))
        .collect::<Result<Vec<_>>>()?;
    let (reps, redraws) = parametric_replicates(&fit.spec, sample.n(), cfg.replicates, cfg.seed, |s| {
        let null = match refit {
            NullRefit::Full => null_family.fit(s)?.spec,
            NullRefit::MeanOnly => {
                if s.sum() == 0 {
                    return Err(Error::Degenerate("all counts are zero".into()));
                }
                fit.spec.with_theta(s.mean())?
            }
        };
        ds.iter().map(|&d| lambda_from_fit(s, &null, d, &cfg.tol)).collect()
    })?;
    Ok(ds
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let column: Vec<f64> = reps.iter().map(|r| r[i]).collect();
            bootstrap_result(stats[i], &column, cfg, d, fit.spec, None, redraws)
        })
        .collect())
}

/// Parametric bootstrap overdispersion test based on Λ.
pub fn bootstrap_overdispersion_test(
    sample: &CountSample,
    null_family: NullFamily,
    d: DiscrepancySpec,
    cfg: &BootstrapConfig,
) -> Result<TestResult> {
    Ok(bootstrap_overdispersion_tests(sample, null_family, &[d], cfg)?.remove(0))
}
