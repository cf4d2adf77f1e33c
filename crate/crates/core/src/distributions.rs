//! Mean-parametrized count families: Poisson, ZIP, ZIB, NB and the two
//! zero-inflated negative binomials.
//!
//! Every family is parametrized so that its mean is `theta`. Zero-inflated
//! families are mixtures of a point mass at zero (weight `p`) and a base
//! count law (weight `1 − p`) whose mean is `theta / (1 − p)`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::{ln_factorial, ln_rising};
use crate::random::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    Zip,
    Zib,
    Nb,
    Zinb1,
    Zinb2,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::Zip => "zip",
            Family::Zib => "zib",
            Family::Nb => "nb",
            Family::Zinb1 => "zinb1",
            Family::Zinb2 => "zinb2",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "poisson" => Ok(Family::Poisson),
            "zip" => Ok(Family::Zip),
            "zib" => Ok(Family::Zib),
            "nb" => Ok(Family::Nb),
            "zinb1" => Ok(Family::Zinb1),
            "zinb2" => Ok(Family::Zinb2),
            other => Err(Error::Parse(format!("unknown family `{other}`"))),
        }
    }
}

/// A fully specified count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum DistributionSpec {
    Poisson { theta: f64 },
    Zip { theta: f64, p: f64 },
    Zib { m: u32, theta: f64, p: f64 },
    Nb { theta: f64, t: f64 },
    Zinb1 { theta: f64, p: f64, t: f64 },
    Zinb2 { theta: f64, p: f64, t: f64 },
}

/// Base (non-inflated) count law of a spec.
#[derive(Debug, Clone, Copy)]
enum Base {
    Poisson { mu: f64 },
    Binomial { m: u32, prob: f64 },
    /// All mass at `m` (binomial with success probability 1).
    Point { m: u32 },
    /// NB with mean `mu` and dispersion `t`: size `1/t`, success odds `mu·t`.
    NegBin { mu: f64, t: f64 },
}

impl Base {
    fn ln_pmf(self, j: u64) -> f64 {
        match self {
            Base::Poisson { mu } => -mu + j as f64 * mu.ln() - ln_factorial(j),
            Base::Binomial { m, prob } => {
                let m = u64::from(m);
                if j > m {
                    return f64::NEG_INFINITY;
                }
                ln_factorial(m) - ln_factorial(j) - ln_factorial(m - j)
                    + j as f64 * prob.ln()
                    + (m - j) as f64 * (-prob).ln_1p()
            }
            Base::Point { m } => {
                if j == u64::from(m) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Base::NegBin { mu, t } => {
                let r = 1.0 / t;
                let odds = mu * t;
                ln_rising(r, j) - ln_factorial(j) + j as f64 * odds.ln() - (j as f64 + r) * odds.ln_1p()
            }
        }
    }

    /// `ln pmf(j+1) − ln pmf(j)`.
    fn ln_ratio(self, j: u64) -> f64 {
        let jf = j as f64;
        match self {
            Base::Poisson { mu } => mu.ln() - (jf + 1.0).ln(),
            Base::Binomial { m, prob } => {
                if j >= u64::from(m) {
                    f64::NEG_INFINITY
                } else {
                    (f64::from(m) - jf).ln() - (jf + 1.0).ln() + prob.ln() - (-prob).ln_1p()
                }
            }
            Base::Point { .. } => unreachable!("point mass is not walked by ratios"),
            Base::NegBin { mu, t } => {
                let odds = mu * t;
                (jf + 1.0 / t).ln() - (jf + 1.0).ln() + odds.ln() - odds.ln_1p()
            }
        }
    }

    /// `sup_{i ≥ j} pmf(i+1)/pmf(i)`.
    fn ratio_bound(self, j: u64) -> f64 {
        let jf = j as f64;
        match self {
            Base::Poisson { mu } => mu / (jf + 1.0),
            Base::Binomial { m, prob } => {
                if j >= u64::from(m) {
                    0.0
                } else {
                    (f64::from(m) - jf) / (jf + 1.0) * prob / (1.0 - prob)
                }
            }
            Base::Point { m } => {
                if j >= u64::from(m) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Base::NegBin { mu, t } => {
                let q = mu * t / (1.0 + mu * t);
                // (i + 1/t)/(i + 1) is monotone in i with limit 1.
                ((jf + 1.0 / t) / (jf + 1.0) * q).max(q)
            }
        }
    }

    fn support_max(self) -> Option<u64> {
        match self {
            Base::Binomial { m, .. } | Base::Point { m } => Some(u64::from(m)),
            _ => None,
        }
    }
}

impl DistributionSpec {
    pub fn poisson(theta: f64) -> Result<Self> {
        Self::Poisson { theta }.validated()
    }

    pub fn zip(theta: f64, p: f64) -> Result<Self> {
        Self::Zip { theta, p }.validated()
    }

    pub fn zib(m: u32, theta: f64, p: f64) -> Result<Self> {
        Self::Zib { m, theta, p }.validated()
    }

    pub fn nb(theta: f64, t: f64) -> Result<Self> {
        Self::Nb { theta, t }.validated()
    }

    pub fn zinb1(theta: f64, p: f64, t: f64) -> Result<Self> {
        Self::Zinb1 { theta, p, t }.validated()
    }

    pub fn zinb2(theta: f64, p: f64, t: f64) -> Result<Self> {
        Self::Zinb2 { theta, p, t }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let theta = self.theta();
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("theta must be positive and finite, got {theta}"));
        }
        let p = self.p();
        if !(0.0..1.0).contains(&p) {
            return domain(format!("p must lie in [0, 1), got {p}"));
        }
        if let Some(t) = self.t() {
            if !(t > 0.0) || !t.is_finite() {
                return domain(format!("t must be positive and finite, got {t}"));
            }
        }
        if let DistributionSpec::Zib { m, theta, p } = *self {
            if m == 0 {
                return domain("ZIB needs m ≥ 1");
            }
            // Allow rounding slack on the degenerate edge θ = m(1 − p).
            if theta > f64::from(m) * (1.0 - p) * (1.0 + 1e-12) {
                return domain(format!("ZIB needs theta ≤ m(1 − p), got theta = {theta}, m = {m}, p = {p}"));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        match self {
            DistributionSpec::Poisson { .. } => Family::Poisson,
            DistributionSpec::Zip { .. } => Family::Zip,
            DistributionSpec::Zib { .. } => Family::Zib,
            DistributionSpec::Nb { .. } => Family::Nb,
            DistributionSpec::Zinb1 { .. } => Family::Zinb1,
            DistributionSpec::Zinb2 { .. } => Family::Zinb2,
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            DistributionSpec::Poisson { theta }
            | DistributionSpec::Zip { theta, .. }
            | DistributionSpec::Zib { theta, .. }
            | DistributionSpec::Nb { theta, .. }
            | DistributionSpec::Zinb1 { theta, .. }
            | DistributionSpec::Zinb2 { theta, .. } => theta,
        }
    }

    /// Structural-zero proportion (0 for Poisson and NB).
    pub fn p(&self) -> f64 {
        match *self {
            DistributionSpec::Poisson { .. } | DistributionSpec::Nb { .. } => 0.0,
            DistributionSpec::Zip { p, .. }
            | DistributionSpec::Zib { p, .. }
            | DistributionSpec::Zinb1 { p, .. }
            | DistributionSpec::Zinb2 { p, .. } => p,
        }
    }

    pub fn t(&self) -> Option<f64> {
        match *self {
            DistributionSpec::Nb { t, .. } | DistributionSpec::Zinb1 { t, .. } | DistributionSpec::Zinb2 { t, .. } => {
                Some(t)
            }
            _ => None,
        }
    }

    pub fn m(&self) -> Option<u32> {
        match *self {
            DistributionSpec::Zib { m, .. } => Some(m),
            _ => None,
        }
    }

    /// Same family and shape parameters with mean `theta`.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let mut spec = *self;
        match &mut spec {
            DistributionSpec::Poisson { theta: th }
            | DistributionSpec::Zip { theta: th, .. }
            | DistributionSpec::Zib { theta: th, .. }
            | DistributionSpec::Nb { theta: th, .. }
            | DistributionSpec::Zinb1 { theta: th, .. }
            | DistributionSpec::Zinb2 { theta: th, .. } => *th = theta,
        }
        spec.validated()
    }

    fn base(&self) -> Base {
        match *self {
            DistributionSpec::Poisson { theta } => Base::Poisson { mu: theta },
            DistributionSpec::Zip { theta, p } => Base::Poisson { mu: theta / (1.0 - p) },
            DistributionSpec::Zib { m, theta, p } => {
                let prob = theta / (f64::from(m) * (1.0 - p));
                if prob >= 1.0 {
                    Base::Point { m }
                } else {
                    Base::Binomial { m, prob }
                }
            }
            DistributionSpec::Nb { theta, t } => Base::NegBin { mu: theta, t },
            DistributionSpec::Zinb1 { theta, p, t } => Base::NegBin {
                mu: theta / (1.0 - p),
                t: t * (1.0 - p),
            },
            DistributionSpec::Zinb2 { theta, p, t } => Base::NegBin {
                mu: theta / (1.0 - p),
                t,
            },
        }
    }

    /// `P(Y = j)`, evaluated in log space.
    pub fn pmf(&self, j: u64) -> Result<f64> {
        self.validate()?;
        Ok(self.pmf_unchecked(j))
    }

    /// `ln P(Y = j)`.
    pub fn ln_pmf(&self, j: u64) -> Result<f64> {
        self.validate()?;
        let p = self.p();
        let ln_base = self.base().ln_pmf(j);
        Ok(if j > 0 {
            (-p).ln_1p() + ln_base
        } else if p == 0.0 {
            ln_base
        } else {
            (p + (1.0 - p) * ln_base.exp()).ln()
        })
    }

    fn pmf_unchecked(&self, j: u64) -> f64 {
        let p = self.p();
        let base = (1.0 - p) * self.base().ln_pmf(j).exp();
        if j == 0 {
            p + base
        } else {
            base
        }
    }

    /// `P(Y ≤ j)` by cumulative summation; `cdf(-1) = 0`.
    pub fn cdf(&self, j: i64) -> Result<f64> {
        self.validate()?;
        if j < 0 {
            return Ok(0.0);
        }
        let j = j as u64;
        if let Some(top) = self.base().support_max() {
            if j >= top {
                return Ok(1.0);
            }
        }
        Ok(self.pmf_walk().take(j as usize + 1).sum::<f64>().min(1.0))
    }

    pub fn mean(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.theta())
    }

    pub fn variance(&self) -> Result<f64> {
        self.validate()?;
        let theta = self.theta();
        let p = self.p();
        let th2 = theta * theta;
        let inflation = th2 * p / (1.0 - p);
        Ok(match *self {
            DistributionSpec::Poisson { .. } => theta,
            DistributionSpec::Zip { .. } => theta + inflation,
            DistributionSpec::Zib { m, .. } => theta + inflation - th2 / (f64::from(m) * (1.0 - p)),
            DistributionSpec::Nb { t, .. } => theta + th2 * t,
            DistributionSpec::Zinb1 { t, .. } => theta + inflation + th2 * t,
            DistributionSpec::Zinb2 { t, .. } => theta + inflation + th2 * t / (1.0 - p),
        })
    }

    /// Iterator over `pmf(0), pmf(1), …`, advancing the log pmf by its ratio.
    pub(crate) fn pmf_walk(&self) -> PmfWalk {
        let base = self.base();
        PmfWalk {
            base,
            p: self.p(),
            j: 0,
            ln_base: base.ln_pmf(0),
        }
    }

    /// Upper bound on `Σ_{i>j} P(Y > i)` for `j ≥ 1`, given `pmf(j)`.
    ///
    /// Uses the monotone bound on successive pmf ratios: with
    /// `ρ = sup_{i≥j} pmf(i+1)/pmf(i) < 1`, the tail is at most
    /// `pmf(j) ρ / (1 − ρ)²`. Returns `None` while no bound is available.
    pub(crate) fn survival_sum_bound(&self, j: u64, pmf_j: f64) -> Option<f64> {
        let base = self.base();
        if let Some(top) = base.support_max() {
            if j >= top {
                return Some(0.0);
            }
        }
        if j == 0 {
            return None;
        }
        let rho = base.ratio_bound(j);
        if rho < 1.0 {
            Some(pmf_j * rho / ((1.0 - rho) * (1.0 - rho)))
        } else {
            None
        }
    }

    /// Smallest `j` with `1 − cdf(j) ≤ eps`, by doubling from `⌈θ⌉` and bisection.
    pub fn truncation_index(&self, eps: f64) -> Result<u64> {
        self.validate()?;
        if !(eps > 0.0 && eps < 1.0) {
            return domain(format!("eps must lie in (0, 1), got {eps}"));
        }
        let base = self.base();
        let sf = |j: u64| -> f64 {
            if matches!(base.support_max(), Some(top) if j >= top) {
                return 0.0;
            }
            let by_sum = (1.0 - self.cdf(j as i64).unwrap_or(1.0)).max(0.0);
            // The summed cdf bottoms out near 1e-16; the ratio bound
            // P(Y > j) ≤ pmf(j) ρ/(1 − ρ) keeps deep tails resolvable.
            let rho = if j > 0 { base.ratio_bound(j) } else { f64::INFINITY };
            if rho < 1.0 {
                by_sum.min(self.pmf_unchecked(j) * rho / (1.0 - rho))
            } else {
                by_sum
            }
        };
        let mut hi = (self.theta().ceil() as u64).max(1);
        while sf(hi) > eps {
            hi = hi.checked_mul(2).ok_or_else(|| Error::Convergence {
                what: "truncation index search".into(),
                iterations: 64,
            })?;
            if hi > 1 << 26 {
                return Err(Error::Convergence {
                    what: "truncation index search".into(),
                    iterations: 26,
                });
            }
        }
        let mut lo = 0u64;
        if sf(0) <= eps {
            return Ok(0);
        }
        // Invariant: sf(lo) > eps, sf(hi) ≤ eps.
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if sf(mid) <= eps {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Draws `n` independent counts.
    pub fn sample(&self, n: usize, stream: &mut RandomStream) -> Result<CountSample> {
        let mut counts = Vec::with_capacity(n);
        self.sample_into(n, stream, &mut counts)?;
        CountSample::new(counts)
    }

    pub(crate) fn sample_into(&self, n: usize, stream: &mut RandomStream, out: &mut Vec<u64>) -> Result<()> {
        self.validate()?;
        out.clear();
        let p = self.p();
        let draw_zero = |s: &mut RandomStream| p > 0.0 && s.uniform() < p;
        match self.base() {
            Base::Poisson { mu } => {
                let poisson = Poisson::new(mu).map_err(|e| Error::Domain(format!("Poisson({mu}): {e}")))?;
                for _ in 0..n {
                    let y = if draw_zero(stream) { 0 } else { poisson.sample(stream) as u64 };
                    out.push(y);
                }
            }
            Base::Binomial { m, prob } => {
                let binom =
                    Binomial::new(u64::from(m), prob).map_err(|e| Error::Domain(format!("Binomial: {e}")))?;
                for _ in 0..n {
                    let y = if draw_zero(stream) { 0 } else { binom.sample(stream) };
                    out.push(y);
                }
            }
            Base::Point { m } => {
                for _ in 0..n {
                    out.push(if draw_zero(stream) { 0 } else { u64::from(m) });
                }
            }
            Base::NegBin { mu, t } => {
                // Gamma(1/t, μt) mixture of Poissons.
                let gamma = Gamma::new(1.0 / t, mu * t).map_err(|e| Error::Domain(format!("Gamma: {e}")))?;
                for _ in 0..n {
                    let y = if draw_zero(stream) {
                        0
                    } else {
                        let lambda: f64 = gamma.sample(stream);
                        if lambda > 0.0 {
                            Poisson::new(lambda)
                                .map_err(|e| Error::Domain(format!("Poisson({lambda}): {e}")))?
                                .sample(stream) as u64
                        } else {
                            0
                        }
                    };
                    out.push(y);
                }
            }
        }
        Ok(())
    }
}

/// Sequential pmf evaluation for series over the support.
pub(crate) struct PmfWalk {
    base: Base,
    p: f64,
    j: u64,
    ln_base: f64,
}

impl Iterator for PmfWalk {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let j = self.j;
        let base_pmf = match self.base {
            Base::Point { m } => {
                if j == u64::from(m) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.ln_base.exp(),
        };
        let mut value = (1.0 - self.p) * base_pmf;
        if j == 0 {
            value += self.p;
        }
        if !matches!(self.base, Base::Point { .. }) {
            self.ln_base += self.base.ln_ratio(j);
        }
        self.j += 1;
        Some(value)
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistributionSpec::Poisson { theta } => write!(f, "poisson:theta={theta}"),
            DistributionSpec::Zip { theta, p } => write!(f, "zip:theta={theta},p={p}"),
            DistributionSpec::Zib { m, theta, p } => write!(f, "zib:m={m},theta={theta},p={p}"),
            DistributionSpec::Nb { theta, t } => write!(f, "nb:theta={theta},t={t}"),
            DistributionSpec::Zinb1 { theta, p, t } => write!(f, "zinb1:theta={theta},p={p},t={t}"),
            DistributionSpec::Zinb2 { theta, p, t } => write!(f, "zinb2:theta={theta},p={p},t={t}"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Parses the canonical text form, e.g. `zip:theta=0.36,p=0.58`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("expected `family:key=value,...`, got `{s}`")))?;
        let family: Family = family.parse()?;
        let mut theta = None;
        let mut p = None;
        let mut t = None;
        let mut m = None;
        for token in params.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad token `{token}`: expected key=value")))?;
            let bad = || Error::Parse(format!("bad value in token `{token}`"));
            match key.trim() {
                "theta" => theta = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "p" => p = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "t" => t = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
                "m" => m = Some(value.trim().parse::<u32>().map_err(|_| bad())?),
                _ => return Err(Error::Parse(format!("unknown key in token `{token}`"))),
            }
        }
        let theta = theta.ok_or_else(|| Error::Parse(format!("`{s}` is missing theta")))?;
        let need_t = || t.ok_or_else(|| Error::Parse(format!("`{s}` is missing t")));
        let p_or_zero = p.unwrap_or(0.0);
        let reject = |key: &str, present: bool| {
            if present {
                Err(Error::Parse(format!("key `{key}` does not apply to family {family}")))
            } else {
                Ok(())
            }
        };
        let spec = match family {
            Family::Poisson => {
                reject("p", p.is_some())?;
                reject("t", t.is_some())?;
                reject("m", m.is_some())?;
                DistributionSpec::Poisson { theta }
            }
            Family::Zip => {
                reject("t", t.is_some())?;
                reject("m", m.is_some())?;
                DistributionSpec::Zip { theta, p: p_or_zero }
            }
            Family::Zib => {
                reject("t", t.is_some())?;
                let m = m.ok_or_else(|| Error::Parse(format!("`{s}` is missing m")))?;
                DistributionSpec::Zib { m, theta, p: p_or_zero }
            }
            Family::Nb => {
                reject("p", p.is_some())?;
                reject("m", m.is_some())?;
                DistributionSpec::Nb { theta, t: need_t()? }
            }
            Family::Zinb1 => {
                reject("m", m.is_some())?;
                DistributionSpec::Zinb1 { theta, p: p_or_zero, t: need_t()? }
            }
            Family::Zinb2 => {
                reject("m", m.is_some())?;
                DistributionSpec::Zinb2 { theta, p: p_or_zero, t: need_t()? }
            }
        };
        spec.validated()
    }
}

/// An observed multiset of counts with its summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSample {
    counts: Vec<u64>,
    n0: usize,
    sum: u64,
    /// Distinct values in increasing order with their multiplicities.
    freq: Vec<(u64, usize)>,
}

impl CountSample {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return domain("a count sample needs at least one observation");
        }
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        let mut freq: Vec<(u64, usize)> = Vec::new();
        for &y in &sorted {
            match freq.last_mut() {
                Some((v, c)) if *v == y => *c += 1,
                _ => freq.push((y, 1)),
            }
        }
        let n0 = freq.first().filter(|(v, _)| *v == 0).map_or(0, |(_, c)| *c);
        let sum = counts.iter().sum();
        Ok(Self { counts, n0, sum, freq })
    }

    /// Expands a `(value, multiplicity)` table into a sample in nondecreasing order.
    pub fn from_frequencies(table: &[(u64, usize)]) -> Result<Self> {
        let mut table = table.to_vec();
        table.sort_unstable();
        let counts = table
            .iter()
            .flat_map(|&(v, c)| std::iter::repeat_n(v, c))
            .collect();
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.n() as f64
    }

    pub fn max(&self) -> u64 {
        self.freq.last().map_or(0, |(v, _)| *v)
    }

    pub fn frequencies(&self) -> &[(u64, usize)] {
        &self.freq
    }

    /// `Σ (Y_i − Ȳ)²`.
    pub fn sum_sq_dev(&self) -> f64 {
        let mean = self.mean();
        self.freq
            .iter()
            .map(|&(v, c)| c as f64 * (v as f64 - mean).powi(2))
            .sum()
    }
}
