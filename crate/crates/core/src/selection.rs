//! Choice of the discrepancy `(side, k)` by the inverse coefficient of
//! variation of Λ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CountSample, DistributionSpec};
use crate::error::{domain, Error, Result};
use crate::estimation::NullFamily;
use crate::extremes::{DiscrepancySpec, Side};
use crate::hypothesis::{lambda_from_fit, MAX_REDRAWS};
use crate::numerics::SeriesTolerance;
use crate::random::RandomStream;

pub const DEFAULT_K_GRID: [u32; 11] = [2, 3, 5, 8, 12, 20, 35, 50, 90, 130, 200];
pub const DEFAULT_B_CV: usize = 500;

/// Standard deviations below this leave `1/CV` undefined.
const SD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub k_grid: Vec<u32>,
    pub side: Side,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `mean / sd` per k; `None` where the sd is numerically zero.
    pub inv_cv: Vec<Option<f64>>,
    #[serde(rename = "B_cv")]
    pub b_cv: usize,
    pub seed: u64,
}

impl CvCurve {
    fn from_columns(k_grid: &[u32], side: Side, columns: &[Vec<f64>], b_cv: usize, seed: u64) -> Self {
        let (mut mean, mut sd, mut inv_cv) = (Vec::new(), Vec::new(), Vec::new());
        for col in columns {
            let (m, s) = mean_sd(col);
            mean.push(m);
            sd.push(s);
            inv_cv.push((s >= SD_FLOOR).then(|| m / s));
        }
        Self {
            k_grid: k_grid.to_vec(),
            side,
            mean,
            sd,
            inv_cv,
            b_cv,
            seed,
        }
    }

    /// `(k, 1/CV)` at the largest defined `1/CV`, ties to the smaller k.
    pub fn argmax(&self) -> Option<(u32, f64)> {
        best(self.k_grid.iter().zip(&self.inv_cv).filter_map(|(&k, v)| v.map(|v| (k, v))))
    }
}

fn best(items: impl Iterator<Item = (u32, f64)>) -> Option<(u32, f64)> {
    items.fold(None, |acc, (k, v)| match acc {
        Some((bk, bv)) if bv > v || (bv == v && bk <= k) => Some((bk, bv)),
        _ => Some((k, v)),
    })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn check_grid(k_grid: &[u32]) -> Result<()> {
    if k_grid.is_empty() {
        return domain("k grid is empty");
    }
    if let Some(&k) = k_grid.iter().find(|&&k| k < 2) {
        return domain(format!("every k must be at least 2, got {k}"));
    }
    Ok(())
}

fn discrepancies(k_grid: &[u32]) -> Vec<DiscrepancySpec> {
    [Side::Max, Side::Min]
        .into_iter()
        .flat_map(|side| k_grid.iter().map(move |&k| DiscrepancySpec { side, k }))
        .collect()
}

/// Λ for both sides and every k on one sample, after fitting the null.
fn lambdas(sample: &CountSample, null_family: NullFamily, ds: &[DiscrepancySpec], tol: &SeriesTolerance) -> Result<Vec<f64>> {
    let fit = null_family.fit(sample)?;
    ds.iter().map(|&d| lambda_from_fit(sample, &fit.spec, d, tol)).collect()
}

/// Draws `replicates` samples with `draw` and evaluates `stat` on each,
/// redrawing degenerate ones from child streams.
fn replicate_rows<D, F>(replicates: usize, seed: u64, draw: D, stat: F) -> Result<Vec<Vec<f64>>>
where
    D: Fn(&mut RandomStream) -> Result<CountSample> + Sync,
    F: Fn(&CountSample) -> Result<Vec<f64>> + Sync,
{
    let root = RandomStream::new(seed);
    (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let base = root.child(b);
            for attempt in 0..=MAX_REDRAWS {
                let mut stream = if attempt == 0 { base.clone() } else { base.child(attempt) };
                match stat(&draw(&mut stream)?) {
                    Ok(row) => return Ok(row),
                    Err(Error::Degenerate(_)) | Err(Error::Convergence { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Degenerate(format!("replicate {b} degenerate after {MAX_REDRAWS} redraws")))
        })
        .collect()
}

fn split_curves(k_grid: &[u32], rows: &[Vec<f64>], b: usize, seed: u64) -> (CvCurve, CvCurve) {
    let nk = k_grid.len();
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let max_cols: Vec<_> = (0..nk).map(column).collect();
    let min_cols: Vec<_> = (nk..2 * nk).map(column).collect();
    (
        CvCurve::from_columns(k_grid, Side::Max, &max_cols, b, seed),
        CvCurve::from_columns(k_grid, Side::Min, &min_cols, b, seed),
    )
}

/// Bootstrap `1/CV` curves of Λ_{k:k} and Λ_{1:k} from the same
/// nonparametric resamples of `sample`.
pub fn cv_curves(
    sample: &CountSample,
    null_family: NullFamily,
    k_grid: &[u32],
    b_cv: usize,
    seed: u64,
    tol: &SeriesTolerance,
) -> Result<(CvCurve, CvCurve)> {
    check_grid(k_grid)?;
    if b_cv < 2 {
        return domain("B_cv must be at least 2");
    }
    null_family.fit(sample)?;
    let ds = discrepancies(k_grid);
    let counts = sample.counts();
    let n = counts.len();
    let rows = replicate_rows(
        b_cv,
        seed,
        |stream| CountSample::new((0..n).map(|_| counts[stream.below(n)]).collect()),
        |s| lambdas(s, null_family, &ds, tol),
    )?;
    Ok(split_curves(k_grid, &rows, b_cv, seed))
}

/// Bootstrap `1/CV` curve for one side.
pub fn cv_curve(
    sample: &CountSample,
    null_family: NullFamily,
    side: Side,
    k_grid: &[u32],
    b_cv: usize,
    seed: u64,
    tol: &SeriesTolerance,
) -> Result<CvCurve> {
    let (max, min) = cv_curves(sample, null_family, k_grid, b_cv, seed, tol)?;
    Ok(match side {
        Side::Max => max,
        Side::Min => min,
    })
}

/// `1/CV` curves of Λ under a known generator, by Monte Carlo samples of size `n`.
pub fn monte_carlo_cv_curves(
    generator: &DistributionSpec,
    n: usize,
    null_family: NullFamily,
    k_grid: &[u32],
    reps: usize,
    seed: u64,
    tol: &SeriesTolerance,
) -> Result<(CvCurve, CvCurve)> {
    check_grid(k_grid)?;
    if reps < 2 {
        return domain("need at least 2 Monte Carlo replicates");
    }
    let ds = discrepancies(k_grid);
    let rows = replicate_rows(
        reps,
        seed,
        |stream| generator.sample(n, stream),
        |s| lambdas(s, null_family, &ds, tol),
    )?;
    Ok(split_curves(k_grid, &rows, reps, seed))
}

/// The `(side, k)` with the largest `1/CV` over both curves; ties go to the
/// smaller k, then to the max side.
pub fn select_k(curve_max: &CvCurve, curve_min: &CvCurve) -> Result<DiscrepancySpec> {
    if curve_max.k_grid != curve_min.k_grid {
        return domain("curves must share the same k grid");
    }
    let mut choice: Option<(DiscrepancySpec, f64)> = None;
    for (i, &k) in curve_max.k_grid.iter().enumerate() {
        for (side, curve) in [(Side::Max, curve_max), (Side::Min, curve_min)] {
            if let Some(v) = curve.inv_cv[i] {
                if choice.is_none_or(|(_, bv)| v > bv) {
                    choice = Some((DiscrepancySpec { side, k }, v));
                }
            }
        }
    }
    choice
        .map(|(d, _)| d)
        .ok_or_else(|| Error::Degenerate("1/CV is undefined at every k on both sides".into()))
}
