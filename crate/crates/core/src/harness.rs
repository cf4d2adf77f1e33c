//! Monte Carlo studies of level and power.
//!
//! A study is a grid of generator cells. Each cell's random stream is keyed
//! by the master seed and the cell coordinates, so any cell can be rerun on
//! its own with identical results.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CountSample, DistributionSpec, Family};
use crate::error::{domain, Error, Result};
use crate::estimation::NullFamily;
use crate::extremes::{DiscrepancySpec, Side};
use crate::hypothesis::{
    asymptotic_zip_test, bootstrap_overdispersion_tests_with, bootstrap_zero_test, score_test, BootstrapConfig,
    NullRefit, TestMethod,
};
use crate::numerics::SeriesTolerance;
use crate::random::{derive_key, RandomStream};
use crate::selection::monte_carlo_cv_curves;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_080_611;

/// Replication used by the opt-in full-scale runs.
pub const FULL_SCALE_REPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyTest {
    BootstrapZero,
    Asymptotic,
    Score,
    Overdispersion,
}

impl StudyTest {
    pub fn method(self) -> TestMethod {
        match self {
            StudyTest::BootstrapZero | StudyTest::Overdispersion => TestMethod::Bootstrap,
            StudyTest::Asymptotic => TestMethod::Asymptotic,
            StudyTest::Score => TestMethod::Score,
        }
    }
}

impl fmt::Display for StudyTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyTest::BootstrapZero => "bootstrap_zero",
            StudyTest::Asymptotic => "asymptotic",
            StudyTest::Score => "score",
            StudyTest::Overdispersion => "overdispersion",
        })
    }
}

impl FromStr for StudyTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bootstrap_zero" => Ok(StudyTest::BootstrapZero),
            "asymptotic" => Ok(StudyTest::Asymptotic),
            "score" => Ok(StudyTest::Score),
            "overdispersion" => Ok(StudyTest::Overdispersion),
            other => Err(Error::Parse(format!(
                "test must be bootstrap_zero, asymptotic, score or overdispersion, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub name: String,
    pub family: Family,
    pub thetas: Vec<f64>,
    pub ps: Vec<f64>,
    pub ts: Vec<f64>,
    pub ms: Vec<u32>,
    pub n_list: Vec<usize>,
    pub test: StudyTest,
    pub p0: f64,
    pub d: DiscrepancySpec,
    pub null: NullFamily,
    pub refit: NullRefit,
    pub mc_reps: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            name: "study".into(),
            family: Family::Zip,
            thetas: vec![3.0],
            ps: vec![0.0],
            ts: Vec::new(),
            ms: Vec::new(),
            n_list: vec![100],
            test: StudyTest::BootstrapZero,
            p0: 0.0,
            d: DiscrepancySpec { side: Side::Max, k: 2 },
            null: NullFamily::Poisson,
            refit: NullRefit::Full,
            mc_reps: 500,
            replicates: 1000,
            alpha: 0.05,
            seed: DEFAULT_SEED,
        }
    }
}

/// One generator cell of a study grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub generator: DistributionSpec,
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{key}`: cannot parse `{}`", v.trim())))
        })
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}`: cannot parse `{}`", value.trim())))
}

impl StudyConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "family" => self.family = value.parse()?,
            "theta" => self.thetas = list(key, value)?,
            "p" => self.ps = list(key, value)?,
            "t" => self.ts = list(key, value)?,
            "m" => self.ms = list(key, value)?,
            "n" => self.n_list = list(key, value)?,
            "test" => self.test = value.parse()?,
            "p0" => self.p0 = one(key, value)?,
            "side" => self.d.side = value.parse()?,
            "k" => self.d.k = one(key, value)?,
            "null" => self.null = value.parse()?,
            "refit" => self.refit = value.parse()?,
            "mc_reps" => self.mc_reps = one(key, value)?,
            "B" => self.replicates = one(key, value)?,
            "alpha" => self.alpha = one(key, value)?,
            "seed" => self.seed = one(key, value)?,
            other => return Err(Error::Parse(format!("unknown study key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a study file: `key = value` lines, comma-separated grids, `#`
    /// comments and optional `[name]` sections. Settings before the first
    /// section are defaults for every section.
    pub fn parse_many(text: &str) -> Result<Vec<StudyConfig>> {
        let mut defaults = StudyConfig::default();
        let mut studies: Vec<StudyConfig> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at_line = |e: Error| Error::Parse(format!("line {line_no}: {}", e.message()));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse(format!("line {line_no}: unterminated section header")))?;
                let mut study = defaults.clone();
                study.name = name.trim().to_string();
                studies.push(study);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {line_no}: expected `key = value`")))?;
            let target = studies.last_mut().unwrap_or(&mut defaults);
            target.set(key.trim(), value.trim()).map_err(at_line)?;
        }
        if studies.is_empty() {
            studies.push(defaults);
        }
        for s in &studies {
            s.validate()
                .map_err(|e| Error::Parse(format!("study `{}`: {}", s.name, e.message())))?;
        }
        Ok(studies)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_reps < 100 {
            return domain(format!("mc_reps must be at least 100, got {}", self.mc_reps));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return domain(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if matches!(self.test, StudyTest::BootstrapZero | StudyTest::Overdispersion) {
            BootstrapConfig::new(self.replicates, self.seed, self.alpha)?;
        }
        if !(0.0..1.0).contains(&self.p0) {
            return domain(format!("p0 must lie in [0, 1), got {}", self.p0));
        }
        DiscrepancySpec::new(self.d.side, self.d.k)?;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return domain("n must list positive sample sizes");
        }
        self.cells().map(|_| ())
    }

    /// The generator grid in row order: n, then θ, p, t, m.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let uses_p = !matches!(self.family, Family::Poisson | Family::Nb);
        let uses_t = matches!(self.family, Family::Nb | Family::Zinb1 | Family::Zinb2);
        let uses_m = self.family == Family::Zib;
        if uses_t && self.ts.is_empty() {
            return domain(format!("family {} needs a `t` grid", self.family));
        }
        if uses_m && self.ms.is_empty() {
            return domain("family zib needs an `m` grid");
        }
        if self.thetas.is_empty() || (uses_p && self.ps.is_empty()) {
            return domain("theta and p grids must not be empty");
        }
        let ps = if uses_p { self.ps.clone() } else { vec![0.0] };
        let ts: Vec<Option<f64>> = if uses_t { self.ts.iter().map(|&t| Some(t)).collect() } else { vec![None] };
        let ms: Vec<Option<u32>> = if uses_m { self.ms.iter().map(|&m| Some(m)).collect() } else { vec![None] };
        let mut cells = Vec::new();
        for &n in &self.n_list {
            for &theta in &self.thetas {
                for &p in &ps {
                    for &t in &ts {
                        for &m in &ms {
                            let generator = match self.family {
                                Family::Poisson => DistributionSpec::poisson(theta),
                                Family::Zip => DistributionSpec::zip(theta, p),
                                Family::Zib => DistributionSpec::zib(m.unwrap_or(0), theta, p),
                                Family::Nb => DistributionSpec::nb(theta, t.unwrap_or(0.0)),
                                Family::Zinb1 => DistributionSpec::zinb1(theta, p, t.unwrap_or(0.0)),
                                Family::Zinb2 => DistributionSpec::zinb2(theta, p, t.unwrap_or(0.0)),
                            }?;
                            cells.push(Cell { n, generator });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    /// Scales replication up to the full 5000 × 5000 budget.
    pub fn full_scale(mut self) -> Self {
        self.mc_reps = FULL_SCALE_REPS;
        self.replicates = FULL_SCALE_REPS;
        self
    }
}

/// Key of a cell's random stream, from the master seed and its coordinates.
pub fn cell_key(seed: u64, cell: &Cell) -> u64 {
    let g = &cell.generator;
    let coords = [
        cell.n as u64,
        g.theta().to_bits(),
        g.p().to_bits(),
        g.t().unwrap_or(0.0).to_bits(),
        u64::from(g.m().unwrap_or(0)),
    ];
    coords.iter().fold(seed, |key, &c| derive_key(key, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub study: String,
    pub n: usize,
    pub family: Family,
    pub theta: f64,
    pub p: f64,
    pub t: Option<f64>,
    pub m: Option<u32>,
    pub test: StudyTest,
    pub method: TestMethod,
    pub discrepancy: Option<DiscrepancySpec>,
    pub p0: f64,
    pub null: Option<NullFamily>,
    pub mc_reps: usize,
    /// Replicates on which the test could be computed.
    pub valid_reps: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    pub mc_standard_error: f64,
    pub degenerate: usize,
    /// More than 1% of the replicates were degenerate.
    pub flagged: bool,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
}

pub const STUDY_CSV_HEADER: &str = "study,n,family,theta,p,t,m,test,method,discrepancy,p0,null,mc_reps,valid_reps,rejections,rejection_rate,mc_standard_error,degenerate,flagged,wall_time_s";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl StudyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(STUDY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.study,
                r.n,
                r.family,
                r.theta,
                r.p,
                opt(r.t),
                opt(r.m),
                r.test,
                r.method,
                opt(r.discrepancy),
                r.p0,
                opt(r.null),
                r.mc_reps,
                r.valid_reps,
                r.rejections,
                r.rejection_rate,
                r.mc_standard_error,
                r.degenerate,
                r.flagged,
                opt(r.wall_time_s),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record per-cell wall time (makes reports differ between runs).
    pub record_timing: bool,
}

enum Outcome {
    Decision(bool),
    Degenerate,
}

fn run_replicate(cfg: &StudyConfig, cell: &Cell, key: u64, r: u64) -> Result<Outcome> {
    let rep = RandomStream::new(key).child(r);
    let sample = cell.generator.sample(cell.n, &mut rep.child(0))?;
    let boot = BootstrapConfig {
        replicates: cfg.replicates,
        seed: rep.child(1).key(),
        alpha: cfg.alpha,
        tol: SeriesTolerance::default(),
    };
    let result = match cfg.test {
        StudyTest::BootstrapZero => bootstrap_zero_test(&sample, cfg.p0, cfg.d, &boot),
        StudyTest::Asymptotic => asymptotic_zip_test(&sample, cfg.alpha),
        StudyTest::Score => score_test(&sample, cfg.alpha),
        StudyTest::Overdispersion => {
            bootstrap_overdispersion_tests_with(&sample, cfg.null, &[cfg.d], &boot, cfg.refit).map(|mut v| v.remove(0))
        }
    };
    match result {
        Ok(r) => Ok(Outcome::Decision(r.reject)),
        Err(Error::Degenerate(_)) | Err(Error::Inapplicable(_)) | Err(Error::Convergence { .. }) => {
            Ok(Outcome::Degenerate)
        }
        Err(e) => Err(e),
    }
}

/// Rejection rate of the configured test in one cell.
pub fn run_cell(cfg: &StudyConfig, cell: &Cell, opts: RunOptions) -> Result<StudyRow> {
    let start = Instant::now();
    let key = cell_key(cfg.seed, cell);
    let outcomes: Vec<Outcome> = (0..cfg.mc_reps as u64)
        .into_par_iter()
        .map(|r| run_replicate(cfg, cell, key, r))
        .collect::<Result<_>>()?;
    let degenerate = outcomes.iter().filter(|o| matches!(o, Outcome::Degenerate)).count();
    let rejections = outcomes.iter().filter(|o| matches!(o, Outcome::Decision(true))).count();
    let valid = cfg.mc_reps - degenerate;
    let rate = if valid > 0 { rejections as f64 / valid as f64 } else { f64::NAN };
    let g = &cell.generator;
    Ok(StudyRow {
        study: cfg.name.clone(),
        n: cell.n,
        family: g.family(),
        theta: g.theta(),
        p: g.p(),
        t: g.t(),
        m: g.m(),
        test: cfg.test,
        method: cfg.test.method(),
        discrepancy: matches!(cfg.test, StudyTest::BootstrapZero | StudyTest::Overdispersion).then_some(cfg.d),
        p0: cfg.p0,
        null: (cfg.test == StudyTest::Overdispersion).then_some(cfg.null),
        mc_reps: cfg.mc_reps,
        valid_reps: valid,
        rejections,
        rejection_rate: rate,
        mc_standard_error: (rate * (1.0 - rate) / valid.max(1) as f64).sqrt(),
        degenerate,
        flagged: degenerate as f64 > 0.01 * cfg.mc_reps as f64,
        wall_time_s: opts.record_timing.then(|| start.elapsed().as_secs_f64()),
    })
}

pub fn run_study(cfg: &StudyConfig, opts: RunOptions) -> Result<StudyReport> {
    cfg.validate()?;
    let rows = cfg
        .cells()?
        .iter()
        .map(|cell| run_cell(cfg, cell, opts))
        .collect::<Result<_>>()?;
    Ok(StudyReport { rows })
}

/// Runs several studies and concatenates their rows.
pub fn run_studies(cfgs: &[StudyConfig], opts: RunOptions) -> Result<StudyReport> {
    let mut rows = Vec::new();
    for cfg in cfgs {
        rows.extend(run_study(cfg, opts)?.rows);
    }
    Ok(StudyReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCvRow {
    pub k: u32,
    pub side: Side,
    pub power: f64,
    pub power_se: f64,
    pub inv_cv: Option<f64>,
}

/// Power of the Λ overdispersion test and `1/CV` of Λ, per k, under a known
/// generator.
#[allow(clippy::too_many_arguments)]
pub fn power_vs_invcv(
    generator: &DistributionSpec,
    n: usize,
    null_family: NullFamily,
    side: Side,
    k_grid: &[u32],
    mc_reps: usize,
    replicates: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<PowerCvRow>> {
    let ds = k_grid
        .iter()
        .map(|&k| DiscrepancySpec::new(side, k))
        .collect::<Result<Vec<_>>>()?;
    let root = RandomStream::new(seed);
    let power_root = root.child(0);
    let decisions: Vec<Option<Vec<bool>>> = (0..mc_reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep = power_root.child(r);
            let sample: CountSample = generator.sample(n, &mut rep.child(0))?;
            let boot = BootstrapConfig::new(replicates, rep.child(1).key(), alpha)?;
            match bootstrap_overdispersion_tests_with(&sample, null_family, &ds, &boot, NullRefit::Full) {
                Ok(results) => Ok(Some(results.iter().map(|t| t.reject).collect())),
                Err(Error::Degenerate(_)) | Err(Error::Convergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let valid: Vec<&Vec<bool>> = decisions.iter().flatten().collect();
    let (max, min) = monte_carlo_cv_curves(
        generator,
        n,
        null_family,
        k_grid,
        mc_reps,
        root.child(1).key(),
        &SeriesTolerance::default(),
    )?;
    let curve = match side {
        Side::Max => max,
        Side::Min => min,
    };
    Ok(k_grid
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let rejections = valid.iter().filter(|d| d[i]).count();
            let power = rejections as f64 / valid.len().max(1) as f64;
            PowerCvRow {
                k,
                side,
                power,
                power_se: (power * (1.0 - power) / valid.len().max(1) as f64).sqrt(),
                inv_cv: curve.inv_cv[i],
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "
# shared settings
mc_reps = 200
B = 199
seed = 5

[zero]
family = zip
theta = 3
p = 0, 0.1
n = 60
test = bootstrap_zero

[nb]
family = nb
theta = 2
t = 0.5
n = 40
test = overdispersion
side = min
k = 2
null = poisson
";

    #[test]
    fn parses_sections_and_defaults() {
        let studies = StudyConfig::parse_many(CFG).unwrap();
        assert_eq!(studies.len(), 2);
        assert_eq!(studies[0].name, "zero");
        assert_eq!(studies[0].mc_reps, 200);
        assert_eq!(studies[0].ps, vec![0.0, 0.1]);
        assert_eq!(studies[0].cells().unwrap().len(), 2);
        assert_eq!(studies[1].test, StudyTest::Overdispersion);
        assert_eq!(studies[1].d, DiscrepancySpec { side: Side::Min, k: 2 });
        assert_eq!(studies[1].cells().unwrap()[0].generator, DistributionSpec::nb(2.0, 0.5).unwrap());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = StudyConfig::parse_many("mc_reps = 200\ntheta = 1, x\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(StudyConfig::parse_many("bogus = 1").is_err());
        assert!(StudyConfig::parse_many("mc_reps = 10").is_err());
        assert!(StudyConfig::parse_many("family = nb").is_err());
    }

    #[test]
    fn study_is_reproducible_and_cells_run_in_isolation() {
        let studies = StudyConfig::parse_many(CFG).unwrap();
        let opts = RunOptions::default();
        let a = run_studies(&studies, opts).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| run_studies(&studies, opts).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let mut single = studies[0].clone();
        single.ps = vec![0.1];
        let c = run_study(&single, opts).unwrap();
        assert_eq!(c.rows[0], a.rows[1]);
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.rejection_rate));
            let se = (r.rejection_rate * (1.0 - r.rejection_rate) / r.valid_reps as f64).sqrt();
            assert_eq!(r.mc_standard_error, se);
        }
        // Level near α on the null cell, power on the inflated cell.
        assert!((a.rows[0].rejection_rate - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 200.0).sqrt());
        assert!(a.rows[1].rejection_rate > 0.5);
        let csv = a.to_csv();
        assert!(csv.starts_with(STUDY_CSV_HEADER));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn timing_is_optional() {
        let mut cfg = StudyConfig::parse_many(CFG).unwrap().remove(0);
        cfg.test = StudyTest::Score;
        let r = run_study(&cfg, RunOptions { record_timing: true }).unwrap();
        assert!(r.rows.iter().all(|row| row.wall_time_s.is_some()));
        let r = run_study(&cfg, RunOptions::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.wall_time_s.is_none()));
    }

    #[test]
    fn degenerate_replicates_are_flagged() {
        let cfg = StudyConfig {
            family: Family::Poisson,
            thetas: vec![0.02],
            n_list: vec![20],
            test: StudyTest::Score,
            mc_reps: 200,
            ..StudyConfig::default()
        };
        let row = &run_study(&cfg, RunOptions::default()).unwrap().rows[0];
        assert!(row.degenerate > 2 && row.flagged);
        assert_eq!(row.valid_reps + row.degenerate, 200);
    }

    #[test]
    fn power_table_under_the_null_has_level_alpha() {
        let generator = DistributionSpec::poisson(3.0).unwrap();
        let rows = power_vs_invcv(&generator, 50, NullFamily::Poisson, Side::Min, &[2, 5], 200, 99, 0.05, 8).unwrap();
        for r in rows {
            assert!((r.power - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 200.0).sqrt() + 1e-12, "{r:?}");
        }
    }
}
