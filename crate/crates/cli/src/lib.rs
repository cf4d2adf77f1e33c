//! Command-line front-end for `zeroinfl`.
//!
//! Every command prints a JSON envelope (or CSV/text) to stdout and can
//! write its main table as CSV to `--out`. Exit codes: 0 success, 2 usage
//! error, 3 data or domain error, 4 numerical non-convergence.

pub mod dataset;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use zeroinfl::estimation::{fit_nb, fit_poisson, fit_zip};
use zeroinfl::extremes::{expected_max, expected_min, m2};
use zeroinfl::harness::{run_studies, RunOptions, StudyConfig, StudyReport, DEFAULT_SEED};
use zeroinfl::hypothesis::{
    asymptotic_zip_test, bootstrap_overdispersion_tests_with, bootstrap_zero_test, score_test,
};
use zeroinfl::selection::{cv_curves, select_k, CvCurve, DEFAULT_B_CV, DEFAULT_K_GRID};
use zeroinfl::{
    BootstrapConfig, CountSample, DiscrepancySpec, DistributionSpec, Family, FitResult, NullFamily, NullRefit,
    SeriesTolerance, Side, TestResult,
};

use crate::dataset::{load_dataset, DataFormat};

pub const SCHEMA: &str = "zeroinfl.report/1";
pub const DEFAULT_B: usize = 1000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<zeroinfl::Error> for CliError {
    fn from(e: zeroinfl::Error) -> Self {
        match e {
            zeroinfl::Error::Convergence { .. } | zeroinfl::Error::Overflow(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "zeroinfl", version, about = "Zero-inflation and overdispersion tests for count data")]
pub struct Cli {
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Truncation tolerance of the expected-extreme series.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads (default: all cores); never changes results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed of randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the command's main table as CSV to this path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMode {
    /// Bootstrap Δ test of H₀: p ≤ p₀.
    ZipP,
    /// Bootstrap Λ test of a null family against more dispersed laws.
    Overdispersion,
    /// Normal-limit Δ₂:₂ test of H₀: p = 0.
    Asymptotic,
    /// Zero-count score test of H₀: p = 0.
    Score,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a null model and tabulate expected frequencies.
    Fit {
        data: PathBuf,
        #[arg(long)]
        family: NullFamily,
        #[arg(long, value_enum, default_value_t = DataFormat::Auto)]
        data_format: DataFormat,
    },
    /// Run a test of zero inflation or overdispersion.
    Test {
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: TestMode,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        null: Option<NullFamily>,
        /// Subsample size; a comma list runs several tests on shared resamples.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        side: Option<Side>,
        #[arg(long = "B")]
        b: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Null refit inside the bootstrap: full or mean-only.
        #[arg(long)]
        refit: Option<NullRefit>,
        #[arg(long, value_enum, default_value_t = DataFormat::Auto)]
        data_format: DataFormat,
    },
    /// Bootstrap 1/CV curves of Λ and the selected discrepancy.
    SelectK {
        data: PathBuf,
        #[arg(long)]
        null: NullFamily,
        /// Comma list of k values.
        #[arg(long)]
        kgrid: Option<String>,
        #[arg(long = "Bcv")]
        bcv: Option<usize>,
        #[arg(long, value_enum, default_value_t = DataFormat::Auto)]
        data_format: DataFormat,
    },
    /// Expected maximum or minimum of k copies of a distribution.
    Extremes {
        /// Distribution, e.g. `zip:theta=3,p=0.1`.
        spec: String,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        side: Side,
    },
    /// Run a Monte Carlo study described by a config file.
    Simulate {
        config: PathBuf,
        /// Use 5000 Monte Carlo replicates and B = 5000.
        #[arg(long)]
        full_scale: bool,
        /// Leave wall times out so reruns give identical reports.
        #[arg(long)]
        no_timing: bool,
    },
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub csv: String,
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    n: usize,
    n0: usize,
    mean: f64,
    max: u64,
}

impl InputDigest {
    fn new(path: &std::path::Path, s: &CountSample) -> Self {
        Self {
            path: path.display().to_string(),
            n: s.n(),
            n0: s.n0(),
            mean: s.mean(),
            max: s.max(),
        }
    }
}

#[derive(Serialize)]
struct Envelope {
    schema: &'static str,
    tool: Tool,
    command: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<InputDigest>,
    seed: Option<u64>,
    result: Value,
}

fn envelope(command: Value, input: Option<InputDigest>, seed: Option<u64>, result: Value) -> String {
    let env = Envelope {
        schema: SCHEMA,
        tool: Tool {
            name: "zeroinfl",
            version: env!("CARGO_PKG_VERSION"),
        },
        command,
        input,
        seed,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
    s.push('\n');
    s
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_k_list(s: &str) -> Result<Vec<u32>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("k must be a positive integer, got `{}`", v.trim())))
        })
        .collect()
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("note: no --seed given, using default seed {DEFAULT_SEED}");
        DEFAULT_SEED
    })
}

fn finish(format: OutputFormat, json: String, csv: String, text: String) -> Output {
    let stdout = match format {
        OutputFormat::Json => json,
        OutputFormat::Csv => csv.clone(),
        OutputFormat::Text => text,
    };
    Output { stdout, csv }
}

/// Runs a parsed command line on a thread pool of the requested size.
pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    let tol = match cli.tol {
        Some(eps) => SeriesTolerance::new(eps, SeriesTolerance::default().max_terms)?,
        None => SeriesTolerance::default(),
    };
    let out = pool.install(|| dispatch(cli, &tol))?;
    if let Some(path) = &cli.out {
        std::fs::write(path, &out.csv)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(out)
}

fn dispatch(cli: &Cli, tol: &SeriesTolerance) -> Result<Output, CliError> {
    match &cli.command {
        Command::Fit {
            data,
            family,
            data_format,
        } => cmd_fit(cli.format, data, *family, *data_format),
        Command::Test {
            data,
            mode,
            p0,
            null,
            k,
            side,
            b,
            alpha,
            refit,
            data_format,
        } => {
            let sample = load_dataset(data, *data_format)?;
            let flags = TestFlags {
                mode: *mode,
                p0: *p0,
                null: *null,
                k: k.as_deref().map(parse_k_list).transpose()?,
                side: *side,
                b: *b,
                alpha: *alpha,
                refit: *refit,
                seed: cli.seed,
            };
            cmd_test(cli.format, data, &sample, &flags, tol)
        }
        Command::SelectK {
            data,
            null,
            kgrid,
            bcv,
            data_format,
        } => {
            let sample = load_dataset(data, *data_format)?;
            let grid = match kgrid {
                Some(s) => parse_k_list(s)?,
                None => DEFAULT_K_GRID.to_vec(),
            };
            cmd_select_k(cli.format, data, &sample, *null, &grid, bcv.unwrap_or(DEFAULT_B_CV), cli.seed, tol)
        }
        Command::Extremes { spec, k, side } => cmd_extremes(cli.format, spec, *k, *side, tol),
        Command::Simulate {
            config,
            full_scale,
            no_timing,
        } => cmd_simulate(cli.format, config, *full_scale, *no_timing, cli.seed),
    }
}

pub fn cmd_fit(format: OutputFormat, path: &std::path::Path, family: NullFamily, data_format: DataFormat) -> Result<Output, CliError> {
    let sample = load_dataset(path, data_format)?;
    let fit: FitResult = match family {
        NullFamily::Poisson => fit_poisson(&sample),
        NullFamily::Zip => fit_zip(&sample),
        NullFamily::Nb => fit_nb(&sample),
    }?;
    let n = sample.n() as f64;
    let observed = |j: u64| {
        sample
            .frequencies()
            .iter()
            .find(|(v, _)| *v == j)
            .map_or(0, |(_, c)| *c)
    };
    let mut rows = Vec::new();
    for j in 0..=sample.max() + 2 {
        rows.push((j, observed(j), n * fit.spec.pmf(j)?));
    }
    let mut csv = String::from("j,observed,expected\n");
    let mut text = format!("fitted {}\nloglik {}\n", fit.spec, fit.loglik);
    if let Some(note) = &fit.note {
        let _ = writeln!(text, "note {note}");
    }
    let _ = writeln!(text, "{:>4} {:>9} {:>10}", "j", "observed", "expected");
    for (j, o, e) in &rows {
        let _ = writeln!(csv, "{j},{o},{e}");
        let _ = writeln!(text, "{j:>4} {o:>9} {e:>10.1}");
    }
    let result = json!({
        "fit": to_value(&fit),
        "expected_frequencies": rows.iter().map(|(j, o, e)| json!({"j": j, "observed": o, "expected": e})).collect::<Vec<_>>(),
    });
    let json = envelope(
        json!({"name": "fit", "family": family}),
        Some(InputDigest::new(path, &sample)),
        None,
        result,
    );
    Ok(finish(format, json, csv, text))
}

pub struct TestFlags {
    pub mode: TestMode,
    pub p0: Option<f64>,
    pub null: Option<NullFamily>,
    pub k: Option<Vec<u32>>,
    pub side: Option<Side>,
    pub b: Option<usize>,
    pub alpha: f64,
    pub refit: Option<NullRefit>,
    pub seed: Option<u64>,
}

impl TestFlags {
    fn check(&self) -> Result<(), CliError> {
        let mut given = Vec::new();
        if self.p0.is_some() {
            given.push(("--p0", [TestMode::ZipP].as_slice()));
        }
        if self.null.is_some() {
            given.push(("--null", [TestMode::Overdispersion].as_slice()));
        }
        if self.refit.is_some() {
            given.push(("--refit", [TestMode::Overdispersion].as_slice()));
        }
        let boot = [TestMode::ZipP, TestMode::Overdispersion];
        if self.k.is_some() {
            given.push(("--k", boot.as_slice()));
        }
        if self.side.is_some() {
            given.push(("--side", boot.as_slice()));
        }
        if self.b.is_some() {
            given.push(("--B", boot.as_slice()));
        }
        if self.seed.is_some() {
            given.push(("--seed", boot.as_slice()));
        }
        for (flag, modes) in given {
            if !modes.contains(&self.mode) {
                let mode = self.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
                return Err(CliError::Usage(format!("{flag} cannot be used with --mode {mode}")));
            }
        }
        if self.mode == TestMode::ZipP && self.k.as_ref().is_some_and(|k| k.len() > 1) {
            return Err(CliError::Usage("--mode zip-p takes a single --k".into()));
        }
        Ok(())
    }
}

fn test_csv(results: &[TestResult], mode: &str) -> String {
    let mut csv = String::from("mode,method,discrepancy,statistic,p_value,critical_value,alpha,reject,B,seed\n");
    for r in results {
        let _ = writeln!(
            csv,
            "{mode},{},{},{},{},{},{},{},{},{}",
            r.method,
            opt(r.discrepancy),
            r.statistic,
            r.p_value,
            opt(r.critical_value),
            r.alpha,
            r.reject,
            opt(r.replicates),
            opt(r.seed)
        );
    }
    csv
}

pub fn cmd_test(
    format: OutputFormat,
    path: &std::path::Path,
    sample: &CountSample,
    flags: &TestFlags,
    tol: &SeriesTolerance,
) -> Result<Output, CliError> {
    flags.check()?;
    let mode_name = flags.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let side = flags.side.unwrap_or(Side::Max);
    let ks = flags.k.clone().unwrap_or_else(|| vec![2]);
    let ds = ks
        .iter()
        .map(|&k| DiscrepancySpec::new(side, k))
        .collect::<Result<Vec<_>, _>>()?;
    let bootstrap = matches!(flags.mode, TestMode::ZipP | TestMode::Overdispersion);
    let seed = bootstrap.then(|| seed_or_default(flags.seed));
    let cfg = || -> Result<BootstrapConfig, CliError> {
        Ok(BootstrapConfig::new(flags.b.unwrap_or(DEFAULT_B), seed.unwrap_or(DEFAULT_SEED), flags.alpha)?.with_tol(*tol))
    };
    let mut command = json!({"name": "test", "mode": mode_name, "alpha": flags.alpha});
    let results: Vec<TestResult> = match flags.mode {
        TestMode::ZipP => {
            let cfg = cfg()?;
            let p0 = flags.p0.unwrap_or(0.0);
            command["p0"] = json!(p0);
            command["discrepancy"] = json!(ds[0].to_string());
            command["B"] = json!(cfg.replicates);
            vec![bootstrap_zero_test(sample, p0, ds[0], &cfg)?]
        }
        TestMode::Overdispersion => {
            let cfg = cfg()?;
            let null = flags.null.unwrap_or(NullFamily::Poisson);
            let refit = flags.refit.unwrap_or_default();
            command["null"] = json!(null);
            command["refit"] = json!(refit);
            command["discrepancies"] = json!(ds.iter().map(|d| d.to_string()).collect::<Vec<_>>());
            command["B"] = json!(cfg.replicates);
            bootstrap_overdispersion_tests_with(sample, null, &ds, &cfg, refit)?
        }
        TestMode::Asymptotic => vec![asymptotic_zip_test(sample, flags.alpha)?],
        TestMode::Score => vec![score_test(sample, flags.alpha)?],
    };
    let csv = test_csv(&results, &mode_name);
    let mut text = String::new();
    for r in &results {
        let _ = writeln!(
            text,
            "{mode_name}{}: statistic {} p-value {} critical {} -> {}",
            r.discrepancy.map(|d| format!(" {d}")).unwrap_or_default(),
            r.statistic,
            r.p_value,
            r.critical_value.map_or("-".to_string(), |c| c.to_string()),
            if r.reject { "reject" } else { "do not reject" }
        );
    }
    let json = envelope(
        command,
        Some(InputDigest::new(path, sample)),
        seed,
        json!({"results": to_value(&results)}),
    );
    Ok(finish(format, json, csv, text))
}

fn curve_csv(curves: &[&CvCurve]) -> String {
    let mut csv = String::from("k,side,mean,sd,inv_cv\n");
    for c in curves {
        for i in 0..c.k_grid.len() {
            let _ = writeln!(csv, "{},{},{},{},{}", c.k_grid[i], c.side, c.mean[i], c.sd[i], opt(c.inv_cv[i]));
        }
    }
    csv
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_select_k(
    format: OutputFormat,
    path: &std::path::Path,
    sample: &CountSample,
    null: NullFamily,
    grid: &[u32],
    b_cv: usize,
    seed: Option<u64>,
    tol: &SeriesTolerance,
) -> Result<Output, CliError> {
    let seed = seed_or_default(seed);
    let (max, min) = cv_curves(sample, null, grid, b_cv, seed, tol)?;
    let selected = select_k(&max, &min)?;
    let csv = curve_csv(&[&max, &min]);
    let text = format!("{csv}selected {} (side {}, k {})\n", selected, selected.side, selected.k);
    let json = envelope(
        json!({"name": "select-k", "null": null, "kgrid": grid, "B_cv": b_cv}),
        Some(InputDigest::new(path, sample)),
        Some(seed),
        json!({"max": to_value(&max), "min": to_value(&min), "selected": to_value(&selected)}),
    );
    Ok(finish(format, json, csv, text))
}

pub fn cmd_extremes(format: OutputFormat, spec: &str, k: u32, side: Side, tol: &SeriesTolerance) -> Result<Output, CliError> {
    let spec: DistributionSpec = spec.parse()?;
    let value = match side {
        Side::Max => expected_max(&spec, k, tol)?,
        Side::Min => expected_min(&spec, k, tol)?,
    };
    let poisson_base = spec.p() == 0.0 && matches!(spec.family(), Family::Poisson | Family::Zip);
    let m2_value = if poisson_base { Some(m2(spec.theta())?) } else { None };
    let csv = format!("spec,side,k,value\n{spec},{side},{k},{value}\n");
    let mut text = format!("E[{}] under {spec} = {value}\n", DiscrepancySpecText(side, k));
    if let Some(m) = m2_value {
        let _ = writeln!(text, "M2(theta) = {m}");
    }
    let mut result = json!({"spec": to_value(&spec), "side": side, "k": k, "value": value});
    if let Some(m) = m2_value {
        result["m2"] = json!(m);
    }
    let json = envelope(json!({"name": "extremes", "spec": spec.to_string(), "k": k, "side": side}), None, None, result);
    Ok(finish(format, json, csv, text))
}

struct DiscrepancySpecText(Side, u32);

impl std::fmt::Display for DiscrepancySpecText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            Side::Max => write!(f, "Y_{{{k}:{k}}}", k = self.1),
            Side::Min => write!(f, "Y_{{1:{}}}", self.1),
        }
    }
}

pub fn cmd_simulate(
    format: OutputFormat,
    path: &std::path::Path,
    full_scale: bool,
    no_timing: bool,
    seed: Option<u64>,
) -> Result<Output, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut studies = StudyConfig::parse_many(&text)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.message())))?;
    for s in &mut studies {
        if let Some(seed) = seed {
            s.seed = seed;
        }
        if full_scale {
            *s = s.clone().full_scale();
        }
    }
    let report: StudyReport = run_studies(
        &studies,
        RunOptions {
            record_timing: !no_timing,
        },
    )?;
    let csv = report.to_csv();
    let mut text = String::new();
    for r in &report.rows {
        let _ = writeln!(
            text,
            "{} n={} {} theta={} p={} t={}: rate {:.3} (se {:.3}){}",
            r.study,
            r.n,
            r.family,
            r.theta,
            r.p,
            opt(r.t),
            r.rejection_rate,
            r.mc_standard_error,
            if r.flagged { " [degenerate > 1%]" } else { "" }
        );
    }
    let json = envelope(
        json!({"name": "simulate", "config": path.display().to_string(), "full_scale": full_scale, "studies": to_value(&studies)}),
        None,
        studies.first().map(|s| s.seed),
        to_value(&report),
    );
    Ok(finish(format, json, csv, text))
}
