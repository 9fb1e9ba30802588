//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. Criterion numbers given as arguments select a subset, e.g.
//! `cargo test --test acceptance -- 2 4`.
//!
//! Where a criterion states a hard runtime bound, the time spent in its own
//! work (excluding shared table fixtures) counts towards the verdict.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use lrt_core::law::ParameterLaw;
use lrt_core::micro::{
    empirical_density, simulate, EscapePolicy, Gamma, MicroEnsemble, MicroUnit, ObservableKind,
    RunLength, SystemSpec, DEFAULT_BINS,
};
use lrt_core::reduction::logistic::logistic_stats_mc;
use lrt_core::reduction::spectral::{DEFAULT_MAX_LAG, DEFAULT_SPECTRAL_GRID};
use lrt_core::reduction::{
    cocycle_lag_from_logistic, lag_covariance, spectral_factorize, EtaSampler, LagCovariance,
    ReductionTable,
};
use lrt_core::response::{
    collect_samples, test_response, ResponseConfig, ResponseDataset, ResponseEntry, ResponseModel,
    ResponseSamples, SigmaSource, TestResult,
};
use lrt_core::rng::{domain, SeedTree};
use lrt_core::stats::{batch_means_se, ks_p_value, ks_statistic, ks_two_sample, mean_var};

const MASTER_SEED: u64 = 20_240_601;

fn seeds(label: &str) -> SeedTree {
    SeedTree::new(MASTER_SEED).child(label)
}

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Outcome {
    fn new(pass: bool, detail: String, elapsed: Duration, limit: Option<Duration>) -> Self {
        Self {
            pass,
            detail,
            elapsed,
            limit,
        }
    }

    fn verdict(&self) -> bool {
        self.pass && self.limit.is_none_or(|l| self.elapsed < l)
    }
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

// ---------------------------------------------------------------------------
// 1. Marginal-measure equivalence of the cocycle unit.

fn criterion_1() -> Outcome {
    let a = 3.85;
    let (n, burn) = (1_000_000, 10_000);
    let tree = seeds("marginal");
    let start = Instant::now();

    let mut rng = tree.stream(1, 0, 0);
    let unit = MicroUnit {
        q: rng.random::<f64>(),
        r: rng.random::<f64>(),
        a,
    };
    // The ensemble step is the production cocycle update, `r` refresh included.
    let mut ensemble = MicroEnsemble::new(&[unit], ObservableKind::Square, Gamma::One).unwrap();
    ensemble.burn(burn, &mut rng);
    let cocycle: Vec<f64> = (0..n)
        .map(|_| {
            let q = ensemble.unit(0).q;
            ensemble.advance(&mut rng);
            q
        })
        .collect();

    let mut x: f64 = tree.stream(2, 0, 0).random::<f64>();
    for _ in 0..burn {
        x = a * x * (1.0 - x);
    }
    let plain: Vec<f64> = (0..n)
        .map(|_| {
            let v = x;
            x = a * x * (1.0 - x);
            v
        })
        .collect();

    let d = ks_two_sample(&cocycle, &plain);
    Outcome::new(
        d < 0.01,
        format!("KS distance {d:.5} (< 0.01) at a = {a}, N = {n}"),
        start.elapsed(),
        secs(5),
    )
}

// ---------------------------------------------------------------------------
// 2. Spectral factorization: MA(1) recovery and round trips.

fn criterion_2() -> Outcome {
    let mzq = common::mzq_table();
    let square = common::square_table();
    let law = ParameterLaw::default();
    let start = Instant::now();

    let mut r = vec![0.0; DEFAULT_MAX_LAG + 1];
    r[0] = 1.25;
    r[1] = 0.5;
    let ma = spectral_factorize(&LagCovariance::new(r, 0.0), DEFAULT_SPECTRAL_GRID).unwrap();
    let ma1_err = (ma.beta[0] - 1.0)
        .abs()
        .max((ma.beta[1] - 0.5).abs())
        .max(ma.beta[2..].iter().fold(0.0, |m: f64, b| m.max(b.abs())));

    let mut worst: f64 = 0.0;
    let mut produced = 0;
    for (table, eps_list) in [
        (mzq, lrt_core::response::default_epsilons()),
        (square, vec![0.0, 0.03, 0.06]),
    ] {
        for eps in eps_list {
            let cov = lag_covariance(table, &law, eps, DEFAULT_MAX_LAG).unwrap();
            let ma = spectral_factorize(&cov, DEFAULT_SPECTRAL_GRID).unwrap();
            let rebuilt = ma.autocovariance(DEFAULT_MAX_LAG / 2);
            for (m, &rm) in rebuilt.iter().enumerate() {
                worst = worst.max((rm - cov.r[m]).abs() / cov.r[0]);
            }
            produced += 1;
        }
    }
    Outcome::new(
        ma1_err < 1e-6 && worst < 1e-3,
        format!(
            "MA(1) max coefficient error {ma1_err:.2e} (< 1e-6); worst relative round-trip error {worst:.2e} (< 1e-3) over {produced} produced covariances"
        ),
        start.elapsed(),
        secs(1),
    )
}

// ---------------------------------------------------------------------------
// 3. Binomial lag transfer against direct cocycle simulation.

fn criterion_3() -> Outcome {
    let a = 3.9;
    let max_m = 10;
    let steps = 10_000_000;
    let tree = seeds("lag-transfer");
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;

    for (o, obs) in [ObservableKind::MeanZeroQuadratic, ObservableKind::Square]
        .into_iter()
        .enumerate()
    {
        // Formula side: independent plain-map runs give both the estimate and its error.
        let runs = 40;
        let per_run: Vec<Vec<f64>> = (0..runs)
            .map(|k| {
                let mut rng = tree.stream(10 + o as u64, k, 0);
                let stats = logistic_stats_mc(a, max_m, 1, 399_168, obs, &mut rng);
                (0..=max_m)
                    .map(|m| cocycle_lag_from_logistic(&stats, m))
                    .collect()
            })
            .collect();

        // Direct side: one long cocycle orbit.
        let mut rng = tree.stream(20 + o as u64, 0, 0);
        let unit = MicroUnit {
            q: rng.random::<f64>(),
            r: rng.random::<f64>(),
            a,
        };
        let mut ensemble = MicroEnsemble::new(&[unit], obs, Gamma::One).unwrap();
        ensemble.burn(10_000, &mut rng);
        let phi: Vec<f64> = (0..steps + max_m)
            .map(|_| {
                let u = ensemble.unit(0);
                ensemble.advance(&mut rng);
                obs.eval(u.q, u.a)
            })
            .collect();

        let mut worst: f64 = 0.0;
        for m in 0..=max_m {
            let formula: Vec<f64> = per_run.iter().map(|v| v[m]).collect();
            let (f_mean, f_var) = mean_var(&formula);
            let f_se = (f_var / runs as f64).sqrt();
            let products: Vec<f64> = (0..steps).map(|n| phi[n] * phi[n + m]).collect();
            let (d_mean, _) = mean_var(&products);
            let d_se = batch_means_se(&products, 100);
            let z = (f_mean - d_mean).abs() / (f_se * f_se + d_se * d_se).sqrt();
            worst = worst.max(z);
            pass &= z < 3.0;
        }
        lines.push(format!("{}: max |diff|/SE {worst:.2}", obs.name()));
    }
    Outcome::new(
        pass,
        format!(
            "m <= {max_m} at a = {a}, 1e7 steps; {} (< 3)",
            lines.join(", ")
        ),
        start.elapsed(),
        secs(30),
    )
}

// ---------------------------------------------------------------------------
// 4. Null calibration of the chi-squared test.

fn criterion_4() -> Outcome {
    let tree = seeds("null-calibration");
    let start = Instant::now();
    let trials = 1000;
    let n = 10_000;
    let eps = lrt_core::response::default_epsilons();
    let sigmas: Vec<f64> = (0..eps.len()).map(|i| 0.2 + 0.05 * i as f64).collect();
    let mut chi2 = Vec::with_capacity(trials);
    let mut rejections = 0;
    for t in 0..trials {
        let mut rng = tree.stream(domain::SYNTHETIC, t as u32, 0);
        let entries = eps
            .iter()
            .zip(&sigmas)
            .map(|(&e, &s)| {
                let xi: f64 = rng.sample(StandardNormal);
                ResponseEntry {
                    epsilon: e,
                    mean: 0.4 - 1.3 * e + s * xi / (n as f64).sqrt(),
                    sigma: s,
                }
            })
            .collect();
        let result = test_response(&[ResponseDataset::new(entries, n).unwrap()], 1).unwrap();
        chi2.push(result.chi2);
        rejections += result.rejects(0.05) as usize;
    }
    let dist = ChiSquared::new(7.0).unwrap();
    let d = ks_statistic(&chi2, |x| dist.cdf(x));
    let p = ks_p_value(d, trials);
    let rate = rejections as f64 / trials as f64;
    Outcome::new(
        p > 0.01 && (rate - 0.05).abs() <= 0.02,
        format!("KS p = {p:.3} (> 0.01) against chi2_7; type-I error {rate:.3} (0.05 +/- 0.02)"),
        start.elapsed(),
        secs(10),
    )
}

// ---------------------------------------------------------------------------
// 5. Density of Q at M = 16 against the stochastic limit.

fn criterion_5() -> Outcome {
    let table = common::mzq_table();
    let law = ParameterLaw::default();
    let tree = seeds("density");
    let start = Instant::now();
    let spec = SystemSpec::diffusive(16).with_escape(EscapePolicy::Saturate);
    let run = RunLength::new(1_000_000, 10_000);

    let params = law.sample_many(spec.m, &mut tree.stream(domain::PARAMETERS, 0, 0));
    let full = simulate(
        &spec,
        &params,
        0.0,
        &run,
        &mut tree.stream(domain::REALIZATION, 0, 0),
    )
    .unwrap();
    let cov = lag_covariance(table, &law, 0.0, DEFAULT_MAX_LAG).unwrap();
    let beta = spectral_factorize(&cov, DEFAULT_SPECTRAL_GRID).unwrap();
    let mut limit_sat = 0;
    let limit = {
        // Count capped steps of the limit run as well.
        let mut rng = tree.stream(domain::REFERENCE, 0, 0);
        let mut q = Vec::with_capacity(run.n);
        let stats = lrt_core::reduction::reduced::simulate_stochastic_limit_visit(
            &spec,
            &beta,
            &run,
            &mut rng,
            |x| q.push(x),
        )
        .unwrap();
        limit_sat += stats.saturated;
        q
    };
    let l1 = empirical_density(&full.q, DEFAULT_BINS)
        .unwrap()
        .l1_distance(&empirical_density(&limit, DEFAULT_BINS).unwrap())
        .unwrap();

    // The same configuration under the strict escape policy.
    let strict = simulate(
        &SystemSpec::diffusive(16),
        &params,
        0.0,
        &run,
        &mut tree.stream(domain::REALIZATION, 0, 0),
    );
    let strict_note = match strict {
        Ok(_) => "strict policy ran without escape".to_string(),
        Err(e) => format!("strict policy stops: {e}"),
    };
    Outcome::new(
        l1 < 0.05,
        format!(
            "L1 = {l1:.4} (< 0.05), {DEFAULT_BINS} bins, N = 1e6; A capped at 4 on {:.3}% (full) and {:.3}% (limit) of steps; {strict_note}",
            100.0 * full.stats.saturated_fraction(),
            100.0 * limit_sat as f64 / (run.n + run.burn_in) as f64
        ),
        start.elapsed(),
        secs(120),
    )
}

// ---------------------------------------------------------------------------
// 6 and 8. Linear and cubic response of the diffusive system.

fn pooled(
    model: ResponseModel,
    system: SystemSpec,
    n: usize,
    realizations: usize,
) -> ResponseConfig {
    let mut c = ResponseConfig::new(model, system, n, realizations);
    c.sigma = SigmaSource::Pooled;
    c
}

const REALIZATIONS: usize = 50;

fn diffusive_samples(m: usize) -> &'static ResponseSamples {
    static SMALL: OnceLock<ResponseSamples> = OnceLock::new();
    static LARGE: OnceLock<ResponseSamples> = OnceLock::new();
    let cell = if m == 16 { &SMALL } else { &LARGE };
    cell.get_or_init(|| {
        let spec = SystemSpec::diffusive(m).with_escape(EscapePolicy::Saturate);
        let config = pooled(ResponseModel::Full, spec, 200_000, REALIZATIONS);
        collect_samples(&config, None, &seeds(&format!("diffusive-M{m}"))).unwrap()
    })
}

fn describe(label: &str, r: &TestResult, samples: &ResponseSamples) -> String {
    format!(
        "{label}: p = {:.3e}, q = {:.3e}, capped {:.3}%",
        r.p_value,
        r.q_hat,
        100.0 * samples.stats.saturated_fraction()
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let small = diffusive_samples(16);
    let large = diffusive_samples(1024);
    let r16 = small.analyze(1).unwrap();
    let r1024 = large.analyze(1).unwrap();
    Outcome::new(
        r16.rejects(0.01) && !r1024.rejects(0.05),
        format!(
            "{} (reject at 0.01); {} (keep at 0.05)",
            describe("M=16", &r16, small),
            describe("M=1024", &r1024, large)
        ),
        start.elapsed(),
        None,
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let small = diffusive_samples(16);
    let large = diffusive_samples(1024);
    let r16 = small.analyze(3).unwrap();
    let r1024 = large.analyze(3).unwrap();
    Outcome::new(
        r16.rejects(0.01) && !r1024.rejects(0.05),
        format!(
            "ell = 3: {} (reject at 0.01); {} (keep at 0.05)",
            describe("M=16", &r16, small),
            describe("M=1024", &r1024, large)
        ),
        start.elapsed(),
        None,
    )
}

// ---------------------------------------------------------------------------
// 7. The deterministic-limit regime.

fn criterion_7() -> Outcome {
    let table = common::square_table();
    let start = Instant::now();
    let run = |model: ResponseModel, m: usize, n: usize| -> TestResult {
        let config = pooled(model, SystemSpec::deterministic(m), n, REALIZATIONS);
        let label = format!("deterministic-{model:?}-M{m}-N{n}");
        let samples = collect_samples(&config, Some(table), &seeds(&label)).unwrap();
        samples.analyze(1).unwrap()
    };
    let short = run(ResponseModel::Full, 16, 20_000);
    let long = run(ResponseModel::Full, 16, 200_000);
    let finite = run(ResponseModel::FiniteSize, 1024, 200_000);
    let limit = run(ResponseModel::DeterministicLimit, 1024, 200_000);
    let sweep: Vec<(usize, f64)> = [1024, 4096, 16384]
        .into_iter()
        .map(|m| (m, run(ResponseModel::Full, m, 200_000).p_value))
        .collect();

    let trend = short.p_value > long.p_value;
    let finite_ok = finite.p_value > 0.01;
    // "Decisive" is read as p < 1e-6.
    let limit_ok = limit.p_value < 1e-6;
    let monotone = sweep.windows(2).all(|w| w[1].1 < w[0].1);
    let sweep_text: Vec<String> = sweep
        .iter()
        .map(|(m, p)| format!("M={m}: {p:.3e}"))
        .collect();
    Outcome::new(
        trend && finite_ok && limit_ok && monotone,
        format!(
            "M=16 p(N=2e4) = {:.3e} > p(N=2e5) = {:.3e} [{}]; finite-size M=1024 p = {:.3e} (> 0.01) [{}]; deterministic limit p = {:.3e} (< 1e-6) [{}]; full-model p decreasing over {} [{}]",
            short.p_value,
            long.p_value,
            ok(trend),
            finite.p_value,
            ok(finite_ok),
            limit.p_value,
            ok(limit_ok),
            sweep_text.join(", "),
            ok(monotone)
        ),
        start.elapsed(),
        None,
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "not met"
    }
}

// ---------------------------------------------------------------------------
// 9. Statistics of the finite-size term.

fn criterion_9() -> Outcome {
    let table: &ReductionTable = common::square_table();
    let law = ParameterLaw::default();
    let tree = seeds("eta");
    let start = Instant::now();
    let eps = lrt_core::response::default_epsilons();
    let (m, draws) = (1024, 10_000);
    let sampler = EtaSampler::new(table, &law, &eps).unwrap();
    let etas: Vec<Vec<f64>> = (0..draws)
        .map(|j| {
            sampler
                .sample(m, &mut tree.stream(domain::ETA, j as u32, 0))
                .unwrap()
                .eta
        })
        .collect();

    let k = eps.len();
    let mut worst_z: f64 = 0.0;
    for (i, &e) in eps.iter().enumerate() {
        let xs: Vec<f64> = etas.iter().map(|row| row[i]).collect();
        let (mean, var) = mean_var(&xs);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / draws as f64;
        let se = ((m4 - var * var) / draws as f64).sqrt();
        let drift = table.mean_drift(&law, e).unwrap();
        let second = table
            .average_over_law(&law, e, |s| s.mean_phi * s.mean_phi)
            .unwrap();
        let expected = second - drift * drift;
        worst_z = worst_z.max((var - expected).abs() / se);
    }
    let mut cov = DMatrix::<f64>::zeros(k, k);
    let means: Vec<f64> = (0..k)
        .map(|i| etas.iter().map(|r| r[i]).sum::<f64>() / draws as f64)
        .collect();
    for row in &etas {
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += (row[a] - means[a]) * (row[b] - means[b]) / (draws - 1) as f64;
            }
        }
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * cov.diagonal().max();
    Outcome::new(
        worst_z < 3.0 && min_eig >= -tol,
        format!(
            "M = {m}, {draws} draws: worst |var - quadrature|/SE = {worst_z:.2} (< 3); smallest covariance eigenvalue {min_eig:.3e} (>= 0)"
        ),
        start.elapsed(),
        secs(60),
    )
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "marginal-measure equivalence", criterion_1),
    (2, "MA(1) spectral factorization", criterion_2),
    (3, "binomial lag-transfer identity", criterion_3),
    (4, "null calibration of the chi-squared test", criterion_4),
    (5, "density of Q, M = 16 vs stochastic limit", criterion_5),
    (6, "linear response, gamma = 1/2", criterion_6),
    (7, "deterministic-limit trend, gamma = 1", criterion_7),
    (8, "cubic response, gamma = 1/2", criterion_8),
    (9, "finite-size term statistics", criterion_9),
];

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let filtered = std::env::args().skip(1).any(|a| !a.starts_with('-'));
    let mut failures = 0;
    let mut ran = 0;
    for (number, name, run) in CRITERIA {
        if filtered && !selected.contains(&number) {
            continue;
        }
        ran += 1;
        let wall = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::new(false, format!("aborted: {msg}"), wall.elapsed(), None)
        });
        let verdict = outcome.verdict();
        failures += !verdict as usize;
        let budget = match outcome.limit {
            Some(l) => format!(", limit {:.0} s", l.as_secs_f64()),
            None => String::new(),
        };
        println!(
            "criterion {number} ({name}): {} [{:.1} s{budget}; {:.1} s wall] {}",
            if verdict { "PASS" } else { "FAIL" },
            outcome.elapsed.as_secs_f64(),
            wall.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
