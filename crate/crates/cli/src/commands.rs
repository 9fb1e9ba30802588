//! One function per subcommand. Each renders its outputs and reports the
//! step counts and table-cache status that go into the manifest.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use lrt_core::micro::{
    empirical_density, simulate_visit, write_histogram_csv, RunLength, RunStats,
};
use lrt_core::moments::{moment_table, write_moments_csv, MomentsConfig};
use lrt_core::reduction::reduced::{
    simulate_deterministic_limit_visit, simulate_finite_size_visit, simulate_stochastic_limit_visit,
};
use lrt_core::reduction::{
    eta_for_params, lag_covariance, spectral_factorize, ReductionTable, TableConfig,
};
use lrt_core::response::{
    null_calibration, run_response_experiment, ResponseConfig, ResponseModel, TestResult,
};
use lrt_core::rng::{domain, SeedTree};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_atomic, CacheRecord, CacheStatus, Outputs};

/// What a command produced besides its files.
#[derive(Debug, Default)]
pub struct Report {
    pub outputs: Outputs,
    pub stats: RunStats,
    pub table: Option<CacheRecord>,
}

/// Loads the reduction table for the configured observable from the cache,
/// building and storing it on a miss.
fn load_table(config: &ExperimentConfig) -> Result<(ReductionTable, CacheRecord), CliError> {
    let table_config = config.table_config()?;
    let path = cache_path(config, &table_config)?;
    if let Ok(file) = File::open(&path) {
        if let Ok(table) = ReductionTable::read_csv(BufReader::new(file), table_config.observable) {
            if table.grid() == &table_config.grid && table.lags() == table_config.lags {
                let record = CacheRecord {
                    cache: CacheStatus::Hit,
                    path,
                };
                return Ok((table, record));
            }
        }
    }
    let table = ReductionTable::build(&table_config, &SeedTree::new(config.table_seed()))?;
    let dir = &config.table.cache_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    write_atomic(&path, &bytes)?;
    let record = CacheRecord {
        cache: CacheStatus::Miss,
        path,
    };
    Ok((table, record))
}

/// The cache key covers everything that determines the table's contents.
fn cache_path(config: &ExperimentConfig, table: &TableConfig) -> Result<PathBuf, CliError> {
    #[derive(Serialize)]
    struct Key<'a> {
        table: &'a TableConfig,
        seed: u64,
    }
    let key = serde_json::to_vec(&Key {
        table,
        seed: config.table_seed(),
    })
    .map_err(|e| CliError::Config(e.to_string()))?;
    let digest = hex::encode(Sha256::digest(&key));
    Ok(config.table.cache_dir.join(format!(
        "table-{}-{}.csv",
        table.observable.name(),
        &digest[..16]
    )))
}

fn csv_bytes(
    write: impl FnOnce(&mut Vec<u8>) -> lrt_core::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(bytes)
}

/// Builds (or loads) the table and emits the driver statistics at `ε = 0`.
pub fn reduce(config: &ExperimentConfig) -> Result<Report, CliError> {
    let (table, record) = load_table(config)?;
    let max_lag = config.response.max_lag;
    let cov = lag_covariance(&table, &config.law, 0.0, max_lag)?;
    let beta = spectral_factorize(&cov, config.response.spectral_grid)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let row = |w: &mut csv::Writer<Vec<u8>>, fields: [String; 3]| {
        w.write_record(fields)
            .map_err(|e| CliError::io("covariance.csv", e))
    };
    row(&mut w, ["lag".into(), "covariance".into(), "beta".into()])?;
    for (m, r) in cov.r.iter().enumerate() {
        let b = beta.beta.get(m).copied().unwrap_or(0.0);
        row(&mut w, [m.to_string(), r.to_string(), b.to_string()])?;
    }
    let covariance = w
        .into_inner()
        .map_err(|e| CliError::io("covariance.csv", e))?;

    #[derive(Serialize)]
    struct Summary {
        observable: String,
        drift: f64,
        variance: f64,
        eta_variance: f64,
        alpha_points: usize,
        lags: usize,
    }
    let drift = table.mean_drift(&config.law, 0.0)?;
    let second = table.average_over_law(&config.law, 0.0, |s| s.mean_phi * s.mean_phi)?;
    let mut report = Report {
        table: Some(record),
        ..Report::default()
    };
    report.outputs.add("covariance.csv", covariance);
    report.outputs.add_json(
        "reduction.json",
        &Summary {
            observable: table.observable().name().to_string(),
            drift,
            variance: cov.r[0],
            eta_variance: second - drift * drift,
            alpha_points: table.grid().points,
            lags: table.lags(),
        },
    )?;
    Ok(report)
}

/// Stationary density of `Q` for the configured model.
pub fn density(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = config.system()?;
    let d = &config.density;
    let seeds = SeedTree::new(config.seed).child("density");
    let run = RunLength::new(d.n, d.burn_in);
    let params = config
        .law
        .sample_many(spec.m, &mut seeds.stream(domain::PARAMETERS, 0, 0));
    let mut rng = seeds.stream(domain::REALIZATION, 0, 0);
    let mut q = Vec::with_capacity(d.n);
    let mut report = Report::default();
    let law = &config.law;
    let stats = if d.model == ResponseModel::Full {
        simulate_visit(&spec, &params, 0.0, &run, &mut rng, |x, _| q.push(x))?
    } else {
        let (table, record) = load_table(config)?;
        report.table = Some(record);
        let beta = || -> Result<_, CliError> {
            let cov = lag_covariance(&table, law, 0.0, config.response.max_lag)?;
            Ok(spectral_factorize(&cov, config.response.spectral_grid)?)
        };
        match d.model {
            ResponseModel::StochasticLimit => {
                simulate_stochastic_limit_visit(&spec, &beta()?, &run, &mut rng, |x| q.push(x))?
            }
            ResponseModel::DeterministicLimit => {
                let drift = table.mean_drift(law, 0.0)?;
                simulate_deterministic_limit_visit(&spec, drift, &run, &mut rng, |x| q.push(x))?
            }
            ResponseModel::FiniteSize => {
                let drift = table.mean_drift(law, 0.0)?;
                let eta = eta_for_params(&table, law, &[0.0], params)?.eta[0];
                simulate_finite_size_visit(&spec, drift, eta, &beta()?, &run, &mut rng, |x| {
                    q.push(x)
                })?
            }
            ResponseModel::Full => unreachable!("handled above"),
        }
    };
    let hist = empirical_density(&q, d.bins)?;
    report
        .outputs
        .add("density.csv", csv_bytes(|w| write_histogram_csv(&hist, w))?);
    report.stats = stats;
    Ok(report)
}

/// Fixed-time moments of `Q` over realizations, against the stochastic limit.
pub fn moments(config: &ExperimentConfig) -> Result<Report, CliError> {
    let spec = config.system()?;
    let s = &config.moments;
    let mc = MomentsConfig {
        system: spec,
        law: config.law,
        sizes: s.sizes.clone(),
        q0: s.q0,
        step: s.step,
        unit_burn_in: s.unit_burn_in,
        realizations: s.realizations,
        limit_realizations: s.limit_realizations.unwrap_or(s.realizations),
        max_lag: config.response.max_lag,
        spectral_grid: config.response.spectral_grid,
    };
    mc.validate()?;
    let (table, record) = load_table(config)?;
    let (limit, limit_stats, rows) =
        moment_table(&mc, &table, &SeedTree::new(config.seed).child("moments"))?;
    let mut report = Report {
        table: Some(record),
        stats: rows.iter().fold(limit_stats, |acc, r| acc.merge(r.stats)),
        ..Report::default()
    };
    report.outputs.add(
        "moments.csv",
        csv_bytes(|w| write_moments_csv(&limit, &rows, w))?,
    );
    Ok(report)
}

/// Response test at every configured ensemble size.
pub fn respond(config: &ExperimentConfig, ell: usize) -> Result<Report, CliError> {
    let spec = config.system()?;
    let r = &config.response;
    if r.sizes.is_empty() {
        return Err(CliError::Config("response.sizes must not be empty".into()));
    }
    let mut report = Report::default();
    let table = if r.model.needs_table() {
        let (table, record) = load_table(config)?;
        report.table = Some(record);
        Some(table)
    } else {
        None
    };

    #[derive(Serialize)]
    struct SizeResult {
        #[serde(rename = "M")]
        m: usize,
        model: ResponseModel,
        result: TestResult,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["M", "epsilon", "mean", "stderr", "sigma_ref"])
        .map_err(|e| CliError::io("response.csv", e))?;
    let mut results = Vec::with_capacity(r.sizes.len());
    for &m in &r.sizes {
        let rc = ResponseConfig {
            model: r.model,
            system: lrt_core::micro::SystemSpec { m, ..spec },
            law: config.law,
            epsilons: r.epsilons.clone(),
            n: r.n,
            burn_in: r.burn_in,
            realizations: r.realizations,
            sigma: r.sigma.clone(),
            cutoff: r.cutoff,
            max_lag: r.max_lag,
            spectral_grid: r.spectral_grid,
        };
        let seeds = SeedTree::new(config.seed).child(&format!("respond-{m}"));
        let (samples, result) = run_response_experiment(&rc, ell, table.as_ref(), &seeds)?;
        for (eps, mean, se, sref) in samples.summary_rows() {
            w.write_record([
                m.to_string(),
                eps.to_string(),
                mean.to_string(),
                se.to_string(),
                sref.to_string(),
            ])
            .map_err(|e| CliError::io("response.csv", e))?;
        }
        report.stats = report.stats.merge(samples.stats);
        results.push(SizeResult {
            m,
            model: r.model,
            result,
        });
    }
    let csv = w
        .into_inner()
        .map_err(|e| CliError::io("response.csv", e))?;
    report.outputs.add("response.csv", csv);
    report.outputs.add_json("test.json", &results)?;
    Ok(report)
}

/// Null calibration of the χ² test on synthetic datasets.
pub fn calibrate(config: &ExperimentConfig, ell: Option<usize>) -> Result<Report, CliError> {
    let mut cc = config.calibrate.clone();
    if let Some(ell) = ell {
        cc.ell = ell;
    }
    let result = null_calibration(&cc, &SeedTree::new(config.seed).child("calibrate"))?;
    let mut report = Report::default();
    report.outputs.add_json("test.json", &result)?;
    Ok(report)
}
