//! Ensemble moments of `Q` at a fixed early time, for a range of ensemble
//! sizes, each scaled by the same moments of the stochastic limit.
//!
//! Every realization draws its own parameters and unit states, lets the
//! units alone reach their invariant measure, then starts `Q` at a fixed
//! `Q0` and records `Q_n`. The limit system starts from the same `Q0` with a
//! stationary driver.

use std::io::Write;

use rayon::prelude::*;

use crate::law::ParameterLaw;
use crate::micro::{centred_moments, macro_at_step, RunLength, RunStats, SystemSpec};
use crate::reduction::reduced::simulate_stochastic_limit_visit;
use crate::reduction::spectral::{
    lag_covariance, spectral_factorize, MACoefficients, DEFAULT_MAX_LAG, DEFAULT_SPECTRAL_GRID,
};
use crate::reduction::table::ReductionTable;
use crate::rng::{domain, SeedTree};
use crate::{Error, Result};

/// Moments `μ_1` (mean) through `μ_4` (centred).
pub type Moments = [f64; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct MomentsConfig {
    /// `M` is taken from `sizes`; the rest of the system is shared.
    pub system: SystemSpec,
    pub law: ParameterLaw,
    pub sizes: Vec<usize>,
    pub q0: f64,
    /// Time `n` at which `Q_n` is recorded.
    pub step: usize,
    pub unit_burn_in: usize,
    pub realizations: usize,
    pub limit_realizations: usize,
    pub max_lag: usize,
    pub spectral_grid: usize,
}

impl MomentsConfig {
    pub fn new(system: SystemSpec, sizes: Vec<usize>, realizations: usize) -> Self {
        Self {
            system,
            law: ParameterLaw::default(),
            sizes,
            q0: 0.5,
            step: 6,
            unit_burn_in: crate::micro::DEFAULT_BURN_IN,
            realizations,
            limit_realizations: realizations,
            max_lag: DEFAULT_MAX_LAG,
            spectral_grid: DEFAULT_SPECTRAL_GRID,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::config(
                "ensemble sizes must be a non-empty list of positive M",
            ));
        }
        if self.realizations < 2 || self.limit_realizations < 2 {
            return Err(Error::config("moments need at least two realizations"));
        }
        if !(0.0..=1.0).contains(&self.q0) {
            return Err(Error::config("Q0 must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Moments of the full system at one ensemble size, with its ratios to the limit.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentsRow {
    pub m: usize,
    pub moments: Moments,
    pub ratios: Moments,
    pub stats: RunStats,
}

fn to_moments(samples: &[f64]) -> Result<Moments> {
    let mu = centred_moments(samples, 4)?;
    Ok([mu[0], mu[1], mu[2], mu[3]])
}

/// Moments of `Q_n` over realizations of the full system with `m` units.
/// Realization `j` uses stream `(REALIZATION, j, m)`.
pub fn full_moments(
    config: &MomentsConfig,
    m: usize,
    seeds: &SeedTree,
) -> Result<(Moments, RunStats)> {
    let spec = SystemSpec { m, ..config.system };
    let minor = u32::try_from(m).map_err(|_| Error::config("M too large"))?;
    let runs: Vec<(f64, RunStats)> = (0..config.realizations)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds.stream(domain::REALIZATION, j as u32, minor);
            let params = config.law.sample_many(m, &mut rng);
            macro_at_step(
                &spec,
                &params,
                config.q0,
                config.unit_burn_in,
                config.step,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    let stats = runs
        .iter()
        .fold(RunStats::default(), |acc, r| acc.merge(r.1));
    let q: Vec<f64> = runs.into_iter().map(|r| r.0).collect();
    Ok((to_moments(&q)?, stats))
}

/// Moments of `Q_n` for the stochastic limit with driver coefficients `beta`.
/// Realization `j` uses stream `(REFERENCE, j, 0)`.
pub fn limit_moments(
    config: &MomentsConfig,
    beta: &MACoefficients,
    seeds: &SeedTree,
) -> Result<(Moments, RunStats)> {
    let run = RunLength {
        n: 1,
        burn_in: config.step,
        q0: Some(config.q0),
    };
    let runs: Vec<(f64, RunStats)> = (0..config.limit_realizations)
        .into_par_iter()
        .map(|j| {
            let mut rng = seeds.stream(domain::REFERENCE, j as u32, 0);
            let mut q = f64::NAN;
            let stats =
                simulate_stochastic_limit_visit(&config.system, beta, &run, &mut rng, |x| q = x)?;
            Ok((q, stats))
        })
        .collect::<Result<_>>()?;
    let stats = runs
        .iter()
        .fold(RunStats::default(), |acc, r| acc.merge(r.1));
    let q: Vec<f64> = runs.into_iter().map(|r| r.0).collect();
    Ok((to_moments(&q)?, stats))
}

/// Limit moments and one row per ensemble size.
pub fn moment_table(
    config: &MomentsConfig,
    table: &ReductionTable,
    seeds: &SeedTree,
) -> Result<(Moments, RunStats, Vec<MomentsRow>)> {
    config.validate()?;
    let cov = lag_covariance(table, &config.law, 0.0, config.max_lag)?;
    let beta = spectral_factorize(&cov, config.spectral_grid)?;
    let (limit, limit_stats) = limit_moments(config, &beta, seeds)?;
    let rows = config
        .sizes
        .iter()
        .map(|&m| {
            let (moments, stats) = full_moments(config, m, seeds)?;
            let mut ratios = [0.0; 4];
            for k in 0..4 {
                ratios[k] = moments[k] / limit[k];
            }
            Ok(MomentsRow {
                m,
                moments,
                ratios,
                stats,
            })
        })
        .collect::<Result<_>>()?;
    Ok((limit, limit_stats, rows))
}

/// Columns `M, mu1..mu4, ratio1..ratio4`; the limit is the row with `M = inf`.
pub fn write_moments_csv<W: Write>(limit: &Moments, rows: &[MomentsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "M", "mu1", "mu2", "mu3", "mu4", "ratio1", "ratio2", "ratio3", "ratio4",
    ])?;
    for row in rows {
        let mut record = vec![row.m.to_string()];
        record.extend(row.moments.iter().chain(&row.ratios).map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    let mut record = vec!["inf".to_string()];
    record.extend(limit.iter().map(|v| v.to_string()));
    record.extend(std::iter::repeat_n("1".to_string(), 4));
    w.write_record(&record)?;
    w.flush()?;
    Ok(())
}
