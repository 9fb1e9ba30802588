//! Null calibration of the χ² test: synthetic datasets whose means follow a
//! polynomial of the tested order exactly, plus Gaussian noise of size
//! `σ_i/√N`. Their χ² values should follow `χ²_dof` and the test should
//! reject at its nominal rate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::experiment::default_epsilons;
use super::fit::{degrees_of_freedom, test_response, ResponseDataset, ResponseEntry};
use crate::rng::{domain, SeedTree};
use crate::stats::{ks_p_value, ks_statistic};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub epsilons: Vec<f64>,
    /// One per perturbation.
    pub sigmas: Vec<f64>,
    /// Nominal series length behind each mean.
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    /// Order of the fitted and of the generating polynomial.
    pub ell: usize,
    /// Coefficients of the generating polynomial, lowest order first.
    pub coefficients: Vec<f64>,
    /// Significance level of the rejection count.
    pub alpha: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        let epsilons = default_epsilons();
        let sigmas = (0..epsilons.len()).map(|i| 0.2 + 0.05 * i as f64).collect();
        Self {
            epsilons,
            sigmas,
            n: 10_000,
            trials: 1000,
            ell: 1,
            coefficients: vec![0.4, -1.3],
            alpha: 0.05,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.len() != self.epsilons.len() {
            return Err(Error::config("one sigma per perturbation is required"));
        }
        if self.epsilons.len() <= self.ell + 1 {
            return Err(Error::config(format!(
                "order {} needs more than {} perturbations",
                self.ell,
                self.ell + 1
            )));
        }
        if self.coefficients.len() > self.ell + 1 {
            return Err(Error::config(
                "generating polynomial exceeds the tested order",
            ));
        }
        if self.n == 0 || self.trials == 0 {
            return Err(Error::config("N and trials must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub dof: usize,
    pub chi2: Vec<f64>,
    /// Kolmogorov–Smirnov distance of `chi2` from `χ²_dof`, and its p-value.
    pub ks_distance: f64,
    pub ks_p_value: f64,
    /// Fraction of trials rejected at `alpha`.
    pub rejection_rate: f64,
    pub alpha: f64,
}

/// Runs `config.trials` synthetic null datasets; trial `t` draws from stream
/// `(SYNTHETIC, t, 0)`.
pub fn null_calibration(config: &CalibrationConfig, seeds: &SeedTree) -> Result<CalibrationResult> {
    config.validate()?;
    let scale = 1.0 / (config.n as f64).sqrt();
    let mut chi2 = Vec::with_capacity(config.trials);
    let mut rejections = 0usize;
    for t in 0..config.trials {
        let mut rng = seeds.stream(domain::SYNTHETIC, t as u32, 0);
        let entries = config
            .epsilons
            .iter()
            .zip(&config.sigmas)
            .map(|(&epsilon, &sigma)| {
                let truth = config
                    .coefficients
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * epsilon + c);
                let xi: f64 = rng.sample(StandardNormal);
                ResponseEntry {
                    epsilon,
                    mean: truth + sigma * xi * scale,
                    sigma,
                }
            })
            .collect();
        let result = test_response(&[ResponseDataset::new(entries, config.n)?], config.ell)?;
        rejections += result.rejects(config.alpha) as usize;
        chi2.push(result.chi2);
    }
    let dof = degrees_of_freedom(config.epsilons.len(), config.ell);
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::config(format!("invalid degrees of freedom {dof}: {e}")))?;
    let ks_distance = ks_statistic(&chi2, |x| dist.cdf(x));
    Ok(CalibrationResult {
        dof,
        ks_p_value: ks_p_value(ks_distance, config.trials),
        ks_distance,
        rejection_rate: rejections as f64 / config.trials as f64,
        alpha: config.alpha,
        chi2,
    })
}
