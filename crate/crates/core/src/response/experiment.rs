//! End-to-end response experiments: simulate every perturbation for every
//! realization, estimate `σ_i`, and test the response order.
//!
//! One parameter draw `a0^{(1..M)}` is made per experiment and shared by all
//! perturbations and realizations; realizations differ only in their initial
//! conditions and driver noise. Stream `(REALIZATION, j, i)` drives
//! realization `j` at perturbation `i`, so adding realizations or
//! perturbations never changes existing ones.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{test_response, ResponseDataset, ResponseEntry, TestResult};
use super::series::{green_kubo_from_covariance, LagCutoff, StreamingAutocov, MAX_LAG_CUTOFF};
use crate::law::ParameterLaw;
use crate::micro::{simulate_visit, RunLength, RunStats, SystemSpec};
use crate::reduction::reduced::{
    eta_for_params, simulate_deterministic_limit_visit, simulate_finite_size_visit,
    simulate_stochastic_limit_visit,
};
use crate::reduction::spectral::{
    lag_covariance, spectral_factorize, MACoefficients, DEFAULT_MAX_LAG, DEFAULT_SPECTRAL_GRID,
};
use crate::reduction::table::ReductionTable;
use crate::rng::{domain, SeedTree};
use crate::{Error, Result};

/// Which system generates the macroscopic series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseModel {
    /// The coupled deterministic system with `M` units.
    Full,
    /// `A = A0 + A1 ζ_n` with the Gaussian limit driver.
    StochasticLimit,
    /// `A = A0 + A1 C(ε)`, a plain logistic map.
    DeterministicLimit,
    /// `Z_n = C(ε) + (η^ε + ζ_n)/√M`.
    FiniteSize,
}

impl ResponseModel {
    pub fn needs_table(self) -> bool {
        self != ResponseModel::Full
    }
}

/// Where the Green–Kubo `σ_i` come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// One separate run of this length per perturbation.
    Reference { length: usize },
    /// Lag covariances averaged over all realizations at each perturbation.
    Pooled,
    /// Supplied directly, one per perturbation.
    Given(Vec<f64>),
}

impl Default for SigmaSource {
    fn default() -> Self {
        SigmaSource::Reference { length: 40_000_000 }
    }
}

/// Default perturbation grid: nine evenly spaced values on `[0, 0.06]`.
pub fn default_epsilons() -> Vec<f64> {
    (0..9).map(|i| 0.0075 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseConfig {
    pub model: ResponseModel,
    pub system: SystemSpec,
    pub law: ParameterLaw,
    pub epsilons: Vec<f64>,
    /// Recorded steps per run.
    pub n: usize,
    pub burn_in: usize,
    pub realizations: usize,
    pub sigma: SigmaSource,
    pub cutoff: LagCutoff,
    /// Lags kept in the driver covariance of the reduced models.
    pub max_lag: usize,
    pub spectral_grid: usize,
}

impl ResponseConfig {
    pub fn new(model: ResponseModel, system: SystemSpec, n: usize, realizations: usize) -> Self {
        Self {
            model,
            system,
            law: ParameterLaw::default(),
            epsilons: default_epsilons(),
            n,
            burn_in: crate::micro::DEFAULT_BURN_IN,
            realizations,
            sigma: SigmaSource::default(),
            cutoff: LagCutoff::Auto,
            max_lag: DEFAULT_MAX_LAG,
            spectral_grid: DEFAULT_SPECTRAL_GRID,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.epsilons.len() <= 2 {
            return Err(Error::config("need more than two perturbations"));
        }
        if self.n == 0 || self.realizations == 0 {
            return Err(Error::config(
                "N and the number of realizations must be positive",
            ));
        }
        if let SigmaSource::Given(s) = &self.sigma {
            if s.len() != self.epsilons.len() {
                return Err(Error::config("one sigma per perturbation is required"));
            }
        }
        Ok(())
    }

    fn gk_lags(&self) -> usize {
        match self.cutoff {
            LagCutoff::Auto => MAX_LAG_CUTOFF,
            LagCutoff::Fixed(l) => l,
        }
    }
}

/// Everything a single run needs beyond its stream.
enum Driver {
    Full {
        params: Vec<f64>,
    },
    Stochastic {
        beta: Vec<MACoefficients>,
    },
    Deterministic {
        drift: Vec<f64>,
    },
    FiniteSize {
        drift: Vec<f64>,
        eta: Vec<f64>,
        beta: Vec<MACoefficients>,
    },
}

fn prepare(
    config: &ResponseConfig,
    table: Option<&ReductionTable>,
    seeds: &SeedTree,
) -> Result<Driver> {
    let params = config
        .law
        .sample_many(config.system.m, &mut seeds.stream(domain::PARAMETERS, 0, 0));
    let table = match (config.model, table) {
        (ResponseModel::Full, _) => return Ok(Driver::Full { params }),
        (_, Some(t)) => t,
        (_, None) => return Err(Error::config("reduced models need a reduction table")),
    };
    let drift = || -> Result<Vec<f64>> {
        config
            .epsilons
            .iter()
            .map(|&e| table.mean_drift(&config.law, e))
            .collect()
    };
    let beta = || -> Result<Vec<MACoefficients>> {
        config
            .epsilons
            .iter()
            .map(|&e| {
                let cov = lag_covariance(table, &config.law, e, config.max_lag)?;
                spectral_factorize(&cov, config.spectral_grid)
            })
            .collect()
    };
    Ok(match config.model {
        ResponseModel::Full => unreachable!(),
        ResponseModel::StochasticLimit => Driver::Stochastic { beta: beta()? },
        ResponseModel::DeterministicLimit => Driver::Deterministic { drift: drift()? },
        ResponseModel::FiniteSize => Driver::FiniteSize {
            drift: drift()?,
            eta: eta_for_params(table, &config.law, &config.epsilons, params)?.eta,
            beta: beta()?,
        },
    })
}

/// Runs one series at perturbation `i` and feeds every recorded `Q_n` to `visit`.
fn run_one<F: FnMut(f64)>(
    config: &ResponseConfig,
    driver: &Driver,
    i: usize,
    run: &RunLength,
    rng: &mut crate::rng::StreamRng,
    mut visit: F,
) -> Result<RunStats> {
    let s = &config.system;
    let eps = config.epsilons[i];
    match driver {
        Driver::Full { params } => simulate_visit(s, params, eps, run, rng, |q, _| visit(q)),
        Driver::Stochastic { beta } => {
            simulate_stochastic_limit_visit(s, &beta[i], run, rng, visit)
        }
        Driver::Deterministic { drift } => {
            simulate_deterministic_limit_visit(s, drift[i], run, rng, visit)
        }
        Driver::FiniteSize { drift, eta, beta } => {
            simulate_finite_size_visit(s, drift[i], eta[i], &beta[i], run, rng, visit)
        }
    }
}

/// Time average and lag covariances of one run.
struct RunSummary {
    mean: f64,
    cov: Option<Vec<f64>>,
    stats: RunStats,
}

fn summarize(
    config: &ResponseConfig,
    driver: &Driver,
    i: usize,
    run: &RunLength,
    rng: &mut crate::rng::StreamRng,
    with_cov: bool,
) -> Result<RunSummary> {
    if with_cov {
        let mut acc = StreamingAutocov::new(config.gk_lags().min(run.n.saturating_sub(1)));
        let stats = run_one(config, driver, i, run, rng, |q| acc.push(q))?;
        let (mean, cov) = acc.finish()?;
        Ok(RunSummary {
            mean,
            cov: Some(cov),
            stats,
        })
    } else {
        let mut sum = 0.0;
        let stats = run_one(config, driver, i, run, rng, |q| sum += q)?;
        Ok(RunSummary {
            mean: sum / run.n as f64,
            cov: None,
            stats,
        })
    }
}

/// Per-realization time averages and the `σ_i` that weight them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseSamples {
    pub epsilons: Vec<f64>,
    pub n: usize,
    /// `means[j][i]`: realization `j`, perturbation `i`.
    pub means: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Step counts summed over every run, reference runs included.
    pub stats: RunStats,
}

impl ResponseSamples {
    pub fn realizations(&self) -> usize {
        self.means.len()
    }

    pub fn datasets(&self) -> Result<Vec<ResponseDataset>> {
        self.means
            .iter()
            .map(|row| {
                ResponseDataset::new(
                    self.epsilons
                        .iter()
                        .zip(row)
                        .zip(&self.sigma)
                        .map(|((&epsilon, &mean), &sigma)| ResponseEntry {
                            epsilon,
                            mean,
                            sigma,
                        })
                        .collect(),
                    self.n,
                )
            })
            .collect()
    }

    /// `(ε_i, mean over realizations, standard error of that mean, σ_i/√N)`.
    pub fn summary_rows(&self) -> Vec<(f64, f64, f64, f64)> {
        let r = self.realizations() as f64;
        self.epsilons
            .iter()
            .enumerate()
            .map(|(i, &eps)| {
                let mean = self.means.iter().map(|row| row[i]).sum::<f64>() / r;
                let var = if self.realizations() > 1 {
                    self.means
                        .iter()
                        .map(|row| (row[i] - mean).powi(2))
                        .sum::<f64>()
                        / (r - 1.0)
                } else {
                    0.0
                };
                (
                    eps,
                    mean,
                    (var / r).sqrt(),
                    self.sigma[i] / (self.n as f64).sqrt(),
                )
            })
            .collect()
    }

    /// Columns `epsilon, mean, stderr, sigma_ref`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epsilon", "mean", "stderr", "sigma_ref"])?;
        for (eps, mean, se, sref) in self.summary_rows() {
            w.write_record([eps, mean, se, sref].map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Tests order-`ell` response on these samples.
    pub fn analyze(&self, ell: usize) -> Result<TestResult> {
        test_response(&self.datasets()?, ell)
    }
}

/// Simulates every `(realization, perturbation)` pair and estimates `σ_i`.
pub fn collect_samples(
    config: &ResponseConfig,
    table: Option<&ReductionTable>,
    seeds: &SeedTree,
) -> Result<ResponseSamples> {
    config.validate()?;
    let driver = prepare(config, table, seeds)?;
    let k = config.epsilons.len();
    let run = RunLength::new(config.n, config.burn_in);
    let pooled = config.sigma == SigmaSource::Pooled;

    let summaries: Vec<RunSummary> = (0..config.realizations * k)
        .into_par_iter()
        .map(|t| {
            let (j, i) = (t / k, t % k);
            let mut rng = seeds.stream(domain::REALIZATION, j as u32, i as u32);
            summarize(config, &driver, i, &run, &mut rng, pooled)
        })
        .collect::<Result<_>>()?;

    let mut stats = summaries
        .iter()
        .fold(RunStats::default(), |acc, s| acc.merge(s.stats));
    let sigma = match &config.sigma {
        SigmaSource::Given(s) => s.clone(),
        SigmaSource::Pooled => (0..k)
            .map(|i| {
                let lags = config.gk_lags().min(config.n.saturating_sub(1)) + 1;
                let mut avg = vec![0.0; lags];
                for j in 0..config.realizations {
                    let cov = summaries[j * k + i]
                        .cov
                        .as_ref()
                        .expect("pooled runs keep covariances");
                    for (a, c) in avg.iter_mut().zip(cov) {
                        *a += c;
                    }
                }
                avg.iter_mut()
                    .for_each(|a| *a /= config.realizations as f64);
                Ok(green_kubo_from_covariance(&avg, config.n, config.cutoff)?
                    .variance
                    .sqrt())
            })
            .collect::<Result<_>>()?,
        SigmaSource::Reference { length } => {
            let reference = RunLength::new(*length, config.burn_in);
            let runs: Vec<(f64, RunStats)> = (0..k)
                .into_par_iter()
                .map(|i| {
                    let mut rng = seeds.stream(domain::REFERENCE, 0, i as u32);
                    let s = summarize(config, &driver, i, &reference, &mut rng, true)?;
                    let cov = s.cov.expect("reference runs keep covariances");
                    let gk = green_kubo_from_covariance(&cov, *length, config.cutoff)?;
                    Ok((gk.variance.sqrt(), s.stats))
                })
                .collect::<Result<_>>()?;
            for (_, s) in &runs {
                stats = stats.merge(*s);
            }
            runs.into_iter().map(|(s, _)| s).collect()
        }
    };

    Ok(ResponseSamples {
        epsilons: config.epsilons.clone(),
        n: config.n,
        means: summaries
            .chunks(k)
            .map(|row| row.iter().map(|s| s.mean).collect())
            .collect(),
        sigma,
        stats,
    })
}

/// Full experiment: samples, then the order-`ell` test.
pub fn run_response_experiment(
    config: &ResponseConfig,
    ell: usize,
    table: Option<&ReductionTable>,
    seeds: &SeedTree,
) -> Result<(ResponseSamples, TestResult)> {
    if config.epsilons.len() <= ell + 1 {
        return Err(Error::config(format!(
            "order {ell} needs more than {} perturbations",
            ell + 1
        )));
    }
    let samples = collect_samples(config, table, seeds)?;
    let result = samples.analyze(ell)?;
    Ok((samples, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::{EscapePolicy, Gamma, ObservableKind};

    fn small(model: ResponseModel) -> ResponseConfig {
        let spec = SystemSpec::diffusive(8).with_escape(EscapePolicy::Saturate);
        let mut c = ResponseConfig::new(model, spec, 4000, 3);
        c.burn_in = 100;
        c.sigma = SigmaSource::Pooled;
        c
    }

    #[test]
    fn full_model_is_reproducible_and_order_independent() {
        let c = small(ResponseModel::Full);
        let seeds = SeedTree::new(21);
        let a = collect_samples(&c, None, &seeds).unwrap();
        let b = collect_samples(&c, None, &seeds).unwrap();
        assert_eq!(a, b);
        // Adding a realization leaves the existing ones untouched.
        let mut more = c.clone();
        more.realizations = 4;
        let m = collect_samples(&more, None, &seeds).unwrap();
        assert_eq!(&m.means[..3], &a.means[..]);
        assert!(a.sigma.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn given_sigmas_pass_through() {
        let mut c = small(ResponseModel::Full);
        c.sigma = SigmaSource::Given(vec![0.5; 9]);
        let s = collect_samples(&c, None, &SeedTree::new(1)).unwrap();
        assert_eq!(s.sigma, vec![0.5; 9]);
        let res = s.analyze(1).unwrap();
        assert_eq!(res.dof, 7);
        assert_eq!(res.realizations, 3);
    }

    #[test]
    fn reduced_models_require_a_table() {
        let c = small(ResponseModel::StochasticLimit);
        assert!(matches!(
            collect_samples(&c, None, &SeedTree::new(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = small(ResponseModel::Full);
        c.epsilons = vec![0.0, 0.01];
        assert!(c.validate().is_err());
        let mut c = small(ResponseModel::Full);
        c.sigma = SigmaSource::Given(vec![1.0]);
        assert!(c.validate().is_err());
        let mut c = small(ResponseModel::Full);
        c.system.gamma = Gamma::One;
        c.system.observable = ObservableKind::Square;
        assert!(c.validate().is_ok());
        assert!(
            run_response_experiment(&small(ResponseModel::Full), 7, None, &SeedTree::new(1))
                .is_err()
        );
    }

    #[test]
    fn csv_columns() {
        let s = ResponseSamples {
            epsilons: vec![0.0, 0.1, 0.2],
            n: 100,
            means: vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]],
            sigma: vec![1.0, 2.0, 3.0],
            stats: RunStats::default(),
        };
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epsilon,mean,stderr,sigma_ref"));
        assert_eq!(lines.next(), Some("0,2,1,0.1"));
    }
}
