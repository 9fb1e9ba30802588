//! Lag covariance of the limiting driver and its minimum-phase moving-average
//! factorization.
//!
//! Given `R(m)`, the spectral density `S(θ) = R(0) + 2 Σ R(m) cos mθ` factors
//! as `|B(e^{iθ})|²` with `B(z) = Σ β_m z^m` analytic and zero-free in the
//! unit disc. `log B` is the causal half of the cepstrum of `S`, so `β`
//! follows from three FFTs: `½ log S → b_m`, `b_m → B(e^{iθ})`, `B → β_m`.

use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::logistic::binomial_mixture;
use super::table::ReductionTable;
use crate::law::ParameterLaw;
use crate::{Error, Result};

pub const DEFAULT_MAX_LAG: usize = 256;
pub const DEFAULT_SPECTRAL_GRID: usize = 4096;
/// `S(θ)` must exceed this fraction of `R(0)` everywhere on the grid.
pub const SPECTRAL_FLOOR: f64 = 1e-10;

/// `R(m) = cov(ζ_n, ζ_{n+m})` for `m = 0..=m_max` at one perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct LagCovariance {
    pub r: Vec<f64>,
    pub epsilon: f64,
}

impl LagCovariance {
    pub fn new(r: Vec<f64>, epsilon: f64) -> Self {
        Self { r, epsilon }
    }

    pub fn max_lag(&self) -> usize {
        self.r.len().saturating_sub(1)
    }

    /// `S(θ_k)` on `θ_k = 2πk / n_grid`.
    pub fn spectral_density(&self, n_grid: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n_grid];
        for (m, &r) in self.r.iter().enumerate() {
            if m == 0 {
                buf[0].re += r;
            } else {
                // Lag m and −m alias onto the grid; folding keeps S real.
                buf[m % n_grid].re += r;
                buf[(n_grid - m % n_grid) % n_grid].re += r;
            }
        }
        FftPlanner::new().plan_fft_forward(n_grid).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }
}

/// Moving-average coefficients `β_0..β_{m_max}` of `ζ_n = Σ β_m X_{n−m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MACoefficients {
    pub beta: Vec<f64>,
}

impl MACoefficients {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta }
    }

    /// `Σ_k β_k β_{m+k}` for `m = 0..=max_lag`.
    pub fn autocovariance(&self, max_lag: usize) -> Vec<f64> {
        (0..=max_lag)
            .map(|m| {
                self.beta
                    .iter()
                    .zip(self.beta.iter().skip(m))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m", "beta"])?;
        for (m, b) in self.beta.iter().enumerate() {
            w.write_record([m.to_string(), b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `R(m) = ⟨E[φ_0 φ_m] − E[φ]²⟩_ε` for the cocycle units, each parameter
/// centred on its own mean.
///
/// The binomial lag transfer is linear in the plain-map correlations, so it
/// is applied once to their law average instead of once per α.
pub fn lag_covariance(
    table: &ReductionTable,
    law: &ParameterLaw,
    eps: f64,
    max_lag: usize,
) -> Result<LagCovariance> {
    if max_lag > table.lags() {
        return Err(Error::config(format!(
            "max lag {max_lag} exceeds the {} lags tabulated",
            table.lags()
        )));
    }
    let weights = table.law_weights(law, eps)?;
    let mut avg_lags = vec![0.0; max_lag + 1];
    let mut avg_mean_sq = 0.0;
    for &(k, w) in &weights {
        let s = &table.stats()[k];
        for (acc, c) in avg_lags.iter_mut().zip(&s.lag_corr) {
            *acc += w * c;
        }
        avg_mean_sq += w * s.mean_phi * s.mean_phi;
    }
    let ones = vec![1.0; max_lag + 1];
    let r = (0..=max_lag)
        .map(|m| binomial_mixture(&avg_lags, m) - avg_mean_sq * binomial_mixture(&ones, m))
        .collect();
    Ok(LagCovariance::new(r, eps))
}

/// Minimum-phase factorization of `cov` through the cepstrum of its spectral
/// density on `n_grid` points. Fails if the density is not strictly positive.
pub fn spectral_factorize(cov: &LagCovariance, n_grid: usize) -> Result<MACoefficients> {
    let max_lag = cov.max_lag();
    if cov.r.is_empty() || !(cov.r[0] > 0.0) {
        return Err(Error::config("R(0) must be positive"));
    }
    if n_grid < 2 * (max_lag + 1) || !n_grid.is_multiple_of(2) {
        return Err(Error::config(format!(
            "spectral grid {n_grid} too small or odd for {max_lag} lags"
        )));
    }
    let density = cov.spectral_density(n_grid);
    let floor = SPECTRAL_FLOOR * cov.r[0];
    if let Some((k, &s)) = density.iter().enumerate().find(|(_, &s)| !(s > floor)) {
        return Err(Error::Factorization {
            theta: 2.0 * std::f64::consts::PI * k as f64 / n_grid as f64,
            value: s,
        });
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n_grid);
    let inverse = planner.plan_fft_inverse(n_grid);
    let scale = 1.0 / n_grid as f64;

    // Two-sided cepstrum c_m of ½ log S.
    let mut buf: Vec<Complex64> = density
        .iter()
        .map(|&s| Complex64::new(0.5 * s.ln(), 0.0))
        .collect();
    forward.process(&mut buf);
    let half = n_grid / 2;
    // Fold onto the causal side: b_0 = c_0, b_m = 2 c_m, b_{N/2} = c_{N/2}.
    for (m, c) in buf.iter_mut().enumerate() {
        let v = c.re * scale;
        *c = Complex64::new(
            match m {
                0 => v,
                m if m < half => 2.0 * v,
                m if m == half => v,
                _ => 0.0,
            },
            0.0,
        );
    }
    // log B(e^{iθ_k}) = Σ b_m e^{imθ_k}.
    inverse.process(&mut buf);
    for c in buf.iter_mut() {
        *c = c.exp();
    }
    // β_m = (1/N) Σ_k B(e^{iθ_k}) e^{−imθ_k}.
    forward.process(&mut buf);
    Ok(MACoefficients::new(
        buf.iter().take(max_lag + 1).map(|c| c.re * scale).collect(),
    ))
}
