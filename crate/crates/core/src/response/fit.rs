//! Weighted polynomial fits of ensemble means against the perturbation and
//! the χ² test of the fitted response order.
//!
//! Each perturbation `ε_i` contributes a time average `Ψ̄_i` with known
//! asymptotic standard deviation `σ_i/√N`. Under order-`ℓ` response the
//! weighted residuals of a degree-`ℓ` fit are `ξ/√N` with `ξ` standard normal,
//! so `χ² = N Σ (Y − HY)²` follows `χ²_{K−(ℓ+1)}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::gamma_ur;

use crate::{Error, Result};

/// Condition numbers of the design above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// One perturbation: `ε_i`, the time average `Ψ̄_i` and its Green–Kubo `σ_i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub epsilon: f64,
    pub mean: f64,
    pub sigma: f64,
}

/// Time averages over `n` steps at `K > 2` distinct perturbations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseDataset {
    entries: Vec<ResponseEntry>,
    n: usize,
}

impl ResponseDataset {
    pub fn new(entries: Vec<ResponseEntry>, n: usize) -> Result<Self> {
        if entries.len() <= 2 {
            return Err(Error::config(format!(
                "need more than two perturbations, got {}",
                entries.len()
            )));
        }
        if n == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        for (i, e) in entries.iter().enumerate() {
            if !(e.sigma > 0.0) || !e.sigma.is_finite() {
                return Err(Error::config(format!(
                    "sigma_{i} = {} is not positive",
                    e.sigma
                )));
            }
            if !e.epsilon.is_finite() || !e.mean.is_finite() {
                return Err(Error::config(format!("entry {i} is not finite")));
            }
            if entries[..i].iter().any(|o| o.epsilon == e.epsilon) {
                return Err(Error::config(format!(
                    "epsilon {} appears twice",
                    e.epsilon
                )));
            }
        }
        Ok(Self { entries, n })
    }

    pub fn entries(&self) -> &[ResponseEntry] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.epsilon).collect()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.sigma).collect()
    }

    /// `Y_i = Ψ̄_i / σ_i`.
    pub fn weighted_means(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|e| e.mean / e.sigma))
    }
}

/// Row `i` is `(1, δε_i, …, δε_i^ℓ) / σ_i` with `δε_i = ε_i − ε_0`, the offset
/// from the first perturbation.
pub fn build_design(epsilons: &[f64], sigmas: &[f64], ell: usize) -> Result<DMatrix<f64>> {
    if ell == 0 {
        return Err(Error::config("response order must be at least 1"));
    }
    if epsilons.len() != sigmas.len() {
        return Err(Error::config("epsilons and sigmas differ in length"));
    }
    let k = epsilons.len();
    if k <= ell + 1 {
        return Err(Error::config(format!(
            "order {ell} needs more than {} perturbations, got {k}",
            ell + 1
        )));
    }
    let origin = epsilons[0];
    let design = DMatrix::from_fn(k, ell + 1, |i, j| {
        (epsilons[i] - origin).powi(j as i32) / sigmas[i]
    });
    let sv = design.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) {
        return Err(Error::RankDeficient(format!(
            "{} columns but a zero singular value (repeated perturbations?)",
            ell + 1
        )));
    }
    let cond = smax / smin;
    if cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    Ok(design)
}

/// Weighted least-squares coefficients and the projection onto the design's column space.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub ell: usize,
    /// `α̂_0..α̂_ℓ` in powers of `δε`.
    pub coefficients: Vec<f64>,
    /// `H = D (DᵀD)⁻¹ Dᵀ`.
    pub hat: DMatrix<f64>,
    pub rank: usize,
}

impl FitResult {
    /// `H Y`.
    pub fn fitted(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.hat * y
    }
}

/// `α̂ = (DᵀD)⁻¹ DᵀY`, computed through the thin SVD `D = U Σ Vᵀ` so that
/// `H = U Uᵀ` is symmetric and idempotent to rounding.
pub fn wls_fit(dataset: &ResponseDataset, ell: usize) -> Result<FitResult> {
    let design = build_design(&dataset.epsilons(), &dataset.sigmas(), ell)?;
    let y = dataset.weighted_means();
    let svd = design.svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let uty = u.transpose() * &y;
    let scaled = DVector::from_iterator(
        uty.len(),
        uty.iter()
            .zip(svd.singular_values.iter())
            .map(|(c, s)| c / s),
    );
    let coefficients = (v_t.transpose() * scaled).iter().copied().collect();
    Ok(FitResult {
        ell,
        coefficients,
        hat: u * u.transpose(),
        rank: ell + 1,
    })
}

/// `χ² = N Σ (Y_i − (HY)_i)²`.
pub fn chi2_statistic(dataset: &ResponseDataset, fit: &FitResult) -> f64 {
    let y = dataset.weighted_means();
    let residual = &y - fit.fitted(&y);
    dataset.n() as f64 * residual.norm_squared()
}

/// `K − (ℓ + 1)`.
pub fn degrees_of_freedom(k: usize, ell: usize) -> usize {
    k.saturating_sub(ell + 1)
}

/// `q̂ = (1/R) Σ_j (χ²_j − dof)/N`.
pub fn breakdown_parameter(chi2_values: &[f64], dof: usize, n: usize) -> f64 {
    let r = chi2_values.len().max(1) as f64;
    chi2_values
        .iter()
        .map(|c| (c - dof as f64) / n as f64)
        .sum::<f64>()
        / r
}

/// Upper tail `P(χ²_dof > chi2)` via the regularized incomplete gamma function.
pub fn p_value(chi2: f64, dof: usize) -> f64 {
    if chi2 <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, chi2 / 2.0).clamp(0.0, 1.0)
}

/// `q_α = (F⁻¹_dof(1 − α) − dof)/N`.
pub fn threshold(alpha: f64, dof: usize, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::config(format!("invalid degrees of freedom {dof}: {e}")))?;
    Ok((dist.inverse_cdf(1.0 - alpha) - dof as f64) / n as f64)
}

/// Outcome of the response-order test over a set of realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Mean χ² over realizations, `dof + N q̂`.
    pub chi2: f64,
    pub dof: usize,
    /// `1 − F_dof(dof + N q̂)`.
    pub p_value: f64,
    pub q_hat: f64,
    /// Fit of the realization-averaged means.
    pub coefficients: Vec<f64>,
    pub ell: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub realizations: usize,
    pub per_realization_chi2: Vec<f64>,
    pub per_realization_p: Vec<f64>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Tests order-`ℓ` response on every realization and aggregates through `q̂`.
///
/// All datasets must share perturbations, `σ_i` and `N`.
pub fn test_response(realizations: &[ResponseDataset], ell: usize) -> Result<TestResult> {
    let first = realizations
        .first()
        .ok_or_else(|| Error::InsufficientData("no realizations".into()))?;
    let n = first.n();
    let k = first.len();
    for d in realizations {
        if d.n() != n || d.epsilons() != first.epsilons() || d.sigmas() != first.sigmas() {
            return Err(Error::config(
                "realizations disagree on perturbations, sigmas or N",
            ));
        }
    }
    let dof = degrees_of_freedom(k, ell);
    let mut chi2s = Vec::with_capacity(realizations.len());
    for d in realizations {
        chi2s.push(chi2_statistic(d, &wls_fit(d, ell)?));
    }
    let q_hat = breakdown_parameter(&chi2s, dof, n);
    let averaged = ResponseDataset::new(
        first
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| ResponseEntry {
                mean: realizations
                    .iter()
                    .map(|d| d.entries()[i].mean)
                    .sum::<f64>()
                    / realizations.len() as f64,
                ..*e
            })
            .collect(),
        n,
    )?;
    let chi2 = dof as f64 + n as f64 * q_hat;
    Ok(TestResult {
        chi2,
        dof,
        p_value: p_value(chi2, dof),
        q_hat,
        coefficients: wls_fit(&averaged, ell)?.coefficients,
        ell,
        n,
        realizations: realizations.len(),
        per_realization_p: chi2s.iter().map(|&c| p_value(c, dof)).collect(),
        per_realization_chi2: chi2s,
    })
}
