//! Samplers for the limiting drivers and the three reduced macroscopic systems:
//!
//! - stochastic limit (`γ = 1/2`): `Q_{n+1} = (A0 + A1 ζ_n) Q_n (1 − Q_n)`;
//! - deterministic limit (`γ = 1`): `A = A0 + A1 C` with `C = ⟨E[φ]⟩`;
//! - finite size (`γ = 1`): `Z_n = C + η/√M + ζ_n/√M`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::spectral::MACoefficients;
use super::table::ReductionTable;
use crate::lanes::convolve;
use crate::law::ParameterLaw;
use crate::micro::{logistic_driven, RunLength, RunStats, SystemSpec};
use crate::{Error, Result};

const ZETA_CHUNK: usize = 4096;
/// Stationary Gaussian moving average `ζ_n = Σ_{m ≤ m_max} β_m X_{n−m}`,
/// produced in chunks. The innovation window starts full, so the very first
/// value is already stationary.
#[derive(Clone, Debug)]
pub struct ZetaStream {
    reversed: Vec<f64>,
    innovations: Vec<f64>,
    out: Vec<f64>,
    pos: usize,
}

impl ZetaStream {
    pub fn new<R: Rng + ?Sized>(beta: &MACoefficients, rng: &mut R) -> Result<Self> {
        if beta.beta.is_empty() {
            return Err(Error::config("empty moving-average coefficients"));
        }
        let reversed: Vec<f64> = beta.beta.iter().rev().copied().collect();
        let width = reversed.len();
        let mut stream = Self {
            reversed,
            innovations: vec![0.0; width - 1 + ZETA_CHUNK],
            out: vec![0.0; ZETA_CHUNK],
            pos: 0,
        };
        for x in stream.innovations[..width - 1].iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        stream.fill(rng);
        Ok(stream)
    }

    /// Draws a fresh chunk of innovations behind the retained window.
    fn fill<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let keep = self.reversed.len() - 1;
        for x in self.innovations[keep..].iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        convolve(&self.reversed, &self.innovations, &mut self.out);
        self.pos = 0;
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if self.pos == ZETA_CHUNK {
            let keep = self.reversed.len() - 1;
            let len = self.innovations.len();
            self.innovations.copy_within(len - keep..len, 0);
            self.fill(rng);
        }
        let v = self.out[self.pos];
        self.pos += 1;
        v
    }
}

fn zeta_stream<R: Rng + ?Sized>(beta: &MACoefficients, rng: &mut R) -> Result<ZetaStream> {
    ZetaStream::new(beta, rng)
}

/// `n` consecutive values of the stationary process.
pub fn sample_zeta<R: Rng + ?Sized>(
    beta: &MACoefficients,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut stream = zeta_stream(beta, rng)?;
    Ok((0..n).map(|_| stream.next(rng)).collect())
}

/// One draw of the finite-size parameter term `η^ε` for every `ε` in `epsilons`.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaRealization {
    pub epsilons: Vec<f64>,
    pub eta: Vec<f64>,
    pub m: usize,
    /// The unperturbed parameters `a0^{(j)}` behind this draw.
    pub params: Vec<f64>,
}

/// Draws `M` parameters from `law` and returns
/// `η^ε = √M [ (1/M) Σ_j E^{a0_j + ε}[φ] − ⟨E^ε[φ]⟩ ]` for each `ε`.
///
/// Per-parameter means are read at the nearest table node, the same nodes the
/// quadrature uses, so the draw is consistent with the quadrature covariance.
pub fn sample_eta<R: Rng + ?Sized>(
    table: &ReductionTable,
    law: &ParameterLaw,
    epsilons: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<EtaRealization> {
    EtaSampler::new(table, law, epsilons)?.sample(m, rng)
}

/// `η^ε` for a given parameter draw.
pub fn eta_for_params(
    table: &ReductionTable,
    law: &ParameterLaw,
    epsilons: &[f64],
    params: Vec<f64>,
) -> Result<EtaRealization> {
    EtaSampler::new(table, law, epsilons)?.for_params(params)
}

/// Repeated draws of `η` for fixed perturbations; the law averages
/// `⟨E^ε[φ]⟩` are computed once.
#[derive(Clone, Debug)]
pub struct EtaSampler<'a> {
    table: &'a ReductionTable,
    law: ParameterLaw,
    epsilons: Vec<f64>,
    drifts: Vec<f64>,
}

impl<'a> EtaSampler<'a> {
    pub fn new(table: &'a ReductionTable, law: &ParameterLaw, epsilons: &[f64]) -> Result<Self> {
        let drifts = epsilons
            .iter()
            .map(|&eps| table.mean_drift(law, eps))
            .collect::<Result<_>>()?;
        Ok(Self {
            table,
            law: *law,
            epsilons: epsilons.to_vec(),
            drifts,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<EtaRealization> {
        if m == 0 {
            return Err(Error::config("M must be at least 1"));
        }
        self.for_params(self.law.sample_many(m, rng))
    }

    pub fn for_params(&self, params: Vec<f64>) -> Result<EtaRealization> {
        let m = params.len();
        if m == 0 {
            return Err(Error::config("M must be at least 1"));
        }
        let mut eta = Vec::with_capacity(self.epsilons.len());
        for (&eps, &drift) in self.epsilons.iter().zip(&self.drifts) {
            let mut sum = 0.0;
            for &a0 in &params {
                sum += self.table.nearest(a0 + eps)?.mean_phi;
            }
            eta.push((m as f64).sqrt() * (sum / m as f64 - drift));
        }
        Ok(EtaRealization {
            epsilons: self.epsilons.clone(),
            eta,
            m,
            params,
        })
    }
}

fn drive<R, D, F>(
    spec: &SystemSpec,
    run: &RunLength,
    rng: &mut R,
    mut param: D,
    mut visit: F,
) -> Result<RunStats>
where
    R: Rng + ?Sized,
    D: FnMut(&mut R) -> f64,
    F: FnMut(f64),
{
    if run.n == 0 {
        return Err(Error::config("N must be at least 1"));
    }
    let mut q = run.initial_q(rng);
    let mut stats = RunStats::default();
    for step in 0..(run.burn_in + run.n) as u64 {
        if step >= run.burn_in as u64 {
            visit(q);
        }
        let a = param(rng);
        let (next, capped) = logistic_driven(q, a, step, spec.escape)?;
        q = next;
        stats.steps += 1;
        stats.saturated += capped as u64;
    }
    Ok(stats)
}

/// Stochastic limit `A = A0 + A1 ζ_n`, with the Gaussian driver of coefficients `beta`.
pub fn simulate_stochastic_limit_visit<R, F>(
    spec: &SystemSpec,
    beta: &MACoefficients,
    run: &RunLength,
    rng: &mut R,
    visit: F,
) -> Result<RunStats>
where
    R: Rng + ?Sized,
    F: FnMut(f64),
{
    let mut zeta = zeta_stream(beta, rng)?;
    let (base, gain) = (spec.base, spec.gain);
    drive(spec, run, rng, |rng| base + gain * zeta.next(rng), visit)
}

pub fn simulate_stochastic_limit<R: Rng + ?Sized>(
    spec: &SystemSpec,
    beta: &MACoefficients,
    run: &RunLength,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(run.n);
    simulate_stochastic_limit_visit(spec, beta, run, rng, |q| out.push(q))?;
    Ok(out)
}

/// Plain logistic map at `A = A0 + A1 C` with `C = drift`.
pub fn simulate_deterministic_limit_visit<R, F>(
    spec: &SystemSpec,
    drift: f64,
    run: &RunLength,
    rng: &mut R,
    visit: F,
) -> Result<RunStats>
where
    R: Rng + ?Sized,
    F: FnMut(f64),
{
    let a = spec.base + spec.gain * drift;
    drive(spec, run, rng, |_| a, visit)
}

pub fn simulate_deterministic_limit<R: Rng + ?Sized>(
    spec: &SystemSpec,
    drift: f64,
    run: &RunLength,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(run.n);
    simulate_deterministic_limit_visit(spec, drift, run, rng, |q| out.push(q))?;
    Ok(out)
}

/// Finite-size driver `Z_n = C + (η + ζ_n)/√M`, `M` from the system, with `η` fixed for the run.
pub fn simulate_finite_size_visit<R, F>(
    spec: &SystemSpec,
    drift: f64,
    eta: f64,
    beta: &MACoefficients,
    run: &RunLength,
    rng: &mut R,
    visit: F,
) -> Result<RunStats>
where
    R: Rng + ?Sized,
    F: FnMut(f64),
{
    spec.validate()?;
    let inv_sqrt_m = 1.0 / (spec.m as f64).sqrt();
    let mut zeta = zeta_stream(beta, rng)?;
    let offset = drift + eta * inv_sqrt_m;
    let (base, gain) = (spec.base, spec.gain);
    drive(
        spec,
        run,
        rng,
        |rng| base + gain * (offset + zeta.next(rng) * inv_sqrt_m),
        visit,
    )
}

pub fn simulate_finite_size<R: Rng + ?Sized>(
    spec: &SystemSpec,
    drift: f64,
    eta: f64,
    beta: &MACoefficients,
    run: &RunLength,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(run.n);
    simulate_finite_size_visit(spec, drift, eta, beta, run, rng, |q| out.push(q))?;
    Ok(out)
}
