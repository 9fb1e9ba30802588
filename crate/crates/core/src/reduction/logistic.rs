//! Statistics of the plain logistic map `x ↦ α x (1 − x)` at one parameter.
//!
//! Regular parameters (a stable cycle attracts the critical point) get exact
//! cycle averages; everything else is estimated by Monte Carlo. The cocycle
//! unit only advances on half of its steps, so its lag correlations are
//! binomial mixtures of the plain-map ones (see [`cocycle_lag_from_logistic`]).

use rand::Rng;

use crate::micro::ObservableKind;

/// Transient iterated from `x = 1/2` before looking for a cycle.
pub const CLASSIFY_TRANSIENT: usize = 100_000;
/// Two iterates closer than this close a cycle.
pub const CYCLE_TOLERANCE: f64 = 1e-12;
/// Longest cycle searched for.
pub const MAX_PERIOD: usize = 128;

pub const DEFAULT_MC_RUNS: usize = 10;
/// Run length with many small prime factors, so short undetected cycles
/// still average over whole periods.
pub const DEFAULT_MC_STEPS: usize = 399_168;
/// Transient discarded at the start of every Monte Carlo run.
pub const MC_TRANSIENT: usize = 1_000;

#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    Regular(PeriodicOrbit),
    Chaotic,
}

/// A stable cycle, starting from an arbitrary point on it.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub points: Vec<f64>,
}

impl PeriodicOrbit {
    pub fn period(&self) -> usize {
        self.points.len()
    }
}

/// What a [`LogisticStats`] row records about the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Regular { period: usize },
    Chaotic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticStats {
    pub alpha: f64,
    pub regime: Regime,
    /// `E^α[φ]`.
    pub mean_phi: f64,
    /// `E^α[φ_0 φ_i]` for `i = 0..=L` under the plain logistic map.
    pub lag_corr: Vec<f64>,
}

impl LogisticStats {
    pub fn lags(&self) -> usize {
        self.lag_corr.len().saturating_sub(1)
    }
}

#[inline]
fn logistic(alpha: f64, x: f64) -> f64 {
    alpha * x * (1.0 - x)
}

/// Finds a stable cycle of period `≤ MAX_PERIOD` attracting `x = 1/2`, if any.
pub fn classify_parameter(alpha: f64) -> Classification {
    let mut x = 0.5;
    for _ in 0..CLASSIFY_TRANSIENT {
        x = logistic(alpha, x);
    }
    let start = x;
    let mut points = Vec::with_capacity(MAX_PERIOD);
    let mut y = start;
    for _ in 0..MAX_PERIOD {
        points.push(y);
        y = logistic(alpha, y);
        if (y - start).abs() < CYCLE_TOLERANCE {
            let multiplier: f64 = points.iter().map(|&p| alpha * (1.0 - 2.0 * p)).product();
            if multiplier.abs() < 1.0 {
                return Classification::Regular(PeriodicOrbit { points });
            }
            return Classification::Chaotic;
        }
    }
    Classification::Chaotic
}

/// Exact averages over a stable cycle.
pub fn logistic_stats_regular(
    alpha: f64,
    orbit: &PeriodicOrbit,
    lags: usize,
    observable: ObservableKind,
) -> LogisticStats {
    let p = orbit.period();
    let phi: Vec<f64> = orbit
        .points
        .iter()
        .map(|&x| observable.eval(x, alpha))
        .collect();
    let mean_phi = phi.iter().sum::<f64>() / p as f64;
    let lag_corr = (0..=lags)
        .map(|i| (0..p).map(|k| phi[k] * phi[(k + i) % p]).sum::<f64>() / p as f64)
        .collect();
    LogisticStats {
        alpha,
        regime: Regime::Regular { period: p },
        mean_phi,
        lag_corr,
    }
}

/// Chains iterated side by side; independent chains hide the latency of the
/// serial logistic recursion.
const MC_INTERLEAVE: usize = 4;

/// Monte Carlo estimates over `runs` independent runs of `steps` recorded iterates.
pub fn logistic_stats_mc<R: Rng + ?Sized>(
    alpha: f64,
    lags: usize,
    runs: usize,
    steps: usize,
    observable: ObservableKind,
    rng: &mut R,
) -> LogisticStats {
    let runs = runs.max(1);
    // The starting points are the only random draws, so taking them all up
    // front gives the same values as drawing one per run.
    let starts: Vec<f64> = (0..runs)
        .map(|_| loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        })
        .collect();
    let len = steps + lags;
    let mut lag_acc = vec![0.0; lags + 1];
    let mut mean_acc = 0.0;
    let mut phi = vec![0.0; MC_INTERLEAVE.min(runs) * len];
    let mut run_lags = vec![0.0; lags + 1];
    for group in starts.chunks(MC_INTERLEAVE) {
        let mut xs = [0.0f64; MC_INTERLEAVE];
        xs[..group.len()].copy_from_slice(group);
        let xs = &mut xs[..group.len()];
        for _ in 0..MC_TRANSIENT {
            for x in xs.iter_mut() {
                *x = logistic(alpha, *x);
            }
        }
        for t in 0..len {
            for (g, x) in xs.iter_mut().enumerate() {
                phi[g * len + t] = observable.eval(*x, alpha);
                *x = logistic(alpha, *x);
            }
        }
        for run_phi in phi.chunks_exact(len).take(group.len()) {
            mean_acc += run_phi[..steps].iter().sum::<f64>() / steps as f64;
            run_lags.iter_mut().for_each(|v| *v = 0.0);
            lag_sums(run_phi, steps, &mut run_lags);
            for (acc, s) in lag_acc.iter_mut().zip(&run_lags) {
                *acc += s / steps as f64;
            }
        }
    }
    let runs = runs as f64;
    LogisticStats {
        alpha,
        regime: Regime::Chaotic,
        mean_phi: mean_acc / runs,
        lag_corr: lag_acc.into_iter().map(|v| v / runs).collect(),
    }
}

/// Classification followed by exact or Monte Carlo statistics.
pub fn logistic_stats<R: Rng + ?Sized>(
    alpha: f64,
    lags: usize,
    runs: usize,
    steps: usize,
    observable: ObservableKind,
    rng: &mut R,
) -> LogisticStats {
    match classify_parameter(alpha) {
        Classification::Regular(orbit) => logistic_stats_regular(alpha, &orbit, lags, observable),
        Classification::Chaotic => logistic_stats_mc(alpha, lags, runs, steps, observable, rng),
    }
}

/// Lags handled per pass; their accumulators stay in registers.
const LAG_BLOCK: usize = 64;

#[inline(always)]
fn lag_sums_generic(phi: &[f64], steps: usize, out: &mut [f64]) {
    // Each lag is still summed over `n` in increasing order, so blocking
    // does not change any result.
    for (b, chunk) in out.chunks_mut(LAG_BLOCK).enumerate() {
        let base = b * LAG_BLOCK;
        let width = chunk.len();
        let mut acc = [0.0f64; LAG_BLOCK];
        acc[..width].copy_from_slice(chunk);
        if width == LAG_BLOCK {
            for n in 0..steps {
                let p = phi[n];
                let f: &[f64; LAG_BLOCK] = phi[n + base..n + base + LAG_BLOCK]
                    .try_into()
                    .expect("block of LAG_BLOCK");
                for l in 0..LAG_BLOCK {
                    acc[l] += p * f[l];
                }
            }
        } else {
            for n in 0..steps {
                let p = phi[n];
                for (a, &f) in acc[..width]
                    .iter_mut()
                    .zip(&phi[n + base..n + base + width])
                {
                    *a += p * f;
                }
            }
        }
        chunk.copy_from_slice(&acc[..width]);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn lag_sums_avx512(phi: &[f64], steps: usize, out: &mut [f64]) {
    lag_sums_generic(phi, steps, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn lag_sums_avx2(phi: &[f64], steps: usize, out: &mut [f64]) {
    lag_sums_generic(phi, steps, out)
}

/// `out[i] += Σ_{n < steps} φ_n φ_{n+i}`.
fn lag_sums(phi: &[f64], steps: usize, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: feature detected at runtime.
            return unsafe { lag_sums_avx512(phi, steps, out) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: feature detected at runtime.
            return unsafe { lag_sums_avx2(phi, steps, out) };
        }
    }
    lag_sums_generic(phi, steps, out)
}

/// Weights below this are dropped from binomial mixtures.
pub const BINOMIAL_TAIL_CUTOFF: f64 = 1e-15;

/// `(i, P(N = i))` for `N ~ Binomial(m, 1/2)`, computed in log space with the
/// negligible tails removed.
pub fn binomial_half_weights(m: usize) -> Vec<(usize, f64)> {
    let ln2m = m as f64 * std::f64::consts::LN_2;
    (0..=m)
        .filter_map(|i| {
            let w = (statrs::function::factorial::ln_binomial(m as u64, i as u64) - ln2m).exp();
            (w >= BINOMIAL_TAIL_CUTOFF).then_some((i, w))
        })
        .collect()
}

/// `Σ_i P(N(m) = i) values[i]` with `N(m) ~ Binomial(m, 1/2)`.
pub fn binomial_mixture(values: &[f64], m: usize) -> f64 {
    assert!(
        m < values.len(),
        "lag {m} beyond the {} tabulated values",
        values.len()
    );
    binomial_half_weights(m)
        .into_iter()
        .map(|(i, w)| w * values[i])
        .sum()
}

/// Lag-`m` correlation `E[φ(q_0) φ(q_m)]` of the cocycle unit, from the plain-map
/// correlations: after `m` steps the unit has advanced `N(m) ~ Binomial(m, 1/2)` times.
pub fn cocycle_lag_from_logistic(stats: &LogisticStats, m: usize) -> f64 {
    binomial_mixture(&stats.lag_corr, m)
}
