//! Time averages of a scalar series and their asymptotic (Green–Kubo) variance.

use serde::{Deserialize, Serialize};

use crate::lanes::{dot, lagged_products};
use crate::{Error, Result};

/// Hard cap on the automatic Green–Kubo window.
pub const MAX_LAG_CUTOFF: usize = 200;
/// `|C_j| < C_0/e` must hold for this many consecutive lags to fix `τ`.
pub const EFOLD_RUN: usize = 5;
/// The automatic window sums this many multiples of `τ`.
pub const EFOLD_WINDOWS: usize = 10;

/// `(1/N) Σ Ψ(x_n)`.
pub fn sample_mean_with<F: Fn(f64) -> f64>(xs: &[f64], psi: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    Ok(xs.iter().map(|&x| psi(x)).sum::<f64>() / xs.len() as f64)
}

/// Sample mean with `Ψ` the identity.
pub fn sample_mean(xs: &[f64]) -> Result<f64> {
    sample_mean_with(xs, |x| x)
}

/// Centred lag covariances `C_j = (1/N) Σ_{t<N−j} (x_t − x̄)(x_{t+j} − x̄)` for `j = 0..=max_lag`.
pub fn autocovariance(xs: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if xs.len() <= max_lag {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot resolve lag {max_lag}",
            xs.len()
        )));
    }
    let mean = sample_mean(xs)?;
    let centred: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let n = xs.len() as f64;
    Ok(lagged_products(&centred, max_lag)
        .into_iter()
        .map(|s| s / n)
        .collect())
}

const STREAM_CHUNK: usize = 4096;

/// Sample mean and centred lag covariances of a series seen one value at a
/// time, in `O(max_lag)` memory.
///
/// Products are accumulated about a shift (the first value) to limit
/// cancellation and re-centred on the sample mean at the end; the result
/// agrees with [`autocovariance`] to rounding.
#[derive(Clone, Debug)]
pub struct StreamingAutocov {
    max_lag: usize,
    /// `max_lag` trailing values followed by the pending chunk, all shifted.
    buf: Vec<f64>,
    filled: usize,
    products: Vec<f64>,
    head: Vec<f64>,
    shift: Option<f64>,
    sum: f64,
    count: usize,
}

impl StreamingAutocov {
    pub fn new(max_lag: usize) -> Self {
        Self {
            max_lag,
            buf: vec![0.0; max_lag + STREAM_CHUNK],
            filled: 0,
            products: vec![0.0; max_lag + 1],
            head: Vec::with_capacity(max_lag),
            shift: None,
            sum: 0.0,
            count: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let shift = *self.shift.get_or_insert(x);
        let y = x - shift;
        if self.head.len() < self.max_lag {
            self.head.push(y);
        }
        self.buf[self.max_lag + self.filled] = y;
        self.filled += 1;
        self.sum += y;
        self.count += 1;
        if self.filled == STREAM_CHUNK {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let l = self.max_lag;
        let c = self.filled;
        // Values before the first one pushed are zero-padded, so they add nothing.
        for (j, p) in self.products.iter_mut().enumerate() {
            *p += dot(&self.buf[l..l + c], &self.buf[l - j..l - j + c]);
        }
        self.buf.copy_within(c..c + l, 0);
        self.filled = 0;
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> Option<f64> {
        Some(self.shift? + self.sum / self.count as f64)
    }

    /// `(x̄, C_0..C_L)`.
    pub fn finish(mut self) -> Result<(f64, Vec<f64>)> {
        if self.count <= self.max_lag {
            return Err(Error::InsufficientData(format!(
                "{} samples cannot resolve lag {}",
                self.count, self.max_lag
            )));
        }
        self.flush();
        let n = self.count;
        let m = self.sum / n as f64;
        // The last `max_lag` shifted values sit at the front of the buffer.
        let tail = &self.buf[..self.max_lag];
        let mut head_sum = 0.0;
        let mut tail_sum = 0.0;
        let cov = (0..=self.max_lag)
            .map(|j| {
                if j > 0 {
                    head_sum += self.head[j - 1];
                    tail_sum += tail[self.max_lag - j];
                }
                // Σ_{t<N−j} y_t and Σ_{t≥j} y_t.
                let lead = self.sum - tail_sum;
                let lag = self.sum - head_sum;
                (self.products[j] - m * (lead + lag) + (n - j) as f64 * m * m) / n as f64
            })
            .collect();
        Ok((self.shift.unwrap_or(0.0) + m, cov))
    }
}

/// How many lag covariances enter `σ² = C_0 + 2 Σ_{j ≤ L} C_j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagCutoff {
    /// `L = min(EFOLD_WINDOWS · τ, MAX_LAG_CUTOFF)` with `τ` the e-folding lag.
    #[default]
    Auto,
    Fixed(usize),
}

/// Smallest `j ≥ 1` from which `|C_j| < C_0/e` holds for `EFOLD_RUN` lags in a row,
/// or `None` if that never happens within `cov`.
pub fn efolding_lag(cov: &[f64]) -> Option<usize> {
    let level = cov.first()? / std::f64::consts::E;
    let mut run = 0;
    for (j, c) in cov.iter().enumerate().skip(1) {
        if c.abs() < level {
            run += 1;
            if run == EFOLD_RUN {
                return Some(j + 1 - EFOLD_RUN);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// A Green–Kubo estimate and the window that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenKubo {
    pub variance: f64,
    pub cutoff: usize,
    /// `true` if the raw sum was not positive and the floor `C_0/N` was used.
    pub floored: bool,
}

/// `σ² = C_0 + 2 Σ_{j=1}^{L} C_j` from lag covariances of a series of length `n`.
///
/// A non-positive sum (as for a periodic orbit, whose time averages converge
/// like `1/N` rather than `1/√N`) is replaced by `C_0/N`.
pub fn green_kubo_from_covariance(cov: &[f64], n: usize, cutoff: LagCutoff) -> Result<GreenKubo> {
    if cov.is_empty() {
        return Err(Error::InsufficientData("no lag covariances".into()));
    }
    let lag = match cutoff {
        LagCutoff::Fixed(l) => l,
        LagCutoff::Auto => efolding_lag(cov)
            .map(|tau| (EFOLD_WINDOWS * tau).min(MAX_LAG_CUTOFF))
            .unwrap_or(MAX_LAG_CUTOFF),
    };
    if lag * 10 > n {
        return Err(Error::InsufficientData(format!(
            "lag cutoff {lag} exceeds a tenth of the {n} samples"
        )));
    }
    if lag >= cov.len() {
        return Err(Error::InsufficientData(format!(
            "lag cutoff {lag} beyond the {} covariances supplied",
            cov.len()
        )));
    }
    let raw = cov[0] + 2.0 * cov[1..=lag].iter().sum::<f64>();
    let floor = (cov[0] / n as f64).max(f64::MIN_POSITIVE);
    Ok(if raw > floor {
        GreenKubo {
            variance: raw,
            cutoff: lag,
            floored: false,
        }
    } else {
        GreenKubo {
            variance: floor,
            cutoff: lag,
            floored: true,
        }
    })
}

/// Green–Kubo variance of `Ψ(x_n)` with `Ψ` the identity.
pub fn green_kubo_variance(xs: &[f64], cutoff: LagCutoff) -> Result<GreenKubo> {
    let max_lag = match cutoff {
        LagCutoff::Fixed(l) => l,
        LagCutoff::Auto => MAX_LAG_CUTOFF,
    };
    let max_lag = max_lag.min(xs.len().saturating_sub(1));
    let cov = autocovariance(xs, max_lag)?;
    green_kubo_from_covariance(&cov, xs.len(), cutoff)
}
