//! Per-parameter logistic statistics on an even α grid, and trapezoid
//! averages of them against the shifted law `ν(α − ε)`.
//!
//! The table is built once and reused for every ε; only the quadrature
//! weights move. That keeps cross-ε quantities (such as the covariance of
//! the finite-size term η) consistent with each other.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{logistic_stats, LogisticStats, Regime, DEFAULT_MC_RUNS, DEFAULT_MC_STEPS};
use crate::law::ParameterLaw;
use crate::micro::ObservableKind;
use crate::rng::{domain, SeedTree};
use crate::{Error, Result};

/// Evenly spaced logistic parameters `min + k (max − min) / (points − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            min: 3.7,
            max: 4.0,
            points: 30_001,
        }
    }
}

impl AlphaGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || !(self.max > self.min) || self.min <= 0.0 || self.max > 4.0 {
            return Err(Error::config(format!("invalid alpha grid {self:?}")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn alpha(&self, k: usize) -> f64 {
        self.min + k as f64 * self.spacing()
    }

    /// Index of the node nearest to `alpha`, if it lies on the grid's span.
    pub fn nearest(&self, alpha: f64) -> Option<usize> {
        let h = self.spacing();
        let pos = ((alpha - self.min) / h).round();
        if pos < 0.0 || pos > (self.points - 1) as f64 || !pos.is_finite() {
            return None;
        }
        Some(pos as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub grid: AlphaGrid,
    pub observable: ObservableKind,
    /// Largest plain-map lag tabulated.
    pub lags: usize,
    pub mc_runs: usize,
    pub mc_steps: usize,
}

impl TableConfig {
    pub fn new(observable: ObservableKind, lags: usize) -> Self {
        Self {
            grid: AlphaGrid::default(),
            observable,
            lags,
            mc_runs: DEFAULT_MC_RUNS,
            mc_steps: DEFAULT_MC_STEPS,
        }
    }
}

/// Immutable per-α statistics; safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionTable {
    grid: AlphaGrid,
    observable: ObservableKind,
    stats: Vec<LogisticStats>,
}

impl ReductionTable {
    /// Classifies every α and fills its statistics. Each α draws from its
    /// own stream, so the table does not depend on scheduling.
    pub fn build(config: &TableConfig, seeds: &SeedTree) -> Result<Self> {
        config.grid.validate()?;
        if config.mc_steps == 0 {
            return Err(Error::config("mc_steps must be positive"));
        }
        let stats = (0..config.grid.points)
            .into_par_iter()
            .map(|k| {
                let mut rng = seeds.stream(domain::TABLE, k as u32, 0);
                logistic_stats(
                    config.grid.alpha(k),
                    config.lags,
                    config.mc_runs,
                    config.mc_steps,
                    config.observable,
                    &mut rng,
                )
            })
            .collect();
        Ok(Self {
            grid: config.grid,
            observable: config.observable,
            stats,
        })
    }

    pub fn from_stats(
        grid: AlphaGrid,
        observable: ObservableKind,
        stats: Vec<LogisticStats>,
    ) -> Result<Self> {
        grid.validate()?;
        if stats.len() != grid.points {
            return Err(Error::Parse(format!(
                "{} rows for a grid of {} points",
                stats.len(),
                grid.points
            )));
        }
        let lags = stats[0].lag_corr.len();
        if stats.iter().any(|s| s.lag_corr.len() != lags) {
            return Err(Error::Parse("rows have different lag counts".into()));
        }
        Ok(Self {
            grid,
            observable,
            stats,
        })
    }

    pub fn grid(&self) -> &AlphaGrid {
        &self.grid
    }

    pub fn observable(&self) -> ObservableKind {
        self.observable
    }

    pub fn lags(&self) -> usize {
        self.stats[0].lags()
    }

    pub fn stats(&self) -> &[LogisticStats] {
        &self.stats
    }

    /// Statistics at the node nearest to `alpha`.
    pub fn nearest(&self, alpha: f64) -> Result<&LogisticStats> {
        self.grid
            .nearest(alpha)
            .map(|k| &self.stats[k])
            .ok_or_else(|| Error::config(format!("alpha {alpha} outside the table grid")))
    }

    /// Sparse trapezoid weights of `ν(α − ε)` on the grid.
    pub fn law_weights(&self, law: &ParameterLaw, eps: f64) -> Result<Vec<(usize, f64)>> {
        let (lo, hi) = law.support();
        let h = self.grid.spacing();
        let slack = 1e-9 * h;
        if lo + eps < self.grid.min - slack || hi + eps > self.grid.max + slack {
            return Err(Error::config(format!(
                "shifted support [{}, {}] escapes the grid [{}, {}]",
                lo + eps,
                hi + eps,
                self.grid.min,
                self.grid.max
            )));
        }
        match law {
            ParameterLaw::PointMass { value } => {
                let k = self.grid.nearest(value + eps).expect("checked above");
                Ok(vec![(k, 1.0)])
            }
            ParameterLaw::RaisedCosine(rc) => {
                let last = self.grid.points - 1;
                let first = (((lo + eps - self.grid.min) / h).floor().max(0.0)) as usize;
                let end = ((((hi + eps - self.grid.min) / h).ceil()) as usize).min(last);
                Ok((first..=end)
                    .filter_map(|k| {
                        let end_factor = if k == 0 || k == last { 0.5 } else { 1.0 };
                        let w = end_factor * h * rc.pdf(self.grid.alpha(k) - eps);
                        (w > 0.0).then_some((k, w))
                    })
                    .collect())
            }
        }
    }

    /// `∫ f(stats_α) ν(α − ε) dα` by the trapezoid rule on the grid.
    pub fn average_over_law<F>(&self, law: &ParameterLaw, eps: f64, f: F) -> Result<f64>
    where
        F: Fn(&LogisticStats) -> f64,
    {
        Ok(self
            .law_weights(law, eps)?
            .into_iter()
            .map(|(k, w)| w * f(&self.stats[k]))
            .sum())
    }

    /// `⟨E^ε[φ]⟩`, the deterministic-limit drift.
    pub fn mean_drift(&self, law: &ParameterLaw, eps: f64) -> Result<f64> {
        self.average_over_law(law, eps, |s| s.mean_phi)
    }

    /// Columns: `alpha, classification, period, mean_phi, lag_0..lag_L`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "alpha".to_string(),
            "classification".to_string(),
            "period".to_string(),
            "mean_phi".to_string(),
        ];
        header.extend((0..=self.lags()).map(|i| format!("lag_{i}")));
        w.write_record(&header)?;
        for s in &self.stats {
            let (class, period) = match s.regime {
                Regime::Regular { period } => ("regular", period),
                Regime::Chaotic => ("chaotic", 0),
            };
            let mut row = vec![
                s.alpha.to_string(),
                class.to_string(),
                period.to_string(),
                s.mean_phi.to_string(),
            ];
            row.extend(s.lag_corr.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). The grid is
    /// recovered from the first and last α.
    pub fn read_csv<R: Read>(reader: R, observable: ObservableKind) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.len() < 5 || &header[0] != "alpha" || &header[3] != "mean_phi" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number `{s}`: {e}")))
        };
        let mut stats = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let alpha = parse(&rec[0])?;
            let regime = match &rec[1] {
                "regular" => Regime::Regular {
                    period: rec[2]
                        .trim()
                        .parse()
                        .map_err(|e| Error::Parse(format!("bad period: {e}")))?,
                },
                "chaotic" => Regime::Chaotic,
                other => return Err(Error::Parse(format!("unknown classification `{other}`"))),
            };
            let lag_corr = rec.iter().skip(4).map(parse).collect::<Result<Vec<_>>>()?;
            stats.push(LogisticStats {
                alpha,
                regime,
                mean_phi: parse(&rec[3])?,
                lag_corr,
            });
        }
        if stats.len() < 2 {
            return Err(Error::Parse("table needs at least two rows".into()));
        }
        let grid = AlphaGrid {
            min: stats[0].alpha,
            max: stats[stats.len() - 1].alpha,
            points: stats.len(),
        };
        Self::from_stats(grid, observable, stats)
    }
}
