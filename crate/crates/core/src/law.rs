//! Distribution of the microscopic logistic parameters and its ε-shift.
//!
//! Unit `j` runs with `a = a0 + ε·a1`, where `a0` is drawn from a smooth
//! compactly supported law and `a1` is (for now) a constant. The smoothness
//! of the law's density bounds the order of response that survives the
//! thermodynamic limit.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Raised-cosine density on `[center - half_width, center + half_width]`:
///
/// `ν(x) = (1 + cos(π (x - center) / half_width)) / (2 half_width)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaisedCosineLaw {
    pub center: f64,
    pub half_width: f64,
}

impl Default for RaisedCosineLaw {
    fn default() -> Self {
        Self {
            center: 3.85,
            half_width: 0.05,
        }
    }
}

/// Sobolev order `ℓ` of a density in `W^{ℓ,1}`; response up to order `ℓ`
/// survives averaging over the law.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmoothnessOrder(pub u32);

impl RaisedCosineLaw {
    pub fn new(center: f64, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !center.is_finite() {
            return Err(Error::config(format!(
                "raised cosine law needs a finite center and positive half width, got ({center}, {half_width})"
            )));
        }
        Ok(Self { center, half_width })
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.half_width;
        if t.abs() > 1.0 {
            return 0.0;
        }
        (1.0 + (PI * t).cos()) / (2.0 * self.half_width)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = (x - self.center) / self.half_width;
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            0.5 * (t + 1.0 + (PI * t).sin() / PI)
        }
    }

    /// Inverse CDF. Newton on the standardized variable, kept inside a
    /// shrinking bracket so flat tails cannot throw it out.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut t = 2.0 * u - 1.0;
        for _ in 0..100 {
            let f = 0.5 * (t + 1.0 + (PI * t).sin() / PI) - u;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let df = 0.5 * (1.0 + (PI * t).cos());
            let mut next = if df > 1e-300 { t - f / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        self.center + self.half_width * t
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn mean(&self) -> f64 {
        self.center
    }

    pub fn variance(&self) -> f64 {
        self.half_width * self.half_width * (1.0 / 3.0 - 2.0 / (PI * PI))
    }

    /// The density is `C¹` with a second derivative of bounded variation.
    pub fn smoothness(&self) -> SmoothnessOrder {
        SmoothnessOrder(3)
    }
}

/// Law of the unperturbed parameters `a0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParameterLaw {
    RaisedCosine(RaisedCosineLaw),
    /// Every unit shares the same parameter; useful as a degenerate reference.
    PointMass {
        value: f64,
    },
}

impl Default for ParameterLaw {
    fn default() -> Self {
        ParameterLaw::RaisedCosine(RaisedCosineLaw::default())
    }
}

impl From<RaisedCosineLaw> for ParameterLaw {
    fn from(law: RaisedCosineLaw) -> Self {
        ParameterLaw::RaisedCosine(law)
    }
}

impl ParameterLaw {
    pub fn support(&self) -> (f64, f64) {
        match self {
            ParameterLaw::RaisedCosine(law) => law.support(),
            ParameterLaw::PointMass { value } => (*value, *value),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ParameterLaw::RaisedCosine(law) => law.sample(rng),
            ParameterLaw::PointMass { value } => *value,
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// Law of `a1` given `a0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum A1Law {
    Constant(f64),
}

impl Default for A1Law {
    fn default() -> Self {
        A1Law::Constant(1.0)
    }
}

impl A1Law {
    pub fn value(&self, _a0: f64) -> f64 {
        match self {
            A1Law::Constant(v) => *v,
        }
    }
}

/// Parameter range inside which perturbed logistic parameters are accepted.
pub const DEFAULT_SAFE_RANGE: (f64, f64) = (3.7, 4.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub a1: A1Law,
    pub epsilon: f64,
    pub safe_range: (f64, f64),
}

impl PerturbationSpec {
    pub fn new(epsilon: f64) -> Self {
        Self {
            a1: A1Law::default(),
            epsilon,
            safe_range: DEFAULT_SAFE_RANGE,
        }
    }
}

/// `a0 + ε·a1`, rejected when it leaves the declared safe range.
pub fn perturbed_param(a0: f64, pert: &PerturbationSpec) -> Result<f64> {
    let a = a0 + pert.epsilon * pert.a1.value(a0);
    let (lo, hi) = pert.safe_range;
    if !(a >= lo && a <= hi) {
        return Err(Error::config(format!(
            "perturbed parameter {a} (a0 = {a0}, eps = {}) outside safe range [{lo}, {hi}]",
            pert.epsilon
        )));
    }
    Ok(a)
}

/// Writes a parameter draw as a one-column CSV (`a0`) that round-trips exactly.
pub fn write_params_csv<W: Write>(params: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["a0"])?;
    for a in params {
        w.write_record([a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    if headers.len() != 1 || &headers[0] != "a0" {
        return Err(Error::Parse(format!(
            "expected a single `a0` column, got {headers:?}"
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec[0]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad a0 value `{}`: {e}", &rec[0])))
        })
        .collect()
}
