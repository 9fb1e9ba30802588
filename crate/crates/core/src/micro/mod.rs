//! The full deterministic system.
//!
//! A macroscopic logistic variable `Q` with parameter `A = A0 + A1·Z_n` is
//! driven by `Z_n = M^{-γ} Σ_j φ(q_n^{(j)}; a^{(j)})`. Each microscopic unit is
//! a logistic map run as a cocycle over the doubling map: it advances when
//! `r ≥ 1/2` and holds otherwise, which keeps the logistic marginal measure
//! while making the unit mixing. Units never see `Q`.

mod kernel;
mod summary;

pub use summary::{
    centred_moments, empirical_density, write_histogram_csv, write_trajectory_csv, Histogram,
    DEFAULT_BINS,
};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::law::{perturbed_param, PerturbationSpec};
use crate::{Error, Result};

/// The doubling map sheds one mantissa bit per step; `r` is redrawn from the
/// stream this often, well before the 53-bit budget runs out.
pub const R_REFRESH_INTERVAL: u64 = 50;

pub const DEFAULT_BURN_IN: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// `φ(x, a) = x² − (a x (1 − x))²`, zero mean under every logistic invariant measure.
    MeanZeroQuadratic,
    /// `φ(x, a) = x²`.
    Square,
}

impl ObservableKind {
    #[inline]
    pub fn eval(self, q: f64, a: f64) -> f64 {
        match self {
            ObservableKind::MeanZeroQuadratic => {
                let f = a * q * (1.0 - q);
                q * q - f * f
            }
            ObservableKind::Square => q * q,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObservableKind::MeanZeroQuadratic => "mean_zero_quadratic",
            ObservableKind::Square => "square",
        }
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coupling exponent `γ`: `1/2` gives a Gaussian driver in the limit, `1` a constant one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Gamma {
    Half,
    One,
}

impl Gamma {
    pub fn value(self) -> f64 {
        match self {
            Gamma::Half => 0.5,
            Gamma::One => 1.0,
        }
    }

    /// `M^{-γ}`.
    pub fn scale(self, m: usize) -> f64 {
        match self {
            Gamma::Half => 1.0 / (m as f64).sqrt(),
            Gamma::One => 1.0 / m as f64,
        }
    }
}

impl TryFrom<f64> for Gamma {
    type Error = String;

    fn try_from(v: f64) -> std::result::Result<Self, String> {
        if v == 0.5 {
            Ok(Gamma::Half)
        } else if v == 1.0 {
            Ok(Gamma::One)
        } else {
            Err(format!("gamma must be 0.5 or 1, got {v}"))
        }
    }
}

impl From<Gamma> for f64 {
    fn from(g: Gamma) -> f64 {
        g.value()
    }
}

/// One microscopic unit: logistic coordinate `q`, doubling coordinate `r`, parameter `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MicroUnit {
    pub q: f64,
    pub r: f64,
    pub a: f64,
}

impl MicroUnit {
    pub fn step(self) -> MicroUnit {
        if self.r < 0.5 {
            MicroUnit {
                r: 2.0 * self.r,
                ..self
            }
        } else {
            MicroUnit {
                q: self.a * self.q * (1.0 - self.q),
                r: 2.0 * self.r - 1.0,
                a: self.a,
            }
        }
    }
}

/// What to do when `A = A0 + A1 Z` leaves `(0, 4]`.
///
/// Above 4 the logistic map can send `Q` out of `[0, 1]`, after which the
/// orbit diverges. The coupling sum is unbounded in distribution for
/// `γ = 1/2`, so such excursions are rare but not impossible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscapePolicy {
    /// Stop with [`Error::ParameterEscape`].
    #[default]
    Error,
    /// Cap `A` at 4 for that step and count the event. `A ≤ 0` is still an error.
    Saturate,
}

/// Macroscopic parameters of the coupled system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A0")]
    pub base: f64,
    #[serde(rename = "A1")]
    pub gain: f64,
    pub gamma: Gamma,
    pub observable: ObservableKind,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default)]
    pub escape: EscapePolicy,
}

impl SystemSpec {
    /// Diffusive reference configuration: `A0 = 3.91`, `A1 = 0.05`, `γ = 1/2`.
    pub fn diffusive(m: usize) -> Self {
        Self {
            base: 3.91,
            gain: 0.05,
            gamma: Gamma::Half,
            observable: ObservableKind::MeanZeroQuadratic,
            m,
            escape: EscapePolicy::Error,
        }
    }

    /// Deterministic-limit reference configuration: `A0 = 3.847`, `A1 = 0.147`, `γ = 1`.
    pub fn deterministic(m: usize) -> Self {
        Self {
            base: 3.847,
            gain: 0.147,
            gamma: Gamma::One,
            observable: ObservableKind::Square,
            m,
            escape: EscapePolicy::Error,
        }
    }

    pub fn with_escape(self, escape: EscapePolicy) -> Self {
        Self { escape, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("M must be at least 1"));
        }
        if !self.base.is_finite() || !self.gain.is_finite() {
            return Err(Error::config("A0 and A1 must be finite"));
        }
        Ok(())
    }
}

/// `(A0 + A1 Z) Q (1 − Q)`; a parameter outside `(0, 4]` is handled per the system's escape policy.
pub fn step_macro(q: f64, spec: &SystemSpec, z: f64) -> Result<f64> {
    Ok(logistic_driven(q, spec.base + spec.gain * z, 0, spec.escape)?.0)
}

/// `a q (1 − q)` and whether `a` had to be capped.
#[inline]
pub(crate) fn logistic_driven(
    q: f64,
    a: f64,
    step: u64,
    policy: EscapePolicy,
) -> Result<(f64, bool)> {
    if a > 0.0 && a <= 4.0 {
        Ok((a * q * (1.0 - q), false))
    } else if a > 4.0 && policy == EscapePolicy::Saturate {
        Ok((4.0 * q * (1.0 - q), true))
    } else {
        Err(Error::ParameterEscape { value: a, step })
    }
}

/// Step counts of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    /// Macroscopic steps taken, burn-in included.
    pub steps: u64,
    /// Steps at which `A` was capped at 4.
    pub saturated: u64,
}

impl RunStats {
    pub fn merge(self, other: RunStats) -> RunStats {
        RunStats {
            steps: self.steps + other.steps,
            saturated: self.saturated + other.saturated,
        }
    }

    pub fn saturated_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.saturated as f64 / self.steps as f64
        }
    }
}

/// The `M` microscopic units, stored column-wise.
#[derive(Clone, Debug)]
pub struct MicroEnsemble {
    q: Vec<f64>,
    r: Vec<f64>,
    a: Vec<f64>,
    observable: ObservableKind,
    gamma: Gamma,
    scale: f64,
    steps: u64,
}

impl MicroEnsemble {
    pub fn new(units: &[MicroUnit], observable: ObservableKind, gamma: Gamma) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::config("ensemble needs at least one unit"));
        }
        Ok(Self {
            q: units.iter().map(|u| u.q).collect(),
            r: units.iter().map(|u| u.r).collect(),
            a: units.iter().map(|u| u.a).collect(),
            observable,
            gamma,
            scale: gamma.scale(units.len()),
            steps: 0,
        })
    }

    /// Units with the given (already perturbed) parameters and `(q, r)` uniform on `[0, 1)²`.
    pub fn with_uniform_state<R: Rng + ?Sized>(
        params: &[f64],
        observable: ObservableKind,
        gamma: Gamma,
        rng: &mut R,
    ) -> Result<Self> {
        let units: Vec<MicroUnit> = params
            .iter()
            .map(|&a| MicroUnit {
                q: rng.random::<f64>(),
                r: rng.random::<f64>(),
                a,
            })
            .collect();
        Self::new(&units, observable, gamma)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn unit(&self, j: usize) -> MicroUnit {
        MicroUnit {
            q: self.q[j],
            r: self.r[j],
            a: self.a[j],
        }
    }

    pub fn units(&self) -> impl Iterator<Item = MicroUnit> + '_ {
        (0..self.len()).map(|j| self.unit(j))
    }

    pub fn observable(&self) -> ObservableKind {
        self.observable
    }

    pub fn gamma(&self) -> Gamma {
        self.gamma
    }

    /// `Z = M^{-γ} Σ_j φ(q_j; a_j)` for the current state.
    pub fn coupling_term(&self) -> f64 {
        self.scale * kernel::sum_phi(&self.q, &self.a, self.observable)
    }

    /// Returns `Z_n` for the current state and moves every unit to step `n + 1`.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let z = self.scale * kernel::advance(&mut self.q, &mut self.r, &self.a, self.observable);
        self.steps += 1;
        if self.steps.is_multiple_of(R_REFRESH_INTERVAL) {
            for r in &mut self.r {
                *r = rng.random::<f64>();
            }
        }
        z
    }

    pub fn burn<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        for _ in 0..steps {
            self.advance(rng);
        }
    }
}

/// Length and initialization of one recorded run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunLength {
    /// Recorded steps.
    pub n: usize,
    /// Steps discarded before recording.
    pub burn_in: usize,
    /// Fixed initial `Q`; uniform on `(0, 1)` when absent.
    #[serde(default)]
    pub q0: Option<f64>,
}

impl RunLength {
    pub fn new(n: usize, burn_in: usize) -> Self {
        Self {
            n,
            burn_in,
            q0: None,
        }
    }

    pub(crate) fn initial_q<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.q0 {
            Some(q) => q,
            None => loop {
                let u = rng.random::<f64>();
                if u > 0.0 {
                    break u;
                }
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub q: Vec<f64>,
    pub z: Vec<f64>,
    pub stats: RunStats,
}

/// The coupled system `(Q, units)` stepped in lockstep.
#[derive(Clone, Debug)]
pub struct FullSystem {
    spec: SystemSpec,
    ensemble: MicroEnsemble,
    q: f64,
    stats: RunStats,
}

impl FullSystem {
    /// Perturbs `params` by `pert`, draws unit states, and starts `Q` at `q0`.
    pub fn new<R: Rng + ?Sized>(
        spec: SystemSpec,
        params: &[f64],
        pert: &PerturbationSpec,
        q0: f64,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.m {
            return Err(Error::config(format!(
                "parameter draw has {} entries but M = {}",
                params.len(),
                spec.m
            )));
        }
        let perturbed = params
            .iter()
            .map(|&a0| perturbed_param(a0, pert))
            .collect::<Result<Vec<_>>>()?;
        let ensemble =
            MicroEnsemble::with_uniform_state(&perturbed, spec.observable, spec.gamma, rng)?;
        Ok(Self {
            spec,
            ensemble,
            q: q0,
            stats: RunStats::default(),
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn set_q(&mut self, q: f64) {
        self.q = q;
    }

    pub fn ensemble(&self) -> &MicroEnsemble {
        &self.ensemble
    }

    pub fn ensemble_mut(&mut self) -> &mut MicroEnsemble {
        &mut self.ensemble
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    /// Returns `(Q_n, Z_n)` and advances everything to step `n + 1`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(f64, f64)> {
        let q = self.q;
        let z = self.ensemble.advance(rng);
        let (next, capped) = logistic_driven(
            q,
            self.spec.base + self.spec.gain * z,
            self.stats.steps,
            self.spec.escape,
        )?;
        self.q = next;
        self.stats.steps += 1;
        self.stats.saturated += capped as u64;
        Ok((q, z))
    }
}

/// Runs the full system and hands every recorded `(Q_n, Z_n)` to `visit`.
pub fn simulate_visit<R, F>(
    spec: &SystemSpec,
    params: &[f64],
    eps: f64,
    run: &RunLength,
    rng: &mut R,
    mut visit: F,
) -> Result<RunStats>
where
    R: Rng + ?Sized,
    F: FnMut(f64, f64),
{
    if run.n == 0 {
        return Err(Error::config("N must be at least 1"));
    }
    let mut system = FullSystem::new(*spec, params, &PerturbationSpec::new(eps), 0.5, rng)?;
    system.set_q(run.initial_q(rng));
    for _ in 0..run.burn_in {
        system.step(rng)?;
    }
    for _ in 0..run.n {
        let (q, z) = system.step(rng)?;
        visit(q, z);
    }
    Ok(system.stats())
}

/// Records `run.n` steps of the full system after `run.burn_in` discarded ones.
pub fn simulate<R: Rng + ?Sized>(
    spec: &SystemSpec,
    params: &[f64],
    eps: f64,
    run: &RunLength,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut q = Vec::with_capacity(run.n);
    let mut z = Vec::with_capacity(run.n);
    let stats = simulate_visit(spec, params, eps, run, rng, |qn, zn| {
        q.push(qn);
        z.push(zn);
    })?;
    let traj = Trajectory { q, z, stats };
    Ok(traj)
}

/// `Q_n` of one realization started at `q0`, after the units alone have run
/// `unit_burn_in` steps towards their invariant measure.
pub fn macro_at_step<R: Rng + ?Sized>(
    spec: &SystemSpec,
    params: &[f64],
    q0: f64,
    unit_burn_in: usize,
    n: usize,
    rng: &mut R,
) -> Result<(f64, RunStats)> {
    let mut system = FullSystem::new(*spec, params, &PerturbationSpec::new(0.0), q0, rng)?;
    system.ensemble_mut().burn(unit_burn_in, rng);
    for _ in 0..n {
        system.step(rng)?;
    }
    Ok((system.q(), system.stats()))
}
