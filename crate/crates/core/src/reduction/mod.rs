//! Reduction of the microscopic ensemble to scalar drivers: per-parameter
//! statistics of the logistic map, their tabulation over parameter space, the
//! spectral factorization of the limiting covariance and the reduced systems.

pub mod logistic;
pub mod reduced;
pub mod spectral;
pub mod table;

pub use logistic::{
    binomial_half_weights, binomial_mixture, classify_parameter, cocycle_lag_from_logistic,
    logistic_stats, Classification, LogisticStats, PeriodicOrbit, Regime,
};
pub use reduced::{
    eta_for_params, sample_eta, sample_zeta, simulate_deterministic_limit, simulate_finite_size,
    simulate_stochastic_limit, EtaRealization, EtaSampler, ZetaStream,
};
pub use spectral::{lag_covariance, spectral_factorize, LagCovariance, MACoefficients};
pub use table::{AlphaGrid, ReductionTable, TableConfig};
