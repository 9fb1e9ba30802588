//! Response statistics: time averages and Green–Kubo variances of the
//! macroscopic series, weighted polynomial fits in the perturbation, the χ²
//! test of the response order, and the experiment driver tying them to the
//! simulators.

pub mod calibration;
pub mod experiment;
pub mod fit;
pub mod series;

pub use calibration::{null_calibration, CalibrationConfig, CalibrationResult};
pub use experiment::{
    collect_samples, default_epsilons, run_response_experiment, ResponseConfig, ResponseModel,
    ResponseSamples, SigmaSource,
};
pub use fit::{
    breakdown_parameter, build_design, chi2_statistic, degrees_of_freedom, p_value, test_response,
    threshold, wls_fit, FitResult, ResponseDataset, ResponseEntry, TestResult,
};
pub use series::{
    autocovariance, green_kubo_from_covariance, green_kubo_variance, sample_mean, sample_mean_with,
    GreenKubo, LagCutoff, StreamingAutocov,
};
