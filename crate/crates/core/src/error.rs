use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The macroscopic parameter `A` left `(0, 4]`, so the orbit could leave `[0, 1]`.
    #[error("macroscopic parameter A = {value} escaped (0, 4] at step {step}")]
    ParameterEscape { value: f64, step: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("spectral density not positive at theta = {theta:.6} (S = {value:e})")]
    Factorization { theta: f64, value: f64 },

    #[error("design matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("malformed table: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
