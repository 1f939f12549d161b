//! Log-periodic power law model: evaluation, calibration, qualification and
//! critical-time uncertainty.

mod bootstrap;
mod fit;
mod linear;
mod model;
mod simplex;

pub use bootstrap::{bootstrap_tc, percentile, scenario_paths, Bootstrap, ScenarioPath, TcInterval};
pub use fit::{
    fit_lppl, oscillations_for, qualify, Candidate, FitConfig, FitResult, LogSeries, Rejection,
};
pub use linear::{subordinate_linear, LinearSolution};
pub use model::{basis_row, lppl_eval, oscillation_count, regime_eval, LpplParams};
pub use simplex::{minimize, Minimum, SimplexOptions};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpplError {
    #[error("time {t} is not before the critical time {tc}")]
    Domain { t: f64, tc: f64 },
    #[error("series has {got} points, at least {need} required")]
    TooFewPoints { got: usize, need: usize },
    #[error("{times} times but {values} values")]
    LengthMismatch { times: usize, values: usize },
    #[error("observation times must be strictly increasing")]
    UnsortedTimes,
    #[error("non-finite time or value")]
    NonFinite,
    #[error("non-positive price at index {index}")]
    NonPositive { index: usize },
    #[error("linear basis is rank deficient")]
    RankDeficient,
    #[error("fit is not qualified: {0}")]
    NotQualified(String),
    #[error("{failed} of {total} bootstrap refits failed qualification")]
    BootstrapFailure { failed: usize, total: usize },
}
