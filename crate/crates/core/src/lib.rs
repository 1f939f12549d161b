//! Bubble diagnostics for real-estate asking prices.
//!
//! Listings are ingested and deduplicated, aggregated into quarterly median
//! price series per district, property type and size class, and each series
//! is calibrated against the log-periodic power law. Qualified fits become
//! Critical (future critical time) or Burst (critical time already passed)
//! verdicts with bootstrap intervals for the critical time.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the pipeline uses throughout.

pub mod cli;
pub mod config;
pub mod dedup;
pub mod diagnose;
pub mod index;
pub mod ingest;
pub mod lppl;
pub mod quarter;
pub mod report;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use quarter::Quarter;
pub use scalar::Scalar;

pub type LpplParams = lppl::LpplParams<f64>;
pub type FitResult = lppl::FitResult<f64>;
pub type LogSeries = lppl::LogSeries<f64>;
pub type TcInterval = lppl::TcInterval<f64>;
pub type Bootstrap = lppl::Bootstrap<f64>;
pub type ScenarioPath = lppl::ScenarioPath<f64>;
pub type LinearSolution = lppl::LinearSolution<f64>;
pub type Assessment = diagnose::Assessment<f64>;
