//! Ground-truth synthetic data: LPPL price series with known parameters,
//! listing corpora with planted duplicates and district markets with
//! planted trends.

mod corpus;
mod market;

pub use corpus::{gen_listing_corpus, write_truth, CorpusSpec, SynthCorpus};
pub use market::{gen_market, write_trends, MarketSpec, PlantedTrend, SynthMarket, Trend};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::lppl::{oscillations_for, regime_eval, LpplParams};
use crate::quarter::Quarter;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("critical time {tc} does not lie after the last grid time {t_last}")]
    TcInsideGrid { tc: f64, t_last: f64 },
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

/// What the generated series does once the grid reaches `tc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AfterTc {
    /// A grid time at or after `tc` is an error.
    #[default]
    Reject,
    /// The series levels off at `A` (a regime change that already occurred).
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub seed: u64,
    pub start: Quarter,
    pub n_quarters: usize,
    pub params: LpplParams<f64>,
    /// Gaussian log-noise standard deviation as a fraction of the clean
    /// log-price range.
    pub noise_sigma: f64,
    pub after_tc: AfterTc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSeries {
    pub quarters: Vec<Quarter>,
    pub times: Vec<f64>,
    pub clean_log: Vec<f64>,
    pub log_values: Vec<f64>,
    pub params: LpplParams<f64>,
    /// Absolute noise standard deviation in log units.
    pub sigma: f64,
}

impl SynthSeries {
    pub fn prices(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }
}

pub fn gen_lppl_series(spec: &SeriesSpec) -> Result<SynthSeries, SynthError> {
    if spec.n_quarters == 0 {
        return Err(SynthError::Invalid("n_quarters must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(SynthError::Invalid(format!("noise_sigma {}", spec.noise_sigma)));
    }
    let quarters: Vec<Quarter> = (0..spec.n_quarters as i64).map(|k| spec.start.offset(k)).collect();
    let times: Vec<f64> = quarters.iter().map(|q| q.time()).collect();
    let t_last = times[times.len() - 1];
    if spec.after_tc == AfterTc::Reject && !(spec.params.tc > t_last) {
        return Err(SynthError::TcInsideGrid { tc: spec.params.tc, t_last });
    }
    let clean_log: Vec<f64> = times.iter().map(|&t| regime_eval(&spec.params, t)).collect();
    let (lo, hi) = clean_log.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let sigma = spec.noise_sigma * (hi - lo);
    let log_values = if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, sigma).map_err(|e| SynthError::Invalid(e.to_string()))?;
        clean_log.iter().map(|&v| v + normal.sample(&mut rng)).collect()
    } else {
        clean_log.clone()
    };
    Ok(SynthSeries { quarters, times, clean_log, log_values, params: spec.params, sigma })
}

/// Ranges for random bubble parameter draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleDraw {
    /// `tc − t_last` range in years; negative values plant a past regime change.
    pub tc_offset: (f64, f64),
    pub m: (f64, f64),
    pub omega: (f64, f64),
    /// Total log-price rise of the power-law term across the window.
    pub log_rise: (f64, f64),
    /// Oscillation amplitude relative to `|B|`.
    pub c_ratio: (f64, f64),
    pub min_oscillations: f64,
    pub base_log_level: f64,
}

impl Default for BubbleDraw {
    fn default() -> Self {
        Self {
            tc_offset: (0.1, 1.0),
            m: (0.2, 0.8),
            omega: (6.0, 15.0),
            log_rise: (0.3, 0.7),
            c_ratio: (0.05, 0.15),
            min_oscillations: 3.0,
            base_log_level: 8.5,
        }
    }
}

impl BubbleDraw {
    /// Draws parameters on the quarterly grid starting at `start`, retrying
    /// until the oscillation count reaches `min_oscillations`.
    pub fn draw<R: Rng>(&self, rng: &mut R, start: Quarter, n_quarters: usize) -> LpplParams<f64> {
        let times: Vec<f64> = (0..n_quarters as i64).map(|k| start.offset(k).time()).collect();
        let t_first = times[0];
        let t_last = times[times.len() - 1];
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };
        loop {
            let tc = t_last + uniform(rng, self.tc_offset);
            let m = uniform(rng, self.m);
            let omega = uniform(rng, self.omega);
            let t_end = times.iter().rev().copied().find(|&t| t < tc).unwrap_or(t_first);
            let span = (tc - t_first).powf(m) - (tc - t_end).powf(m);
            if span <= 0.0 {
                continue;
            }
            let b = -uniform(rng, self.log_rise) / span;
            let ratio = uniform(rng, self.c_ratio);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let c = ratio * b.abs();
            let p = LpplParams {
                tc,
                m,
                omega,
                a: self.base_log_level + uniform(rng, (0.0, 0.5)) + uniform(rng, self.log_rise),
                b,
                c1: c * phase.cos(),
                c2: c * phase.sin(),
            };
            if oscillations_for(&p, &times) >= self.min_oscillations {
                return p;
            }
        }
    }
}
