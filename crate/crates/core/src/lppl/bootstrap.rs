use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{distinct_minima, refit_from, FitConfig, FitResult, LogSeries};
use super::model::{regime_eval, LpplParams};
use super::LpplError;
use crate::scalar::Scalar;
use crate::seed;

/// Nominal coverage of the critical-time interval.
pub const TC_LEVEL: f64 = 0.80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcInterval<T> {
    pub lo: T,
    pub hi: T,
    pub level: f64,
}

impl<T: Scalar> TcInterval<T> {
    pub fn contains(&self, t: T) -> bool {
        t >= self.lo && t <= self.hi
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap<T> {
    pub interval: TcInterval<T>,
    /// Parameters of the refits that passed qualification, in replicate order.
    pub replicates: Vec<LpplParams<T>>,
    pub failed: usize,
    pub requested: usize,
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of an unsorted sample.
pub fn percentile<T: Scalar>(sample: &[T], q: f64) -> Option<T> {
    if sample.is_empty() {
        return None;
    }
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    Some(v[lo] + (v[hi] - v[lo]) * frac)
}

/// Residual bootstrap of the critical time.
///
/// Centred residuals, inflated by `sqrt(n / (n − 7))` for the seven fitted
/// parameters, are resampled with replacement onto the fitted curve. Each
/// replicate is refitted from the point estimate and from the other distinct
/// local minima found by the point fit, so replicates can change basin. The interval spans the 10th to
/// 90th percentile of the qualified replicate critical times.
pub fn bootstrap_tc<T: Scalar>(
    series: &LogSeries<T>,
    fit: &FitResult<T>,
    cfg: &FitConfig,
) -> Result<Bootstrap<T>, LpplError> {
    if !fit.qualified() {
        let codes: Vec<&str> = fit.rejections.iter().map(|r| r.code()).collect();
        return Err(LpplError::NotQualified(codes.join(",")));
    }
    let n = series.len();
    let requested = cfg.bootstrap_replicates;
    let point = fit.params;
    if requested == 0 {
        return Ok(Bootstrap {
            interval: TcInterval { lo: point.tc, hi: point.tc, level: TC_LEVEL },
            replicates: Vec::new(),
            failed: 0,
            requested,
        });
    }

    let fitted = fit.fitted(series.times());
    let nf = T::lit(n as f64);
    let mean = fit.residuals.iter().fold(T::zero(), |a, &r| a + r) / nf;
    let dof = n.saturating_sub(7).max(1);
    let inflate = T::lit((n as f64 / dof as f64).sqrt());
    let pool: Vec<T> = fit.residuals.iter().map(|&r| (r - mean) * inflate).collect();
    let starts = distinct_minima(fit, cfg.bootstrap_starts.max(1));

    let outcomes: Vec<Option<LpplParams<T>>> = (0..requested)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, i as u64));
            let values: Vec<T> = fitted.iter().map(|&f| f + pool[rng.random_range(0..n)]).collect();
            let resampled = LogSeries::from_log(series.times().to_vec(), values).ok()?;
            let refit = refit_from(&resampled, &starts, cfg).ok()?;
            refit.qualified().then_some(refit.params)
        })
        .collect();

    let replicates: Vec<LpplParams<T>> = outcomes.into_iter().flatten().collect();
    let failed = requested - replicates.len();
    if failed as f64 > cfg.bootstrap_max_fail_frac * requested as f64 || replicates.is_empty() {
        return Err(LpplError::BootstrapFailure { failed, total: requested });
    }
    let tcs: Vec<T> = replicates.iter().map(|p| p.tc).collect();
    let lo = percentile(&tcs, (1.0 - TC_LEVEL) / 2.0).expect("nonempty sample");
    let hi = percentile(&tcs, (1.0 + TC_LEVEL) / 2.0).expect("nonempty sample");
    Ok(Bootstrap { interval: TcInterval { lo, hi, level: TC_LEVEL }, replicates, failed, requested })
}

/// A model trajectory for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath<T> {
    pub tc: T,
    pub params: LpplParams<T>,
    pub times: Vec<T>,
    pub log_values: Vec<T>,
}

/// Extrapolates each replicate (or the point fit when there are none) on
/// the quarterly grid up to `min(tc − ε, t_last + horizon)`.
pub fn scenario_paths<T: Scalar>(
    fit: &FitResult<T>,
    replicates: &[LpplParams<T>],
    horizon_quarters: usize,
) -> Vec<ScenarioPath<T>> {
    let eps = T::lit(1e-3);
    let quarter = T::lit(0.25);
    let single = [fit.params];
    let sets = if replicates.is_empty() { &single[..] } else { replicates };
    sets.iter()
        .map(|p| {
            let end = (p.tc - eps).min(fit.t_last + quarter * T::lit(horizon_quarters as f64));
            let mut times = Vec::new();
            let mut k = 0usize;
            loop {
                let t = fit.t_first + quarter * T::lit(k as f64);
                if t >= end {
                    break;
                }
                times.push(t);
                k += 1;
            }
            if end >= fit.t_first {
                times.push(end);
            }
            let log_values = times.iter().map(|&t| regime_eval(p, t)).collect();
            ScenarioPath { tc: p.tc, params: *p, times, log_values }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [5.0f64, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.5), Some(3.0));
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(5.0));
        assert!((percentile(&v, 0.1).unwrap() - 1.4).abs() < 1e-12);
        assert_eq!(percentile::<f64>(&[], 0.5), None);
    }
}
