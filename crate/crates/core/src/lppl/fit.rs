use serde::{Deserialize, Serialize};

use super::linear::subordinate_linear;
use super::model::{oscillation_count, regime_eval, LpplParams};
use super::simplex::{minimize, SimplexOptions};
use super::LpplError;
use crate::scalar::Scalar;

/// Calibration, qualification and bootstrap settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub min_points: usize,
    pub m_min: f64,
    pub m_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Latest admissible critical time, in years after the last observation.
    pub tc_horizon_years: f64,
    /// Earliest admissible critical time, in years before the last observation.
    pub burst_tolerance_years: f64,
    pub min_oscillations: f64,
    pub bootstrap_replicates: usize,
    /// Largest tolerated fraction of bootstrap refits failing qualification.
    pub bootstrap_max_fail_frac: f64,
    pub seed: u64,
    /// Simplex budget for each grid start.
    pub start_evals: usize,
    /// Simplex budget for each restart while polishing the leading candidates.
    pub polish_evals: usize,
    pub polish_top: usize,
    /// Simplex budget per start (and per polish restart) of a bootstrap refit.
    pub bootstrap_evals: usize,
    /// Distinct local minima of the point fit used as bootstrap refit starts.
    pub bootstrap_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_points: 20,
            m_min: 0.1,
            m_max: 0.9,
            omega_min: 4.0,
            omega_max: 25.0,
            tc_horizon_years: 2.0,
            burst_tolerance_years: 2.0,
            min_oscillations: 2.5,
            bootstrap_replicates: 200,
            bootstrap_max_fail_frac: 0.5,
            seed: 0,
            start_evals: 240,
            polish_evals: 1500,
            polish_top: 3,
            bootstrap_evals: 150,
            bootstrap_starts: 4,
        }
    }
}

// Search box for the nonlinear triple. It is wider than the qualification
// band so that fits pushed outside the band are reported as such instead of
// being pinned to a bound.
const SEARCH_M: (f64, f64) = (0.01, 1.8);
const SEARCH_OMEGA: (f64, f64) = (1.0, 40.0);
const SEARCH_TC_PAST_HORIZON: f64 = 1.0;

const GRID_TC_FUTURE: [f64; 8] = [0.05, 0.15, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0];
const GRID_TC_PAST: [f64; 4] = [-0.25, -0.5, -1.0, -1.5];
const GRID_M: [f64; 5] = [0.15, 0.3, 0.5, 0.7, 0.85];
const GRID_OMEGA: [f64; 6] = [5.0, 8.0, 11.0, 14.0, 18.0, 22.0];

/// Why a fit fails to qualify as a bubble signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rejection {
    /// Rank-deficient basis or a flat series.
    Degenerate,
    NoConvergence,
    MOutOfRange,
    BNotNegative,
    OmegaOutOfBand,
    TcOutOfWindow,
    TooFewOscillations,
}

impl Rejection {
    pub fn code(self) -> &'static str {
        match self {
            Rejection::Degenerate => "degenerate",
            Rejection::NoConvergence => "no_convergence",
            Rejection::MOutOfRange => "m_out_of_range",
            Rejection::BNotNegative => "b_not_negative",
            Rejection::OmegaOutOfBand => "omega_out_of_band",
            Rejection::TcOutOfWindow => "tc_out_of_window",
            Rejection::TooFewOscillations => "too_few_oscillations",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        [
            Rejection::Degenerate,
            Rejection::NoConvergence,
            Rejection::MOutOfRange,
            Rejection::BNotNegative,
            Rejection::OmegaOutOfBand,
            Rejection::TcOutOfWindow,
            Rejection::TooFewOscillations,
        ]
        .into_iter()
        .find(|r| r.code() == code)
    }
}

/// Time-stamped log-price observations, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> LogSeries<T> {
    /// Builds a series from already log-transformed values.
    pub fn from_log(times: Vec<T>, values: Vec<T>) -> Result<Self, LpplError> {
        if times.len() != values.len() {
            return Err(LpplError::LengthMismatch { times: times.len(), values: values.len() });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LpplError::UnsortedTimes);
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(LpplError::NonFinite);
        }
        Ok(Self { times, values })
    }

    /// Log-transforms positive price observations.
    pub fn from_prices(times: Vec<T>, prices: &[T]) -> Result<Self, LpplError> {
        if let Some(i) = prices.iter().position(|p| !(*p > T::zero())) {
            return Err(LpplError::NonPositive { index: i });
        }
        Self::from_log(times, prices.iter().map(|p| p.ln()).collect())
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_first(&self) -> T {
        self.times[0]
    }

    pub fn t_last(&self) -> T {
        self.times[self.times.len() - 1]
    }
}

/// One refined grid start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T> {
    /// Starting `(tc, m, ω)` with `tc` absolute.
    pub start: [T; 3],
    pub refined: [T; 3],
    pub sse: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub params: LpplParams<T>,
    pub sse: T,
    pub n_points: usize,
    pub rejections: Vec<Rejection>,
    pub residuals: Vec<T>,
    pub oscillations: T,
    pub t_first: T,
    pub t_last: T,
    /// Every refined grid start; `sse` is never above any of theirs.
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Scalar> FitResult<T> {
    pub fn qualified(&self) -> bool {
        self.rejections.is_empty()
    }

    /// Fitted log-price at each observation time.
    pub fn fitted(&self, times: &[T]) -> Vec<T> {
        times.iter().map(|&t| regime_eval(&self.params, t)).collect()
    }
}

/// The fitting problem in time relative to the last observation, which
/// makes the result exactly equivariant under time translation.
pub(crate) struct Problem<'a, T> {
    rel_times: Vec<T>,
    values: &'a [T],
    t_last: T,
    search_lo: [T; 3],
    search_hi: [T; 3],
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub(crate) fn new(series: &'a LogSeries<T>, cfg: &FitConfig) -> Self {
        Self::with_values(series.times(), series.values(), cfg)
    }

    pub(crate) fn with_values(times: &[T], values: &'a [T], cfg: &FitConfig) -> Self {
        let t_last = times[times.len() - 1];
        let rel_times = times.iter().map(|&t| t - t_last).collect();
        Self {
            rel_times,
            values,
            t_last,
            search_lo: [T::lit(-cfg.burst_tolerance_years), T::lit(SEARCH_M.0), T::lit(SEARCH_OMEGA.0)],
            search_hi: [
                T::lit(cfg.tc_horizon_years + SEARCH_TC_PAST_HORIZON),
                T::lit(SEARCH_M.1),
                T::lit(SEARCH_OMEGA.1),
            ],
        }
    }

    pub(crate) fn objective(&self, x: &[T; 3]) -> T {
        if (0..3).any(|i| !(x[i] >= self.search_lo[i] && x[i] <= self.search_hi[i])) {
            return T::nan();
        }
        match subordinate_linear(&self.rel_times, self.values, x[0], x[1], x[2]) {
            Ok(s) => s.sse,
            Err(_) => T::nan(),
        }
    }

    fn step_for(_x: &[T; 3]) -> [T; 3] {
        [T::lit(0.1), T::lit(0.05), T::lit(1.0)]
    }

    /// Simplex descent from `start` (relative `tc`).
    pub(crate) fn refine(&self, start: [T; 3], max_evals: usize) -> ([T; 3], T) {
        let opts = SimplexOptions { max_evals, xtol: 1e-6, ftol: 1e-13 };
        let r = minimize(|x| self.objective(x), start, Self::step_for(&start), opts);
        (r.x, r.f)
    }

    /// Repeated simplex restarts with shrinking steps until the objective
    /// stops improving.
    pub(crate) fn polish(&self, start: [T; 3], max_evals: usize, restarts: usize) -> ([T; 3], T) {
        let mut x = start;
        let mut f = self.objective(&x);
        if !f.is_finite() {
            f = T::infinity();
        }
        let mut step = Self::step_for(&x);
        for _ in 0..restarts.max(1) {
            let opts = SimplexOptions { max_evals, xtol: 1e-11, ftol: 0.0 };
            let r = minimize(|p| self.objective(p), x, step, opts);
            if !(r.f < f) {
                break;
            }
            x = r.x;
            f = r.f;
            step.iter_mut().for_each(|s| *s = *s * T::lit(0.3));
        }
        (x, f)
    }

    pub(crate) fn params_at(&self, x: &[T; 3]) -> Option<LpplParams<T>> {
        let s = subordinate_linear(&self.rel_times, self.values, x[0], x[1], x[2]).ok()?;
        Some(LpplParams {
            tc: x[0] + self.t_last,
            m: x[1],
            omega: x[2],
            a: s.a,
            b: s.b,
            c1: s.c1,
            c2: s.c2,
        })
    }

    pub(crate) fn grid_starts(&self) -> Vec<[T; 3]> {
        let mut starts = Vec::with_capacity(12 * GRID_M.len() * GRID_OMEGA.len());
        for &tc in GRID_TC_PAST.iter().rev().chain(GRID_TC_FUTURE.iter()) {
            for &m in &GRID_M {
                for &w in &GRID_OMEGA {
                    starts.push([T::lit(tc), T::lit(m), T::lit(w)]);
                }
            }
        }
        starts
    }

    pub(crate) fn t_last(&self) -> T {
        self.t_last
    }
}

/// Calibrates the model on a log-price series.
///
/// Every grid start is refined by simplex descent with the linear
/// amplitudes solved exactly at each evaluation; the best few candidates are
/// polished further and the lowest residual sum wins.
pub fn fit_lppl<T: Scalar>(series: &LogSeries<T>, cfg: &FitConfig) -> Result<FitResult<T>, LpplError> {
    let n = series.len();
    if n < cfg.min_points.max(4) {
        return Err(LpplError::TooFewPoints { got: n, need: cfg.min_points.max(4) });
    }
    if is_flat(series.values()) {
        return Ok(degenerate_result(series));
    }

    let problem = Problem::new(series, cfg);
    let t_last = problem.t_last();
    let mut candidates: Vec<Candidate<T>> = problem
        .grid_starts()
        .into_iter()
        .map(|s| {
            let (x, f) = problem.refine(s, cfg.start_evals);
            Candidate { start: abs_tc(s, t_last), refined: x, sse: f }
        })
        .collect();

    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].sse.is_finite()).collect();
    if order.is_empty() {
        let mut r = degenerate_result(series);
        r.rejections = vec![Rejection::NoConvergence];
        return Ok(r);
    }
    order.sort_by(|&a, &b| cmp_sse(candidates[a].sse, candidates[b].sse).then(a.cmp(&b)));
    for &i in order.iter().take(cfg.polish_top.max(1)) {
        let (x, f) = problem.polish(candidates[i].refined, cfg.polish_evals, 6);
        if f <= candidates[i].sse {
            candidates[i].refined = x;
            candidates[i].sse = f;
        }
    }
    let best = (0..candidates.len())
        .filter(|&i| candidates[i].sse.is_finite())
        .min_by(|&a, &b| cmp_sse(candidates[a].sse, candidates[b].sse).then(a.cmp(&b)))
        .expect("at least one finite candidate");

    let x = candidates[best].refined;
    let mut result = finish(series, &problem, &x, cfg)?;
    for c in &mut candidates {
        c.refined = abs_tc(c.refined, t_last);
    }
    result.candidates = candidates;
    Ok(result)
}

/// Refits from a few known starting triples (absolute `tc`): a short
/// descent from each, then a polish of the best.
pub(crate) fn refit_from<T: Scalar>(
    series: &LogSeries<T>,
    starts: &[[T; 3]],
    cfg: &FitConfig,
) -> Result<FitResult<T>, LpplError> {
    if is_flat(series.values()) {
        return Ok(degenerate_result(series));
    }
    let problem = Problem::new(series, cfg);
    let t_last = problem.t_last();
    let mut best: Option<([T; 3], T)> = None;
    for s in starts {
        let (x, f) = problem.refine([s[0] - t_last, s[1], s[2]], cfg.bootstrap_evals);
        if f.is_finite() && best.map_or(true, |(_, bf)| f < bf) {
            best = Some((x, f));
        }
    }
    let Some((x0, _)) = best else {
        let mut r = degenerate_result(series);
        r.rejections = vec![Rejection::NoConvergence];
        return Ok(r);
    };
    let (x, _) = problem.polish(x0, cfg.bootstrap_evals, 2);
    finish(series, &problem, &x, cfg)
}

/// Distinct local minima among the refined candidates, best first.
pub(crate) fn distinct_minima<T: Scalar>(fit: &FitResult<T>, limit: usize) -> Vec<[T; 3]> {
    let mut out = vec![[fit.params.tc, fit.params.m, fit.params.omega]];
    let mut order: Vec<&Candidate<T>> = fit.candidates.iter().filter(|c| c.sse.is_finite()).collect();
    order.sort_by(|a, b| cmp_sse(a.sse, b.sse));
    let tol = [T::lit(0.05), T::lit(0.05), T::lit(0.5)];
    for c in order {
        if out.len() >= limit {
            break;
        }
        let close = out.iter().any(|o| (0..3).all(|i| (o[i] - c.refined[i]).abs() < tol[i]));
        if !close {
            out.push(c.refined);
        }
    }
    out
}

fn finish<T: Scalar>(
    series: &LogSeries<T>,
    problem: &Problem<'_, T>,
    x: &[T; 3],
    cfg: &FitConfig,
) -> Result<FitResult<T>, LpplError> {
    let params = problem.params_at(x).ok_or(LpplError::RankDeficient)?;
    let residuals: Vec<T> = series
        .times()
        .iter()
        .zip(series.values())
        .map(|(&t, &y)| y - regime_eval(&params, t))
        .collect();
    let sse = residuals.iter().fold(T::zero(), |acc, &r| acc + r * r);
    let oscillations = oscillations_for(&params, series.times());
    let rejections = qualify(&params, oscillations, series.t_last(), cfg);
    Ok(FitResult {
        params,
        sse,
        n_points: series.len(),
        rejections,
        residuals,
        oscillations,
        t_first: series.t_first(),
        t_last: series.t_last(),
        candidates: Vec::new(),
    })
}

/// Oscillation periods between the first observation and the last one
/// before `tc`.
pub fn oscillations_for<T: Scalar>(p: &LpplParams<T>, times: &[T]) -> T {
    match times.iter().rev().find(|&&t| t < p.tc) {
        Some(&near) => oscillation_count(p.omega, p.tc, times[0], near),
        None => T::zero(),
    }
}

/// Applies the qualification filters to a calibrated parameter set.
pub fn qualify<T: Scalar>(p: &LpplParams<T>, oscillations: T, t_last: T, cfg: &FitConfig) -> Vec<Rejection> {
    let mut out = Vec::new();
    if !(p.m >= T::lit(cfg.m_min) && p.m <= T::lit(cfg.m_max)) {
        out.push(Rejection::MOutOfRange);
    }
    if !(p.b < T::zero()) {
        out.push(Rejection::BNotNegative);
    }
    if !(p.omega >= T::lit(cfg.omega_min) && p.omega <= T::lit(cfg.omega_max)) {
        out.push(Rejection::OmegaOutOfBand);
    }
    let lo = t_last - T::lit(cfg.burst_tolerance_years);
    let hi = t_last + T::lit(cfg.tc_horizon_years);
    if !(p.tc > lo && p.tc <= hi) {
        out.push(Rejection::TcOutOfWindow);
    }
    if !(oscillations >= T::lit(cfg.min_oscillations)) {
        out.push(Rejection::TooFewOscillations);
    }
    out
}

fn is_flat<T: Scalar>(values: &[T]) -> bool {
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = T::one() + lo.abs().max(hi.abs());
    hi - lo <= T::epsilon() * T::lit(64.0) * scale
}

fn degenerate_result<T: Scalar>(series: &LogSeries<T>) -> FitResult<T> {
    let n = T::lit(series.len() as f64);
    let mean = series.values().iter().fold(T::zero(), |a, &v| a + v) / n;
    let residuals: Vec<T> = series.values().iter().map(|&v| v - mean).collect();
    let sse = residuals.iter().fold(T::zero(), |a, &r| a + r * r);
    FitResult {
        params: LpplParams {
            tc: series.t_last(),
            m: T::zero(),
            omega: T::zero(),
            a: mean,
            b: T::zero(),
            c1: T::zero(),
            c2: T::zero(),
        },
        sse,
        n_points: series.len(),
        rejections: vec![Rejection::Degenerate],
        residuals,
        oscillations: T::zero(),
        t_first: series.t_first(),
        t_last: series.t_last(),
        candidates: Vec::new(),
    }
}

fn abs_tc<T: Scalar>(x: [T; 3], t_last: T) -> [T; 3] {
    [x[0] + t_last, x[1], x[2]]
}

fn cmp_sse<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}
