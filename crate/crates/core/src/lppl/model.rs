use serde::{Deserialize, Serialize};

use super::LpplError;
use crate::scalar::Scalar;

/// Calibrated log-periodic power law parameters.
///
/// Log-price before the critical time follows
/// `A + B·(tc−t)^m + C1·(tc−t)^m·cos(ω·ln(tc−t)) + C2·(tc−t)^m·sin(ω·ln(tc−t))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpplParams<T> {
    pub tc: T,
    pub m: T,
    pub omega: T,
    pub a: T,
    pub b: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Scalar> LpplParams<T> {
    /// Oscillation amplitude `sqrt(C1² + C2²)`.
    pub fn c_amplitude(&self) -> T {
        self.c1.hypot(self.c2)
    }

    /// Returns the same parameters with `tc` moved by `dt`.
    pub fn shifted(&self, dt: T) -> Self {
        Self { tc: self.tc + dt, ..*self }
    }
}

/// Row of the linear basis `[1, f, f·cos, f·sin]` at time `t`.
///
/// At and after the critical time the non-constant terms vanish, so the
/// curve levels off at `A`. This is the continuous extension used when a
/// series extends past its critical time.
#[inline]
pub fn basis_row<T: Scalar>(tc: T, m: T, omega: T, t: T) -> [T; 4] {
    let dt = tc - t;
    if dt <= T::zero() {
        return [T::one(), T::zero(), T::zero(), T::zero()];
    }
    let ln_dt = dt.ln();
    let f = (m * ln_dt).exp();
    let (s, c) = (omega * ln_dt).sin_cos();
    [T::one(), f, f * c, f * s]
}

/// Evaluates the model at `t`; `t` must lie strictly before `tc`.
pub fn lppl_eval<T: Scalar>(p: &LpplParams<T>, t: T) -> Result<T, LpplError> {
    if !(t < p.tc) {
        return Err(LpplError::Domain {
            t: t.to_f64_lossy(),
            tc: p.tc.to_f64_lossy(),
        });
    }
    Ok(regime_eval(p, t))
}

/// Evaluates the model at any `t`, levelling off at `A` from `tc` onwards.
#[inline]
pub fn regime_eval<T: Scalar>(p: &LpplParams<T>, t: T) -> T {
    let [_, f, g, h] = basis_row(p.tc, p.m, p.omega, t);
    p.a + p.b * f + p.c1 * g + p.c2 * h
}

/// Number of log-periodic oscillation periods between `t_first` and the
/// observation `t_near` closest to (and before) `tc`.
pub fn oscillation_count<T: Scalar>(omega: T, tc: T, t_first: T, t_near: T) -> T {
    let lo = tc - t_near;
    let hi = tc - t_first;
    if lo <= T::zero() || hi <= lo {
        return T::zero();
    }
    omega / (T::lit(2.0) * T::PI()) * (hi / lo).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_law() -> LpplParams<f64> {
        LpplParams { tc: 100.0, m: 0.5, omega: 7.0, a: 10.0, b: -1.0, c1: 0.0, c2: 0.0 }
    }

    #[test]
    fn closed_form_value() {
        let y = lppl_eval(&power_law(), 96.0).unwrap();
        assert!((y - 8.0).abs() < 1e-12);
    }

    #[test]
    fn domain_error_at_and_after_tc() {
        assert!(matches!(lppl_eval(&power_law(), 100.0), Err(LpplError::Domain { .. })));
        assert!(lppl_eval(&power_law(), 101.0).is_err());
    }

    #[test]
    fn pure_power_law_is_increasing_and_convex() {
        let p = power_law();
        let ys: Vec<f64> = (0..80).map(|i| lppl_eval(&p, 20.0 + i as f64).unwrap()).collect();
        for w in ys.windows(3) {
            assert!(w[1] > w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] > 0.0);
        }
    }

    #[test]
    fn full_parameter_set_matches_stepwise_evaluation() {
        let p = LpplParams { tc: 2014.0, m: 0.4, omega: 9.0, a: 8.0, b: -0.8, c1: 0.05, c2: -0.03 };
        for k in 0..32 {
            let t = 2005.125 + 0.25 * k as f64;
            // independent evaluation written out term by term
            let dt: f64 = 2014.0 - t;
            let pw = dt.powf(0.4);
            let phase = 9.0 * dt.ln();
            let expected = 8.0 - 0.8 * pw + 0.05 * pw * phase.cos() - 0.03 * pw * phase.sin();
            let got = lppl_eval(&p, t).unwrap();
            assert!((got - expected).abs() < 1e-12, "t={t}: {got} vs {expected}");
        }
    }

    #[test]
    fn f32_evaluation_agrees_with_f64() {
        let p64 = LpplParams { tc: 10.0, m: 0.4, omega: 9.0, a: 8.0, b: -0.8, c1: 0.05, c2: -0.03 };
        let p32 = LpplParams {
            tc: 10.0f32, m: 0.4, omega: 9.0, a: 8.0, b: -0.8, c1: 0.05, c2: -0.03,
        };
        for k in 0..32 {
            let t = k as f64 * 0.25;
            let a = lppl_eval(&p64, t).unwrap();
            let b = lppl_eval(&p32, t as f32).unwrap() as f64;
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn regime_levels_off_after_tc() {
        let p = power_law();
        assert_eq!(regime_eval(&p, 100.0), 10.0);
        assert_eq!(regime_eval(&p, 130.0), 10.0);
    }

    #[test]
    fn oscillation_count_formula() {
        let n = oscillation_count(2.0 * std::f64::consts::PI, 10.0, 0.0, 9.0);
        assert!((n - 10f64.ln()).abs() < 1e-12);
        assert_eq!(oscillation_count(5.0, 1.0, 0.0, 2.0), 0.0);
    }
}
