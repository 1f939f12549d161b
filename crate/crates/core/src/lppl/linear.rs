use super::model::basis_row;
use super::LpplError;
use crate::scalar::Scalar;

/// Least-squares solution for the linear amplitudes given `(tc, m, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolution<T> {
    pub a: T,
    pub b: T,
    pub c1: T,
    pub c2: T,
    pub sse: T,
}

const COLS: usize = 4;

/// Solves `min ‖y − X·β‖²` for the basis `{1, f, f·cos, f·sin}`.
///
/// Columns are scaled to unit norm before a Householder QR factorisation;
/// a diagonal entry of `R` below `sqrt(ε)` marks the basis rank deficient.
pub fn subordinate_linear<T: Scalar>(
    times: &[T],
    values: &[T],
    tc: T,
    m: T,
    omega: T,
) -> Result<LinearSolution<T>, LpplError> {
    let n = times.len();
    if n != values.len() {
        return Err(LpplError::LengthMismatch { times: n, values: values.len() });
    }
    if n < COLS {
        return Err(LpplError::TooFewPoints { got: n, need: COLS });
    }
    if !(tc.is_finite() && m.is_finite() && omega.is_finite()) {
        return Err(LpplError::RankDeficient);
    }

    // column-major design matrix
    let mut x = vec![T::zero(); n * COLS];
    for (i, &t) in times.iter().enumerate() {
        let row = basis_row(tc, m, omega, t);
        for j in 0..COLS {
            x[j * n + i] = row[j];
        }
    }
    let mut scale = [T::one(); COLS];
    for j in 0..COLS {
        let col = &mut x[j * n..(j + 1) * n];
        let norm = col.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(LpplError::RankDeficient);
        }
        col.iter_mut().for_each(|v| *v = *v / norm);
        scale[j] = norm;
    }

    let mut qty = values.to_vec();
    let mut r_diag = [T::zero(); COLS];
    for k in 0..COLS {
        let (head, tail) = x.split_at_mut((k + 1) * n);
        let col_k = &mut head[k * n..];
        let alpha = col_k[k..].iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if alpha <= T::epsilon().sqrt() {
            return Err(LpplError::RankDeficient);
        }
        let alpha = if col_k[k] > T::zero() { -alpha } else { alpha };
        // v = x_k − α e_k, stored in place
        col_k[k] = col_k[k] - alpha;
        let vnorm2 = col_k[k..].iter().fold(T::zero(), |acc, &v| acc + v * v);
        r_diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let reflect = |target: &mut [T], v: &[T]| {
            let dot = v.iter().zip(target.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let f = (dot + dot) / vnorm2;
            target.iter_mut().zip(v).for_each(|(t, &vi)| *t = *t - f * vi);
        };
        for j in (k + 1)..COLS {
            let off = (j - k - 1) * n;
            reflect(&mut tail[off + k..off + n], &col_k[k..]);
        }
        reflect(&mut qty[k..], &col_k[k..]);
    }

    // back substitution on R (strict upper part lives in x above the diagonal)
    let mut beta = [T::zero(); COLS];
    for k in (0..COLS).rev() {
        let mut s = qty[k];
        for j in (k + 1)..COLS {
            s = s - x[j * n + k] * beta[j];
        }
        beta[k] = s / r_diag[k];
    }
    for j in 0..COLS {
        beta[j] = beta[j] / scale[j];
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(LpplError::RankDeficient);
    }

    let sse = times.iter().zip(values).fold(T::zero(), |acc, (&t, &y)| {
        let row = basis_row(tc, m, omega, t);
        let fitted = row[0] * beta[0] + row[1] * beta[1] + row[2] * beta[2] + row[3] * beta[3];
        let r = y - fitted;
        acc + r * r
    });

    Ok(LinearSolution { a: beta[0], b: beta[1], c1: beta[2], c2: beta[3], sse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lppl::model::{regime_eval, LpplParams};

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| -0.25 * (n - 1 - k) as f64).collect()
    }

    #[test]
    fn recovers_generating_amplitudes() {
        let p = LpplParams { tc: 0.6, m: 0.45, omega: 8.5, a: 8.3, b: -0.4, c1: 0.03, c2: -0.02 };
        let t = grid(32);
        let y: Vec<f64> = t.iter().map(|&t| regime_eval(&p, t)).collect();
        let s = subordinate_linear(&t, &y, p.tc, p.m, p.omega).unwrap();
        assert!((s.a - p.a).abs() < 1e-9);
        assert!((s.b - p.b).abs() < 1e-9);
        assert!((s.c1 - p.c1).abs() < 1e-9);
        assert!((s.c2 - p.c2).abs() < 1e-9);
        assert!(s.sse < 1e-20);
    }

    #[test]
    fn constant_series() {
        let t = grid(24);
        let y = vec![7.25; 24];
        let s = subordinate_linear(&t, &y, 1.0, 0.5, 9.0).unwrap();
        assert!((s.a - 7.25).abs() < 1e-9);
        assert!(s.b.abs() < 1e-9 && s.c1.abs() < 1e-9 && s.c2.abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let r = subordinate_linear(&[0.0, 0.25, 0.5], &[1.0, 2.0, 3.0], 1.0, 0.5, 8.0);
        assert!(matches!(r, Err(LpplError::TooFewPoints { got: 3, need: 4 })));
    }

    #[test]
    fn zero_exponent_is_rank_deficient() {
        let t = grid(20);
        let y: Vec<f64> = t.iter().map(|t| t * t).collect();
        let r = subordinate_linear(&t, &y, 1.0, 0.0, 0.0);
        assert!(matches!(r, Err(LpplError::RankDeficient)));
    }

    #[test]
    fn residuals_orthogonal_to_basis() {
        let t = grid(30);
        let y: Vec<f64> = t.iter().map(|&t| 8.0 + 0.1 * (3.0 * t).sin() + 0.02 * t * t).collect();
        let (tc, m, w) = (0.8, 0.35, 11.0);
        let s = subordinate_linear(&t, &y, tc, m, w).unwrap();
        let mut dots = [0.0f64; 4];
        for (&ti, &yi) in t.iter().zip(&y) {
            let row = basis_row(tc, m, w, ti);
            let r = yi - (s.a * row[0] + s.b * row[1] + s.c1 * row[2] + s.c2 * row[3]);
            for j in 0..4 {
                dots[j] += r * row[j];
            }
        }
        for d in dots {
            assert!(d.abs() < 1e-10, "{dots:?}");
        }
    }

    #[test]
    fn f32_round_trip() {
        let p = LpplParams { tc: 0.6f32, m: 0.45, omega: 8.5, a: 8.3, b: -0.4, c1: 0.03, c2: -0.02 };
        let t: Vec<f32> = grid(32).into_iter().map(|v| v as f32).collect();
        let y: Vec<f32> = t.iter().map(|&t| regime_eval(&p, t)).collect();
        let s = subordinate_linear(&t, &y, p.tc, p.m, p.omega).unwrap();
        assert!((s.b - p.b).abs() < 1e-2);
    }
}
