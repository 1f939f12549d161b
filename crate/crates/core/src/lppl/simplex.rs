use crate::scalar::Scalar;

/// Stopping rules for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Largest vertex distance (per coordinate) from the best vertex.
    pub xtol: f64,
    /// Spread of objective values across the simplex.
    pub ftol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evals: 400, xtol: 1e-8, ftol: 1e-14 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Minimum<T, const N: usize> {
    pub x: [T; N],
    pub f: T,
    pub evals: usize,
    pub converged: bool,
}

/// Derivative-free Nelder–Mead descent with the standard coefficients
/// (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
///
/// Non-finite objective values are treated as `+∞`, so an objective can
/// encode box constraints by returning `NaN` or `∞` outside the box.
pub fn minimize<T, const N: usize, F>(
    mut objective: F,
    start: [T; N],
    step: [T; N],
    opts: SimplexOptions,
) -> Minimum<T, N>
where
    T: Scalar,
    F: FnMut(&[T; N]) -> T,
{
    let mut evals = 0usize;
    let mut eval = |x: &[T; N], evals: &mut usize| {
        *evals += 1;
        let v = objective(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };

    let mut verts: Vec<[T; N]> = Vec::with_capacity(N + 1);
    verts.push(start);
    for i in 0..N {
        let mut v = start;
        v[i] = v[i] + step[i];
        verts.push(v);
    }
    let mut fs: Vec<T> = verts.iter().map(|v| eval(v, &mut evals)).collect();

    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let xtol = T::lit(opts.xtol);
    let ftol = T::lit(opts.ftol);
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=N).collect();
        order.sort_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap_or(std::cmp::Ordering::Equal));
        let (best, worst, second) = (order[0], order[N], order[N - 1]);

        let spread_x = verts.iter().fold(T::zero(), |acc, v| {
            v.iter().zip(&verts[best]).fold(acc, |a, (&p, &q)| a.max((p - q).abs()))
        });
        let spread_f = if fs[worst].is_finite() { fs[worst] - fs[best] } else { T::infinity() };
        if spread_x <= xtol && spread_f <= ftol {
            converged = true;
            break;
        }

        let mut centroid = [T::zero(); N];
        for &idx in &order[..N] {
            for d in 0..N {
                centroid[d] = centroid[d] + verts[idx][d];
            }
        }
        let n = T::lit(N as f64);
        centroid.iter_mut().for_each(|c| *c = *c / n);
        let toward = |coef: T, from: &[T; N]| {
            let mut p = centroid;
            for d in 0..N {
                p[d] = centroid[d] + coef * (centroid[d] - from[d]);
            }
            p
        };

        let xr = toward(T::one(), &verts[worst]);
        let fr = eval(&xr, &mut evals);
        if fr < fs[best] {
            let xe = toward(two, &verts[worst]);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                verts[worst] = xe;
                fs[worst] = fe;
            } else {
                verts[worst] = xr;
                fs[worst] = fr;
            }
            continue;
        }
        if fr < fs[second] {
            verts[worst] = xr;
            fs[worst] = fr;
            continue;
        }
        // contraction: outside when the reflection beat the worst vertex
        let (xc, fc) = if fr < fs[worst] {
            let xc = toward(half, &verts[worst]);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = toward(-half, &verts[worst]);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fs[worst].min(fr) {
            verts[worst] = xc;
            fs[worst] = fc;
            continue;
        }
        let anchor = verts[best];
        for &idx in &order[1..] {
            for d in 0..N {
                verts[idx][d] = anchor[d] + half * (verts[idx][d] - anchor[d]);
            }
            fs[idx] = eval(&verts[idx], &mut evals);
        }
    }

    let best = (0..=N)
        .min_by(|&a, &b| fs[a].partial_cmp(&fs[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    Minimum { x: verts[best], f: fs[best], evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64; 2]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions { max_evals: 5000, xtol: 1e-10, ftol: 1e-20 };
        let r = minimize(f, [-1.2, 1.0], [0.1, 0.1], opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of the unconstrained quadratic lies at x = -1, outside x >= 0
        let f = |x: &[f64; 1]| if x[0] < 0.0 { f64::NAN } else { (x[0] + 1.0).powi(2) };
        let r = minimize(f, [2.0], [0.5], SimplexOptions { max_evals: 2000, xtol: 1e-10, ftol: 1e-20 });
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-8);
    }

    #[test]
    fn budget_is_respected() {
        let f = |x: &[f64; 3]| x.iter().map(|v| v * v).sum::<f64>();
        let r = minimize(f, [5.0, -3.0, 2.0], [1.0; 3], SimplexOptions { max_evals: 30, ..Default::default() });
        assert!(!r.converged);
        assert!(r.evals <= 30 + 3);
    }

    #[test]
    fn works_in_f32() {
        let f = |x: &[f32; 2]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let r = minimize(f, [0.0f32, 0.0], [0.5, 0.5], SimplexOptions { max_evals: 1000, xtol: 1e-4, ftol: 1e-8 });
        assert!((r.x[0] - 3.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3);
    }
}
