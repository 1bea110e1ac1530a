use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const ROOT_TOL: f64 = 1e-10;
const MAX_ITER: usize = 50;

fn max_norm<const N: usize>(r: &[f64; N]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Damped Newton iteration for a square system of size `N`.
///
/// The step is halved while the residual max-norm grows. Returns the root and
/// its residual norm once the residual is below `ROOT_TOL` and the iteration
/// has stalled.
pub fn newton<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    jac: impl Fn(&[f64; N]) -> [[f64; N]; N],
    x0: [f64; N],
) -> Result<([f64; N], f64)> {
    let mut x = x0;
    let mut r = f(&x);
    let mut norm = max_norm(&r);
    if !norm.is_finite() {
        return Err(Error::NoConvergence(format!("non-finite residual at seed {x0:?}")));
    }
    for _ in 0..MAX_ITER {
        if norm <= 1e-3 * ROOT_TOL {
            break;
        }
        let j = jac(&x);
        let m = DMatrix::<f64>::from_fn(N, N, |a, b| j[a][b]);
        let rhs = DVector::<f64>::from_fn(N, |a, _| -r[a]);
        let Some(dx) = m.lu().solve(&rhs) else {
            return Err(Error::NoConvergence(format!("singular Jacobian at {x:?}")));
        };
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(format!("singular Jacobian at {x:?}")));
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = x;
            for a in 0..N {
                trial[a] += lambda * dx[a];
            }
            let rt = f(&trial);
            let nt = max_norm(&rt);
            if nt.is_finite() && (nt < norm || nt <= 1e-3 * ROOT_TOL) {
                x = trial;
                r = rt;
                norm = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        let step = dx.iter().fold(0.0f64, |m, v| m.max(v.abs())) * lambda;
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !accepted || step <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    if norm <= ROOT_TOL {
        Ok((x, norm))
    } else {
        Err(Error::NoConvergence(format!(
            "residual {norm:e} after {MAX_ITER} iterations from seed {x0:?}"
        )))
    }
}

/// Central-difference Jacobian of `f`.
pub fn fd_jac<const N: usize>(f: &impl Fn(&[f64; N]) -> [f64; N], x: &[f64; N]) -> [[f64; N]; N] {
    let mut j = [[0.0; N]; N];
    for b in 0..N {
        let h = 1e-6 * (1.0 + x[b].abs());
        let mut xp = *x;
        let mut xm = *x;
        xp[b] += h;
        xm[b] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        for a in 0..N {
            j[a][b] = (fp[a] - fm[a]) / (2.0 * h);
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_circle_line_intersection() {
        let f = |x: &[f64; 2]| [x[0] * x[0] + x[1] * x[1] - 1.0, x[0] - x[1]];
        let (x, r) = newton(f, |x| fd_jac(&f, x), [1.0, 0.2]).unwrap();
        assert!(r <= ROOT_TOL);
        assert!((x[0] - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reports_missing_root() {
        let f = |x: &[f64; 1]| [x[0] * x[0] + 1.0];
        assert!(newton(f, |x| fd_jac(&f, x), [0.3]).is_err());
    }
}
