//! Shampine–Reichelt Rosenbrock 2(3) pair with finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use super::{error_norm, IntegratorSettings, OdeSystem, Stats, Stepper, Trial};
use crate::error::{Error, Result};

pub(crate) struct Rosenbrock23 {
    dim: usize,
}

impl Rosenbrock23 {
    pub fn new(dim: usize) -> Self {
        Rosenbrock23 { dim }
    }

    fn jacobian<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        stats: &mut Stats,
    ) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.dim;
        let mut jac = DMatrix::zeros(n, n);
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let h = 1e-7 * (1.0 + y[j].abs());
            yp[j] = y[j] + h;
            sys.rhs(t, &yp, &mut fp)?;
            yp[j] = y[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f0[i]) / h;
            }
        }
        let ht = 1e-7 * (1.0 + t.abs());
        sys.rhs(t + ht, y, &mut fp)?;
        stats.rhs_evals += n + 1;
        let dfdt = DVector::from_iterator(n, fp.iter().zip(f0).map(|(a, b)| (a - b) / ht));
        Ok((jac, dfdt))
    }
}

impl Stepper for Rosenbrock23 {
    fn error_exponent(&self) -> f64 {
        1.0 / 3.0
    }

    fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        settings: &IntegratorSettings,
        stats: &mut Stats,
    ) -> Result<Trial> {
        let n = self.dim;
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        let (jac, dfdt) = self.jacobian(sys, t, y, f0, stats)?;
        let w = DMatrix::identity(n, n) - jac * (h * d);
        let lu = w.lu();
        let solve = |rhs: DVector<f64>| -> Result<DVector<f64>> {
            lu.solve(&rhs)
                .ok_or_else(|| Error::NoConvergence(format!("singular Rosenbrock matrix at t = {t}")))
        };
        let yv = DVector::from_column_slice(y);
        let f0v = DVector::from_column_slice(f0);

        let k1 = solve(&f0v + &dfdt * (h * d))?;
        let y_half = &yv + &k1 * (0.5 * h);
        let mut f1 = vec![0.0; n];
        sys.rhs(t + 0.5 * h, y_half.as_slice(), &mut f1)?;
        let f1v = DVector::from_vec(f1);
        let k2 = solve(&f1v - &k1)? + &k1;
        let y_new = &yv + &k2 * h;
        let mut f2 = vec![0.0; n];
        sys.rhs(t + h, y_new.as_slice(), &mut f2)?;
        let f2v = DVector::from_column_slice(&f2);
        let k3 = solve(&f2v - (&k2 - &f1v) * e32 - (&k1 - &f0v) * 2.0 + &dfdt * (h * d))?;
        stats.rhs_evals += 2;

        let err_vec = (&k1 - &k2 * 2.0 + &k3) * (h / 6.0);
        let err = error_norm(err_vec.as_slice(), y, y_new.as_slice(), settings);
        Ok(Trial { y: y_new.as_slice().to_vec(), dy: f2, err })
    }
}
