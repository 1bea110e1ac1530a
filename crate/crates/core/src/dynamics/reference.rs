//! Built-in Hindmarsh–Rose-style burster with a slow feedback into the
//! fast voltage equation.
//!
//! ```text
//! h1 = u - a v^3 + b v^2 - x - kappa y + I + mu
//! h2 = c - d v^2 - u
//! f  = s (v - v0) - x
//! g1 = v - y + e1
//! g2 = y - z
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Model, OscillatorParams, State, U, V, X, Y, Z};
use crate::error::{Error, Result};

pub const REFERENCE_ID: &str = "hr5-reference";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub s: f64,
    pub v0: f64,
    pub i_app: f64,
    pub e1: f64,
    pub kappa: f64,
    pub mu0: f64,
}

impl Default for ReferenceCoefficients {
    fn default() -> Self {
        ReferenceCoefficients {
            a: 1.0,
            b: 3.0,
            c: 1.0,
            d: 5.0,
            s: 4.0,
            v0: -1.6,
            i_app: 2.0,
            e1: 1.5,
            kappa: 1.0,
            mu0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub coeffs: ReferenceCoefficients,
}

impl ReferenceModel {
    pub fn new(coeffs: ReferenceCoefficients) -> Result<Self> {
        let m = ReferenceModel { coeffs };
        m.check_assumptions(&[coeffs.mu0])?;
        Ok(m)
    }

    /// Fold abscissae of the fast subsystem, roots of `3a v^2 + 2(d-b) v`.
    pub fn fold_voltages(&self) -> [f64; 2] {
        let k = &self.coeffs;
        let other = 2.0 * (k.b - k.d) / (3.0 * k.a);
        if other < 0.0 {
            [other, 0.0]
        } else {
            [0.0, other]
        }
    }

    /// `det D_(v,u) h` in closed form.
    pub fn fast_det(&self, v: f64) -> f64 {
        let k = &self.coeffs;
        3.0 * k.a * v * v + 2.0 * (k.d - k.b) * v
    }

    /// Coefficients `[c3, c2, c1, c0]` of the cubic in `v` whose roots are
    /// the fast critical points at `(x, y)`.
    pub fn critical_cubic(&self, x: f64, y: f64, mu: f64) -> [f64; 4] {
        let k = &self.coeffs;
        [-k.a, k.b - k.d, 0.0, k.c + k.i_app + mu - x - k.kappa * y]
    }

    /// Lower fold voltage (the jump-off point of the lower attracting sheet).
    pub fn lower_fold_voltage(&self) -> f64 {
        self.fold_voltages()[0]
    }

    /// Slow-manifold equation in `v` at given `y`: zero iff `v` is on `M`.
    pub fn slow_cubic_residual(&self, v: f64, y: f64, mu: f64) -> f64 {
        let k = &self.coeffs;
        k.c + k.i_app + mu - k.kappa * y - k.a * v * v * v + (k.b - k.d) * v * v
            - k.s * (v - k.v0)
    }

    /// Value of `y` at which the slow manifold crosses the lower fold.
    pub fn fold_crossing_y(&self, mu: f64) -> Option<f64> {
        let k = &self.coeffs;
        if k.kappa == 0.0 {
            return None;
        }
        let vf = self.lower_fold_voltage();
        let rest = k.c + k.i_app + mu - k.a * vf * vf * vf + (k.b - k.d) * vf * vf
            - k.s * (vf - k.v0);
        Some(rest / k.kappa)
    }

    /// Startup validation of the conditions the reference family needs for
    /// an S-shaped fast manifold and a slow passage into the lower fold.
    pub fn check_assumptions(&self, mus: &[f64]) -> Result<()> {
        let k = &self.coeffs;
        let all = [k.a, k.b, k.c, k.d, k.s, k.v0, k.i_app, k.e1, k.kappa, k.mu0];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::Assumption("non-finite reference coefficient".into()));
        }
        if k.a <= 0.0 {
            return Err(Error::Assumption("a must be positive for an S-shaped manifold".into()));
        }
        if k.d == k.b {
            return Err(Error::Assumption("d = b gives a degenerate fold (no S shape)".into()));
        }
        // F(v) = slow cubic residual must be strictly decreasing so that M is a graph over y.
        if k.s * 3.0 * k.a <= (k.b - k.d).powi(2) {
            return Err(Error::Assumption(format!(
                "s = {} does not exceed (b-d)^2/(3a); the slow manifold folds over y",
                k.s
            )));
        }
        if k.kappa <= 0.0 {
            return Err(Error::Assumption(
                "kappa must be positive; without slow feedback the slow manifold is a point".into(),
            ));
        }
        let vf = self.lower_fold_voltage();
        for &mu in mus {
            let ys = self.fold_crossing_y(mu).unwrap_or(f64::NAN);
            // On the lower sheet near the fold, y must drift downward toward ys.
            let g1 = vf - ys + k.e1;
            if !(g1 < 0.0) {
                return Err(Error::Assumption(format!(
                    "reduced flow at the fold (mu = {mu}) is {g1}; no passage into the lower fold"
                )));
            }
        }
        Ok(())
    }
}

impl Model for ReferenceModel {
    fn id(&self) -> &str {
        REFERENCE_ID
    }

    fn h1(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        let k = &self.coeffs;
        let v = s[V];
        s[U] - k.a * v * v * v + k.b * v * v - s[X] - k.kappa * s[Y]
            + k.i_app
            + mu.first().copied().unwrap_or(0.0)
    }

    fn h2(&self, s: &State, _: f64, _: f64, _: &[f64]) -> f64 {
        let k = &self.coeffs;
        k.c - k.d * s[V] * s[V] - s[U]
    }

    fn f(&self, s: &State, _: f64, _: f64, _: &[f64]) -> f64 {
        let k = &self.coeffs;
        k.s * (s[V] - k.v0) - s[X]
    }

    fn g1(&self, s: &State, _: f64, _: f64, _: &[f64]) -> f64 {
        s[V] - s[Y] + self.coeffs.e1
    }

    fn g2(&self, s: &State, _: f64, _: f64, _: &[f64]) -> f64 {
        s[Y] - s[Z]
    }

    fn jacobian(&self, s: &State, _: f64, _: f64, _: &[f64]) -> [[f64; 5]; 5] {
        let k = &self.coeffs;
        let v = s[V];
        [
            [-3.0 * k.a * v * v + 2.0 * k.b * v, 1.0, -1.0, -k.kappa, 0.0],
            [-2.0 * k.d * v, -1.0, 0.0, 0.0, 0.0],
            [k.s, 0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, -1.0],
        ]
    }

    fn coefficients(&self) -> Vec<(String, f64)> {
        let k = &self.coeffs;
        [
            ("a", k.a),
            ("b", k.b),
            ("c", k.c),
            ("d", k.d),
            ("s", k.s),
            ("v0", k.v0),
            ("i_app", k.i_app),
            ("e1", k.e1),
            ("kappa", k.kappa),
            ("mu0", k.mu0),
        ]
        .iter()
        .map(|(n, v)| (n.to_string(), *v))
        .collect()
    }
}

/// Reference model plus per-oscillator offsets drawn uniformly from
/// `[mu0 - spread, mu0 + spread]` with a ChaCha8 stream keyed by `seed`.
pub fn make_reference_network(
    n: usize,
    spread: f64,
    seed: u64,
    coeffs: ReferenceCoefficients,
) -> Result<(ReferenceModel, Vec<OscillatorParams>)> {
    if n == 0 {
        return Err(Error::Argument("N must be at least 1".into()));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::Argument(format!("spread = {spread} must be finite and >= 0")));
    }
    let params = sample_offsets(n, spread, seed, coeffs.mu0);
    let model = ReferenceModel { coeffs };
    let mus: Vec<f64> = params.iter().map(|p| p.mu[0]).collect();
    model.check_assumptions(&mus)?;
    Ok((model, params))
}

fn sample_offsets(n: usize, spread: f64, seed: u64, mu0: f64) -> Vec<OscillatorParams> {
    if spread == 0.0 {
        return vec![OscillatorParams::scalar(mu0); n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r: f64 = rng.gen_range(-1.0..=1.0);
            OscillatorParams::scalar(mu0 + spread * r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::model::fd_jacobian;

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let m = ReferenceModel::default();
        let s = [-1.2, -6.0, 0.4, 1.1, 1.3];
        let a = m.jacobian(&s, 0.0, 0.0, &[0.02]);
        let n = fd_jacobian(&m, &s, 0.0, 0.0, &[0.02]);
        for r in 0..5 {
            for c in 0..5 {
                assert!((a[r][c] - n[r][c]).abs() < 1e-6, "({r},{c})");
            }
        }
    }

    #[test]
    fn fold_voltages_default() {
        let m = ReferenceModel::default();
        let [lo, hi] = m.fold_voltages();
        assert!((lo + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(hi, 0.0);
        assert_eq!(m.fast_det(lo), 0.0);
    }

    #[test]
    fn defaults_pass_assumption_checks() {
        ReferenceModel::new(ReferenceCoefficients::default()).unwrap();
        let flat = ReferenceCoefficients { kappa: 0.0, ..Default::default() };
        assert!(ReferenceModel::new(flat).is_err());
        let folded = ReferenceCoefficients { s: 1.0, ..Default::default() };
        assert!(ReferenceModel::new(folded).is_err());
    }

    #[test]
    fn fold_crossing_lies_on_slow_manifold() {
        let m = ReferenceModel::default();
        let y = m.fold_crossing_y(0.0).unwrap();
        assert!(m.slow_cubic_residual(-4.0 / 3.0, y, 0.0).abs() < 1e-12);
        assert!((y - 0.748148148148).abs() < 1e-9);
    }
}
