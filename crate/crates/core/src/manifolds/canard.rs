use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::fast::{classify, fast_spectrum, nearest_node, Branch, FastManifoldChart};
use super::fold::{find_all_folds, FoldPoint};
use super::newton::{fd_jac, newton};
use super::slow::{solve_slow_point, SlowManifoldChart};
use crate::dynamics::{Model, OscillatorParams, U, V, X, Y};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Event, IntegratorSettings, OdeSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanardPoint {
    pub v: f64,
    pub u: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub oscillator: usize,
}

impl CanardPoint {
    pub fn state(&self) -> [f64; 5] {
        [self.v, self.u, self.x, self.y, self.z]
    }
}

/// Which attracting intersection of the fast and slow manifolds to return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
#[derive(Default)]
pub enum CanardSelection {
    /// Candidate closest to the fold curve.
    #[default]
    NearestFold,
    /// Candidate `n` in grid order (z outer, y inner).
    Index { n: usize },
    /// Intersection at a given slow coordinate.
    Seeded { y: f64, z: f64 },
}


fn is_attracting<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    fast: &[FastManifoldChart],
    s: &[f64; 5],
) -> bool {
    let (trace, det) = fast_spectrum(model, s, mu);
    let own = classify(trace, det) == Branch::Attracting;
    let chart = nearest_node(fast, s).map(|(_, n)| n.branch == Branch::Attracting);
    own && chart.unwrap_or(false)
}

/// Solves `h1 = h2 = f = 0` at slow-chart seeds and selects one attracting
/// solution.
pub fn find_canard_point<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    fast: &[FastManifoldChart],
    slow: &SlowManifoldChart,
    selection: CanardSelection,
) -> Result<CanardPoint> {
    let mu = params.mu.as_slice();
    let osc = slow.oscillator;
    let point = |w: [f64; 3], y: f64, z: f64| CanardPoint { v: w[0], u: w[1], x: w[2], y, z, oscillator: osc };

    if let CanardSelection::Seeded { y, z } = selection {
        let seed = slow.seed(y, z).ok_or_else(|| {
            Error::NotFound(format!("seed (y, z) = ({y}, {z}) outside the slow chart"))
        })?;
        let (w, _) = solve_slow_point(model, mu, seed, y, z)?;
        let s = [w[0], w[1], w[2], y, z];
        if !is_attracting(model, mu, fast, &s) {
            return Err(Error::NotFound(format!(
                "intersection at (y, z) = ({y}, {z}) is not on an attracting branch"
            )));
        }
        return Ok(point(w, y, z));
    }

    let mut candidates = Vec::new();
    for ((j, k), node) in slow.present() {
        let (y, z) = (slow.ys[j], slow.zs[k]);
        let Ok((w, _)) = solve_slow_point(model, mu, [node.v, node.u, node.x], y, z) else {
            continue;
        };
        if is_attracting(model, mu, fast, &[w[0], w[1], w[2], y, z]) {
            candidates.push(point(w, y, z));
        }
    }
    if candidates.is_empty() {
        return Err(Error::NotFound(format!(
            "no attracting intersection of fast and slow manifolds for oscillator {osc}"
        )));
    }
    match selection {
        CanardSelection::Index { n } => candidates.get(n).copied().ok_or_else(|| {
            Error::NotFound(format!("canard index {n} but only {} candidates", candidates.len()))
        }),
        _ => {
            let folds = find_all_folds(fast, model, params)?;
            if folds.is_empty() {
                return Ok(candidates[0]);
            }
            let dist = |c: &CanardPoint| {
                folds
                    .iter()
                    .map(|f| {
                        let (a, b) = (c.state(), f.state());
                        (0..5).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            };
            Ok(*candidates
                .iter()
                .min_by(|a, b| dist(a).partial_cmp(&dist(b)).unwrap())
                .unwrap())
        }
    }
}

/// The reduced slow flow `(dy, dz)/dtau = (g1, g2)` on the slow manifold,
/// with `tau = eps delta t`. `sign = -1` runs it backward.
pub struct ReducedFlow<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub mu: &'a [f64],
    pub slow: &'a SlowManifoldChart,
    pub sign: f64,
    last: Cell<Option<[f64; 3]>>,
}

impl<'a, M: Model + ?Sized> ReducedFlow<'a, M> {
    pub fn new(model: &'a M, mu: &'a [f64], slow: &'a SlowManifoldChart, sign: f64) -> Self {
        ReducedFlow { model, mu, slow, sign, last: Cell::new(None) }
    }

    /// `psi(y, z)` warm-started from the previous solve.
    pub fn psi(&self, y: f64, z: f64) -> Result<[f64; 3]> {
        if !self.slow.covers(y, z) {
            return Err(Error::Range(format!("(y, z) = ({y}, {z}) left the slow chart")));
        }
        let seed = match self.last.get() {
            Some(w) => w,
            None => self.slow.seed(y, z).ok_or_else(|| Error::Range("slow chart empty".into()))?,
        };
        let w = match solve_slow_point(self.model, self.mu, seed, y, z) {
            Ok((w, _)) => w,
            Err(_) => {
                let seed = self.slow.seed(y, z).ok_or_else(|| Error::Range("slow chart empty".into()))?;
                solve_slow_point(self.model, self.mu, seed, y, z)?.0
            }
        };
        self.last.set(Some(w));
        Ok(w)
    }

    pub fn g(&self, y: f64, z: f64) -> Result<[f64; 2]> {
        let w = self.psi(y, z)?;
        let s = [w[0], w[1], w[2], y, z];
        Ok([self.model.g1(&s, 0.0, 0.0, self.mu), self.model.g2(&s, 0.0, 0.0, self.mu)])
    }

    pub fn det(&self, y: f64, z: f64) -> f64 {
        match self.psi(y, z) {
            Ok(w) => fast_spectrum(self.model, &[w[0], w[1], w[2], y, z], self.mu).1,
            Err(_) => f64::NAN,
        }
    }
}

impl<M: Model + ?Sized> OdeSystem for ReducedFlow<'_, M> {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let g = self.g(y[0], y[1])?;
        dy[0] = self.sign * g[0];
        dy[1] = self.sign * g[1];
        Ok(())
    }
}

pub(crate) fn reduced_settings() -> IntegratorSettings {
    IntegratorSettings { max_step: 0.05, ..IntegratorSettings::default() }.with_tolerances(1e-10, 1e-12)
}

/// Follows the reduced flow from the canard point until the slow manifold
/// meets the fold (`det D_(v,u) h = 0`), then polishes that point with
/// Newton on `(h1, h2, f, det)` in `(v, u, x, y)` at fixed `z`.
/// Returns the fold point and the slow-time duration of the passage.
pub fn locate_jump_point<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    max_slow_time: f64,
) -> Result<(FoldPoint, f64)> {
    let mu = params.mu.as_slice();
    let flow = ReducedFlow::new(model, mu, slow, 1.0);
    let probe = ReducedFlow::new(model, mu, slow, 1.0);
    let events = [Event::new(0, |_, s: &[f64]| probe.det(s[0], s[1])).terminal()];
    let (traj, rec) = integrate(
        &flow,
        0.0,
        &[canard.y, canard.z],
        max_slow_time,
        &reduced_settings(),
        &events,
    )
    .map_err(|e| Error::NotFound(format!("reduced flow from the canard point: {e}")))?;
    let Some(ev) = rec.first() else {
        return Err(Error::NotFound(format!(
            "reduced flow did not reach a fold within slow time {max_slow_time} (ended at y = {})",
            traj.last_state()[0]
        )));
    };
    let z = ev.state[1];
    let w = flow.psi(ev.state[0], z)?;
    let f = |q: &[f64; 4]| {
        let s = [q[0], q[1], q[2], q[3], z];
        [
            model.h1(&s, 0.0, 0.0, mu),
            model.h2(&s, 0.0, 0.0, mu),
            model.f(&s, 0.0, 0.0, mu),
            fast_spectrum(model, &s, mu).1,
        ]
    };
    let jac = |q: &[f64; 4]| {
        let s = [q[0], q[1], q[2], q[3], z];
        let j = model.jacobian(&s, 0.0, 0.0, mu);
        let row = |r: usize| [j[r][V], j[r][U], j[r][X], j[r][Y]];
        [row(0), row(1), row(2), fd_jac(&f, q)[3]]
    };
    let (q, _) = newton(f, jac, [w[0], w[1], w[2], ev.state[0]])?;
    let fold = FoldPoint { v: q[0], u: q[1], x: q[2], y: q[3], z, oscillator: canard.oscillator };
    Ok((fold, ev.t))
}
