use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One oscillator row `(v, u, x, y, z)`.
pub type State = [f64; 5];

pub const V: usize = 0;
pub const U: usize = 1;
pub const X: usize = 2;
pub const Y: usize = 3;
pub const Z: usize = 4;

/// Time-scale ratios: `eps_ts` separates fast from intermediate, `delta`
/// intermediate from slow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub eps_ts: f64,
    pub delta: f64,
}

impl TimeScales {
    pub fn new(eps_ts: f64, delta: f64) -> Result<Self> {
        let s = TimeScales { eps_ts, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_ts > 0.0 && self.eps_ts < 1.0) {
            return Err(Error::Argument(format!("eps_ts = {} not in (0,1)", self.eps_ts)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Argument(format!("delta = {} not in (0,1)", self.delta)));
        }
        if self.eps_ts * self.delta < 1e-12 {
            return Err(Error::Argument("eps_ts*delta below 1e-12".into()));
        }
        Ok(())
    }

    /// Rate of the slowest coordinates in fast time.
    pub fn slow_rate(&self) -> f64 {
        self.eps_ts * self.delta
    }
}

impl Default for TimeScales {
    fn default() -> Self {
        TimeScales { eps_ts: 0.05, delta: 0.1 }
    }
}

/// Control parameters `mu_i` of one oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub mu: Vec<f64>,
}

impl OscillatorParams {
    pub fn new(mu: Vec<f64>) -> Self {
        OscillatorParams { mu }
    }

    pub fn scalar(mu: f64) -> Self {
        OscillatorParams { mu: vec![mu] }
    }
}

/// Validates a parameter list: finite entries, common length.
pub fn validate_params(params: &[OscillatorParams]) -> Result<()> {
    let Some(first) = params.first() else {
        return Ok(());
    };
    for (i, p) in params.iter().enumerate() {
        if p.mu.len() != first.mu.len() {
            return Err(Error::Argument(format!(
                "oscillator {i} has {} parameters, expected {}",
                p.mu.len(),
                first.mu.len()
            )));
        }
        if p.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Argument(format!("oscillator {i} has non-finite parameters")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    H1,
    H2,
    F,
    G1,
    G2,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::H1,
        Component::H2,
        Component::F,
        Component::G1,
        Component::G2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::H1 => "h1",
            Component::H2 => "h2",
            Component::F => "f",
            Component::G1 => "g1",
            Component::G2 => "g2",
        }
    }
}

/// The five intrinsic right-hand-side functions of one oscillator.
///
/// `eps` and `delta` are passed through so that models may depend on them;
/// the manifold computations evaluate at `eps = delta = 0`.
pub trait Model: Send + Sync {
    fn id(&self) -> &str;

    fn h1(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64;
    fn h2(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64;
    fn f(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64;
    fn g1(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64;
    fn g2(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64;

    fn eval(&self, c: Component, s: &State, eps: f64, delta: f64, mu: &[f64]) -> f64 {
        match c {
            Component::H1 => self.h1(s, eps, delta, mu),
            Component::H2 => self.h2(s, eps, delta, mu),
            Component::F => self.f(s, eps, delta, mu),
            Component::G1 => self.g1(s, eps, delta, mu),
            Component::G2 => self.g2(s, eps, delta, mu),
        }
    }

    /// Raw values `(h1, h2, f, g1, g2)` without time-scale factors.
    fn raw(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> [f64; 5] {
        [
            self.h1(s, eps, delta, mu),
            self.h2(s, eps, delta, mu),
            self.f(s, eps, delta, mu),
            self.g1(s, eps, delta, mu),
            self.g2(s, eps, delta, mu),
        ]
    }

    /// Jacobian of the raw functions; row `r` is component `r`, column `c`
    /// is the derivative with respect to state coordinate `c`.
    fn jacobian(&self, s: &State, eps: f64, delta: f64, mu: &[f64]) -> [[f64; 5]; 5] {
        fd_jacobian(self, s, eps, delta, mu)
    }

    /// Named coefficients, for manifests and reports.
    fn coefficients(&self) -> Vec<(String, f64)> {
        Vec::new()
    }
}

/// Central finite-difference Jacobian with step `1e-6 (1 + |s_j|)`.
pub fn fd_jacobian<M: Model + ?Sized>(
    model: &M,
    s: &State,
    eps: f64,
    delta: f64,
    mu: &[f64],
) -> [[f64; 5]; 5] {
    let mut jac = [[0.0; 5]; 5];
    for j in 0..5 {
        let h = 1e-6 * (1.0 + s[j].abs());
        let mut sp = *s;
        let mut sm = *s;
        sp[j] += h;
        sm[j] -= h;
        let fp = model.raw(&sp, eps, delta, mu);
        let fm = model.raw(&sm, eps, delta, mu);
        for (r, row) in jac.iter_mut().enumerate() {
            row[j] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Fast-subsystem Jacobian `D_(v,u) (h1, h2)`.
pub fn fast_jacobian<M: Model + ?Sized>(model: &M, s: &State, mu: &[f64]) -> [[f64; 2]; 2] {
    let j = model.jacobian(s, 0.0, 0.0, mu);
    [[j[0][V], j[0][U]], [j[1][V], j[1][U]]]
}

type Evaluator = Box<dyn Fn(&State, &[f64]) -> f64 + Send + Sync>;

/// A model assembled from closures, for custom systems and tests.
/// Components left unset evaluate to zero.
pub struct ClosureModel {
    id: String,
    fns: [Evaluator; 5],
}

impl ClosureModel {
    pub fn new(id: impl Into<String>) -> Self {
        ClosureModel {
            id: id.into(),
            fns: std::array::from_fn(|_| Box::new(|_: &State, _: &[f64]| 0.0) as Evaluator),
        }
    }

    pub fn with(
        mut self,
        c: Component,
        f: impl Fn(&State, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.fns[c as usize] = Box::new(f);
        self
    }
}

impl Model for ClosureModel {
    fn id(&self) -> &str {
        &self.id
    }
    fn h1(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        (self.fns[0])(s, mu)
    }
    fn h2(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        (self.fns[1])(s, mu)
    }
    fn f(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        (self.fns[2])(s, mu)
    }
    fn g1(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        (self.fns[3])(s, mu)
    }
    fn g2(&self, s: &State, _: f64, _: f64, mu: &[f64]) -> f64 {
        (self.fns[4])(s, mu)
    }
}

/// Intrinsic vector field `(h1, h2, eps f, eps delta g1, eps delta g2)`.
pub fn eval_intrinsic<M: Model + ?Sized>(
    model: &M,
    row: &State,
    scales: &TimeScales,
    params: &OscillatorParams,
) -> Result<State> {
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("non-finite state {row:?}")));
    }
    let (eps, delta) = (scales.eps_ts, scales.delta);
    let raw = model.raw(row, eps, delta, &params.mu);
    for (c, value) in Component::ALL.iter().zip(raw.iter()) {
        if !value.is_finite() {
            return Err(Error::Evaluation {
                function: c.name(),
                state: *row,
                oscillator: None,
            });
        }
    }
    let slow = eps * delta;
    Ok([raw[0], raw[1], eps * raw[2], slow * raw[3], slow * raw[4]])
}
