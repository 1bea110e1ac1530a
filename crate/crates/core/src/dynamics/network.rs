use serde::{Deserialize, Serialize};

use super::model::{eval_intrinsic, Model, OscillatorParams, State, TimeScales, V};
use crate::error::{Error, Result};
use crate::integrator::OdeSystem;

/// All-to-all network with weights `a_ij = 1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    pub k: f64,
}

impl NetworkConfig {
    pub fn new(n: usize, k: f64) -> Result<Self> {
        let c = NetworkConfig { n, k };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("N must be at least 1".into()));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::Argument(format!("coupling k = {} must be finite and >= 0", self.k)));
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub t: f64,
    pub states: Vec<State>,
}

impl NetworkState {
    pub fn new(t: f64, states: Vec<State>) -> Self {
        NetworkState { t, states }
    }

    pub fn from_flat(t: f64, flat: &[f64]) -> Self {
        let states = flat
            .chunks_exact(5)
            .map(|c| [c[0], c[1], c[2], c[3], c[4]])
            .collect();
        NetworkState { t, states }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.states.iter().flat_map(|r| r.iter().copied()).collect()
    }

    pub fn v_column(&self) -> Vec<f64> {
        self.states.iter().map(|r| r[V]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.states.iter().all(|r| r.iter().all(|v| v.is_finite()))
    }
}

/// Diffusive coupling `k (v_bar - v_i)` for every oscillator.
pub fn coupling_term(state: &NetworkState, config: &NetworkConfig) -> Result<Vec<f64>> {
    if state.n() == 0 {
        return Err(Error::Argument("empty network state".into()));
    }
    let v = state.v_column();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("non-finite v in network state".into()));
    }
    Ok(coupling_from_v(&v, config.k))
}

fn coupling_from_v(v: &[f64], k: f64) -> Vec<f64> {
    // mean taken about v[0] so equal entries give exactly zero
    let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64;
    v.iter().map(|vi| k * (mean - vi)).collect()
}

/// Full network vector field; coupling enters only the `v` equation.
pub fn network_rhs<M: Model + ?Sized>(
    model: &M,
    state: &NetworkState,
    config: &NetworkConfig,
    scales: &TimeScales,
    params: &[OscillatorParams],
) -> Result<Vec<State>> {
    if state.n() != config.n || params.len() != config.n {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} rows, {} parameter sets, N = {}",
            state.n(),
            params.len(),
            config.n
        )));
    }
    let coupling = coupling_term(state, config)?;
    state
        .states
        .iter()
        .zip(params)
        .zip(coupling)
        .enumerate()
        .map(|(i, ((row, p), c))| {
            let mut out = eval_intrinsic(model, row, scales, p).map_err(|e| with_index(e, i))?;
            out[V] += c;
            Ok(out)
        })
        .collect()
}

fn with_index(e: Error, i: usize) -> Error {
    match e {
        Error::Evaluation { function, state, .. } => Error::Evaluation {
            function,
            state,
            oscillator: Some(i),
        },
        other => other,
    }
}

/// The network as a flat first-order system for the integrator.
pub struct NetworkSystem<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub config: NetworkConfig,
    pub scales: TimeScales,
    pub params: &'a [OscillatorParams],
}

impl<'a, M: Model + ?Sized> NetworkSystem<'a, M> {
    pub fn new(
        model: &'a M,
        config: NetworkConfig,
        scales: TimeScales,
        params: &'a [OscillatorParams],
    ) -> Result<Self> {
        config.validate()?;
        if params.len() != config.n {
            return Err(Error::Argument(format!(
                "{} parameter sets for N = {}",
                params.len(),
                config.n
            )));
        }
        Ok(NetworkSystem { model, config, scales, params })
    }
}

impl<M: Model + ?Sized> OdeSystem for NetworkSystem<'_, M> {
    fn dim(&self) -> usize {
        5 * self.config.n
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.config.n;
        let mean = (0..n).map(|i| y[5 * i]).sum::<f64>() / n as f64;
        for i in 0..n {
            let row: State = [y[5 * i], y[5 * i + 1], y[5 * i + 2], y[5 * i + 3], y[5 * i + 4]];
            let out = eval_intrinsic(self.model, &row, &self.scales, &self.params[i])
                .map_err(|e| with_index(e, i))?;
            dy[5 * i..5 * i + 5].copy_from_slice(&out);
            dy[5 * i] += self.config.k * (mean - row[V]);
        }
        Ok(())
    }
}
