use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::NetworkState;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Population variance of a column and its mean. Equal entries give
/// exactly zero. `v` must be non-empty.
pub fn variance_of(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (var, mean)
}

/// `(V_v, v_bar)` of the fast variable across the network.
pub fn variance(state: &NetworkState) -> (f64, f64) {
    variance_of(&state.v_column())
}

fn v_column(flat: &[f64]) -> Vec<f64> {
    flat.iter().step_by(5).copied().collect()
}

/// Synchronization error along a run, with optional bound series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncTrace {
    pub times: Vec<f64>,
    pub v_var: Vec<f64>,
    pub w: Vec<f64>,
    pub v_mean: Vec<f64>,
    pub envelope: Option<Vec<f64>>,
    pub residual: Option<Vec<f64>>,
    pub cs_slack: Option<Vec<f64>>,
}

impl SyncTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_variance(&self) -> f64 {
        self.v_var.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with columns `t,V_v,W,envelope,residual,cs_slack`; missing series
    /// leave their cells empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,V_v,W,envelope,residual,cs_slack")?;
        let cell = |s: &Option<Vec<f64>>, i: usize| s.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[i],
                self.v_var[i],
                self.w[i],
                cell(&self.envelope, i),
                cell(&self.residual, i),
                cell(&self.cs_slack, i)
            )?;
        }
        Ok(())
    }
}

/// `V_v`, `W` and `v_bar` at every sample of a network trajectory.
pub fn sync_trace(traj: &Trajectory) -> Result<SyncTrace> {
    if traj.is_empty() || !traj.dim.is_multiple_of(5) {
        return Err(Error::Argument("sync trace needs a non-empty network trajectory".into()));
    }
    let mut v_var = Vec::with_capacity(traj.len());
    let mut v_mean = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let (var, mean) = variance_of(&v_column(traj.state(i)));
        v_var.push(var);
        v_mean.push(mean);
    }
    let w = v_var.iter().map(|v| v.sqrt()).collect();
    Ok(SyncTrace {
        times: traj.times.clone(),
        v_var,
        w,
        v_mean,
        envelope: None,
        residual: None,
        cs_slack: None,
    })
}
