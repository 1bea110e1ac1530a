use serde::{Deserialize, Serialize};

use super::trace::variance_of;
use crate::dynamics::{Model, NetworkConfig, OscillatorParams, TimeScales};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Pointwise check of the variance evolution law along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// Interior sample times (the first and last samples have no centred
    /// difference).
    pub times: Vec<f64>,
    /// `|dV/dt (finite difference) - (-2kV + (2/N) sum (v_i - v_bar)(h1_i - h1_bar))|`.
    pub residual: Vec<f64>,
    /// `4 M sqrt(V) - |(2/N) sum (v_i - v_bar)(h1_i - h1_bar)|`.
    pub cs_slack: Vec<f64>,
    /// `|dv_bar/dt (finite difference) - h1_bar|`.
    pub mean_field: Vec<f64>,
    pub max_residual: f64,
    pub min_cs_slack: f64,
    pub max_mean_field: f64,
}

/// Three-point derivative on a non-uniform grid, second order.
fn centred(t: [f64; 3], f: [f64; 3]) -> f64 {
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    -h2 / (h1 * (h1 + h2)) * f[0] + (h2 - h1) / (h1 * h2) * f[1] + h1 / (h2 * (h1 + h2)) * f[2]
}

/// Evaluates the variance identity, the Cauchy–Schwarz bound with
/// heterogeneity bound `m`, and the mean-field law at each interior sample.
pub fn check_variance_identity<M: Model + ?Sized>(
    traj: &Trajectory,
    model: &M,
    config: &NetworkConfig,
    scales: &TimeScales,
    params: &[OscillatorParams],
    m: f64,
) -> Result<IdentityCheck> {
    if traj.len() < 3 {
        return Err(Error::Argument(format!(
            "variance identity needs at least 3 samples, got {}",
            traj.len()
        )));
    }
    let n = config.n;
    if traj.dim != 5 * n || params.len() != n {
        return Err(Error::Argument("trajectory, network size and parameters disagree".into()));
    }
    let k = config.k;
    let mut var = Vec::with_capacity(traj.len());
    let mut mean = Vec::with_capacity(traj.len());
    let mut het = Vec::with_capacity(traj.len());
    let mut h1_mean = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let s = traj.state(i);
        let v: Vec<f64> = s.iter().step_by(5).copied().collect();
        let (vv, vb) = variance_of(&v);
        let h1: Vec<f64> = (0..n)
            .map(|j| {
                let row = [s[5 * j], s[5 * j + 1], s[5 * j + 2], s[5 * j + 3], s[5 * j + 4]];
                model.h1(&row, scales.eps_ts, scales.delta, &params[j].mu)
            })
            .collect();
        let hb = h1.iter().sum::<f64>() / n as f64;
        let term = 2.0 / n as f64 * (0..n).map(|j| (v[j] - vb) * (h1[j] - hb)).sum::<f64>();
        var.push(vv);
        mean.push(vb);
        het.push(term);
        h1_mean.push(hb);
    }
    let mut out = IdentityCheck {
        times: Vec::new(),
        residual: Vec::new(),
        cs_slack: Vec::new(),
        mean_field: Vec::new(),
        max_residual: 0.0,
        min_cs_slack: f64::INFINITY,
        max_mean_field: 0.0,
    };
    for i in 1..traj.len() - 1 {
        let t = [traj.times[i - 1], traj.times[i], traj.times[i + 1]];
        let dv = centred(t, [var[i - 1], var[i], var[i + 1]]);
        let dm = centred(t, [mean[i - 1], mean[i], mean[i + 1]]);
        let r = (dv - (-2.0 * k * var[i] + het[i])).abs();
        let cs = 4.0 * m * var[i].sqrt() - het[i].abs();
        let mf = (dm - h1_mean[i]).abs();
        out.times.push(t[1]);
        out.residual.push(r);
        out.cs_slack.push(cs);
        out.mean_field.push(mf);
        out.max_residual = out.max_residual.max(r);
        out.min_cs_slack = out.min_cs_slack.min(cs);
        out.max_mean_field = out.max_mean_field.max(mf);
    }
    Ok(out)
}
