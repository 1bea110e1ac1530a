use serde::{Deserialize, Serialize};

use super::identity::check_variance_identity;
use super::threshold::{gronwall_envelope, threshold_terms, ThresholdInputs};
use super::trace::{sync_trace, variance_of, SyncTrace};
use crate::dynamics::{
    heterogeneity_bound, GridSpec, Model, NetworkConfig, NetworkState, NetworkSystem, OscillatorParams,
    State, StateBox, TimeScales,
};
use crate::error::{Error, Result};
use crate::integrator::{integrate_network, IntegratorSettings, Trajectory};
use crate::manifolds::{classify, fast_spectrum, nearest_node, Branch, FastManifoldChart};

/// Where a heterogeneity bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MSource {
    UserSupplied,
    /// Bounding box of an uncoupled pilot run.
    PilotBox,
    /// Bounding box of the verified run itself.
    TrajectoryBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub integrator: IntegratorSettings,
    /// Absolute slack on the envelope check, multiplied by `1 + W0`.
    pub envelope_slack: f64,
    /// Samples at which branch membership is tested.
    pub branch_samples: usize,
    /// Relative padding of the trajectory box used to measure `M`.
    pub box_inflation: f64,
    pub grid: GridSpec,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            integrator: IntegratorSettings::default(),
            envelope_slack: 1e-6,
            branch_samples: 2000,
            box_inflation: 0.1,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchExit {
    pub oscillator: usize,
    pub t: f64,
}

/// Stay of every oscillator on an attracting sheet of its fast manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchCheck {
    /// Last tested time before the first exit, or the end of the run.
    pub horizon: f64,
    pub exit: Option<BranchExit>,
    /// `horizon >= delta t_min`.
    pub satisfied: bool,
    /// `horizon > delta t_min`.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// An oscillator left the attracting branch before `delta t_min`.
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub k: f64,
    pub k_star: f64,
    pub steady_term: f64,
    pub transient_term: f64,
    pub transient_floored: bool,
    pub k_above_threshold: bool,
    pub inputs: ThresholdInputs,
    pub m_threshold_source: MSource,
    /// `M` used for the envelope and Cauchy–Schwarz checks.
    pub m_check: f64,
    pub m_check_source: MSource,
    pub delta_t_min: f64,
    pub v_at_delta_t_min: f64,
    pub v_at_t_min: f64,
    pub pass_at_delta_t_min: bool,
    pub pass_at_t_min: bool,
    /// `W(0) <= 2M/k`: the transient step of the bound has nothing to do.
    pub transient_check_vacuous: bool,
    /// `max (W - envelope)` over the on-branch samples; `None` when `k = 0`.
    pub envelope_max_violation: Option<f64>,
    pub envelope_ok: bool,
    pub min_cs_slack: f64,
    pub max_identity_residual: f64,
    pub branch: BranchCheck,
    pub verdict: Verdict,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

pub struct Verification {
    pub report: VerificationReport,
    pub trajectory: Trajectory,
    pub trace: SyncTrace,
}

fn row(s: &[f64], i: usize) -> State {
    [s[5 * i], s[5 * i + 1], s[5 * i + 2], s[5 * i + 3], s[5 * i + 4]]
}

/// Whether `s` lies inside the chart region with an attracting fast
/// linearization. Near a fold the run lags the critical manifold and may sit
/// over grid cells where the attracting sheet is already absent, so the
/// label is taken at the state itself rather than at a chart node.
pub fn on_attracting_branch<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    charts: &[FastManifoldChart],
    s: &State,
) -> bool {
    if nearest_node(charts, s).is_none() {
        return false;
    }
    let (trace, det) = fast_spectrum(model, s, &params.mu);
    classify(trace, det) == Branch::Attracting
}

/// First time any oscillator is found off its attracting branch, tested on
/// up to `samples` evenly spread trajectory samples and the last one.
pub fn branch_monitor<M: Model + ?Sized>(
    model: &M,
    params: &[OscillatorParams],
    charts: &[Vec<FastManifoldChart>],
    traj: &Trajectory,
    samples: usize,
) -> (f64, Option<BranchExit>) {
    let stride = (traj.len() / samples.max(1)).max(1);
    let mut idx: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    if idx.last() != Some(&(traj.len() - 1)) {
        idx.push(traj.len() - 1);
    }
    let mut last_ok = traj.t0();
    for i in idx {
        let s = traj.state(i);
        for (o, c) in charts.iter().enumerate() {
            if !on_attracting_branch(model, &params[o], c, &row(s, o)) {
                return (last_ok, Some(BranchExit { oscillator: o, t: traj.times[i] }));
            }
        }
        last_ok = traj.times[i];
    }
    (last_ok, None)
}

/// `M` over the inflated bounding box of the samples up to `t_end`, raised
/// to the largest `|h1|` met at those samples.
pub fn trajectory_box_bound<M: Model + ?Sized>(
    model: &M,
    params: &[OscillatorParams],
    traj: &Trajectory,
    t_end: f64,
    inflation: f64,
    grid: GridSpec,
) -> Result<f64> {
    let n = params.len();
    let mut rows = Vec::new();
    let mut at_samples = 0.0f64;
    for i in 0..traj.len() {
        if traj.times[i] > t_end {
            break;
        }
        for (o, p) in params.iter().enumerate() {
            let r = row(traj.state(i), o);
            at_samples = at_samples.max(model.h1(&r, 0.0, 0.0, &p.mu).abs());
            rows.push(r);
        }
    }
    debug_assert!(rows.len() % n == 0);
    let bbox = StateBox::bounding(rows.iter()).ok_or_else(|| Error::Argument("empty trajectory".into()))?;
    let grid_m = heterogeneity_bound(model, &bbox.inflate(inflation), params, grid)?.m;
    Ok(grid_m.max(at_samples))
}

/// Runs the network from `initial` to `t_min` and checks the sufficient
/// synchronization condition against the simulation.
#[allow(clippy::too_many_arguments)]
pub fn verify_theorem<M: Model + ?Sized>(
    model: &M,
    config: &NetworkConfig,
    scales: &TimeScales,
    params: &[OscillatorParams],
    charts: &[Vec<FastManifoldChart>],
    initial: &NetworkState,
    inputs: &ThresholdInputs,
    m_source: MSource,
    settings: &VerifySettings,
) -> Result<Verification> {
    let th = threshold_terms(inputs)?;
    if charts.len() != params.len() {
        return Err(Error::Argument("one set of fast charts per oscillator is required".into()));
    }
    let sys = NetworkSystem::new(model, *config, *scales, params)?;
    let delta_t_min = inputs.delta * inputs.t_min;
    let (traj, _) = integrate_network(
        &sys,
        initial,
        initial.t + inputs.t_min,
        &settings.integrator,
        &[],
        &[initial.t + delta_t_min],
    )?;
    let v_at = |t: f64| variance_of(&traj.interpolate(t).iter().step_by(5).copied().collect::<Vec<_>>()).0;
    let v_at_delta_t_min = v_at(initial.t + delta_t_min);
    let v_at_t_min = variance_of(&traj.last_state().iter().step_by(5).copied().collect::<Vec<_>>()).0;

    let (horizon, exit) = branch_monitor(model, params, charts, &traj, settings.branch_samples);
    let on_branch = horizon - initial.t;
    let branch = BranchCheck {
        horizon: on_branch,
        exit,
        satisfied: on_branch >= delta_t_min,
        strict: on_branch > delta_t_min,
    };

    let (m_check, m_check_source) = match m_source {
        MSource::UserSupplied => (inputs.m, MSource::UserSupplied),
        _ => (
            trajectory_box_bound(model, params, &traj, horizon, settings.box_inflation, settings.grid)?,
            MSource::TrajectoryBox,
        ),
    };

    let mut trace = sync_trace(&traj)?;
    let rel: Vec<f64> = trace.times.iter().map(|t| t - initial.t).collect();
    let w0 = trace.w[0];
    let k = config.k;
    let mut envelope_max_violation = None;
    if k > 0.0 {
        let env = gronwall_envelope(inputs.w0.max(w0), m_check, k, &rel)?;
        let worst = trace
            .times
            .iter()
            .zip(trace.w.iter().zip(&env))
            .filter(|(t, _)| **t <= horizon)
            .map(|(_, (w, e))| w - e)
            .fold(f64::NEG_INFINITY, f64::max);
        envelope_max_violation = Some(worst);
        trace.envelope = Some(env);
    }
    let envelope_ok = envelope_max_violation.is_none_or(|v| v <= settings.envelope_slack * (1.0 + inputs.w0));

    let (min_cs_slack, max_identity_residual) = if traj.len() >= 3 {
        let id = check_variance_identity(&traj, model, config, scales, params, m_check)?;
        let mut residual = vec![f64::NAN; traj.len()];
        let mut slack = vec![f64::NAN; traj.len()];
        residual[1..traj.len() - 1].copy_from_slice(&id.residual);
        slack[1..traj.len() - 1].copy_from_slice(&id.cs_slack);
        trace.residual = Some(residual);
        trace.cs_slack = Some(slack);
        let on: Vec<usize> = (0..id.times.len()).filter(|&i| id.times[i] <= horizon).collect();
        (
            on.iter().map(|&i| id.cs_slack[i]).fold(f64::INFINITY, f64::min),
            on.iter().map(|&i| id.residual[i]).fold(0.0, f64::max),
        )
    } else {
        (f64::INFINITY, 0.0)
    };

    let pass_at_t_min = v_at_t_min < inputs.eps_tol;
    let pass_at_delta_t_min = v_at_delta_t_min < inputs.eps_tol;
    let verdict = if !branch.satisfied {
        Verdict::Invalid
    } else if pass_at_t_min && envelope_ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let report = VerificationReport {
        k,
        k_star: th.k_star,
        steady_term: th.steady,
        transient_term: th.transient,
        transient_floored: th.transient_vacuous,
        k_above_threshold: k > th.k_star,
        inputs: *inputs,
        m_threshold_source: m_source,
        m_check,
        m_check_source,
        delta_t_min,
        v_at_delta_t_min,
        v_at_t_min,
        pass_at_delta_t_min,
        pass_at_t_min,
        transient_check_vacuous: k > 0.0 && inputs.w0 <= 2.0 * m_check / k,
        envelope_max_violation,
        envelope_ok,
        min_cs_slack,
        max_identity_residual,
        branch,
        verdict,
    };
    Ok(Verification { report, trajectory: traj, trace })
}
