//! Slow-flow passage from the canard point toward the fold.

use super::quadrature::{integrate_adaptive, Quadrature};
use crate::dynamics::{Model, OscillatorParams, TimeScales};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Event, IntegratorSettings};
use crate::manifolds::{CanardPoint, FoldPoint, ReducedFlow, SlowManifoldChart};

const HORIZON: f64 = 1e3;
const SIGN_SAMPLES: usize = 257;
/// Requested relative accuracy; tighter than the 1e-8 the report promises.
const QUAD_RTOL: f64 = 1e-10;

fn settings() -> IntegratorSettings {
    IntegratorSettings { max_step: 0.05, ..IntegratorSettings::default() }.with_tolerances(1e-10, 1e-12)
}

fn fold_event<'a, M: Model + ?Sized>(probe: &'a ReducedFlow<'a, M>, id: usize) -> Event<'a> {
    Event::new(id, move |_, s: &[f64]| probe.det(s[0], s[1])).terminal()
}

/// Slow time and `(y, z)` at which the slow flow from the canard point first
/// reaches `x = target_x` on the slow manifold.
pub fn reach_x<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    target_x: f64,
) -> Result<(f64, f64, f64)> {
    if (canard.x - target_x).abs() <= 1e-14 * (1.0 + target_x.abs()) {
        return Ok((0.0, canard.y, canard.z));
    }
    let mu = params.mu.as_slice();
    let flow = ReducedFlow::new(model, mu, slow, 1.0);
    let px = ReducedFlow::new(model, mu, slow, 1.0);
    let pd = ReducedFlow::new(model, mu, slow, 1.0);
    let events = [
        Event::new(0, |_, s: &[f64]| px.psi(s[0], s[1]).map_or(f64::NAN, |w| w[2]) - target_x).terminal(),
        fold_event(&pd, 1),
    ];
    let (_, rec) = integrate(&flow, 0.0, &[canard.y, canard.z], HORIZON, &settings(), &events)?;
    match rec.first() {
        Some(r) if r.id == 0 => Ok((r.t, r.state[0], r.state[1])),
        Some(r) => Err(Error::NotFound(format!(
            "slow flow reaches the fold at y = {} before x = {target_x}",
            r.state[0]
        ))),
        None => Err(Error::NotFound(format!("slow flow never reaches x = {target_x}"))),
    }
}

/// Oriented slow-time integral of `1 / g1` along the slow manifold over
/// `y_range` at fixed `z`.
pub fn slow_passage_integral<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    y_range: [f64; 2],
    z: f64,
) -> Result<Quadrature> {
    let mu = params.mu.as_slice();
    for y in [y_range[0], y_range[1]] {
        if !slow.covers(y, z) {
            return Err(Error::Range(format!("slow chart does not cover (y, z) = ({y}, {z})")));
        }
    }
    let g = |y: f64| -> Result<f64> {
        let w = slow.psi(model, mu, y, z)?;
        Ok(model.g1(&[w[0], w[1], w[2], y, z], 0.0, 0.0, mu))
    };
    let mut sign = 0.0;
    for i in 0..SIGN_SAMPLES {
        let y = y_range[0] + (y_range[1] - y_range[0]) * i as f64 / (SIGN_SAMPLES - 1) as f64;
        let v = g(y)?;
        if v == 0.0 || (sign != 0.0 && v.signum() != sign) {
            return Err(Error::SingularPassage(format!(
                "reduced drift g1 changes sign or vanishes near y = {y} (z = {z})"
            )));
        }
        sign = v.signum();
    }
    let q = integrate_adaptive(|y| g(y).map(|v| 1.0 / v), y_range[0], y_range[1], QUAD_RTOL)?;
    if q.value <= 0.0 {
        return Err(Error::SingularPassage(format!(
            "slow flow runs against the window [{}, {}]: integral {}",
            y_range[0], y_range[1], q.value
        )));
    }
    Ok(q)
}

/// Linger time in fast-time units over `y_range` with `z` frozen.
pub fn linger_time_quadrature<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    scales: &TimeScales,
    slow: &SlowManifoldChart,
    y_range: [f64; 2],
    z: f64,
) -> Result<Quadrature> {
    scales.validate()?;
    let q = slow_passage_integral(model, params, slow, y_range, z)?;
    let f = 1.0 / scales.slow_rate();
    Ok(Quadrature { value: q.value * f, error: q.error * f, evaluations: q.evaluations })
}

/// Pre-jump offset making the slow-flow time from the entry section to the
/// pre-jump section equal the quadrature window time.
pub fn calibrate_pre_jump<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    fold: &FoldPoint,
    delta_x: f64,
    delta_y: f64,
) -> Result<f64> {
    let sigma = (fold.x - canard.x).signum();
    let (tau_entry, _, _) = reach_x(model, params, slow, canard, canard.x + sigma * delta_x)?;
    let tau_q = slow_passage_integral(model, params, slow, [canard.y - delta_y, fold.y], canard.z)?.value;
    let mu = params.mu.as_slice();
    let flow = ReducedFlow::new(model, mu, slow, 1.0);
    let pd = ReducedFlow::new(model, mu, slow, 1.0);
    let events = [fold_event(&pd, 0)];
    let t_end = tau_entry + tau_q;
    let (traj, rec) = integrate(&flow, 0.0, &[canard.y, canard.z], t_end, &settings(), &events)?;
    if !rec.is_empty() {
        return Err(Error::Range(format!(
            "quadrature window time {tau_q} carries the slow flow past the fold"
        )));
    }
    let end = traj.last_state();
    let x_pre = flow.psi(end[0], end[1])?[2];
    let delta = sigma * (fold.x - x_pre);
    if delta <= 0.0 {
        return Err(Error::Range(format!("calibrated pre-jump offset {delta} is not positive")));
    }
    Ok(delta)
}

/// Point of the slow manifold upstream of the canard point, where
/// `|y - y_c| = fraction |y_c - y_f|`, found by running the slow flow
/// backward.
pub fn upstream_state<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    fold: &FoldPoint,
    fraction: f64,
) -> Result<[f64; 5]> {
    if !(fraction > 0.0) {
        return Err(Error::Argument(format!("upstream fraction {fraction} must be positive")));
    }
    let target = canard.y + fraction * (canard.y - fold.y);
    let mu = params.mu.as_slice();
    let flow = ReducedFlow::new(model, mu, slow, -1.0);
    let events = [Event::new(0, |_, s: &[f64]| s[0] - target).terminal()];
    let (_, rec) = integrate(&flow, 0.0, &[canard.y, canard.z], HORIZON, &settings(), &events)
        .map_err(|e| Error::NotFound(format!("backward slow flow to y = {target}: {e}")))?;
    let r = rec
        .first()
        .ok_or_else(|| Error::NotFound(format!("backward slow flow never reaches y = {target}")))?;
    let (y, z) = (r.state[0], r.state[1]);
    let w = slow.psi(model, mu, y, z)?;
    Ok([w[0], w[1], w[2], y, z])
}
