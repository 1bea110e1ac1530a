//! Adaptive time stepping with dense output and event localization.

mod dopri;
mod export;
mod rosenbrock;

use serde::{Deserialize, Serialize};

use crate::dynamics::NetworkState;
use crate::error::{Error, Result};

pub use export::{read_binary, read_csv, write_binary, write_csv, BINARY_MAGIC};

/// A first-order system `dy/dt = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand–Prince 5(4), explicit.
    DormandPrince,
    /// Linearly implicit Rosenbrock 2(3) for stiff stretches.
    Rosenbrock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Zero selects the step automatically.
    pub initial_step: f64,
    pub method: Method,
    pub event_tolerance: f64,
    pub min_step: f64,
    pub max_steps: usize,
    /// Retry with the Rosenbrock method after a step-size underflow.
    pub fallback_on_underflow: bool,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: 1.0,
            initial_step: 0.0,
            method: Method::DormandPrince,
            event_tolerance: 1e-9,
            min_step: 1e-13,
            max_steps: 20_000_000,
            fallback_on_underflow: false,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rtol > 0.0
            && self.atol > 0.0
            && self.max_step > 0.0
            && self.event_tolerance > 0.0
            && self.initial_step >= 0.0
            && self.min_step > 0.0;
        if !ok {
            return Err(Error::Argument(format!("invalid integrator settings {self:?}")));
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    fn admits(self, sign: i8) -> bool {
        match self {
            Direction::Rising => sign > 0,
            Direction::Falling => sign < 0,
            Direction::Either => true,
        }
    }
}

type EventFn<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + 'a>;

/// Scalar event function; a crossing is a sign change along the solution.
pub struct Event<'a> {
    pub id: usize,
    pub g: EventFn<'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl<'a> Event<'a> {
    pub fn new(id: usize, g: impl Fn(f64, &[f64]) -> f64 + 'a) -> Self {
        Event { id, g: Box::new(g), direction: Direction::Either, terminal: false }
    }

    pub fn direction(mut self, d: Direction) -> Self {
        self.direction = d;
        self
    }

    pub fn terminal(mut self) -> Self {
        self.terminal = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: usize,
    pub t: f64,
    pub state: Vec<f64>,
    /// +1 for a rising crossing, -1 for a falling one.
    pub direction: i8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Accepted steps with their derivatives, interpolated by cubic Hermite
/// polynomials between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    pub stats: Stats,
    pub method: Method,
    /// Id of the terminal event that ended the run, if any.
    pub stopped_by: Option<usize>,
}

impl Trajectory {
    /// Builds a trajectory from samples and derivatives (e.g. synthetic data).
    pub fn from_samples(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        derivs: Vec<f64>,
    ) -> Result<Self> {
        if times.is_empty()
            || states.len() != dim * times.len()
            || derivs.len() != dim * times.len()
        {
            return Err(Error::Argument("inconsistent trajectory sample sizes".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("trajectory times must increase strictly".into()));
        }
        Ok(Trajectory {
            dim,
            times,
            states,
            derivs,
            stats: Stats::default(),
            method: Method::DormandPrince,
            stopped_by: None,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn deriv(&self, i: usize) -> &[f64] {
        &self.derivs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn network_state(&self, i: usize) -> NetworkState {
        NetworkState::from_flat(self.times[i], self.state(i))
    }

    /// Index `i` with `times[i] <= t <= times[i+1]`.
    fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Interpolated state at `t`, clamped to the covered span.
    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.interpolate_into(t, &mut out);
        out
    }

    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return;
        }
        let t = t.clamp(self.t0(), self.t_end());
        let i = self.segment(t);
        hermite(
            self.times[i],
            self.times[i + 1],
            self.state(i),
            self.state(i + 1),
            self.deriv(i),
            self.deriv(i + 1),
            t,
            out,
        );
    }

    /// Keeps samples `[0, n)`.
    pub fn truncate(&mut self, n: usize) {
        self.times.truncate(n);
        self.states.truncate(n * self.dim);
        self.derivs.truncate(n * self.dim);
    }

    fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dy);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hermite(
    t0: f64,
    t1: f64,
    y0: &[f64],
    y1: &[f64],
    f0: &[f64],
    f1: &[f64],
    t: f64,
    out: &mut [f64],
) {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    for j in 0..out.len() {
        out[j] = h00 * y0[j] + h10 * h * f0[j] + h01 * y1[j] + h11 * h * f1[j];
    }
}

/// Result of one trial step.
pub(crate) struct Trial {
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub err: f64,
}

pub(crate) trait Stepper {
    /// Exponent used by the step-size controller, `1 / (q + 1)`.
    fn error_exponent(&self) -> f64;
    #[allow(clippy::too_many_arguments)]
    fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        dy: &[f64],
        h: f64,
        settings: &IntegratorSettings,
        stats: &mut Stats,
    ) -> Result<Trial>;
}

/// Weighted RMS error norm.
pub(crate) fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], s: &IntegratorSettings) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = s.atol + s.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Integrates `sys` from `(t0, y0)` to `t1`.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    settings: &IntegratorSettings,
    events: &[Event<'_>],
) -> Result<(Trajectory, Vec<EventRecord>)> {
    integrate_with_stops(sys, t0, y0, t1, settings, events, &[])
}

/// As [`integrate`], but steps land exactly on every time in `stops`.
pub fn integrate_with_stops<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    settings: &IntegratorSettings,
    events: &[Event<'_>],
    stops: &[f64],
) -> Result<(Trajectory, Vec<EventRecord>)> {
    let run = |method: Method| match method {
        Method::DormandPrince => drive(sys, t0, y0, t1, settings, events, stops, dopri::DormandPrince::new(sys.dim())),
        Method::Rosenbrock => drive(sys, t0, y0, t1, settings, events, stops, rosenbrock::Rosenbrock23::new(sys.dim())),
    };
    match run(settings.method) {
        Err(Error::StepUnderflow { .. })
            if settings.fallback_on_underflow && settings.method != Method::Rosenbrock =>
        {
            run(Method::Rosenbrock)
        }
        other => other,
    }
}

/// Integrates the network system from a [`NetworkState`].
pub fn integrate_network<S: OdeSystem + ?Sized>(
    sys: &S,
    initial: &NetworkState,
    t1: f64,
    settings: &IntegratorSettings,
    events: &[Event<'_>],
    stops: &[f64],
) -> Result<(Trajectory, Vec<EventRecord>)> {
    if initial.n() * 5 != sys.dim() {
        return Err(Error::Argument("initial state does not match system dimension".into()));
    }
    integrate_with_stops(sys, initial.t, &initial.flat(), t1, settings, events, stops)
}

fn initial_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    order: f64,
    s: &IntegratorSettings,
    stats: &mut Stats,
) -> Result<f64> {
    let scale: Vec<f64> = y0.iter().map(|y| s.atol + s.rtol * y.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&scale).map(|(a, c)| (a / c).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(s.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(t0 + h0, &y1, &mut f1)?;
    stats.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / order)
    };
    Ok((100.0 * h0).min(h1).min(s.max_step))
}

#[allow(clippy::too_many_arguments)]
fn drive<S: OdeSystem + ?Sized, St: Stepper>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    settings: &IntegratorSettings,
    events: &[Event<'_>],
    stops: &[f64],
    mut stepper: St,
) -> Result<(Trajectory, Vec<EventRecord>)> {
    settings.validate()?;
    if !(t1 > t0) {
        return Err(Error::Argument(format!("empty time span [{t0}, {t1}]")));
    }
    let dim = sys.dim();
    if y0.len() != dim {
        return Err(Error::Argument(format!("initial state has {} entries, system {dim}", y0.len())));
    }
    let mut stats = Stats::default();
    let mut f0 = vec![0.0; dim];
    sys.rhs(t0, y0, &mut f0)?;
    stats.rhs_evals += 1;
    if f0.iter().chain(y0).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }

    let mut stop_list: Vec<f64> = stops.iter().copied().filter(|&s| s > t0 && s < t1).collect();
    stop_list.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stop_list.dedup();
    stop_list.push(t1);
    let mut next_stop = 0usize;

    let mut traj = Trajectory {
        dim,
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        stats,
        method: settings.method,
        stopped_by: None,
    };
    traj.push(t0, y0, &f0);

    let expo = stepper.error_exponent();
    let order = 1.0 / expo;
    let mut h = if settings.initial_step > 0.0 {
        settings.initial_step.min(settings.max_step)
    } else {
        initial_step(sys, t0, y0, &f0, order, settings, &mut stats)?
    };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut dy = f0;
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut records = Vec::new();
    let mut err_prev = 1e-4f64;
    let mut just_rejected = false;
    let mut scratch = vec![0.0; dim];

    loop {
        if stats.steps >= settings.max_steps {
            return Err(Error::StepBudget { t, steps: stats.steps });
        }
        let target = stop_list[next_stop];
        let remaining = target - t;
        let mut lands = false;
        let mut h_try = h;
        let rounding = 64.0 * f64::EPSILON * target.abs().max(t.abs());
        if h_try >= remaining * (1.0 - 1e-12) || remaining - h_try <= rounding {
            h_try = remaining;
            lands = true;
        } else if h_try > 0.5 * remaining {
            // avoid a sliver step just before the stop
            h_try = 0.5 * remaining;
        }
        if h_try < settings.min_step.max(16.0 * f64::EPSILON * t.abs()) {
            return Err(Error::StepUnderflow { t, h: h_try, state: y.clone() });
        }

        let trial = stepper.step(sys, t, &y, &dy, h_try, settings, &mut stats)?;
        let finite = trial.err.is_finite()
            && trial.y.iter().all(|v| v.is_finite())
            && trial.dy.iter().all(|v| v.is_finite());

        if finite && trial.err <= 1.0 {
            stats.steps += 1;
            let t_new = if lands { target } else { t + h_try };

            // events in this step, ordered by time
            let mut found: Vec<(f64, usize, i8, Vec<f64>)> = Vec::new();
            let mut g_new = Vec::with_capacity(events.len());
            for (k, ev) in events.iter().enumerate() {
                let gn = (ev.g)(t_new, &trial.y);
                g_new.push(gn);
                let gp = g_prev[k];
                let crossed = (gp < 0.0 && gn >= 0.0) || (gp > 0.0 && gn <= 0.0);
                if !crossed {
                    continue;
                }
                let sign: i8 = if gn > gp { 1 } else { -1 };
                if !ev.direction.admits(sign) {
                    continue;
                }
                // bracket on the Hermite interpolant, then finish on the
                // method's own one-step map, which carries the full order
                let (mut a, mut b) = (t, t_new);
                let mut ga = gp;
                let coarse_width = (1e-3 * h_try).max(settings.event_tolerance);
                while b - a > coarse_width {
                    let m = 0.5 * (a + b);
                    hermite(t, t_new, &y, &trial.y, &dy, &trial.dy, m, &mut scratch);
                    let gm = (ev.g)(m, &scratch);
                    if (ga < 0.0 && gm >= 0.0) || (ga > 0.0 && gm <= 0.0) {
                        b = m;
                    } else {
                        a = m;
                        ga = gm;
                    }
                }
                let mut stepped = |m: f64, stats: &mut Stats| -> Result<Vec<f64>> {
                    if m <= t {
                        return Ok(y.clone());
                    }
                    Ok(stepper.step(sys, t, &y, &dy, m - t, settings, stats)?.y)
                };
                let ya = stepped(a, &mut stats)?;
                let yb = if b == t_new { trial.y.clone() } else { stepped(b, &mut stats)? };
                let ga_s = (ev.g)(a, &ya);
                let gb_s = (ev.g)(b, &yb);
                let bracketed = (ga_s < 0.0 && gb_s >= 0.0) || (ga_s > 0.0 && gb_s <= 0.0);
                if bracketed {
                    let mut ga = ga_s;
                    while b - a > settings.event_tolerance {
                        let m = 0.5 * (a + b);
                        if m <= a || m >= b {
                            break;
                        }
                        let ym = stepped(m, &mut stats)?;
                        let gm = (ev.g)(m, &ym);
                        if (ga < 0.0 && gm >= 0.0) || (ga > 0.0 && gm <= 0.0) {
                            b = m;
                        } else {
                            a = m;
                            ga = gm;
                        }
                    }
                }
                let tc = 0.5 * (a + b);
                scratch.copy_from_slice(&stepped(tc, &mut stats)?);
                found.push((tc, k, sign, scratch.clone()));
            }
            found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut terminal: Option<(f64, usize, Vec<f64>)> = None;
            for (tc, k, sign, state) in found {
                records.push(EventRecord { id: events[k].id, t: tc, state: state.clone(), direction: sign });
                if events[k].terminal {
                    terminal = Some((tc, events[k].id, state));
                    break;
                }
            }
            if let Some((tc, id, state)) = terminal {
                let mut d = vec![0.0; dim];
                sys.rhs(tc, &state, &mut d)?;
                stats.rhs_evals += 1;
                if tc > t {
                    traj.push(tc, &state, &d);
                }
                traj.stopped_by = Some(id);
                break;
            }

            t = t_new;
            y = trial.y;
            dy = trial.dy;
            g_prev = g_new;
            traj.push(t, &y, &dy);

            if lands {
                next_stop += 1;
                if next_stop == stop_list.len() {
                    break;
                }
            }
            let mut fac = 0.9 * trial.err.max(1e-10).powf(-0.7 * expo) * err_prev.powf(0.4 * expo);
            fac = fac.clamp(0.2, 10.0);
            if just_rejected {
                fac = fac.min(1.0);
            }
            err_prev = trial.err.max(1e-4);
            just_rejected = false;
            let proposed = h_try * fac;
            // a step shortened to hit a stop says little about the next one
            h = if h_try < h { proposed.max(h) } else { proposed };
            h = h.min(settings.max_step);
        } else {
            stats.rejected += 1;
            let fac = if finite { (0.9 * trial.err.powf(-expo)).clamp(0.1, 0.9) } else { 0.25 };
            h = h_try * fac;
            just_rejected = true;
        }
    }
    traj.stats = stats;
    Ok((traj, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        // y = t^3 on [1, 2]
        let y0 = [1.0];
        let y1 = [8.0];
        let f0 = [3.0];
        let f1 = [12.0];
        let mut out = [0.0];
        hermite(1.0, 2.0, &y0, &y1, &f0, &f1, 1.3, &mut out);
        assert!((out[0] - 1.3f64.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_span() {
        let sys = FnSystem { dim: 1, f: |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] };
        assert!(integrate(&sys, 1.0, &[1.0], 1.0, &IntegratorSettings::default(), &[]).is_err());
    }

    #[test]
    fn lands_on_stop_points() {
        let sys = FnSystem { dim: 1, f: |_t: f64, y: &[f64], d: &mut [f64]| d[0] = -y[0] };
        let (traj, _) = integrate_with_stops(
            &sys,
            0.0,
            &[1.0],
            2.0,
            &IntegratorSettings::default(),
            &[],
            &[0.25, 1.0, 1.7],
        )
        .unwrap();
        for s in [0.25, 1.0, 1.7, 2.0] {
            assert!(traj.times.contains(&s), "missing stop {s}");
        }
    }
}
