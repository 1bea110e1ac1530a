use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::crossing::linger_time_empirical;
use super::passage::{slow_passage_integral, upstream_state};
use super::quadrature::Quadrature;
use super::sections::{build_sections, quadrature_window, resolve_offsets, OffsetRule, PoincareSection, SectionOffsets};
use crate::dynamics::{Model, NetworkConfig, NetworkSystem, OscillatorParams, TimeScales, X};
use crate::integrator::{integrate, Direction, Event, IntegratorSettings, Trajectory};
use crate::error::Result;
use crate::manifolds::{
    attracting_slow_manifold, find_canard_point, locate_jump_point, solve_fast_manifold, CanardPoint,
    CanardSelection, ChartGrid, FastManifoldChart, FastOptions, FoldPoint, Region, SlowManifoldChart,
};

/// Chart region, resolution and selection rules for the per-oscillator
/// geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySettings {
    pub region: Region,
    pub grid: ChartGrid,
    pub fast: FastOptions,
    pub canard: CanardSelection,
    pub offsets: OffsetRule,
    /// Slow-time budget for reaching the fold from the canard point.
    pub max_slow_time: f64,
}

impl Default for GeometrySettings {
    fn default() -> Self {
        GeometrySettings {
            region: Region { x: [-0.6, 2.0], y: [0.25, 2.25], z: [1.0, 2.0] },
            grid: ChartGrid { nx: 27, ny: 41, nz: 5 },
            fast: FastOptions::default(),
            canard: CanardSelection::Seeded { y: 1.75, z: 1.75 },
            offsets: OffsetRule::default(),
            max_slow_time: 100.0,
        }
    }
}

/// Manifolds, passage and sections of one uncoupled oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorGeometry {
    pub oscillator: usize,
    pub charts: Vec<FastManifoldChart>,
    pub slow: SlowManifoldChart,
    pub canard: CanardPoint,
    pub jump: FoldPoint,
    /// Slow time from the canard point to the fold along the reduced flow.
    pub passage_slow_time: f64,
    pub offsets: SectionOffsets,
    pub entry: PoincareSection,
    pub pre_jump: PoincareSection,
    /// Quadrature range in `y`.
    pub window: [f64; 2],
    /// Slow-time quadrature of `1 / g1` over `window` at `z = z_c`.
    pub slow_integral: Quadrature,
}

impl OscillatorGeometry {
    /// Quadrature linger time in fast-time units.
    pub fn linger_time(&self, scales: &TimeScales) -> f64 {
        self.slow_integral.value / scales.slow_rate()
    }

    pub fn linger_error(&self, scales: &TimeScales) -> f64 {
        self.slow_integral.error / scales.slow_rate()
    }

    pub fn attracting_chart(&self) -> &FastManifoldChart {
        &self.charts[self.slow.sheet]
    }
}

pub fn analyze_oscillator<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    oscillator: usize,
    settings: &GeometrySettings,
) -> Result<OscillatorGeometry> {
    let charts = solve_fast_manifold(model, params, oscillator, &settings.region, &settings.grid, &settings.fast)?;
    let slow = attracting_slow_manifold(model, params, &charts)?;
    let canard = find_canard_point(model, params, &charts, &slow, settings.canard)?;
    let (jump, tau) = locate_jump_point(model, params, &slow, &canard, settings.max_slow_time)?;
    let offsets = resolve_offsets(&settings.offsets, model, params, &slow, &canard, &jump)?;
    let (entry, pre_jump) = build_sections(model, params, &charts, &slow, &canard, &jump, &offsets)?;
    let window = quadrature_window(&canard, &jump, &offsets);
    let slow_integral = slow_passage_integral(model, params, &slow, window, canard.z)?;
    Ok(OscillatorGeometry {
        oscillator,
        charts,
        slow,
        canard,
        jump,
        passage_slow_time: tau,
        offsets,
        entry,
        pre_jump,
        window,
        slow_integral,
    })
}

/// [`analyze_oscillator`] for every oscillator in parallel.
pub fn analyze_network<M: Model + ?Sized>(
    model: &M,
    params: &[OscillatorParams],
    settings: &GeometrySettings,
) -> Vec<Result<OscillatorGeometry>> {
    params
        .par_iter()
        .enumerate()
        .map(|(i, p)| analyze_oscillator(model, p, i, settings))
        .collect()
}

/// Runs one uncoupled oscillator from a point of the slow manifold upstream
/// of its canard point until just past its pre-jump section. Returns the
/// trajectory and the empirical linger time.
pub fn empirical_passage<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    geometry: &OscillatorGeometry,
    scales: &TimeScales,
    integrator: &IntegratorSettings,
    upstream_fraction: f64,
) -> Result<(Trajectory, f64)> {
    let start = upstream_state(model, params, &geometry.slow, &geometry.canard, &geometry.jump, upstream_fraction)?;
    let single = std::slice::from_ref(params);
    let sys = NetworkSystem::new(model, NetworkConfig::new(1, 0.0)?, *scales, single)?;
    let pre = &geometry.pre_jump;
    let sigma = (geometry.jump.x - geometry.canard.x).signum();
    let stop_x = pre.anchor_x + 0.5 * sigma * geometry.offsets.delta_x_pre;
    let events = [Event::new(0, move |_, s: &[f64]| sigma * (s[X] - stop_x))
        .direction(Direction::Rising)
        .terminal()];
    let horizon = 2.0 * (1.0 + upstream_fraction) * geometry.passage_slow_time / scales.slow_rate();
    let (traj, _) = integrate(&sys, 0.0, &start, horizon, integrator, &events)?;
    let mut entry = geometry.entry;
    let mut pre_jump = *pre;
    entry.oscillator = 0;
    pre_jump.oscillator = 0;
    let t = linger_time_empirical(&traj, &entry, &pre_jump, 0)?;
    Ok((traj, t))
}
