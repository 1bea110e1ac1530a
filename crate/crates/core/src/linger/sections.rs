use serde::{Deserialize, Serialize};

use super::passage::{calibrate_pre_jump, reach_x};
use crate::dynamics::{Model, OscillatorParams};
use crate::error::{Error, Result};
use crate::integrator::Direction;
use crate::manifolds::{attracting_root, CanardPoint, FastManifoldChart, FoldPoint, SlowManifoldChart};

/// Section offsets in state units. `*_pre` fields belong to the pre-jump
/// section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionOffsets {
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_z: f64,
    pub delta_x_pre: f64,
    pub delta_y_pre: f64,
    pub delta_z_pre: f64,
}

impl SectionOffsets {
    /// Checks positivity and that the two anchors stay strictly between the
    /// canard and fold x-coordinates, in order.
    pub fn validate(&self, gap: f64) -> Result<()> {
        let all = [
            ("delta_x", self.delta_x),
            ("delta_y", self.delta_y),
            ("delta_z", self.delta_z),
            ("delta_x_pre", self.delta_x_pre),
            ("delta_y_pre", self.delta_y_pre),
            ("delta_z_pre", self.delta_z_pre),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Argument(format!("{name} = {v} must be positive")));
            }
        }
        let gap = gap.abs();
        if self.delta_x >= gap || self.delta_x + self.delta_x_pre >= gap {
            return Err(Error::Argument(format!(
                "sections overlap: delta_x = {}, delta_x_pre = {} for |x_c - x_f| = {gap}",
                self.delta_x, self.delta_x_pre
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreJumpOffset {
    /// Same fraction of `|x_c - x_f|` as the entry section.
    Proportional,
    /// Chosen so that the slow-flow time between the two sections equals the
    /// quadrature window time.
    #[default]
    MatchQuadrature,
}

/// How offsets are derived from the geometry of one oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffsetRule {
    pub x_fraction: f64,
    pub y_fraction: f64,
    pub z_fraction: f64,
    pub pre_jump: PreJumpOffset,
    /// Used verbatim when present.
    pub explicit: Option<SectionOffsets>,
}

impl Default for OffsetRule {
    fn default() -> Self {
        OffsetRule {
            x_fraction: 0.02,
            y_fraction: 0.05,
            z_fraction: 0.05,
            pre_jump: PreJumpOffset::default(),
            explicit: None,
        }
    }
}

/// Offsets as fixed fractions of the slow-chart extents and `|x_c - x_f|`.
pub fn proportional_offsets(
    rule: &OffsetRule,
    canard: &CanardPoint,
    fold: &FoldPoint,
    slow: &SlowManifoldChart,
) -> SectionOffsets {
    let dx = rule.x_fraction * (canard.x - fold.x).abs();
    let dy = rule.y_fraction * slow.y_extent();
    let dz = rule.z_fraction * slow.z_extent();
    SectionOffsets { delta_x: dx, delta_y: dy, delta_z: dz, delta_x_pre: dx, delta_y_pre: dy, delta_z_pre: dz }
}

/// Applies `rule` to one oscillator.
pub fn resolve_offsets<M: Model + ?Sized>(
    rule: &OffsetRule,
    model: &M,
    params: &OscillatorParams,
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    fold: &FoldPoint,
) -> Result<SectionOffsets> {
    if let Some(o) = rule.explicit {
        o.validate(canard.x - fold.x)?;
        return Ok(o);
    }
    let mut o = proportional_offsets(rule, canard, fold, slow);
    if rule.pre_jump == PreJumpOffset::MatchQuadrature {
        o.delta_x_pre = calibrate_pre_jump(model, params, slow, canard, fold, o.delta_x, o.delta_y)?;
    }
    o.validate(canard.x - fold.x)?;
    Ok(o)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Entry,
    PreJump,
}

/// Plane `x_i = anchor_x` restricted to a `(y, z)` window, crossed in a
/// fixed direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub kind: SectionKind,
    pub oscillator: usize,
    pub anchor_x: f64,
    /// Window centre `(y, z)`.
    pub center: [f64; 2],
    pub half_widths: [f64; 2],
    /// Where the slow flow from the canard point meets the plane.
    pub anchor_yz: [f64; 2],
    /// `(phi_v, phi_u)` on the attracting sheet at the anchor point.
    pub phi: [f64; 2],
    pub phi_residual: f64,
    pub direction: Direction,
}

impl PoincareSection {
    pub fn in_window(&self, y: f64, z: f64) -> bool {
        (y - self.center[0]).abs() < self.half_widths[0] && (z - self.center[1]).abs() < self.half_widths[1]
    }

    pub fn anchor_state(&self) -> [f64; 5] {
        [self.phi[0], self.phi[1], self.anchor_x, self.anchor_yz[0], self.anchor_yz[1]]
    }
}

/// Entry and pre-jump sections. Anchors are oriented along the passage:
/// `x_c + sigma delta_x` and `x_f - sigma delta_x'` with
/// `sigma = sign(x_f - x_c)`.
#[allow(clippy::too_many_arguments)]
pub fn build_sections<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    charts: &[FastManifoldChart],
    slow: &SlowManifoldChart,
    canard: &CanardPoint,
    fold: &FoldPoint,
    offsets: &SectionOffsets,
) -> Result<(PoincareSection, PoincareSection)> {
    if canard.oscillator != fold.oscillator || slow.oscillator != canard.oscillator {
        return Err(Error::Argument(format!(
            "canard (oscillator {}) and fold (oscillator {}) do not match",
            canard.oscillator, fold.oscillator
        )));
    }
    offsets.validate(canard.x - fold.x)?;
    let sigma = (fold.x - canard.x).signum();
    let direction = if sigma > 0.0 { Direction::Rising } else { Direction::Falling };
    let make = |kind, anchor_x: f64, center: [f64; 2], half: [f64; 2]| -> Result<PoincareSection> {
        if let Some(c) = charts.first() {
            let xs = &c.axes.xs;
            if anchor_x < xs[0] || anchor_x > xs[xs.len() - 1] {
                return Err(Error::Range(format!(
                    "section anchor x = {anchor_x} outside chart range [{}, {}]",
                    xs[0],
                    xs[xs.len() - 1]
                )));
            }
        }
        let (_, y, z) = reach_x(model, params, slow, canard, anchor_x)?;
        let seed = slow.psi(model, &params.mu, y, z).ok().map(|w| [w[0], w[1]]);
        let node = attracting_root(model, params, charts, (anchor_x, y, z), seed)?;
        Ok(PoincareSection {
            kind,
            oscillator: canard.oscillator,
            anchor_x,
            center,
            half_widths: half,
            anchor_yz: [y, z],
            phi: [node.v, node.u],
            phi_residual: node.residual,
            direction,
        })
    };
    let entry = make(
        SectionKind::Entry,
        canard.x + sigma * offsets.delta_x,
        [canard.y, canard.z],
        [offsets.delta_y, offsets.delta_z],
    )?;
    let pre = make(
        SectionKind::PreJump,
        fold.x - sigma * offsets.delta_x_pre,
        [fold.y, fold.z],
        [offsets.delta_y_pre, offsets.delta_z_pre],
    )?;
    Ok((entry, pre))
}

/// `[y_c - delta_y, y_f]`, the quadrature window for the passage.
pub fn quadrature_window(canard: &CanardPoint, fold: &FoldPoint, offsets: &SectionOffsets) -> [f64; 2] {
    [canard.y - offsets.delta_y, fold.y]
}

