use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, OscillatorParams, State};
use crate::error::{Error, Result};

/// Axis-aligned box in `(v, u, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: State,
    pub hi: State,
}

impl StateBox {
    pub fn new(lo: State, hi: State) -> Result<Self> {
        let b = StateBox { lo, hi };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for j in 0..5 {
            if !(self.lo[j].is_finite() && self.hi[j].is_finite()) {
                return Err(Error::Argument("unbounded state box".into()));
            }
            if self.lo[j] > self.hi[j] {
                return Err(Error::Argument(format!("empty state box on axis {j}")));
            }
        }
        Ok(())
    }

    /// Bounding box of a set of rows.
    pub fn bounding<'a>(rows: impl IntoIterator<Item = &'a State>) -> Option<Self> {
        let mut it = rows.into_iter();
        let first = it.next()?;
        let (mut lo, mut hi) = (*first, *first);
        for r in it {
            for j in 0..5 {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        Some(StateBox { lo, hi })
    }

    /// Grows every side by `fraction` of its width.
    pub fn inflate(&self, fraction: f64) -> Self {
        let mut out = *self;
        for j in 0..5 {
            let pad = fraction * (self.hi[j] - self.lo[j]);
            out.lo[j] -= pad;
            out.hi[j] += pad;
        }
        out
    }

    pub fn contains(&self, s: &State) -> bool {
        (0..5).all(|j| s[j] >= self.lo[j] && s[j] <= self.hi[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::Argument("grid needs at least 2 points per axis".into()));
        }
        Ok(GridSpec { points_per_axis })
    }

    /// Nested refinement: every old node is kept.
    pub fn refined(&self) -> Self {
        GridSpec { points_per_axis: 2 * self.points_per_axis - 1 }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points_per_axis: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityBound {
    pub m: f64,
    pub points_per_axis: usize,
}

/// `sup |h1_i|` over a uniform grid on `region` and over all oscillators.
pub fn heterogeneity_bound<M: Model + ?Sized>(
    model: &M,
    region: &StateBox,
    params: &[OscillatorParams],
    grid: GridSpec,
) -> Result<HeterogeneityBound> {
    region.validate()?;
    if grid.points_per_axis < 2 {
        return Err(Error::Argument("grid needs at least 2 points per axis".into()));
    }
    if params.is_empty() {
        return Err(Error::Argument("no oscillators".into()));
    }
    let n = grid.points_per_axis;
    let axes: Vec<Vec<f64>> = (0..5)
        .map(|j| (0..n).map(|i| node(region.lo[j], region.hi[j], i, n)).collect())
        .collect();
    let m = (0..n)
        .into_par_iter()
        .map(|i0| {
            let mut best = 0.0f64;
            let mut s = [axes[0][i0], 0.0, 0.0, 0.0, 0.0];
            for &u in &axes[1] {
                s[1] = u;
                for &x in &axes[2] {
                    s[2] = x;
                    for &y in &axes[3] {
                        s[3] = y;
                        for &z in &axes[4] {
                            s[4] = z;
                            for p in params {
                                best = best.max(model.h1(&s, 0.0, 0.0, &p.mu).abs());
                            }
                        }
                    }
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    if !m.is_finite() {
        return Err(Error::Evaluation { function: "h1", state: region.lo, oscillator: None });
    }
    Ok(HeterogeneityBound { m, points_per_axis: n })
}

/// Grid node `i` of `n` on `[lo, hi]`, exact at both ends.
fn node(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n - 1 {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / ((n - 1) as f64)
    }
}
