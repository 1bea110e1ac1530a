use serde::{Deserialize, Serialize};

use super::fast::{continue_root, fast_spectrum, FastManifoldChart, FastOptions};
use super::newton::{fd_jac, newton};
use crate::dynamics::{Model, OscillatorParams, U, V, X};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub v: f64,
    pub u: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub oscillator: usize,
}

impl FoldPoint {
    pub fn state(&self) -> [f64; 5] {
        [self.v, self.u, self.x, self.y, self.z]
    }
}

/// Newton on `(h1, h2, det D_(v,u) h) = 0` in `(v, u, x)` at fixed `(y, z)`.
pub fn polish_fold<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    seed: [f64; 3],
    y: f64,
    z: f64,
) -> Result<[f64; 3]> {
    let f = |w: &[f64; 3]| {
        let s = [w[0], w[1], w[2], y, z];
        [
            model.h1(&s, 0.0, 0.0, mu),
            model.h2(&s, 0.0, 0.0, mu),
            fast_spectrum(model, &s, mu).1,
        ]
    };
    let jac = |w: &[f64; 3]| {
        let s = [w[0], w[1], w[2], y, z];
        let j = model.jacobian(&s, 0.0, 0.0, mu);
        let det_row = fd_jac(&f, w)[2];
        [[j[0][V], j[0][U], j[0][X]], [j[1][V], j[1][U], j[1][X]], det_row]
    };
    newton(f, jac, seed).map(|(w, _)| w)
}

/// Locates the fold between `x_known` (where the sheet has root `w`) and
/// `x_beyond` (where it does not) by bisection on continuation success.
#[allow(clippy::too_many_arguments)]
fn bisect_end<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    mut w: [f64; 2],
    mut lo: f64,
    mut hi: f64,
    y: f64,
    z: f64,
    opts: &FastOptions,
) -> Option<[f64; 3]> {
    for _ in 0..60 {
        if (hi - lo).abs() < 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match continue_root(model, mu, w, [lo, y, z], [mid, y, z], opts) {
            Some((wm, _)) => {
                w = wm;
                lo = mid;
            }
            None => hi = mid,
        }
    }
    Some([w[0], w[1], lo])
}

/// Fold points of one sheet, found where `det` changes sign between nodes or
/// where the sheet ends inside the grid.
pub fn find_fold_curve<M: Model + ?Sized>(
    chart: &FastManifoldChart,
    model: &M,
    params: &OscillatorParams,
) -> Result<Vec<FoldPoint>> {
    find_fold_curve_with(chart, model, params, &FastOptions::default())
}

pub fn find_fold_curve_with<M: Model + ?Sized>(
    chart: &FastManifoldChart,
    model: &M,
    params: &OscillatorParams,
    opts: &FastOptions,
) -> Result<Vec<FoldPoint>> {
    let mu = params.mu.as_slice();
    let axes = &chart.axes;
    let [nx, ny, nz] = axes.shape();
    let mut folds: Vec<FoldPoint> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            let (y, z) = (axes.ys[j], axes.zs[k]);
            let is_hole = |i: usize| chart.holes.contains(&[i, j, k]);
            let mut seeds: Vec<[f64; 3]> = Vec::new();
            for i in 0..nx {
                let Some(a) = chart.node(i, j, k) else { continue };
                // det sign change to the next node on the same sheet
                if let Some(b) = (i + 1 < nx).then(|| chart.node(i + 1, j, k)).flatten() {
                    if a.det.signum() != b.det.signum() {
                        seeds.push([
                            0.5 * (a.v + b.v),
                            0.5 * (a.u + b.u),
                            0.5 * (axes.xs[i] + axes.xs[i + 1]),
                        ]);
                    }
                }
                // sheet ends towards +x or -x
                for (nb, ok) in [(i + 1, i + 1 < nx), (i.wrapping_sub(1), i > 0)] {
                    if ok && chart.node(nb, j, k).is_none() && !is_hole(nb) {
                        if let Some(s) =
                            bisect_end(model, mu, [a.v, a.u], axes.xs[i], axes.xs[nb], y, z, opts)
                        {
                            seeds.push(s);
                        }
                    }
                }
            }
            for s in seeds {
                if let Ok(w) = polish_fold(model, mu, s, y, z) {
                    let p = FoldPoint { v: w[0], u: w[1], x: w[2], y, z, oscillator: chart.oscillator };
                    let dup = folds.iter().any(|q| {
                        (q.v - p.v).abs() < 1e-7 && (q.x - p.x).abs() < 1e-7 && q.y == p.y && q.z == p.z
                    });
                    if !dup {
                        folds.push(p);
                    }
                }
            }
        }
    }
    folds.sort_by(|a, b| {
        (a.x, a.y, a.z, a.v).partial_cmp(&(b.x, b.y, b.z, b.v)).unwrap()
    });
    Ok(folds)
}

/// Folds of all sheets, deduplicated (two sheets meeting at a fold both
/// report it).
pub fn find_all_folds<M: Model + ?Sized>(
    charts: &[FastManifoldChart],
    model: &M,
    params: &OscillatorParams,
) -> Result<Vec<FoldPoint>> {
    let mut all: Vec<FoldPoint> = Vec::new();
    for c in charts {
        for p in find_fold_curve(c, model, params)? {
            let dup = all.iter().any(|q| {
                (q.v - p.v).abs() < 1e-7 && (q.x - p.x).abs() < 1e-7 && q.y == p.y && q.z == p.z
            });
            if !dup {
                all.push(p);
            }
        }
    }
    all.sort_by(|a, b| (a.x, a.y, a.z, a.v).partial_cmp(&(b.x, b.y, b.z, b.v)).unwrap());
    Ok(all)
}
