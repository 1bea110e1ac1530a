use serde::{Deserialize, Serialize};

use super::fast::{classify, fast_spectrum, Axes, Branch, FastManifoldChart};
use super::newton::newton;
use crate::dynamics::{Model, OscillatorParams, U, V, X};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowNode {
    pub v: f64,
    pub u: f64,
    pub x: f64,
    pub residual: f64,
    /// Total derivative of `f` along the fast sheet.
    pub dfdx: f64,
    pub branch: Branch,
}

/// Parameterization `(psi_v, psi_u, psi_x)` of the slow manifold over a
/// `(y, z)` grid, restricted to one fast sheet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowManifoldChart {
    pub oscillator: usize,
    pub sheet: usize,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    pub nodes: Vec<Option<SlowNode>>,
    pub min_abs_dfdx: f64,
}

impl SlowManifoldChart {
    pub fn node(&self, j: usize, k: usize) -> Option<&SlowNode> {
        self.nodes[k * self.ys.len() + j].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = ((usize, usize), &SlowNode)> + '_ {
        let ny = self.ys.len();
        self.nodes
            .iter()
            .enumerate()
            .filter_map(move |(idx, n)| n.as_ref().map(|n| ((idx % ny, idx / ny), n)))
    }

    pub fn max_residual(&self) -> f64 {
        self.present().fold(0.0, |m, (_, n)| m.max(n.residual))
    }

    pub fn y_extent(&self) -> f64 {
        self.ys[self.ys.len() - 1] - self.ys[0]
    }

    pub fn z_extent(&self) -> f64 {
        self.zs[self.zs.len() - 1] - self.zs[0]
    }

    pub fn covers(&self, y: f64, z: f64) -> bool {
        let (ylo, yhi) = (self.ys[0], self.ys[self.ys.len() - 1]);
        let (zlo, zhi) = (self.zs[0], self.zs[self.zs.len() - 1]);
        y >= ylo - 1e-12 && y <= yhi + 1e-12 && z >= zlo - 1e-12 && z <= zhi + 1e-12
    }

    /// Seed for `(v, u, x)` at `(y, z)`: linear interpolation in `y` between
    /// the two nearest present nodes on the nearest `z` line.
    pub fn seed(&self, y: f64, z: f64) -> Option<[f64; 3]> {
        let k = Axes::locate(&self.zs, z)?;
        let present: Vec<(f64, &SlowNode)> = (0..self.ys.len())
            .filter_map(|j| self.node(j, k).map(|n| (self.ys[j], n)))
            .collect();
        if present.is_empty() {
            return None;
        }
        let pos = present.partition_point(|(yy, _)| *yy < y);
        let pick = |i: usize| [present[i].1.v, present[i].1.u, present[i].1.x];
        if pos == 0 || present.len() == 1 {
            return Some(pick(0));
        }
        if pos >= present.len() {
            return Some(pick(present.len() - 1));
        }
        let (ya, yb) = (present[pos - 1].0, present[pos].0);
        let t = (y - ya) / (yb - ya);
        let (a, b) = (pick(pos - 1), pick(pos));
        Some([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])])
    }

    /// Exact `psi(y, z)` by Newton from the interpolated seed.
    pub fn psi<M: Model + ?Sized>(&self, model: &M, mu: &[f64], y: f64, z: f64) -> Result<[f64; 3]> {
        let seed = self
            .seed(y, z)
            .ok_or_else(|| Error::Range(format!("(y, z) = ({y}, {z}) outside the slow chart")))?;
        solve_slow_point(model, mu, seed, y, z).map(|(w, _)| w)
    }
}

/// Newton on `(h1, h2, f) = 0` in `(v, u, x)` at fixed `(y, z)`.
pub fn solve_slow_point<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    seed: [f64; 3],
    y: f64,
    z: f64,
) -> Result<([f64; 3], f64)> {
    let st = |w: &[f64; 3]| [w[0], w[1], w[2], y, z];
    newton(
        |w| {
            let s = st(w);
            [model.h1(&s, 0.0, 0.0, mu), model.h2(&s, 0.0, 0.0, mu), model.f(&s, 0.0, 0.0, mu)]
        },
        |w| {
            let j = model.jacobian(&st(w), 0.0, 0.0, mu);
            [
                [j[0][V], j[0][U], j[0][X]],
                [j[1][V], j[1][U], j[1][X]],
                [j[2][V], j[2][U], j[2][X]],
            ]
        },
        seed,
    )
}

/// `d/dx f(phi_v(x), phi_u(x), x, y, z)` at a point of the fast sheet.
pub fn total_dfdx<M: Model + ?Sized>(model: &M, s: &[f64; 5], mu: &[f64]) -> f64 {
    let j = model.jacobian(s, 0.0, 0.0, mu);
    let (a, b, c, d) = (j[0][V], j[0][U], j[1][V], j[1][U]);
    let det = a * d - b * c;
    if det == 0.0 {
        return f64::INFINITY;
    }
    // (phi_v', phi_u') = -J^{-1} (h1_x, h2_x)
    let (r1, r2) = (-j[0][X], -j[1][X]);
    let pv = (d * r1 - b * r2) / det;
    let pu = (-c * r1 + a * r2) / det;
    j[2][X] + j[2][V] * pv + j[2][U] * pu
}

/// Intersects one fast sheet with `f = 0` at every `(y, z)` node.
pub fn solve_slow_manifold<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    fast: &FastManifoldChart,
) -> Result<SlowManifoldChart> {
    let mu = params.mu.as_slice();
    let axes = &fast.axes;
    let [nx, ny, nz] = axes.shape();
    let mut nodes = vec![None; ny * nz];
    let mut min_abs = f64::INFINITY;
    for k in 0..nz {
        for j in 0..ny {
            let (y, z) = (axes.ys[j], axes.zs[k]);
            let fval = |i: usize| {
                fast.node(i, j, k)
                    .map(|n| model.f(&[n.v, n.u, axes.xs[i], y, z], 0.0, 0.0, mu))
            };
            let mut seed = None;
            for i in 0..nx {
                let Some(fa) = fval(i) else { continue };
                let a = fast.node(i, j, k).unwrap();
                if fa == 0.0 {
                    seed = Some([a.v, a.u, axes.xs[i]]);
                    break;
                }
                if i + 1 < nx {
                    if let (Some(fb), Some(b)) = (fval(i + 1), fast.node(i + 1, j, k)) {
                        if fa.signum() != fb.signum() {
                            let t = fa / (fa - fb);
                            seed = Some([
                                a.v + t * (b.v - a.v),
                                a.u + t * (b.u - a.u),
                                axes.xs[i] + t * (axes.xs[i + 1] - axes.xs[i]),
                            ]);
                            break;
                        }
                    }
                }
            }
            let Some(seed) = seed else { continue };
            let Ok((w, res)) = solve_slow_point(model, mu, seed, y, z) else { continue };
            let s = [w[0], w[1], w[2], y, z];
            let dfdx = total_dfdx(model, &s, mu);
            if dfdx.abs() < 1e-12 {
                return Err(Error::Assumption(format!(
                    "df/dx vanishes on the slow manifold at node (y, z) = ({y}, {z})"
                )));
            }
            min_abs = min_abs.min(dfdx.abs());
            let (trace, det) = fast_spectrum(model, &s, mu);
            nodes[k * ny + j] = Some(SlowNode {
                v: w[0],
                u: w[1],
                x: w[2],
                residual: res,
                dfdx,
                branch: classify(trace, det),
            });
        }
    }
    if nodes.iter().all(|n| n.is_none()) {
        return Err(Error::Assumption(format!(
            "f has no root on sheet {} of oscillator {}: no slow manifold in the region",
            fast.sheet, fast.oscillator
        )));
    }
    Ok(SlowManifoldChart {
        oscillator: fast.oscillator,
        sheet: fast.sheet,
        ys: axes.ys.clone(),
        zs: axes.zs.clone(),
        nodes,
        min_abs_dfdx: min_abs,
    })
}

/// Slow chart on the sheet carrying the most attracting slow-manifold nodes.
pub fn attracting_slow_manifold<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    charts: &[FastManifoldChart],
) -> Result<SlowManifoldChart> {
    let mut best: Option<(usize, SlowManifoldChart)> = None;
    let mut last_err = None;
    for c in charts {
        match solve_slow_manifold(model, params, c) {
            Ok(sc) => {
                let n = sc.present().filter(|(_, n)| n.branch == Branch::Attracting).count();
                if n > 0 && best.as_ref().is_none_or(|b| n > b.0) {
                    best = Some((n, sc));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, sc)), _) => Ok(sc),
        (None, Some(e @ Error::Assumption(_))) => Err(e),
        _ => Err(Error::NotFound("no attracting slow manifold in the region".into())),
    }
}
