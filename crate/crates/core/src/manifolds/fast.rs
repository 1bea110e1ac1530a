use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::newton::{newton, ROOT_TOL};
use crate::dynamics::{Model, OscillatorParams, State, U, V};
use crate::error::{Error, Result};

/// Box in the slower coordinates `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Argument(format!("invalid {name} range {r:?}")));
            }
        }
        Ok(())
    }
}

/// Node counts per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChartGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl ChartGrid {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 1 || self.nz < 1 {
            return Err(Error::Argument(format!("chart grid {self:?} too small")));
        }
        Ok(())
    }

    /// Nested refinement keeping every existing node.
    pub fn refined(&self) -> Self {
        let r = |n: usize| if n > 1 { 2 * n - 1 } else { 1 };
        ChartGrid { nx: r(self.nx), ny: r(self.ny), nz: r(self.nz) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
}

pub(crate) fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (range[0] + range[1])];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                range[1]
            } else {
                range[0] + (range[1] - range[0]) * (i as f64) / ((n - 1) as f64)
            }
        })
        .collect()
}

impl Axes {
    pub fn new(region: &Region, grid: &ChartGrid) -> Self {
        Axes { xs: axis(region.x, grid.nx), ys: axis(region.y, grid.ny), zs: axis(region.z, grid.nz) }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.xs.len(), self.ys.len(), self.zs.len()]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ys.len() + j) * self.xs.len() + i
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len() * self.zs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nearest node index on an axis, or `None` outside the axis range.
    pub(crate) fn locate(values: &[f64], t: f64) -> Option<usize> {
        let (lo, hi) = (values[0], *values.last().unwrap());
        let pad = if values.len() > 1 { 0.5 * (values[1] - values[0]).abs() } else { 0.0 };
        if t < lo - pad - 1e-12 || t > hi + pad + 1e-12 {
            return None;
        }
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if (v - t).abs() < (values[best] - t).abs() {
                best = i;
            }
        }
        Some(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Attracting,
    Repelling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastNode {
    pub v: f64,
    pub u: f64,
    pub branch: Branch,
    pub det: f64,
    pub trace: f64,
    pub residual: f64,
}

/// One continuity sheet of the fast critical manifold over an `(x, y, z)`
/// grid; nodes where the sheet does not exist are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastManifoldChart {
    pub oscillator: usize,
    pub sheet: usize,
    pub axes: Axes,
    pub nodes: Vec<Option<FastNode>>,
    /// Interior nodes where Newton failed although the sheet continues.
    pub holes: Vec<[usize; 3]>,
}

impl FastManifoldChart {
    pub fn node(&self, i: usize, j: usize, k: usize) -> Option<&FastNode> {
        self.nodes[self.axes.index(i, j, k)].as_ref()
    }

    pub fn present(&self) -> impl Iterator<Item = ([usize; 3], &FastNode)> + '_ {
        let [nx, ny, _] = self.axes.shape();
        self.nodes.iter().enumerate().filter_map(move |(idx, n)| {
            n.as_ref().map(|node| ([idx % nx, (idx / nx) % ny, idx / (nx * ny)], node))
        })
    }

    pub fn count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.present().fold(0.0, |m, (_, n)| m.max(n.residual))
    }

    pub fn attracting_count(&self) -> usize {
        self.present().filter(|(_, n)| n.branch == Branch::Attracting).count()
    }

    pub fn coords(&self, idx: [usize; 3]) -> (f64, f64, f64) {
        (self.axes.xs[idx[0]], self.axes.ys[idx[1]], self.axes.zs[idx[2]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FastOptions {
    /// Interval scanned for Newton seeds in `v`.
    pub v_range: [f64; 2],
    pub seeds: usize,
    /// Continuation sub-steps between neighbouring nodes.
    pub substeps: usize,
}

impl Default for FastOptions {
    fn default() -> Self {
        FastOptions { v_range: [-4.0, 4.0], seeds: 41, substeps: 8 }
    }
}

impl FastOptions {
    fn max_jump(&self) -> f64 {
        (self.v_range[1] - self.v_range[0]) / 16.0
    }
}

pub(crate) fn fast_residual<M: Model + ?Sized>(model: &M, s: &State, mu: &[f64]) -> [f64; 2] {
    [model.h1(s, 0.0, 0.0, mu), model.h2(s, 0.0, 0.0, mu)]
}

/// Newton solve of `h1 = h2 = 0` for `(v, u)` at fixed `(x, y, z)`.
pub(crate) fn fast_root<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    seed: [f64; 2],
    x: f64,
    y: f64,
    z: f64,
) -> Result<([f64; 2], f64)> {
    let state = |w: &[f64; 2]| [w[0], w[1], x, y, z];
    newton(
        |w| fast_residual(model, &state(w), mu),
        |w| {
            let j = model.jacobian(&state(w), 0.0, 0.0, mu);
            [[j[0][V], j[0][U]], [j[1][V], j[1][U]]]
        },
        seed,
    )
}

/// Trace and determinant of the fast-subsystem Jacobian.
pub fn fast_spectrum<M: Model + ?Sized>(model: &M, s: &State, mu: &[f64]) -> (f64, f64) {
    let j = model.jacobian(s, 0.0, 0.0, mu);
    let trace = j[0][V] + j[1][U];
    let det = j[0][V] * j[1][U] - j[0][U] * j[1][V];
    (trace, det)
}

/// Both eigenvalues of a real 2x2 matrix have negative real part iff the
/// trace is negative and the determinant positive.
pub fn classify(trace: f64, det: f64) -> Branch {
    if trace < 0.0 && det > 0.0 {
        Branch::Attracting
    } else {
        Branch::Repelling
    }
}

fn make_node<M: Model + ?Sized>(model: &M, mu: &[f64], w: [f64; 2], res: f64, x: f64, y: f64, z: f64) -> FastNode {
    let s = [w[0], w[1], x, y, z];
    let (trace, det) = fast_spectrum(model, &s, mu);
    FastNode { v: w[0], u: w[1], branch: classify(trace, det), det, trace, residual: res }
}

/// Continues a root from `(from)` to `(to)` in small sub-steps; fails when a
/// sub-step jumps by more than `max_jump` in `v` or crosses `det = 0`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn continue_root<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    seed: [f64; 2],
    from: [f64; 3],
    to: [f64; 3],
    opts: &FastOptions,
) -> Option<([f64; 2], f64)> {
    let det_at = |w: [f64; 2], p: [f64; 3]| fast_spectrum(model, &[w[0], w[1], p[0], p[1], p[2]], mu).1;
    let start_sign = det_at(seed, from).signum();
    let mut w = seed;
    let mut res = 0.0;
    let n = opts.substeps.max(1);
    for s in 1..=n {
        let f = s as f64 / n as f64;
        let p = [
            from[0] + f * (to[0] - from[0]),
            from[1] + f * (to[1] - from[1]),
            from[2] + f * (to[2] - from[2]),
        ];
        let (next, r) = fast_root(model, mu, w, p[0], p[1], p[2]).ok()?;
        if (next[0] - w[0]).abs() > opts.max_jump() || det_at(next, p).signum() != start_sign {
            return None;
        }
        w = next;
        res = r;
    }
    Some((w, res))
}

fn seed_roots<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    x: f64,
    y: f64,
    z: f64,
    opts: &FastOptions,
) -> Vec<([f64; 2], f64)> {
    let mut out: Vec<([f64; 2], f64)> = Vec::new();
    let n = opts.seeds.max(2);
    for s in 0..n {
        let v = opts.v_range[0] + (opts.v_range[1] - opts.v_range[0]) * s as f64 / (n - 1) as f64;
        // seed u from h2 = 0 with v frozen
        let u = newton(
            |w: &[f64; 1]| [model.h2(&[v, w[0], x, y, z], 0.0, 0.0, mu)],
            |w| [[model.jacobian(&[v, w[0], x, y, z], 0.0, 0.0, mu)[1][U]]],
            [0.0],
        )
        .map(|(w, _)| w[0])
        .unwrap_or(0.0);
        if let Ok((w, r)) = fast_root(model, mu, [v, u], x, y, z) {
            if w[0] >= opts.v_range[0] - 1.0 && w[0] <= opts.v_range[1] + 1.0 {
                push_unique(&mut out, w, r);
            }
        }
    }
    out
}

fn same_root(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() <= 1e-7 * (1.0 + a[0].abs()) && (a[1] - b[1]).abs() <= 1e-7 * (1.0 + a[1].abs())
}

fn push_unique(out: &mut Vec<([f64; 2], f64)>, w: [f64; 2], r: f64) {
    if !out.iter().any(|(o, _)| same_root(*o, w)) {
        out.push((w, r));
    }
}

/// A chain of roots along one x-line.
#[derive(Debug, Clone)]
struct Chain {
    nodes: Vec<(usize, [f64; 2], f64)>,
    holes: Vec<usize>,
}

impl Chain {
    fn last(&self) -> &(usize, [f64; 2], f64) {
        self.nodes.last().unwrap()
    }
    fn at(&self, i: usize) -> Option<[f64; 2]> {
        self.nodes.iter().find(|n| n.0 == i).map(|n| n.1)
    }
}

fn trace_line<M: Model + ?Sized>(
    model: &M,
    mu: &[f64],
    xs: &[f64],
    y: f64,
    z: f64,
    opts: &FastOptions,
) -> Vec<Chain> {
    let mut chains: Vec<Chain> = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        let mut claimed: Vec<([f64; 2], f64, usize)> = Vec::new();
        // continuation of chains alive at i-1, then reattachment after a hole
        for back in [1usize, 2] {
            if i < back {
                continue;
            }
            for (c, chain) in chains.iter().enumerate() {
                let (li, lw, _) = *chain.last();
                if li != i - back || claimed.iter().any(|e| e.2 == c) {
                    continue;
                }
                if let Some((w, r)) =
                    continue_root(model, mu, lw, [xs[li], y, z], [x, y, z], opts)
                {
                    if !claimed.iter().any(|e| same_root(e.0, w)) {
                        claimed.push((w, r, c));
                    }
                }
            }
        }
        for (w, r, c) in &claimed {
            if i >= 2 && chains[*c].last().0 == i - 2 {
                chains[*c].holes.push(i - 1);
            }
            chains[*c].nodes.push((i, *w, *r));
        }
        for (w, r) in seed_roots(model, mu, x, y, z, opts) {
            if !claimed.iter().any(|e| same_root(e.0, w)) {
                claimed.push((w, r, chains.len()));
                chains.push(Chain { nodes: vec![(i, w, r)], holes: Vec::new() });
            }
        }
    }
    chains
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, a: usize) -> usize {
        let mut r = a;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = a;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Computes all sheets of `{h1 = 0, h2 = 0}` over the grid.
pub fn solve_fast_manifold<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    oscillator: usize,
    region: &Region,
    grid: &ChartGrid,
    opts: &FastOptions,
) -> Result<Vec<FastManifoldChart>> {
    region.validate()?;
    grid.validate()?;
    let axes = Axes::new(region, grid);
    let [nx, ny, nz] = axes.shape();
    let mu = params.mu.as_slice();

    let lines: Vec<(usize, usize)> = (0..nz).flat_map(|k| (0..ny).map(move |j| (j, k))).collect();
    let traced: Vec<Vec<Chain>> = lines
        .par_iter()
        .map(|&(j, k)| trace_line(model, mu, &axes.xs, axes.ys[j], axes.zs[k], opts))
        .collect();

    let mut ids: Vec<(usize, usize)> = Vec::new();
    let mut offset = vec![0usize; lines.len()];
    for (l, chains) in traced.iter().enumerate() {
        offset[l] = ids.len();
        for c in 0..chains.len() {
            ids.push((l, c));
        }
    }
    if ids.is_empty() {
        return Err(Error::NotFound(format!(
            "no root of (h1, h2) anywhere in the region for oscillator {oscillator}"
        )));
    }

    // link chains of neighbouring lines by continuation in (y, z)
    let line_of = |j: usize, k: usize| k * ny + j;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            let l = line_of(j, k);
            for nb in [(j + 1 < ny).then(|| line_of(j + 1, k)), (k + 1 < nz).then(|| line_of(j, k + 1))]
                .into_iter()
                .flatten()
            {
                pairs.push((l, nb));
            }
        }
    }
    let links: Vec<(usize, usize)> = pairs
        .par_iter()
        .flat_map_iter(|&(l, nb)| {
            let (ja, ka) = (lines[l].0, lines[l].1);
            let (jb, kb) = (lines[nb].0, lines[nb].1);
            let mut found = Vec::new();
            for (ca, chain_a) in traced[l].iter().enumerate() {
                'nodes: for &(i, w, _) in &chain_a.nodes {
                    let from = [axes.xs[i], axes.ys[ja], axes.zs[ka]];
                    let to = [axes.xs[i], axes.ys[jb], axes.zs[kb]];
                    let Some((wc, _)) = continue_root(model, mu, w, from, to, opts) else {
                        continue;
                    };
                    for (cb, chain_b) in traced[nb].iter().enumerate() {
                        if chain_b.at(i).is_some_and(|wb| same_root(wb, wc)) {
                            found.push((offset[l] + ca, offset[nb] + cb));
                            break 'nodes;
                        }
                    }
                }
            }
            found
        })
        .collect();
    let mut uf = UnionFind((0..ids.len()).collect());
    for (a, b) in links {
        uf.union(a, b);
    }

    let mut roots: Vec<usize> = (0..ids.len()).map(|g| uf.find(g)).collect();
    let mut classes: Vec<usize> = roots.clone();
    classes.sort_unstable();
    classes.dedup();

    let mut charts: Vec<FastManifoldChart> = classes
        .iter()
        .map(|_| FastManifoldChart {
            oscillator,
            sheet: 0,
            axes: axes.clone(),
            nodes: vec![None; nx * ny * nz],
            holes: Vec::new(),
        })
        .collect();
    for (g, &(l, c)) in ids.iter().enumerate() {
        let sheet = classes.binary_search(&roots[g]).unwrap();
        let (j, k) = lines[l];
        let chain = &traced[l][c];
        for &(i, w, r) in &chain.nodes {
            let node = make_node(model, mu, w, r, axes.xs[i], axes.ys[j], axes.zs[k]);
            let slot = &mut charts[sheet].nodes[axes.index(i, j, k)];
            if slot.is_none() {
                *slot = Some(node);
            }
        }
        for &i in &chain.holes {
            charts[sheet].holes.push([i, j, k]);
        }
    }
    roots.clear();

    // order sheets by mean v for stable numbering
    let mean_v = |c: &FastManifoldChart| {
        let (s, n) = c.present().fold((0.0, 0usize), |(s, n), (_, node)| (s + node.v, n + 1));
        s / n.max(1) as f64
    };
    charts.sort_by(|a, b| mean_v(a).partial_cmp(&mean_v(b)).unwrap());
    for (s, c) in charts.iter_mut().enumerate() {
        c.sheet = s;
        c.holes.sort_unstable();
    }
    let worst = charts.iter().map(|c| c.max_residual()).fold(0.0, f64::max);
    if worst > ROOT_TOL {
        return Err(Error::NoConvergence(format!("fast chart residual {worst:e}")));
    }
    Ok(charts)
}

/// Nearest root among all sheets at the grid cell closest to `s`, as
/// `(sheet index, node)`; `None` outside the chart region.
pub fn nearest_node<'a>(charts: &'a [FastManifoldChart], s: &State) -> Option<(usize, &'a FastNode)> {
    let axes = &charts.first()?.axes;
    let j = Axes::locate(&axes.ys, s[3])?;
    let k = Axes::locate(&axes.zs, s[4])?;
    let xs = &axes.xs;
    if s[2] < xs[0] - 1e-12 || s[2] > xs[xs.len() - 1] + 1e-12 {
        return None;
    }
    let upper = xs.partition_point(|&x| x < s[2]).min(xs.len() - 1);
    let lower = upper.saturating_sub(1);
    let mut best: Option<(usize, &FastNode, f64)> = None;
    for (c, chart) in charts.iter().enumerate() {
        for i in [lower, upper] {
            if let Some(node) = chart.node(i, j, k) {
                let d = (node.v - s[0]).abs();
                if best.is_none_or(|b| d < b.2) {
                    best = Some((c, node, d));
                }
            }
        }
    }
    best.map(|(c, n, _)| (c, n))
}

/// Root of `h1 = h2 = 0` at `(x, y, z)` on an attracting sheet, seeded from
/// `seed` when given, then from the nearest attracting chart nodes.
pub fn attracting_root<M: Model + ?Sized>(
    model: &M,
    params: &OscillatorParams,
    charts: &[FastManifoldChart],
    (x, y, z): (f64, f64, f64),
    seed: Option<[f64; 2]>,
) -> Result<FastNode> {
    let mu = params.mu.as_slice();
    if let Some(sd) = seed {
        if let Ok((w, res)) = fast_root(model, mu, sd, x, y, z) {
            let n = make_node(model, mu, w, res, x, y, z);
            if n.branch == Branch::Attracting {
                return Ok(n);
            }
        }
    }
    let axes = &charts
        .first()
        .ok_or_else(|| Error::Argument("no fast charts".into()))?
        .axes;
    let (xs, ys, zs) = (&axes.xs, &axes.ys, &axes.zs);
    let inside = |v: &[f64], t: f64| t >= v[0] - 1e-12 && t <= v[v.len() - 1] + 1e-12;
    if !(inside(xs, x) && inside(ys, y) && inside(zs, z)) {
        return Err(Error::Range(format!("(x, y, z) = ({x}, {y}, {z}) outside the fast chart region")));
    }
    let (i, j, k) = (
        Axes::locate(xs, x).unwrap(),
        Axes::locate(ys, y).unwrap(),
        Axes::locate(zs, z).unwrap(),
    );
    for chart in charts {
        let Some(node) = chart.node(i, j, k) else { continue };
        if node.branch != Branch::Attracting {
            continue;
        }
        if let Ok((w, res)) = fast_root(model, mu, [node.v, node.u], x, y, z) {
            let n = make_node(model, mu, w, res, x, y, z);
            if n.branch == Branch::Attracting {
                return Ok(n);
            }
        }
    }
    Err(Error::NotFound(format!("no attracting fast root at (x, y, z) = ({x}, {y}, {z})")))
}
