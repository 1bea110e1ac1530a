use std::fmt::Write as _;
use std::path::Path;

use super::fast::{Branch, FastManifoldChart};
use super::slow::SlowManifoldChart;
use crate::error::Result;

fn label(b: Branch) -> &'static str {
    match b {
        Branch::Attracting => "attracting",
        Branch::Repelling => "repelling",
    }
}

/// Columns: `sheet,x,y,z,phi_v,phi_u,branch,residual`.
pub fn write_fast_csv(charts: &[FastManifoldChart], path: &Path) -> Result<()> {
    let mut out = String::from("sheet,x,y,z,phi_v,phi_u,branch,residual\n");
    for c in charts {
        for (idx, n) in c.present() {
            let (x, y, z) = c.coords(idx);
            let _ = writeln!(out, "{},{x},{y},{z},{},{},{},{}", c.sheet, n.v, n.u, label(n.branch), n.residual);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Columns: `y,z,psi_v,psi_u,psi_x,branch,residual,dfdx`.
pub fn write_slow_csv(chart: &SlowManifoldChart, path: &Path) -> Result<()> {
    let mut out = String::from("y,z,psi_v,psi_u,psi_x,branch,residual,dfdx\n");
    for ((j, k), n) in chart.present() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            chart.ys[j],
            chart.zs[k],
            n.v,
            n.u,
            n.x,
            label(n.branch),
            n.residual,
            n.dfdx
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}
