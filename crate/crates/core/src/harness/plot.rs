use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::SweepParameter;
use super::pipeline::RunArtifact;
use crate::error::{Error, Result};
use crate::manifolds::Branch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `t,V_v,W,envelope`
    SyncTrace,
    /// `k,V_v_at_window,pass`
    PhaseDiagram,
    /// `x,v_attracting,v_repelling` at the chart `(y, z)` nearest the canard point.
    ManifoldSlice,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::SyncTrace => "plot_sync_trace.csv",
            PlotKind::PhaseDiagram => "plot_phase_diagram.csv",
            PlotKind::ManifoldSlice => "plot_manifold_slice.csv",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sync_trace" | "sync-trace" => Ok(PlotKind::SyncTrace),
            "phase_diagram" | "phase-diagram" => Ok(PlotKind::PhaseDiagram),
            "manifold_slice" | "manifold-slice" => Ok(PlotKind::ManifoldSlice),
            _ => Err(Error::Argument(format!(
                "unknown plot kind `{s}` (sync_trace, phase_diagram, manifold_slice)"
            ))),
        }
    }
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV text for `kind`, or a dependency error naming the missing stage.
pub fn plot_data(artifact: &RunArtifact, kind: PlotKind) -> Result<String> {
    let mut s = String::new();
    match kind {
        PlotKind::SyncTrace => {
            let tr = artifact.trace.as_ref().ok_or_else(|| Error::Dependency("simulate".into()))?;
            s.push_str("t,V_v,W,envelope\n");
            for i in 0..tr.len() {
                let env = cell(tr.envelope.as_ref().map(|e| e[i]));
                let _ = writeln!(s, "{},{},{},{env}", tr.times[i], tr.v_var[i], tr.w[i]);
            }
        }
        PlotKind::PhaseDiagram => {
            let sw = artifact.sweep.as_ref().ok_or_else(|| Error::Dependency("sweep".into()))?;
            if sw.parameter != SweepParameter::K {
                return Err(Error::Dependency("sweep over k".into()));
            }
            s.push_str("k,V_v_at_window,pass\n");
            for r in &sw.rows {
                let _ = writeln!(s, "{},{},{}", r.k, cell(r.v_at_t_min), u8::from(r.pass));
            }
        }
        PlotKind::ManifoldSlice => {
            let (charts, sheet, canard) = match (&artifact.charts, artifact.attracting_sheet, &artifact.canard) {
                (Some(c), Some(s), Some(p)) => (c, s, p),
                _ => return Err(Error::Dependency("manifold".into())),
            };
            let axes = &charts[sheet].axes;
            let nearest = |xs: &[f64], x: f64| {
                (0..xs.len()).min_by(|&a, &b| (xs[a] - x).abs().total_cmp(&(xs[b] - x).abs())).unwrap_or(0)
            };
            let j = nearest(&axes.ys, canard.y);
            let k = nearest(&axes.zs, canard.z);
            let att = &charts[sheet];
            let attracting = |i: usize| att.node(i, j, k).filter(|n| n.branch == Branch::Attracting).map(|n| n.v);
            let repelling = |c: usize, i: usize| {
                charts[c].node(i, j, k).filter(|n| n.branch == Branch::Repelling).map(|n| n.v)
            };
            // the repelling sheet that meets the attracting one: closest in v
            // where both exist on the slice
            let partner = (0..charts.len())
                .filter(|&c| c != sheet)
                .filter_map(|c| {
                    let gaps: Vec<f64> = (0..axes.xs.len())
                        .filter_map(|i| Some((repelling(c, i)? - attracting(i)?).abs()))
                        .collect();
                    (!gaps.is_empty()).then(|| (c, gaps.iter().sum::<f64>() / gaps.len() as f64))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c);
            s.push_str("x,v_attracting,v_repelling\n");
            for (i, x) in axes.xs.iter().enumerate() {
                let rep = partner.and_then(|c| repelling(c, i));
                let _ = writeln!(s, "{x},{},{}", cell(attracting(i)), cell(rep));
            }
        }
    }
    Ok(s)
}

/// Writes [`plot_data`] into the artifact directory and returns the path.
pub fn emit_plot_data(artifact: &RunArtifact, kind: PlotKind) -> Result<PathBuf> {
    let text = plot_data(artifact, kind)?;
    std::fs::create_dir_all(&artifact.dir)?;
    let path = artifact.dir.join(kind.file_name());
    std::fs::write(&path, text)?;
    Ok(path)
}
