use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{check_grid, ExperimentConfig, SweepParameter};
use super::pipeline::{prepare, Recorder, RunArtifact, Stage};
use crate::error::{Error, Result};
use crate::sync::{coupling_threshold, MSource, Verdict};

/// Environment variable holding the sweep worker count; unset or 0 uses
/// every core.
pub const WORKERS_ENV: &str = "CANARD_SYNC_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `k` or `spread`, depending on the sweep.
    pub value: f64,
    pub k: f64,
    pub k_star: Option<f64>,
    pub m: Option<f64>,
    pub v_at_delta_t_min: Option<f64>,
    pub v_at_t_min: Option<f64>,
    pub pass: bool,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(value: f64, k: f64, e: &Error) -> Self {
        SweepRow {
            value,
            k,
            k_star: None,
            m: None,
            v_at_delta_t_min: None,
            v_at_t_min: None,
            pass: false,
            verdict: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub rows: Vec<SweepRow>,
    /// Smallest passing value of the swept parameter.
    pub first_pass: Option<f64>,
    /// Threshold of the shared network (k sweeps only).
    pub k_star: Option<f64>,
    pub m: Option<f64>,
    pub m_source: Option<MSource>,
    pub t_min: Option<f64>,
    pub eps_tol: f64,
}

impl SweepTable {
    /// Smallest passing `k`; only meaningful for k sweeps.
    pub fn k_empirical(&self) -> Option<f64> {
        match self.parameter {
            SweepParameter::K => self.first_pass,
            SweepParameter::Spread => None,
        }
    }

    /// Columns: `k,k_star,M,V_v_delta_t_min,V_v_t_min,pass,verdict,error`;
    /// spread sweeps lead with `spread` and keep `k` as the second column.
    pub fn to_csv(&self) -> String {
        let lead = match self.parameter {
            SweepParameter::K => "",
            SweepParameter::Spread => "spread,",
        };
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let mut s = format!("{lead}k,k_star,M,V_v_delta_t_min,V_v_t_min,pass,verdict,error\n");
        for r in &self.rows {
            let verdict = match r.verdict {
                Some(Verdict::Pass) => "pass",
                Some(Verdict::Fail) => "fail",
                Some(Verdict::Invalid) => "invalid",
                None => "",
            };
            let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
            if self.parameter == SweepParameter::Spread {
                let _ = write!(s, "{},", r.value);
            }
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{verdict},\"{err}\"",
                r.k,
                opt(r.k_star),
                opt(r.m),
                opt(r.v_at_delta_t_min),
                opt(r.v_at_t_min),
                r.pass
            );
        }
        s
    }
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("worker pool: {e}")))
}

fn first_pass(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().find(|r| r.pass).map(|r| r.value)
}

/// One verified run per `k` from shared geometry, initial state and `M`.
pub fn sweep_k(config: &ExperimentConfig, grid: &[f64]) -> Result<RunArtifact> {
    sweep_k_with(config, grid, workers_from_env())
}

/// [`sweep_k`] with an explicit worker count (`None` uses every core).
pub fn sweep_k_with(config: &ExperimentConfig, grid: &[f64], workers: Option<usize>) -> Result<RunArtifact> {
    check_grid(grid)?;
    if grid.iter().any(|&k| k < 0.0) {
        return Err(Error::Argument("coupling strengths must be >= 0".into()));
    }
    config.validate()?;
    let mut rec = Recorder::create(config)?;
    let mut art = super::pipeline::empty_artifact(config, &rec);
    let p = prepare(config, &mut rec, &mut art, Stage::Linger)?.expect("prepared through linger");
    let (m, source) = rec.stage(Stage::Simulate, |_| p.threshold_m(config))?;
    let inputs = p.inputs(config, m);
    let k_star = coupling_threshold(&inputs)?;

    let rows = rec.named("sweep", |_| {
        let run = |&k: &f64| match p.verify(config, k, &inputs, source) {
            Ok(v) => {
                let r = v.report;
                SweepRow {
                    value: k,
                    k,
                    k_star: Some(r.k_star),
                    m: Some(m),
                    v_at_delta_t_min: Some(r.v_at_delta_t_min),
                    v_at_t_min: Some(r.v_at_t_min),
                    pass: r.passed(),
                    verdict: Some(r.verdict),
                    error: None,
                }
            }
            Err(e) => SweepRow::failed(k, k, &e),
        };
        Ok(pool(workers)?.install(|| grid.par_iter().map(run).collect::<Vec<_>>()))
    })?;

    let table = SweepTable {
        parameter: SweepParameter::K,
        first_pass: first_pass(&rows),
        rows,
        k_star: Some(k_star),
        m: Some(m),
        m_source: Some(source),
        t_min: Some(p.t_min()),
        eps_tol: config.analysis.eps_tol,
    };
    finish(rec, art, table)
}

/// One full pipeline per heterogeneity spread at the configured `k`.
pub fn sweep_spread(config: &ExperimentConfig, grid: &[f64]) -> Result<RunArtifact> {
    sweep_spread_with(config, grid, workers_from_env())
}

pub fn sweep_spread_with(config: &ExperimentConfig, grid: &[f64], workers: Option<usize>) -> Result<RunArtifact> {
    check_grid(grid)?;
    if grid.iter().any(|&s| s < 0.0) {
        return Err(Error::Argument("spreads must be >= 0".into()));
    }
    config.validate()?;
    let mut rec = Recorder::create(config)?;
    let art = super::pipeline::empty_artifact(config, &rec);
    let k = config.network.k;

    let rows = rec.named("sweep", |_| {
        let run = |&spread: &f64| {
            let mut c = config.clone();
            c.model.spread = spread;
            c.output_dir = config.output_dir.join("rows").join(format!("spread_{spread}"));
            c.sweep = None;
            let row = || -> Result<SweepRow> {
                let mut scratch = Recorder::create(&c)?;
                let mut a = super::pipeline::empty_artifact(&c, &scratch);
                let p = prepare(&c, &mut scratch, &mut a, Stage::Linger)?.expect("prepared through linger");
                let (m, source) = p.threshold_m(&c)?;
                let v = scratch.stage(Stage::Verify, |_| p.verify(&c, k, &p.inputs(&c, m), source))?;
                scratch.finish()?;
                let r = v.report;
                Ok(SweepRow {
                    value: spread,
                    k,
                    k_star: Some(r.k_star),
                    m: Some(m),
                    v_at_delta_t_min: Some(r.v_at_delta_t_min),
                    v_at_t_min: Some(r.v_at_t_min),
                    pass: r.passed(),
                    verdict: Some(r.verdict),
                    error: None,
                })
            };
            row().unwrap_or_else(|e| SweepRow::failed(spread, k, &e))
        };
        Ok(pool(workers)?.install(|| grid.par_iter().map(run).collect::<Vec<_>>()))
    })?;

    for spread in grid {
        let name = format!("rows/spread_{spread}/manifest.json");
        if rec.path(&name).exists() {
            rec.note_file(&name);
        }
    }
    let table = SweepTable {
        parameter: SweepParameter::Spread,
        first_pass: first_pass(&rows),
        rows,
        k_star: None,
        m: None,
        m_source: None,
        t_min: None,
        eps_tol: config.analysis.eps_tol,
    };
    finish(rec, art, table)
}

fn finish(mut rec: Recorder, mut art: RunArtifact, table: SweepTable) -> Result<RunArtifact> {
    rec.write("sweep.csv", &table.to_csv())?;
    rec.write("sweep.json", &serde_json::to_string_pretty(&table)?)?;
    rec.finish()?;
    art.manifest = rec.manifest;
    art.sweep = Some(table);
    Ok(art)
}
