use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::sweep::SweepTable;
use crate::dynamics::{make_reference_network, NetworkConfig, NetworkState, NetworkSystem, OscillatorParams, ReferenceModel};
use crate::error::Result;
use crate::integrator::{integrate_network, write_csv};
use crate::linger::{analyze_network, empirical_passage, LingerMethod, LingerReport, OscillatorGeometry, OscillatorLinger};
use crate::manifolds::{write_fast_csv, write_slow_csv, CanardPoint, FastManifoldChart};
use crate::sync::{
    branch_monitor, sync_trace, trajectory_box_bound, variance, verify_theorem, MSource, SyncTrace, ThresholdInputs,
    Verdict, Verification, VerificationReport, VerifySettings,
};

/// Name of the generator behind every seeded draw.
pub const RNG_NAME: &str = "ChaCha8";
/// ChaCha stream used for initial-condition jitter; stream 0 draws `mu_i`.
const JITTER_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Model,
    Manifold,
    Sections,
    Linger,
    Simulate,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Model, Stage::Manifold, Stage::Sections, Stage::Linger, Stage::Simulate, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Manifold => "manifold",
            Stage::Sections => "sections",
            Stage::Linger => "linger",
            Stage::Simulate => "simulate",
            Stage::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub error: Option<String>,
    /// The failure is a violated modelling assumption rather than a fault.
    pub assumption: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub rng: String,
    pub model_id: String,
    pub crate_name: String,
    pub crate_version: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub stages: Vec<StageRecord>,
    /// Paths relative to the output directory.
    pub files: Vec<String>,
    pub verdict: Option<Verdict>,
    pub passed: Option<bool>,
}

impl Manifest {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        Ok(Manifest {
            config_hash: config.hash()?,
            seed: config.model.seed,
            rng: RNG_NAME.to_string(),
            model_id: config.model.id.clone(),
            crate_name: env!("CARGO_PKG_NAME").to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: f64::NAN,
            stages: Vec::new(),
            files: Vec::new(),
            verdict: None,
            passed: None,
        })
    }

    pub fn failed_stage(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.status == StageStatus::Failed)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Everything a run produced, whether or not every stage finished.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub manifest: Manifest,
    pub linger: Option<LingerReport>,
    pub verification: Option<VerificationReport>,
    pub trace: Option<SyncTrace>,
    /// Fast charts of oscillator 0, indexed by sheet.
    pub charts: Option<Vec<FastManifoldChart>>,
    pub attracting_sheet: Option<usize>,
    pub canard: Option<CanardPoint>,
    pub sweep: Option<SweepTable>,
}

impl RunArtifact {
    pub fn passed(&self) -> Option<bool> {
        self.verification.as_ref().map(|v| v.passed())
    }
}

/// Network, geometry and window shared by every run of one configuration.
pub struct Prepared {
    pub model: ReferenceModel,
    pub params: Vec<OscillatorParams>,
    pub geometry: Vec<OscillatorGeometry>,
    pub linger: LingerReport,
    pub initial: NetworkState,
    pub w0: f64,
}

impl Prepared {
    /// Model, geometry, linger times and initial state without touching disk.
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (model, params) =
            make_reference_network(config.network.n, config.model.spread, config.model.seed, config.model.coefficients)?;
        let geometry = analyze_network(&model, &params, &config.geometry()).into_iter().collect::<Result<Vec<_>>>()?;
        let linger = linger_report(config, &model, &params, &geometry)?;
        let initial = initial_state(config, &geometry);
        let w0 = config.analysis.w0.unwrap_or_else(|| variance(&initial).0.sqrt());
        Ok(Prepared { model, params, geometry, linger, initial, w0 })
    }

    pub fn charts(&self) -> Vec<Vec<FastManifoldChart>> {
        self.geometry.iter().map(|g| g.charts.clone()).collect()
    }

    pub fn t_min(&self) -> f64 {
        self.linger.t_linger_min
    }

    /// `M` for the threshold: the configured value, or the box bound of an
    /// uncoupled run over its on-branch stretch.
    pub fn threshold_m(&self, config: &ExperimentConfig) -> Result<(f64, MSource)> {
        if let Some(m) = config.analysis.m {
            return Ok((m, MSource::UserSupplied));
        }
        let scales = config.model.scales;
        let sys = NetworkSystem::new(&self.model, NetworkConfig::new(self.params.len(), 0.0)?, scales, &self.params)?;
        let (pilot, _) =
            integrate_network(&sys, &self.initial, self.initial.t + self.t_min(), &config.integrator, &[], &[])?;
        let (horizon, _) = branch_monitor(&self.model, &self.params, &self.charts(), &pilot, config.analysis.branch_samples);
        let a = &config.analysis;
        let m = trajectory_box_bound(&self.model, &self.params, &pilot, horizon, a.box_inflation, a.bound_grid)?;
        Ok((m, MSource::PilotBox))
    }

    pub fn inputs(&self, config: &ExperimentConfig, m: f64) -> ThresholdInputs {
        ThresholdInputs {
            m,
            eps_tol: config.analysis.eps_tol,
            delta: config.model.scales.delta,
            t_min: self.t_min(),
            w0: self.w0,
        }
    }

    pub fn verify(&self, config: &ExperimentConfig, k: f64, inputs: &ThresholdInputs, source: MSource) -> Result<Verification> {
        let a = &config.analysis;
        let settings = VerifySettings {
            integrator: config.integrator.clone(),
            envelope_slack: a.envelope_slack,
            branch_samples: a.branch_samples,
            box_inflation: a.box_inflation,
            grid: a.bound_grid,
        };
        verify_theorem(
            &self.model,
            &NetworkConfig::new(self.params.len(), k)?,
            &config.model.scales,
            &self.params,
            &self.charts(),
            &self.initial,
            inputs,
            source,
            &settings,
        )
    }
}

/// Entry-section anchors with seeded `v` jitter, or the configured rows.
pub fn initial_state(config: &ExperimentConfig, geometry: &[OscillatorGeometry]) -> NetworkState {
    if let Some(rows) = &config.analysis.initial {
        return NetworkState::new(0.0, rows.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.model.seed);
    rng.set_stream(JITTER_STREAM);
    let jitter = config.analysis.jitter;
    let rows = geometry
        .iter()
        .map(|g| {
            let mut s = g.entry.anchor_state();
            let r: f64 = rng.gen_range(-1.0..=1.0);
            s[0] += jitter * r;
            s
        })
        .collect();
    NetworkState::new(0.0, rows)
}

fn linger_report(
    config: &ExperimentConfig,
    model: &ReferenceModel,
    params: &[OscillatorParams],
    geometry: &[OscillatorGeometry],
) -> Result<LingerReport> {
    let scales = config.model.scales;
    let method = config.analysis.linger_method;
    let rows = geometry
        .iter()
        .zip(params)
        .map(|(g, p)| {
            let (t, err) = match method {
                LingerMethod::Quadrature => (g.linger_time(&scales), Some(g.linger_error(&scales))),
                LingerMethod::Empirical => {
                    let (_, t) = empirical_passage(
                        model,
                        p,
                        g,
                        &scales,
                        &config.integrator,
                        config.analysis.upstream_fraction,
                    )?;
                    (t, None)
                }
            };
            Ok(OscillatorLinger {
                oscillator: g.oscillator,
                t_linger: t,
                error_estimate: err,
                entry: g.entry,
                pre_jump: g.pre_jump,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LingerReport::new(method, rows)
}

/// Columns: `oscillator,method,t_linger,error_estimate`.
pub fn linger_csv(report: &LingerReport) -> String {
    let method = match report.method {
        LingerMethod::Quadrature => "quadrature",
        LingerMethod::Empirical => "empirical",
    };
    let mut s = String::from("oscillator,method,t_linger,error_estimate\n");
    for o in &report.oscillators {
        let err = o.error_estimate.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{method},{},{err}", o.oscillator, o.t_linger);
    }
    s
}

#[derive(Serialize)]
struct SectionRow<'a> {
    oscillator: usize,
    offsets: &'a crate::linger::SectionOffsets,
    entry: &'a crate::linger::PoincareSection,
    pre_jump: &'a crate::linger::PoincareSection,
}

/// Stage bookkeeping and file output for one run directory.
pub(crate) struct Recorder {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Recorder {
    pub fn create(config: &ExperimentConfig) -> Result<Self> {
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir)?;
        let mut r = Recorder { dir, manifest: Manifest::new(config)? };
        r.write("config.toml", &config.to_toml()?)?;
        Ok(r)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn note_file(&mut self, name: &str) {
        if !self.manifest.files.iter().any(|f| f == name) {
            self.manifest.files.push(name.to_string());
        }
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name), text)?;
        self.note_file(name);
        Ok(())
    }

    pub fn stage<T>(&mut self, stage: Stage, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.named(stage.name(), f)
    }

    pub fn named<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        let seconds = start.elapsed().as_secs_f64();
        let record = match &out {
            Ok(_) => StageRecord { stage: name.into(), status: StageStatus::Ok, seconds, error: None, assumption: false },
            Err(e) => StageRecord {
                stage: name.into(),
                status: StageStatus::Failed,
                seconds,
                error: Some(e.to_string()),
                assumption: e.is_assumption(),
            },
        };
        self.manifest.stages.push(record);
        out.map_err(|e| {
            // keep what was written so far
            let _ = self.finish();
            e.in_stage(name)
        })
    }

    pub fn finish(&mut self) -> Result<()> {
        self.manifest.finished_unix = unix_now();
        self.note_file("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(self.path("manifest.json"), json)?;
        Ok(())
    }
}

/// Runs the stages up to and including `model` through `last` and prepares
/// everything later stages share.
pub(crate) fn prepare(config: &ExperimentConfig, rec: &mut Recorder, art: &mut RunArtifact, last: Stage) -> Result<Option<Prepared>> {
    let (model, params) = rec.stage(Stage::Model, |_| {
        make_reference_network(config.network.n, config.model.spread, config.model.seed, config.model.coefficients)
    })?;
    if last == Stage::Model {
        return Ok(None);
    }

    let geometry = rec.stage(Stage::Manifold, |r| {
        let geometry = analyze_network(&model, &params, &config.geometry()).into_iter().collect::<Result<Vec<_>>>()?;
        let g0 = &geometry[0];
        write_fast_csv(&g0.charts, &r.path("manifold_fast.csv"))?;
        r.note_file("manifold_fast.csv");
        write_slow_csv(&g0.slow, &r.path("manifold_slow.csv"))?;
        r.note_file("manifold_slow.csv");
        Ok(geometry)
    })?;
    art.charts = Some(geometry[0].charts.clone());
    art.attracting_sheet = Some(geometry[0].slow.sheet);
    art.canard = Some(geometry[0].canard);
    if last == Stage::Manifold {
        return Ok(None);
    }

    rec.stage(Stage::Sections, |r| {
        let rows: Vec<_> = geometry
            .iter()
            .map(|g| SectionRow { oscillator: g.oscillator, offsets: &g.offsets, entry: &g.entry, pre_jump: &g.pre_jump })
            .collect();
        r.write("sections.json", &serde_json::to_string_pretty(&rows)?)
    })?;
    if last == Stage::Sections {
        return Ok(None);
    }

    let linger = rec.stage(Stage::Linger, |r| {
        let report = linger_report(config, &model, &params, &geometry)?;
        r.write("linger.json", &report.to_json()?)?;
        r.write("linger.csv", &linger_csv(&report))?;
        Ok(report)
    })?;
    art.linger = Some(linger.clone());

    let initial = initial_state(config, &geometry);
    let w0 = config.analysis.w0.unwrap_or_else(|| variance(&initial).0.sqrt());
    Ok(Some(Prepared { model, params, geometry, linger, initial, w0 }))
}

pub(crate) fn empty_artifact(config: &ExperimentConfig, rec: &Recorder) -> RunArtifact {
    RunArtifact {
        dir: rec.dir.clone(),
        config: config.clone(),
        manifest: rec.manifest.clone(),
        linger: None,
        verification: None,
        trace: None,
        charts: None,
        attracting_sheet: None,
        canard: None,
        sweep: None,
    }
}

/// Full pipeline: model, manifold, sections, linger, simulate, verify.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    run_through(config, Stage::Verify)
}

/// Runs the pipeline up to `last`. On a stage failure the manifest records
/// the stage and error, files already written stay in place, and the error
/// is returned wrapped with the stage name.
pub fn run_through(config: &ExperimentConfig, last: Stage) -> Result<RunArtifact> {
    config.validate()?;
    let mut rec = Recorder::create(config)?;
    let mut art = empty_artifact(config, &rec);
    let prepared = prepare(config, &mut rec, &mut art, last)?;
    if let Some(p) = prepared {
        if last >= Stage::Simulate {
            run_tail(config, &p, &mut rec, &mut art, last)?;
        }
    }
    rec.finish()?;
    art.manifest = rec.manifest;
    Ok(art)
}

fn run_tail(config: &ExperimentConfig, p: &Prepared, rec: &mut Recorder, art: &mut RunArtifact, last: Stage) -> Result<()> {
    let k = config.network.k;
    if last == Stage::Simulate {
        let trace = rec.stage(Stage::Simulate, |r| {
            let sys = NetworkSystem::new(&p.model, NetworkConfig::new(p.params.len(), k)?, config.model.scales, &p.params)?;
            let (traj, _) = integrate_network(&sys, &p.initial, p.initial.t + p.t_min(), &config.integrator, &[], &[])?;
            write_csv(&traj, &r.path("trajectory.csv"))?;
            r.note_file("trajectory.csv");
            let trace = sync_trace(&traj)?;
            write_trace(r, &trace)?;
            Ok(trace)
        })?;
        art.trace = Some(trace);
        return Ok(());
    }

    // the verified run is the simulation; the pilot only measures M
    let (m, source) = rec.stage(Stage::Simulate, |_| p.threshold_m(config))?;
    let inputs = p.inputs(config, m);
    let v = rec.stage(Stage::Verify, |r| {
        let v = p.verify(config, k, &inputs, source)?;
        write_csv(&v.trajectory, &r.path("trajectory.csv"))?;
        r.note_file("trajectory.csv");
        write_trace(r, &v.trace)?;
        r.write("verification.json", &serde_json::to_string_pretty(&v.report)?)?;
        Ok(v)
    })?;
    rec.manifest.verdict = Some(v.report.verdict);
    rec.manifest.passed = Some(v.report.passed());
    art.trace = Some(v.trace);
    art.verification = Some(v.report);
    Ok(())
}

fn write_trace(r: &mut Recorder, trace: &SyncTrace) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    std::fs::write(r.path("sync_trace.csv"), buf)?;
    r.note_file("sync_trace.csv");
    Ok(())
}
