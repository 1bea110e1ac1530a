use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{GridSpec, ReferenceCoefficients, TimeScales, REFERENCE_ID};
use crate::error::{Error, Result};
use crate::integrator::IntegratorSettings;
use crate::linger::{GeometrySettings, LingerMethod, OffsetRule};
use crate::manifolds::{CanardSelection, ChartGrid, FastOptions, Region};

/// The configuration shipped with the crate.
pub const REFERENCE_CONFIG: &str = include_str!("../../configs/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default = "default_model_id")]
    pub id: String,
    #[serde(default)]
    pub coefficients: ReferenceCoefficients,
    #[serde(default)]
    pub scales: TimeScales,
    /// Half-width of the uniform draw of `mu_i` around `mu0`.
    #[serde(default)]
    pub spread: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_model_id() -> String {
    REFERENCE_ID.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkBlock {
    pub n: usize,
    pub k: f64,
}

/// Chart region and canard selection; section offsets live in their own block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldBlock {
    pub region: Region,
    pub grid: ChartGrid,
    pub fast: FastOptions,
    pub canard: CanardSelection,
    pub max_slow_time: f64,
}

impl Default for ManifoldBlock {
    fn default() -> Self {
        let g = GeometrySettings::default();
        ManifoldBlock {
            region: g.region,
            grid: g.grid,
            fast: g.fast,
            canard: g.canard,
            max_slow_time: g.max_slow_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisBlock {
    /// Tolerance on `V_v` at the end of the window.
    pub eps_tol: f64,
    /// Bound on `W(0)`; measured from the initial state when absent.
    pub w0: Option<f64>,
    /// Heterogeneity bound; measured on an uncoupled pilot run when absent.
    pub m: Option<f64>,
    /// Half-width of the uniform `v` jitter added to the entry anchors.
    pub jitter: f64,
    /// Explicit initial rows `(v, u, x, y, z)`, one per oscillator.
    pub initial: Option<Vec<[f64; 5]>>,
    pub linger_method: LingerMethod,
    /// Upstream start of the empirical passage, as a fraction of the passage.
    pub upstream_fraction: f64,
    pub branch_samples: usize,
    pub envelope_slack: f64,
    pub box_inflation: f64,
    pub bound_grid: GridSpec,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            eps_tol: 1e-5,
            w0: None,
            m: None,
            jitter: 0.05,
            initial: None,
            linger_method: LingerMethod::Quadrature,
            upstream_fraction: 0.2,
            branch_samples: 2000,
            envelope_slack: 1e-6,
            box_inflation: 0.1,
            bound_grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    K,
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub model: ModelBlock,
    pub network: NetworkBlock,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub manifold: ManifoldBlock,
    #[serde(default)]
    pub sections: OffsetRule,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_CONFIG).expect("shipped configuration parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the TOML serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn geometry(&self) -> GeometrySettings {
        let m = &self.manifold;
        GeometrySettings {
            region: m.region,
            grid: m.grid,
            fast: m.fast,
            canard: m.canard,
            offsets: self.sections,
            max_slow_time: m.max_slow_time,
        }
    }

    /// Checks every block before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.model.id != REFERENCE_ID {
            return bad(format!("unknown model id `{}` (available: `{REFERENCE_ID}`)", self.model.id));
        }
        self.model.scales.validate().map_err(|e| Error::Config(format!("model.scales: {e}")))?;
        if !(self.model.spread >= 0.0 && self.model.spread.is_finite()) {
            return bad(format!("model.spread = {} must be finite and >= 0", self.model.spread));
        }
        if self.model.seed > i64::MAX as u64 {
            return bad(format!("model.seed = {} exceeds the TOML integer range", self.model.seed));
        }
        if self.network.n == 0 {
            return bad("network.n must be at least 1".into());
        }
        if !(self.network.k >= 0.0 && self.network.k.is_finite()) {
            return bad(format!("network.k = {} must be finite and >= 0", self.network.k));
        }
        self.integrator.validate().map_err(|e| Error::Config(format!("integrator: {e}")))?;
        self.manifold.region.validate().map_err(|e| Error::Config(format!("manifold.region: {e}")))?;
        self.manifold.grid.validate().map_err(|e| Error::Config(format!("manifold.grid: {e}")))?;
        if !(self.manifold.max_slow_time > 0.0) {
            return bad("manifold.max_slow_time must be positive".into());
        }
        if let Some(o) = &self.sections.explicit {
            let all = [o.delta_x, o.delta_y, o.delta_z, o.delta_x_pre, o.delta_y_pre, o.delta_z_pre];
            if all.iter().any(|d| !(*d > 0.0)) {
                return bad("sections.explicit offsets must be positive".into());
            }
        }
        let a = &self.analysis;
        if !(a.eps_tol > 0.0 && a.eps_tol.is_finite()) {
            return bad(format!("analysis.eps_tol = {} must be positive", a.eps_tol));
        }
        if a.w0.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return bad("analysis.w0 must be finite and >= 0".into());
        }
        if a.m.is_some_and(|m| !(m >= 0.0 && m.is_finite())) {
            return bad("analysis.m must be finite and >= 0".into());
        }
        if !(a.jitter >= 0.0 && a.jitter.is_finite()) {
            return bad("analysis.jitter must be finite and >= 0".into());
        }
        if let Some(rows) = &a.initial {
            if rows.len() != self.network.n {
                return bad(format!("analysis.initial has {} rows, network.n = {}", rows.len(), self.network.n));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return bad("analysis.initial has non-finite entries".into());
            }
        }
        if !(a.upstream_fraction >= 0.0) || a.branch_samples == 0 || !(a.envelope_slack >= 0.0) {
            return bad("analysis: upstream_fraction and envelope_slack must be >= 0, branch_samples >= 1".into());
        }
        if !(a.box_inflation >= 0.0) || a.bound_grid.points_per_axis < 2 {
            return bad("analysis: box_inflation must be >= 0 and bound_grid >= 2 points".into());
        }
        if let Some(s) = &self.sweep {
            check_grid(&s.grid).map_err(|e| Error::Config(format!("sweep.grid: {e}")))?;
            if s.grid.iter().any(|v| *v < 0.0) {
                return bad("sweep.grid values must be >= 0".into());
            }
        }
        Ok(())
    }
}

/// Non-empty, finite and strictly ascending.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("empty grid".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite grid value".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("grid must be sorted ascending without repeats".into()));
    }
    Ok(())
}
