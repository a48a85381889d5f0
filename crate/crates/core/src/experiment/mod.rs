//! Experiment configuration, embedded presets and the runners behind the
//! command-line tool.
//!
//! A configuration is a JSON document validated in full before any
//! computation starts; unknown keys are rejected at every level.

mod output;
mod presets;
mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::CouplingError;
use crate::diagnostics::DiagnosticsError;
use crate::dynamics::{DynamicsError, PotentialVariant};
use crate::graph::io::GraphIoError;
use crate::graph::{GraphError, TwoClassGraphSpec};
use crate::ode::{OdeError, SolverSpec};

pub use output::{format_clusters_csv, format_sweep_csv, format_trajectory_csv};
pub use presets::{preset, preset_json, PRESET_NAMES};
pub use run::{
    flocking, gen_graph, initial_state, model_params, resolve_graph, run_model, simulate,
    sweep_beta, write_flocking, write_simulation, write_sweep, FlockingReport, ModelRun,
    ResolvedGraph, RunSummary, SimulationReport, SweepRow,
};

/// Seed used when neither the config nor the caller supplies one.
pub const DEFAULT_SEED: u64 = 0;

/// RNG stream for random initial features.
pub const INIT_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    GraphIo(#[from] GraphIoError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

impl ExperimentError {
    /// Whether the failure is due to the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Graph(GraphError::InvalidProbability(_) | GraphError::InvalidSpec(_))
        ) || matches!(self, Self::Ode(OdeError::InvalidSpec(_)))
    }

    pub fn kind(&self) -> &'static str {
        if self.is_config() {
            "config"
        } else {
            match self {
                Self::Io { .. } | Self::GraphIo(_) => "io",
                Self::Ode(_) => "solver",
                _ => "runtime",
            }
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// GCN-weighted diffusion without bias or potential.
    Grand,
    AcmpGcn,
    AcmpAttn,
    /// GCN coupling with diffusion damped near the wells.
    AcmpTrap,
    /// `(2/N)`-scaled diffusion with the raw adjacency weights.
    GradientFlow,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Grand => "grand",
            Self::AcmpGcn => "acmp-gcn",
            Self::AcmpAttn => "acmp-attn",
            Self::AcmpTrap => "acmp-trap",
            Self::GradientFlow => "gradient-flow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::Grand,
            Self::AcmpGcn,
            Self::AcmpAttn,
            Self::AcmpTrap,
            Self::GradientFlow,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

/// A single model or a list run back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Models {
    One(ModelKind),
    Many(Vec<ModelKind>),
}

impl Models {
    pub fn list(&self) -> Vec<ModelKind> {
        match self {
            Self::One(m) => vec![*m],
            Self::Many(v) => v.clone(),
        }
    }
}

impl Default for Models {
    fn default() -> Self {
        Self::One(ModelKind::AcmpGcn)
    }
}

/// A scalar applied to every channel or one value per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelValue {
    Scalar(f64),
    PerChannel(Vec<f64>),
}

impl ChannelValue {
    pub fn resolve(&self, what: &str, dim: usize) -> Result<Vec<f64>, ExperimentError> {
        match self {
            Self::Scalar(v) => Ok(vec![*v; dim]),
            Self::PerChannel(v) if v.len() == dim => Ok(v.clone()),
            Self::PerChannel(v) => Err(config_err(format!(
                "params.{what} has {} entries but the features have {dim} channels",
                v.len()
            ))),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Self::Scalar(v) => std::slice::from_ref(v),
            Self::PerChannel(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    pub proj_dim: usize,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            proj_dim: 4,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub alpha: ChannelValue,
    pub delta: ChannelValue,
    pub beta: f64,
    pub potential: PotentialVariant,
    pub attention: AttentionConfig,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            alpha: ChannelValue::Scalar(1.0),
            delta: ChannelValue::Scalar(1.0),
            beta: 0.0,
            potential: PotentialVariant::DoubleWell,
            attention: AttentionConfig::default(),
        }
    }
}

/// Inline two-class graph; `seed` defaults to the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoClassSource {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub means: [f64; 2],
    pub sigma: f64,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TwoClassSource {
    pub fn synthetic() -> Self {
        let s = TwoClassGraphSpec::synthetic(0);
        Self {
            n: s.n,
            p_in: s.p_in,
            p_out: s.p_out,
            means: s.means,
            sigma: s.sigma,
            dim: s.dim,
            seed: None,
        }
    }

    pub fn to_spec(&self, run_seed: u64) -> TwoClassGraphSpec {
        TwoClassGraphSpec {
            n: self.n,
            p_in: self.p_in,
            p_out: self.p_out,
            means: self.means,
            sigma: self.sigma,
            dim: self.dim,
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// A bundle directory written by `gen-graph`, or a bare edge list.
    File(PathBuf),
    TwoClass(TwoClassSource),
}

/// Initial features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// Features generated with, or stored next to, the graph.
    #[default]
    Graph,
    /// Independent uniform draws from `[low, high)`.
    Uniform {
        low: f64,
        high: f64,
        dim: Option<usize>,
    },
    /// Random well per entry with magnitude in `[1 - margin, 1)`.
    Wells { margin: f64, dim: Option<usize> },
    /// Group `g` (by label) drawn from `centers[g] ± spread` in every channel.
    Groups {
        centers: [f64; 2],
        spread: f64,
        dim: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub trajectory: bool,
    pub energy: bool,
    pub clusters: bool,
    pub flocking: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: true,
            energy: true,
            clusters: true,
            flocking: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockingSpec {
    pub n1: usize,
    pub n2: usize,
    /// Intra-group attraction.
    pub s: f64,
    /// Inter-group repulsion magnitude.
    pub d: f64,
    pub eta: f64,
    pub c_prime: f64,
    /// Defaults to `0.8 · t_end`.
    #[serde(default)]
    pub t_check: Option<f64>,
    #[serde(default = "default_flocking_dim")]
    pub dim: usize,
}

fn default_flocking_dim() -> usize {
    2
}

impl FlockingSpec {
    pub fn t_check(&self, t_end: f64) -> f64 {
        self.t_check.unwrap_or(0.8 * t_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub model: Models,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flocking: Option<FlockingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.solver.validate()?;
        if self.model.list().is_empty() {
            return Err(config_err("model list is empty"));
        }
        let p = &self.params;
        for (what, v) in [("alpha", &p.alpha), ("delta", &p.delta)] {
            if v.values().is_empty() {
                return Err(config_err(format!("params.{what} is empty")));
            }
            if let Some(bad) = v.values().iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(config_err(format!(
                    "params.{what} must be finite and non-negative, got {bad}"
                )));
            }
        }
        if !(p.beta.is_finite() && p.beta >= 0.0) {
            return Err(config_err(format!(
                "params.beta must be finite and non-negative, got {}",
                p.beta
            )));
        }
        p.potential
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if p.attention.proj_dim == 0 {
            return Err(config_err("params.attention.proj_dim must be positive"));
        }
        if let Some(GraphSource::TwoClass(tc)) = &self.graph {
            tc.to_spec(self.seed()).validate()?;
        }
        match &self.init {
            InitSpec::Graph => {}
            InitSpec::Uniform { low, high, dim } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(config_err(format!("init range [{low}, {high}) is empty")));
                }
                check_dim(*dim)?;
            }
            InitSpec::Wells { margin, dim } => {
                if !(*margin > 0.0 && *margin <= 1.0) {
                    return Err(config_err(format!(
                        "init.margin must lie in (0, 1], got {margin}"
                    )));
                }
                check_dim(*dim)?;
            }
            InitSpec::Groups {
                centers,
                spread,
                dim,
            } => {
                if !(centers.iter().all(|c| c.is_finite()) && spread.is_finite() && *spread >= 0.0)
                {
                    return Err(config_err(
                        "init.centers and init.spread must be finite, spread >= 0",
                    ));
                }
                check_dim(*dim)?;
            }
        }
        if let Some(f) = &self.flocking {
            if f.n1 == 0 || f.n2 == 0 {
                return Err(config_err("flocking group sizes must be positive"));
            }
            if !(f.eta.is_finite() && f.eta > 0.0) {
                return Err(config_err(format!(
                    "flocking.eta must be positive, got {}",
                    f.eta
                )));
            }
            if !(f.c_prime.is_finite() && f.c_prime >= 0.0) {
                return Err(config_err(
                    "flocking.c_prime must be finite and non-negative",
                ));
            }
            if f.dim == 0 {
                return Err(config_err("flocking.dim must be positive"));
            }
            if let Some(t) = f.t_check {
                if !(t.is_finite() && t >= 0.0 && t <= self.solver.t_end) {
                    return Err(config_err(format!(
                        "flocking.t_check = {t} lies outside [0, t_end]"
                    )));
                }
            }
            crate::coupling::flocking_partition_coupling(f.n1, f.n2, f.s, f.d)
                .map_err(|e| config_err(e.to_string()))?;
        }
        if let Some(s) = &self.sweep {
            if s.betas.is_empty() {
                return Err(config_err("sweep.betas is empty"));
            }
            if let Some(b) = s.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                return Err(config_err(format!(
                    "sweep beta {b} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

fn check_dim(dim: Option<usize>) -> Result<(), ExperimentError> {
    if dim == Some(0) {
        return Err(config_err("init.dim must be positive"));
    }
    Ok(())
}
