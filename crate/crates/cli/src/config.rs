//! Run configuration: one JSON document with `model`, `grid`, `solver`, `noise`, `output`
//! and an optional `analysis` section.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splitfit_core::consolidation::DEFAULT_TERMS;
use splitfit_core::models::{double_exponential_model, exponential_model, scaled_square_model};
use splitfit_core::{
    build_model, Bounds, FixedValues, GridAxis, GridSpec, Model, ModelVersion, Schedule, SolverOptions, Space,
    Spacing, TimeUnit,
};

use crate::error::{CliError, Result};
use crate::noise::NoiseSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub kind: ModelKind,
    /// Generative parameters by name, used by `simulate` and for true-error reporting.
    #[serde(default)]
    pub truth: BTreeMap<String, f64>,
    /// Sampling times for `simulate`.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub time_unit: TimeUnit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    /// `u = a·x·t²`.
    ScaledSquare {
        #[serde(default = "one")]
        x: f64,
    },
    /// `u = p1·exp(−p2·t)`.
    Exponential {
        #[serde(default)]
        rate_bounds: Option<[f64; 2]>,
    },
    /// `u = p1·exp(−p2·t) + p3·exp(−p4·t)`.
    DoubleExponential {
        #[serde(default)]
        rate_bounds: Option<[f64; 2]>,
    },
    /// Total stress of a one-dimensional consolidation stage.
    Consolidation {
        version: ModelVersion,
        h: f64,
        #[serde(default)]
        t1: Option<f64>,
        #[serde(default = "default_terms")]
        terms: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_terms() -> usize {
    DEFAULT_TERMS
}

fn default_rank_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub axes: Vec<AxisConfig>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisConfig {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    Grid,
    Secant,
    SecantEliminated,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub engine: Option<Engine>,
    #[serde(flatten)]
    pub options: SolverOptions,
    /// Starting point by name. The `secant` engine fills missing linear parameters by
    /// elimination at the start.
    pub start: BTreeMap<String, f64>,
    /// Initial simplex edge per coordinate; defaults to `0.1·max(|x|, 1e-12)` or 0.1 at 0.
    pub step: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Output directory used when `--out` is not given.
    pub directory: Option<PathBuf>,
    /// Skip the node table of the grid engine (large for multi-dimensional grids).
    pub skip_scan_table: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Probe points for the band and identity checks; unnamed coordinates come from `p_min`.
    pub probes: Vec<BTreeMap<String, f64>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config_io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn build_model(&self) -> Result<Model> {
        let rate = |b: &Option<[f64; 2]>| -> Result<Bounds<f64>> {
            match b {
                Some([lo, hi]) => Ok(Bounds::new(*lo, *hi)?),
                None => Ok(Bounds::unbounded()),
            }
        };
        Ok(match &self.model.kind {
            ModelKind::ScaledSquare { x } => scaled_square_model(*x),
            ModelKind::Exponential { rate_bounds } => exponential_model(rate(rate_bounds)?),
            ModelKind::DoubleExponential { rate_bounds } => double_exponential_model(rate(rate_bounds)?),
            ModelKind::Consolidation { version, h, t1, terms } => {
                build_model(*version, *h, FixedValues { t1: *t1 }, *terms)?
            }
        })
    }

    pub fn schedule(&self) -> Result<Schedule> {
        if self.model.times.is_empty() {
            return Err(CliError::Config("model.times is empty".into()));
        }
        Ok(Schedule::new(self.model.times.clone(), self.model.time_unit)?)
    }

    /// Full truth vector in model order.
    pub fn truth(&self, space: &Space) -> Result<Vec<f64>> {
        let partial = named_values(space, &self.model.truth, "model.truth")?;
        partial
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| CliError::Config(format!("model.truth lacks {}", space.name(i)))))
            .collect()
    }

    pub fn grid_spec(&self, space: &Space) -> Result<GridSpec<f64>> {
        let grid = self.grid.as_ref().ok_or_else(|| CliError::Config("no grid section".into()))?;
        let axes = grid
            .axes
            .iter()
            .map(|a| {
                let index = index_of(space, &a.parameter, "grid.axes")?;
                Ok(GridAxis {
                    parameter_index: index,
                    lo: a.lo,
                    hi: a.hi,
                    points: a.points,
                    spacing: a.spacing,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = GridSpec::new(axes)?;
        spec.validate_for(space)?;
        Ok(spec)
    }

    pub fn rank_tol(&self) -> f64 {
        self.grid.as_ref().map_or(self.solver.options.rank_tol, |g| g.rank_tol)
    }
}

fn index_of(space: &Space, name: &str, section: &str) -> Result<usize> {
    space
        .index_of(name)
        .ok_or_else(|| CliError::Config(format!("{section}: unknown parameter {name:?}")))
}

/// Looks up named values in model order; `None` where the map has no entry.
pub fn named_values(space: &Space, map: &BTreeMap<String, f64>, section: &str) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; space.len()];
    for (name, &v) in map {
        out[index_of(space, name, section)?] = Some(v);
    }
    Ok(out)
}
