use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendConfig, GenerationParams};
use crate::error::{Error, Result};
use crate::grid_ic::BoundarySpec;
use crate::metrics::LogBase;
use crate::solvers::{PdeKind, PdeSpec, Refinement, SchemeId};

/// Version of the configuration schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;
/// Fraction of failed trials above which a run aborts.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo trials, i.e. random initial conditions.
    pub trials: usize,
    pub pde: PdeSpec,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub ic: IcOptions,
    pub sweep: Sweep,
    pub backend: BackendConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub codec: CodecOptions,
    #[serde(default)]
    pub reference: Refinement,
    /// Classical schemes compared against the backend; defaults per equation.
    #[serde(default)]
    pub baselines: Option<Vec<SchemeId>>,
    #[serde(default)]
    pub metrics: MetricOptions,
}

fn default_run_id() -> String {
    "run".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub half_width: f64,
    pub t_final: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self {
            half_width: 1.0,
            t_final: 0.5,
        }
    }
}

/// Interior knot draws `U[low, high]`; unset bounds default per equation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcOptions {
    pub low: Option<f64>,
    pub high: Option<f64>,
    /// Interior knots of the IC spline; defaults to the sweep's `n_x`, or 14
    /// for the output-length sweep so one spline serves every grid.
    pub knots: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecOptions {
    /// End the prompt with `;` so the backend starts a fresh slice.
    pub trailing_semicolon: bool,
}

impl Default for CodecOptions {
    fn default() -> Self {
        Self {
            trailing_semicolon: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    #[serde(default)]
    pub log_base: LogBase,
    /// Multi-step: average the generations of one IC before scoring.
    #[serde(default)]
    pub average_predictions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    /// One-step prediction of column `N_T` from columns `0..N_T`.
    Context {
        #[serde(default = "default_n_x")]
        n_x: usize,
        #[serde(default = "default_context_n_t")]
        n_t: Vec<usize>,
    },
    /// One-step prediction at fixed `N_T` for several spatial resolutions.
    Output {
        #[serde(default = "default_output_n_t")]
        n_t: usize,
        #[serde(default = "default_output_n_x")]
        n_x: Vec<usize>,
    },
    /// Rollout over the remaining levels `floor(2 N_T / 3)..=N_T` from the
    /// first `floor(2 N_T / 3)` slices.
    MultiStep {
        #[serde(default = "default_n_x")]
        n_x: usize,
        #[serde(default = "default_multistep_n_t")]
        n_t: usize,
        #[serde(default = "default_generations")]
        generations: usize,
    },
    /// Multi-step rollout of the Neumann heat equation with energy tracking.
    Energy {
        #[serde(default = "default_n_x")]
        n_x: usize,
        #[serde(default = "default_multistep_n_t")]
        n_t: usize,
        #[serde(default = "default_generations")]
        generations: usize,
    },
}

fn default_n_x() -> usize {
    14
}

fn default_context_n_t() -> Vec<usize> {
    (2..=40).collect()
}

fn default_output_n_t() -> usize {
    50
}

fn default_output_n_x() -> Vec<usize> {
    (1..=20).map(|k| 2 * k).collect()
}

fn default_multistep_n_t() -> usize {
    25
}

fn default_generations() -> usize {
    20
}

/// Context slices of a rollout over `n_t` steps, the initial condition included.
pub fn context_steps(n_t: usize) -> usize {
    2 * n_t / 3
}

/// Predicted levels of a rollout over `n_t` steps: `N_T + 1` levels minus the context.
pub fn prediction_steps(n_t: usize) -> usize {
    n_t + 1 - context_steps(n_t)
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Context { .. } => "context",
            Self::Output { .. } => "output",
            Self::MultiStep { .. } => "multi_step",
            Self::Energy { .. } => "energy",
        }
    }

    /// Name of the swept axis in metric tables.
    pub fn axis(&self) -> &'static str {
        match self {
            Self::Context { .. } => "N_T",
            Self::Output { .. } => "N_X",
            Self::MultiStep { .. } | Self::Energy { .. } => "step",
        }
    }

    /// `(n_x, n_t)` grids visited, one per sweep point.
    pub fn grids(&self) -> Vec<(usize, usize)> {
        match self {
            Self::Context { n_x, n_t } => n_t.iter().map(|t| (*n_x, *t)).collect(),
            Self::Output { n_t, n_x } => n_x.iter().map(|x| (*x, *n_t)).collect(),
            Self::MultiStep { n_x, n_t, .. } | Self::Energy { n_x, n_t, .. } => vec![(*n_x, *n_t)],
        }
    }

    pub fn generations(&self) -> usize {
        match self {
            Self::MultiStep { generations, .. } | Self::Energy { generations, .. } => *generations,
            _ => 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        self.pde.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.domain.half_width > 0.0 && self.domain.t_final > 0.0) {
            return bad("domain half_width and t_final must be positive".into());
        }
        let (low, high) = self.ic_bounds();
        if !(low < high) {
            return bad(format!("ic bounds need low < high, got [{low}, {high}]"));
        }
        if self.ic.knots == Some(0) {
            return bad("ic.knots must be at least 1".into());
        }
        let sorted = |v: &[usize]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
        match &self.sweep {
            Sweep::Context { n_x, n_t } => {
                if *n_x == 0 || !sorted(n_t) || n_t[0] == 0 {
                    return bad("context sweep needs n_x >= 1 and a strictly increasing, non-empty n_t list of positive values".into());
                }
            }
            Sweep::Output { n_t, n_x } => {
                if *n_t == 0 || !sorted(n_x) || n_x[0] == 0 {
                    return bad("output sweep needs n_t >= 1 and a strictly increasing, non-empty n_x list of positive values".into());
                }
            }
            Sweep::MultiStep { n_x, n_t, generations } | Sweep::Energy { n_x, n_t, generations } => {
                if *n_x == 0 || *n_t < 2 || *generations == 0 {
                    return bad("rollout sweeps need n_x >= 1, n_t >= 2 and generations >= 1".into());
                }
            }
        }
        if let Sweep::Energy { n_x, .. } = &self.sweep {
            let heat = matches!(self.pde.equation, PdeKind::Heat { .. });
            if !heat || self.pde.boundary != BoundarySpec::NeumannHomogeneous {
                return bad("the energy experiment needs the heat equation with homogeneous Neumann boundaries".into());
            }
            if *n_x < 2 {
                return bad("the energy experiment needs n_x >= 2".into());
            }
        }
        for s in self.baseline_schemes() {
            s.check_compatible(&self.pde).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.generation.top_k == 0 || !(self.generation.temperature >= 0.0) {
            return bad("generation needs top_k >= 1 and temperature >= 0".into());
        }
        if let BackendConfig::Http(h) = &self.backend {
            if h.max_in_flight == 0 {
                return bad("backend max_in_flight must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn baseline_schemes(&self) -> Vec<SchemeId> {
        self.baselines.clone().unwrap_or_else(|| self.pde.default_baselines())
    }

    /// Interior draw range with the per-equation defaults filled in.
    pub fn ic_bounds(&self) -> (f64, f64) {
        let (low, high) = match (&self.sweep, self.pde.equation) {
            (Sweep::Energy { .. }, _) => (0.0, 1.0),
            (_, PdeKind::FisherKpp { .. }) => (0.2, 0.8),
            _ => (-0.5, 0.5),
        };
        (self.ic.low.unwrap_or(low), self.ic.high.unwrap_or(high))
    }

    pub fn ic_knots(&self) -> usize {
        self.ic.knots.unwrap_or(match &self.sweep {
            Sweep::Context { n_x, .. } | Sweep::MultiStep { n_x, .. } | Sweep::Energy { n_x, .. } => *n_x,
            Sweep::Output { .. } => default_n_x(),
        })
    }
}
