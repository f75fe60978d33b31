//! Scenario files: TOML with a `[[scenario]]` array. Unknown keys are
//! rejected by the parser, with line and column in the message.

use std::collections::HashSet;
use std::path::Path;

use impulse_core::impulse::ImpulseTimes;
use impulse_core::{Grid1D, PotentialField};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("scenario `{scenario}`: {message}")]
    Invalid { scenario: String, message: String },
    #[error("duplicate scenario name `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Stabilize,
    MinNorm,
    Duality,
    ObservationChain,
    InverseSource,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Stabilize => "stabilize",
            Task::MinNorm => "min_norm",
            Task::Duality => "duality",
            Task::ObservationChain => "observation_chain",
            Task::InverseSource => "inverse_source",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_length() -> f64 {
    std::f64::consts::PI
}

/// `constant` or piecewise-constant with `breaks` strictly inside `(0, ℓ)`
/// and `values.len() == breaks.len() + 1`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { value: f64 },
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Constant { value: 0.0 }
    }
}

impl PotentialSpec {
    pub fn build(&self, grid: &Grid1D) -> impulse_core::Result<PotentialField> {
        match self {
            PotentialSpec::Constant { value } => PotentialField::constant(grid, *value),
            PotentialSpec::Piecewise { breaks, values } => PotentialField::from_fn(grid, |x| {
                let k = breaks.iter().take_while(|b| x >= **b).count();
                values[k]
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Observation window; also the control window of single-window tasks.
    pub w1: [f64; 2],
    /// Actuator window of the feedback.
    pub w2: Option<[f64; 2]>,
    pub gamma: Option<f64>,
    pub period: Option<f64>,
    pub n_periods: Option<usize>,
    /// Number of random initial states for `stabilize`.
    pub initial_states: Option<usize>,
    pub dense_per_period: Option<usize>,
    pub times: Option<[f64; 3]>,
    pub eps: Option<f64>,
    pub dim_trunc: Option<usize>,
    /// Random instances for `min_norm` / `duality` samples / `inverse_source`.
    pub instances: Option<usize>,
    /// Number of reconstructed modes for `inverse_source`.
    pub k: Option<usize>,
    /// Sources are drawn from the span of this many leading modes.
    pub source_modes: Option<usize>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    pub t: Option<f64>,
    pub lambda_cut: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    #[serde(default)]
    scenario: Vec<Scenario>,
}

impl Scenario {
    fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            scenario: self.name.clone(),
            message: message.into(),
        }
    }

    fn require<T: Copy>(&self, value: Option<T>, key: &str) -> Result<T, ConfigError> {
        value.ok_or_else(|| self.invalid(format!("task `{}` needs `{key}`", self.task.as_str())))
    }

    pub fn grid(&self) -> Result<Grid1D, ConfigError> {
        Grid1D::new(self.grid.n, self.grid.length).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn gamma(&self) -> Result<f64, ConfigError> {
        self.require(self.gamma, "gamma")
    }

    pub fn period(&self) -> Result<f64, ConfigError> {
        self.require(self.period, "period")
    }

    pub fn eps(&self) -> Result<f64, ConfigError> {
        self.require(self.eps, "eps")
    }

    pub fn times(&self) -> Result<ImpulseTimes, ConfigError> {
        let [t1, t2, t3] = self.require(self.times, "times")?;
        ImpulseTimes::new(t1, t2, t3).map_err(|e| self.invalid(e.to_string()))
    }

    pub fn w2(&self) -> Result<[f64; 2], ConfigError> {
        self.require(self.w2, "w2")
    }

    fn check_window(&self, label: &str, w: [f64; 2]) -> Result<(), ConfigError> {
        let len = self.grid.length;
        if !(w[0] >= 0.0 && w[0] < w[1] && w[1] <= len) {
            return Err(self.invalid(format!(
                "mask `{label}` = ({}, {}) must be an interval inside (0, {len})",
                w[0], w[1]
            )));
        }
        Ok(())
    }

    fn positive(&self, value: Option<f64>, key: &str) -> Result<(), ConfigError> {
        match value {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(self.invalid(format!("`{key}` must be positive, got {v}"))),
            _ => Ok(()),
        }
    }

    fn unit_interval(&self, value: Option<f64>, key: &str) -> Result<(), ConfigError> {
        match value {
            Some(v) if !(v > 0.0 && v < 1.0) => Err(self.invalid(format!("`{key}` must lie in (0, 1), got {v}"))),
            _ => Ok(()),
        }
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(self.invalid("name must not be empty"));
        }
        if !self
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(self.invalid("name may only contain ASCII letters, digits, `_` and `-`"));
        }
        let grid = self.grid()?;
        self.check_window("w1", self.w1)?;
        if let Some(w2) = self.w2 {
            self.check_window("w2", w2)?;
        }
        if let PotentialSpec::Piecewise { breaks, values } = &self.potential {
            if values.len() != breaks.len() + 1 {
                return Err(self.invalid(format!(
                    "piecewise potential needs {} values for {} breaks, got {}",
                    breaks.len() + 1,
                    breaks.len(),
                    values.len()
                )));
            }
            if breaks.windows(2).any(|w| w[0] >= w[1]) || breaks.iter().any(|b| *b <= 0.0 || *b >= grid.length()) {
                return Err(self.invalid("potential breaks must increase strictly inside (0, ℓ)"));
            }
        }
        self.potential.build(&grid).map_err(|e| self.invalid(e.to_string()))?;
        for (v, key) in [
            (self.gamma, "gamma"),
            (self.period, "period"),
            (self.eps, "eps"),
            (self.t, "t"),
        ] {
            self.positive(v, key)?;
        }
        self.unit_interval(self.theta, "theta")?;
        self.unit_interval(self.beta, "beta")?;
        if let Some(d) = self.dim_trunc {
            if d == 0 || d > self.grid.n {
                return Err(self.invalid(format!("`dim_trunc` must be in 1..={}, got {d}", self.grid.n)));
            }
        }
        if self.times.is_some() {
            self.times()?;
        }
        match self.task {
            Task::Stabilize => {
                self.gamma()?;
                self.period()?;
                self.w2()?;
                if self.require(self.n_periods, "n_periods")? == 0 {
                    return Err(self.invalid("`n_periods` must be at least 1"));
                }
            }
            Task::MinNorm | Task::Duality => {
                self.times()?;
                self.eps()?;
            }
            Task::InverseSource => {
                self.times()?;
                self.eps()?;
                let k = self.require(self.k, "k")?;
                if k == 0 || k > self.grid.n {
                    return Err(self.invalid(format!("`k` must be in 1..={}, got {k}", self.grid.n)));
                }
                if let Some(s) = self.source_modes {
                    if s == 0 || s > self.grid.n {
                        return Err(self.invalid(format!("`source_modes` must be in 1..={}", self.grid.n)));
                    }
                }
            }
            Task::ObservationChain => {
                self.eps()?;
            }
        }
        Ok(())
    }
}

/// Parse and validate scenario text.
pub fn parse_str(text: &str) -> Result<Vec<Scenario>, ConfigError> {
    let file: File = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut seen = HashSet::new();
    for s in &file.scenario {
        if !seen.insert(s.name.clone()) {
            return Err(ConfigError::Duplicate(s.name.clone()));
        }
        s.validate()?;
    }
    Ok(file.scenario)
}

pub fn parse_config(path: &Path) -> Result<Vec<Scenario>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}
