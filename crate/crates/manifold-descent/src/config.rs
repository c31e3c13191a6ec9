//! Experiment configuration.
//!
//! A config is a TOML document with one section per concern. Every section
//! and key is optional; unknown keys are rejected.
//!
//! ```toml
//! [objective]
//! kind = "spd_quadratic"      # unit_quadratic | spd_quadratic | shifted_quadratic
//! dim = 2
//! matrix = [1.0, 0.0, 0.0, 4.0]   # row-major
//!
//! [method]
//! family = "proposed"
//! alpha = 1.0
//! beta = 0.9
//!
//! [initial]
//! x1 = [1.0, 1.0]             # x2 defaults to zero
//!
//! [integrator]
//! scheme = "rk4"
//! h = 1e-3
//! t_max = 10.0
//! ```
//!
//! `key=value` overrides address nested keys with dots
//! (`integrator.h=0.01`, `methods.1.alpha=2`) and are applied on top of the
//! file before validation.

use std::fs;
use std::path::{Path, PathBuf};

use manifold_descent_core::diagnostics::DiagnosticsConfig;
use manifold_descent_core::{
    IntegratorConfig, MethodSpec, Objective, PerturbationSpec, PhaseState, Quadratic, QuadraticKind,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid config: [{section}] {message}")]
    Invalid { section: &'static str, message: String },
}

fn invalid(section: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        section,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: QuadraticKind,
    pub dim: usize,
    pub matrix: Option<Vec<f64>>,
    pub offset: Option<Vec<f64>>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            kind: QuadraticKind::UnitQuadratic,
            dim: 1,
            matrix: None,
            offset: None,
        }
    }
}

impl ObjectiveConfig {
    pub fn build(&self) -> Result<Quadratic, ConfigError> {
        let err = |e: manifold_descent_core::Error| invalid("objective", e.to_string());
        match self.kind {
            QuadraticKind::UnitQuadratic => {
                if self.matrix.is_some() || self.offset.is_some() {
                    return Err(invalid("objective", "unit_quadratic takes no matrix or offset"));
                }
                Quadratic::unit(self.dim).map_err(err)
            }
            QuadraticKind::SpdQuadratic => {
                if self.offset.is_some() {
                    return Err(invalid("objective", "spd_quadratic takes no offset (use shifted_quadratic)"));
                }
                let m = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| invalid("objective", "spd_quadratic needs `matrix`"))?;
                Quadratic::spd(self.dim, m).map_err(err)
            }
            QuadraticKind::ShiftedQuadratic => {
                let m = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| invalid("objective", "shifted_quadratic needs `matrix`"))?;
                let b = self
                    .offset
                    .as_ref()
                    .ok_or_else(|| invalid("objective", "shifted_quadratic needs `offset`"))?;
                Quadratic::shifted(self.dim, m, b).map_err(err)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Defaults to all ones.
    pub x1: Option<Vec<f64>>,
    /// Defaults to zero (standing start).
    pub x2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Seeds for perturbed sweeps; empty means the perturbation seed.
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: vec![1.0, 10.0],
            betas: vec![0.3, 0.6, 0.9],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersistConfig {
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for PersistConfig {
    fn default() -> Self {
        Self {
            deltas: vec![1e-3],
            seeds: (0..20).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub plot: bool,
    pub log_y: bool,
    /// Record wall-clock time per run. Off by default so that summaries are
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            plot: true,
            log_y: false,
            timing: false,
        }
    }
}

pub const DEFAULT_METHOD: MethodSpec = MethodSpec::Proposed {
    alpha: 1.0,
    beta: 0.9,
};

fn default_method() -> MethodSpec {
    DEFAULT_METHOD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub objective: ObjectiveConfig,
    /// Method for `run`.
    #[serde(default = "default_method")]
    pub method: MethodSpec,
    /// Methods for `compare`, templates for `sweep`, and the contenders of
    /// `persist`. Empty selects a per-command default.
    pub methods: Vec<MethodSpec>,
    pub initial: InitialConfig,
    pub integrator: IntegratorConfig,
    pub perturbation: PerturbationSpec,
    pub diagnostics: DiagnosticsConfig,
    pub sweep: SweepConfig,
    pub persist: PersistConfig,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            objective: ObjectiveConfig::default(),
            method: DEFAULT_METHOD,
            methods: Vec::new(),
            initial: InitialConfig::default(),
            integrator: IntegratorConfig::default(),
            perturbation: PerturbationSpec::default(),
            diagnostics: DiagnosticsConfig::default(),
            sweep: SweepConfig::default(),
            persist: PersistConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// A validated config with its objective built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: Config,
    pub objective: Quadratic,
    pub x0: PhaseState,
}

impl Config {
    /// Parses TOML text and applies `key=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        if overrides.is_empty() {
            return toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()));
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, overrides)
    }

    /// Checks cross-field constraints and builds the objective and initial
    /// state.
    pub fn validate(self) -> Result<Experiment, ConfigError> {
        let objective = self.objective.build()?;
        let n = objective.dim();
        let x1 = self.initial.x1.clone().unwrap_or_else(|| vec![1.0; n]);
        if x1.len() != n {
            return Err(invalid("initial", format!("x1 has {} entries, objective dim is {n}", x1.len())));
        }
        let x0 = match &self.initial.x2 {
            Some(x2) if x2.len() != n => {
                return Err(invalid("initial", format!("x2 has {} entries, objective dim is {n}", x2.len())))
            }
            Some(x2) => PhaseState::new(x1, x2.clone()).map_err(|e| invalid("initial", e.to_string()))?,
            None => PhaseState::first_order(x1),
        };
        if !x0.is_finite() {
            return Err(invalid("initial", "initial state must be finite"));
        }
        self.method
            .validate()
            .map_err(|e| invalid("method", e.to_string()))?;
        for (i, m) in self.methods.iter().enumerate() {
            m.validate()
                .map_err(|e| invalid("methods", format!("entry {i}: {e}")))?;
        }
        self.integrator
            .validate()
            .map_err(|e| invalid("integrator", e.to_string()))?;
        self.perturbation
            .validate()
            .map_err(|e| invalid("perturbation", e.to_string()))?;
        let d = &self.diagnostics;
        if !(d.settle_eps > 0.0) {
            return Err(invalid("diagnostics", "settle_eps must be positive"));
        }
        if let Some((lo, hi)) = d.fit_window {
            if !(lo < hi) {
                return Err(invalid("diagnostics", format!("fit_window [{lo}, {hi}] is empty")));
            }
        }
        if self.sweep.alphas.is_empty() || self.sweep.betas.is_empty() {
            return Err(invalid("sweep", "alphas and betas must be nonempty"));
        }
        if let Some(bad) = self.sweep.alphas.iter().chain(&self.sweep.betas).find(|v| !(**v > 0.0)) {
            return Err(invalid("sweep", format!("alphas and betas must be positive, got {bad}")));
        }
        if let Some(bad) = self.persist.deltas.iter().find(|d| !(**d >= 0.0)) {
            return Err(invalid("persist", format!("deltas must be >= 0, got {bad}")));
        }
        if self.persist.seeds.is_empty() {
            return Err(invalid("persist", "seeds must be nonempty"));
        }
        Ok(Experiment {
            config: self,
            objective,
            x0,
        })
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c=value` in `table`, creating intermediate tables. Numeric
/// segments index into arrays.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let bad = |why: &str| ConfigError::Override(spec.to_string(), why.to_string());
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key segment"));
    }
    let value = parse_override_value(raw.trim());

    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cursor: &mut toml::Value = table
        .entry(parents.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if parents.is_empty() {
        *cursor = value;
        return Ok(());
    }
    for key in parents[1..].iter().chain(std::iter::once(last)) {
        let is_last = std::ptr::eq(key, last);
        cursor = match cursor {
            toml::Value::Table(t) => {
                if is_last {
                    t.insert(key.to_string(), value);
                    return Ok(());
                }
                t.entry(key.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = key.parse().map_err(|_| bad("array segments must be indices"))?;
                let slot = a.get_mut(idx).ok_or_else(|| bad("array index out of range"))?;
                if is_last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(bad("path runs through a scalar")),
        };
    }
    unreachable!("loop returns on the last key")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = Config::from_toml("", &[]).unwrap();
        assert_eq!(c, Config::default());
        let e = c.validate().unwrap();
        assert_eq!(e.x0.x1, vec![1.0]);
        assert!(e.x0.x2.is_empty());
    }

    #[test]
    fn full_config() {
        let text = r#"
            [objective]
            kind = "shifted_quadratic"
            dim = 2
            matrix = [2.0, 0.5, 0.5, 1.0]
            offset = [1.0, -1.0]

            [method]
            family = "triple_momentum"
            mu = 1.0
            s = 0.25

            [[methods]]
            family = "gd_flow"

            [[methods]]
            family = "hbf"
            lambda = 2.0

            [initial]
            x1 = [1.0, 2.0]
            x2 = [0.0, 0.5]

            [integrator]
            scheme = "euler"
            h = 0.01
            t_max = 5.0
            record_every = 10

            [perturbation]
            delta = 1e-3
            distribution = "gaussian"
            seed = 7
            target = "x2"

            [diagnostics]
            settle_eps = 1e-6
            fit_window = [1.0, 4.0]

            [output]
            dir = "results"
            format = "both"
            plot = true
        "#;
        let c = Config::from_toml(text, &[]).unwrap();
        assert_eq!(
            c.method,
            MethodSpec::TripleMomentum { mu: 1.0, s: 0.25, gamma: 1.0 }
        );
        assert_eq!(c.methods.len(), 2);
        assert_eq!(c.integrator.record_every, 10);
        assert_eq!(c.diagnostics.fit_window, Some((1.0, 4.0)));
        let e = c.validate().unwrap();
        assert_eq!(e.x0.x2, vec![0.0, 0.5]);
        assert_eq!(e.objective.kind(), QuadraticKind::ShiftedQuadratic);
    }

    #[test]
    fn overrides_apply_after_file() {
        let text = "[integrator]\nh = 0.1\n[[methods]]\nfamily = \"pni\"\nalpha = 1.0\nbeta = 0.5\n";
        let o = vec![
            "integrator.h=0.01".to_string(),
            "integrator.scheme=euler".to_string(),
            "methods.0.beta=0.9".to_string(),
            "method.family=\"gd_flow\"".to_string(),
            "sweep.alphas=[2.0, 3.0]".to_string(),
        ];
        let c = Config::from_toml(text, &o).unwrap();
        assert_eq!(c.integrator.h, 0.01);
        assert_eq!(c.integrator.scheme, manifold_descent_core::Scheme::Euler);
        assert_eq!(c.methods[0], MethodSpec::Pni { alpha: 1.0, beta: 0.9 });
        assert_eq!(c.method, MethodSpec::GdFlow);
        assert_eq!(c.sweep.alphas, vec![2.0, 3.0]);
    }

    #[test]
    fn bad_overrides() {
        assert!(matches!(Config::from_toml("", &["nokey".into()]), Err(ConfigError::Override(..))));
        assert!(matches!(Config::from_toml("", &["a..b=1".into()]), Err(ConfigError::Override(..))));
        let r = Config::from_toml("[[methods]]\nfamily=\"gd_flow\"\n", &["methods.3.alpha=1".into()]);
        assert!(matches!(r, Err(ConfigError::Override(..))));
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = Config::from_toml("[integrator]\nh = \n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let err = Config::from_toml("[integrator]\nstep = 0.1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("step"), "{err}");
        let err = Config::from_toml("[method]\nfamily = \"newton\"\n", &[]).unwrap_err();
        assert!(err.to_string().contains("newton"), "{err}");
    }

    #[test]
    fn semantic_validation() {
        let bad = [
            "[objective]\nkind = \"spd_quadratic\"\ndim = 2\n",
            "[objective]\nkind = \"spd_quadratic\"\ndim = 2\nmatrix = [1.0, 2.0, 2.0, 1.0]\n",
            "[objective]\ndim = 2\n[initial]\nx1 = [1.0]\n",
            "[method]\nfamily = \"pni\"\nalpha = -1.0\nbeta = 0.5\n",
            "[integrator]\nh = 0.0\n",
            "[perturbation]\ndelta = -1.0\n",
            "[sweep]\nalphas = []\n",
            "[diagnostics]\nsettle_eps = 0.0\n",
        ];
        for text in bad {
            let c = Config::from_toml(text, &[]).unwrap();
            assert!(matches!(c.validate(), Err(ConfigError::Invalid { .. })), "{text}");
        }
    }
}
