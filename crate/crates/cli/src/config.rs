use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    GaborMatrix,
    Decay,
    Compose,
    Invert,
    Factorize,
    SymbolClass,
    SparsitySweep,
    Offgrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeName {
    Torus,
    Line,
}

fn default_regime() -> RegimeName {
    RegimeName::Torus
}
fn default_window() -> String {
    "gaussian".into()
}
fn default_s_threshold() -> f64 {
    gaborfio::algebra::DEFAULT_S_THRESHOLD
}
fn default_s() -> f64 {
    4.0
}
fn default_taus() -> Vec<f64> {
    (2..=10).map(|k| 10f64.powi(-k)).collect()
}
fn default_n_probes() -> usize {
    8
}
fn default_reps() -> usize {
    5
}
fn default_n_offsets() -> usize {
    4
}
fn default_offgrid_max() -> f64 {
    10.0
}

/// Flat experiment description; every key can be overridden with `--set key=value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "L")]
    pub len: usize,
    #[serde(default = "default_regime")]
    pub regime: RegimeName,
    /// Interval width for the line regime.
    #[serde(rename = "T", default)]
    pub width: Option<f64>,
    pub a: usize,
    pub b: usize,
    #[serde(default = "default_window")]
    pub window: String,
    pub operator: String,
    pub pipeline: Pipeline,
    #[serde(default = "default_s_threshold")]
    pub s_threshold: f64,
    /// Weight exponent for the symbol-class and off-grid pipelines.
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Right factor for `compose`.
    #[serde(default)]
    pub second: Option<String>,
    /// Canonical map to measure against in `decay`, as a metaplectic word or `a,b,c,d`.
    #[serde(default)]
    pub chi: Option<String>,
    /// Metaplectic word for `factorize`.
    #[serde(default)]
    pub word: Option<String>,
    #[serde(default)]
    pub side: Option<String>,
    /// `T (I + perturb S)` with `S` a unit-norm smoothing operator, for `invert`.
    #[serde(default)]
    pub perturb: f64,
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    #[serde(default = "default_n_probes")]
    pub n_probes: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_n_offsets")]
    pub n_offsets: usize,
    #[serde(default = "default_offgrid_max")]
    pub offgrid_max: f64,
    #[serde(default)]
    pub write_matrix: bool,
}

/// Applies `key=value`; the value is read as JSON when it parses, as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let obj = doc.as_object_mut().ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    obj.insert(key.trim().to_string(), value);
    Ok(())
}

pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.len < 8 || self.len % 2 == 1 {
            return bad(format!("L must be even and at least 8, got {}", self.len));
        }
        if self.a == 0 || self.b == 0 || self.len % self.a != 0 || self.len % self.b != 0 {
            return bad(format!("a = {} and b = {} must divide L = {}", self.a, self.b, self.len));
        }
        if self.window != "gaussian" {
            return bad(format!("unknown window `{}`", self.window));
        }
        if self.regime == RegimeName::Line && !self.width.is_some_and(|t| t > 0.0) {
            return bad("line regime needs a positive T".into());
        }
        if self.pipeline == Pipeline::Compose && self.second.is_none() {
            return bad("compose needs `second`".into());
        }
        if self.pipeline == Pipeline::Factorize && self.word.is_none() {
            return bad("factorize needs `word`".into());
        }
        if !matches!(self.side.as_deref(), None | Some("left") | Some("right")) {
            return bad("side must be `left` or `right`".into());
        }
        if !(self.perturb.is_finite() && self.perturb >= 0.0) {
            return bad("perturb must be a nonnegative number".into());
        }
        if self.taus.iter().any(|t| !(*t >= 0.0)) {
            return bad("taus must be nonnegative".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<gaborfio::tfcore::ModelConfig, CliError> {
        let r = match self.regime {
            RegimeName::Torus => gaborfio::tfcore::ModelConfig::torus(self.len),
            RegimeName::Line => gaborfio::tfcore::ModelConfig::line(self.len, self.width.unwrap_or(1.0)),
        };
        r.map_err(|e| CliError::Config(e.to_string()))
    }
}
