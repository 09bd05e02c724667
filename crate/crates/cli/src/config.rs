//! Per-command config schemas and loading (plain configs or run manifests).

use std::path::Path;

use clap::ValueEnum;
use om_core::map_estimation::{Method, PotentialConfig, SolverOptions};
use om_core::om_functional::DEFAULT_K;
use om_core::{MeasureConfig, MeasureFamily, Point, RefSpec, SeqExpr, SpaceSpec, TestFunctional};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Marker key identifying a run manifest.
pub const MANIFEST_KEY: &str = "omlabManifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Sample,
    OmEval,
    ShiftDensity,
    Dichotomy,
    SmallBall,
    OmRatio,
    ContinuityRatio,
    GammaProbe,
    EquicoercivityBox,
    Map,
    MapConverge,
    LemmaChecks,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Sample => "sample",
            Command::OmEval => "om-eval",
            Command::ShiftDensity => "shift-density",
            Command::Dichotomy => "dichotomy",
            Command::SmallBall => "small-ball",
            Command::OmRatio => "om-ratio",
            Command::ContinuityRatio => "continuity-ratio",
            Command::GammaProbe => "gamma-probe",
            Command::EquicoercivityBox => "equicoercivity-box",
            Command::Map => "map",
            Command::MapConverge => "map-converge",
            Command::LemmaChecks => "lemma-checks",
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_mc_n() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub references: Vec<RefSpec>,
    pub measure: Option<MeasureConfig>,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SupportConfig {
    pub metric: Option<SpaceSpec>,
    pub k_grid: Vec<usize>,
    pub n: usize,
    #[serde(default)]
    pub centered: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SampleConfig {
    pub measure: MeasureConfig,
    pub k: usize,
    pub n: usize,
    pub support: Option<SupportConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OmEvalConfig {
    pub measure: MeasureConfig,
    pub points: Vec<Point>,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ChangeOfVariablesConfig {
    pub functionals: Vec<TestFunctional>,
    #[serde(default = "default_mc_n")]
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ShiftDensityConfig {
    pub measure: MeasureConfig,
    pub h: SeqExpr,
    #[serde(default)]
    pub points: Vec<Point>,
    #[serde(default = "default_k")]
    pub k: usize,
    pub change_of_variables: Option<ChangeOfVariablesConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LabeledShift {
    pub label: String,
    pub h: SeqExpr,
    /// Measure for this vector; defaults to the config's `measure`.
    pub measure: Option<MeasureConfig>,
}

fn default_kakutani_k() -> usize {
    om_core::shift_density::KAKUTANI_K
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DichotomyConfig {
    pub measure: Option<MeasureConfig>,
    pub vectors: Vec<LabeledShift>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_kakutani_k")]
    pub kakutani_k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BallConfig {
    pub center: Point,
    pub radius: f64,
    /// Defaults to the measure's ambient space.
    pub metric: Option<SpaceSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SmallBallConfig {
    pub measure: MeasureConfig,
    pub balls: Vec<BallConfig>,
    pub k: usize,
    #[serde(default = "default_mc_n")]
    pub n: usize,
    /// Nested quadrature oracle; defaults to `k <= 3`.
    pub quadrature: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OmRatioConfig {
    pub measure: MeasureConfig,
    pub h: Point,
    pub r_grid: Vec<f64>,
    pub k: usize,
    #[serde(default = "default_mc_n")]
    pub n: usize,
    /// Add the quadrature ratio column; defaults to `k <= 3`.
    pub quadrature: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContinuityRatioConfig {
    pub measure: MeasureConfig,
    pub x_star: Point,
    pub h: SeqExpr,
    pub r_grid: Vec<f64>,
    pub k: usize,
    #[serde(default = "default_mc_n")]
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GammaProbeConfig {
    pub family: MeasureFamily,
    pub x: Point,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_box_n() -> usize {
    10_000
}

fn default_box_k() -> usize {
    16
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EquicoercivityBoxConfig {
    pub measure: MeasureConfig,
    pub t_grid: Vec<f64>,
    #[serde(default = "default_box_n")]
    pub n: usize,
    #[serde(default = "default_box_k")]
    pub k: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MapConfig {
    pub measure: MeasureConfig,
    pub potential: PotentialConfig,
    pub k: usize,
    pub method: Option<Method>,
    /// Initial point; defaults to the prior shift.
    pub init: Option<Vec<f64>>,
    /// Extra starting points; the best objective is reported.
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    #[serde(default)]
    pub options: SolverOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MapConvergeConfig {
    pub family: MeasureFamily,
    pub potential: PotentialConfig,
    pub k: usize,
    pub n_grid: Vec<usize>,
    pub method: Option<Method>,
    #[serde(default)]
    pub options: SolverOptions,
}

fn default_cases() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LemmaChecksConfig {
    #[serde(default = "default_cases")]
    pub cases: usize,
}

/// A config file resolved against the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub command: Command,
    pub seed: u64,
    /// Config with `command` and `seed` filled in; this is what gets hashed
    /// and stored in the manifest.
    pub config: Value,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Deserialize with a JSON-pointer in the error message.
pub fn parse_section<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let ptr = json_pointer(e.path());
        CliError::Schema(format!("config{}: {}", if ptr.is_empty() { "" } else { &ptr }, e.inner()))
    })
}

/// Read a config (or manifest) and settle command and seed.
pub fn load(path: &Path, command: Command, cli_seed: Option<u64>) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Schema(format!("config is not valid JSON: {e}")))?;
    resolve(value, command, cli_seed)
}

pub fn resolve(value: Value, command: Command, cli_seed: Option<u64>) -> Result<Loaded, CliError> {
    let mut value = value;
    if value.get(MANIFEST_KEY).is_some() {
        value = value
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::Schema("config/config: manifest without a config".into()))?;
    }
    let Value::Object(mut map) = value else {
        return Err(CliError::Schema("config: expected a JSON object".into()));
    };
    if let Some(c) = map.remove("command") {
        let named: Command = parse_section(c)
            .map_err(|e| CliError::Schema(e.to_string().replacen("config", "config/command", 1)))?;
        if named != command {
            return Err(CliError::Schema(format!(
                "config/command: config is for '{}', not '{}'",
                named.name(),
                command.name()
            )));
        }
    }
    let file_seed = match map.remove("seed") {
        None => None,
        Some(v) => Some(
            parse_section::<u64>(v)
                .map_err(|e| CliError::Schema(e.to_string().replacen("config", "config/seed", 1)))?,
        ),
    };
    let seed = cli_seed
        .or(file_seed)
        .ok_or_else(|| CliError::Schema("config/seed: a seed is mandatory (--seed or \"seed\")".into()))?;
    map.insert("command".into(), Value::String(command.name().into()));
    map.insert("seed".into(), Value::from(seed));
    Ok(Loaded {
        command,
        seed,
        config: Value::Object(map),
    })
}

/// The command-specific section: the config minus `command` and `seed`.
pub fn body<T: DeserializeOwned>(loaded: &Loaded) -> Result<T, CliError> {
    let mut v = loaded.config.clone();
    if let Value::Object(m) = &mut v {
        m.remove("command");
        m.remove("seed");
    }
    parse_section(v)
}
