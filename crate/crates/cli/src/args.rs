//! Command-line flags. Every subcommand's flags double as its persisted run
//! configuration: `--config <file>` is merged key by key over the flag values.

use std::path::{Path, PathBuf};

use causal_audit::data::Attribute;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "causal-audit", version, about = "Causal audit of review outcomes and fairness-aware ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset with known counterfactual outcomes.
    Generate(GenerateArgs),
    /// Summary, balance, effect estimates and figures for a dataset.
    Audit(AuditArgs),
    /// Train one ranker (and a lambda = 0 baseline when lambda > 0).
    Train(TrainArgs),
    /// Train one ranker per lambda.
    Sweep(SweepArgs),
    /// Train one ranker per (race, country) weight pair at a fixed lambda.
    Ablate(AblateArgs),
    /// Re-render tables and figures of a finished run from its report.json.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Audit(_) => "audit",
            Command::Train(_) => "train",
            Command::Sweep(_) => "sweep",
            Command::Ablate(_) => "ablate",
            Command::Report(_) => "report",
        }
    }
}

fn parse_attribute(s: &str) -> Result<Attribute, String> {
    s.parse().map_err(|e: causal_audit::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Default,
    StrongConfounding,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonOpt,
    #[arg(long, value_enum, default_value = "default")]
    pub preset: Preset,
    /// Number of units; defaults to the preset's size.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attribute that drives prestige and carries the counterfactual oracle.
    #[arg(long, value_parser = parse_attribute, default_value = "race")]
    pub treatment: Attribute,
    #[arg(long, allow_negative_numbers = true)]
    pub tau_race: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau_gender: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau_country: Option<f64>,
    #[arg(long)]
    pub race_rate: Option<f64>,
    #[arg(long)]
    pub gender_rate: Option<f64>,
    #[arg(long)]
    pub country_rate: Option<f64>,
    /// Treatment coefficient in the prestige equation.
    #[arg(long, allow_negative_numbers = true)]
    pub confounding: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub effect_modifier: Option<f64>,
    #[arg(long)]
    pub outcome_noise_sd: Option<f64>,
}

/// Flags every run shares; neither is part of the run configuration.
#[derive(Debug, Clone, Args, Default)]
pub struct CommonOpt {
    /// JSON file whose keys override the corresponding flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root directory; results go to `<out>/<run-id>/`.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset CSV with columns id, race, gender, country, h_index, prestige, outcome.
    /// May come from `--config` instead.
    #[arg(long, required_unless_present = "config")]
    pub data: Option<PathBuf>,
    /// Accept and ignore columns outside the schema.
    #[arg(long)]
    pub ignore_extra_columns: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonOpt,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(200..))]
    pub n_boot: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed of the bootstrap resampling streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of h-index quantile strata.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub strata: u64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub stabilized: bool,
    /// Propensity clipping bounds, `low,high`; `none` disables clipping.
    #[arg(long, default_value = "0.01,0.99")]
    pub clip: String,
    /// Ridge penalty on standardized propensity coefficients.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Attribute pair for the intersectional breakdown.
    #[arg(long, value_delimiter = ',', value_parser = parse_attribute, default_value = "race,gender")]
    pub intersect: Vec<Attribute>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Seed of the weight initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    /// CSV with an `id` column supplying NDCG relevance; outcome rank otherwise.
    #[arg(long)]
    pub relevance_file: Option<PathBuf>,
    #[arg(long, default_value = "y_merit")]
    pub relevance_column: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonOpt,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_race: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_country: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonOpt,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,5,10")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub w_race: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_country: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonOpt,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// `race:country` weight pairs.
    #[arg(long, value_delimiter = ',', default_value = "0.5:0.5,0.9:0.1,0.1:0.9")]
    pub weights: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// A run directory holding report.json.
    pub run_dir: PathBuf,
}

/// Parses `low,high` or `none`.
pub fn parse_clip(s: &str) -> Result<Option<[f64; 2]>, CliError> {
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--clip expects `low,high` or `none`, got `{s}`"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(CliError::Usage(format!("--clip bounds must satisfy 0 < low < high < 1, got `{s}`")));
    }
    Ok(Some([lo, hi]))
}

/// Parses `w_race:w_country`.
pub fn parse_weight_pair(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("weight pair `{s}` is not `race:country`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Overlays the keys of a JSON config file on the flag values.
///
/// Unknown keys are rejected. A top-level `command` key, as written to
/// `run_config.json`, must name the running subcommand.
pub fn merge_config<T: Serialize + DeserializeOwned>(flags: &T, path: &Path, command: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let overlay: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut overlay) = overlay else {
        return Err(CliError::Usage("config must be a JSON object".into()));
    };
    if let Some(cmd) = overlay.remove("command") {
        if cmd.as_str() != Some(command) {
            return Err(CliError::Usage(format!("config is for command {cmd}, not `{command}`")));
        }
    }
    // run_config.json also records provenance that is not a flag
    overlay.remove("tool_version");
    overlay.remove("data_sha256");
    let mut base = serde_json::to_value(flags).expect("flags serialize");
    let Value::Object(map) = &mut base else {
        unreachable!("flag structs serialize to objects")
    };
    for (k, v) in overlay {
        if !map.contains_key(&k) {
            return Err(CliError::Usage(format!("unknown config key `{k}`")));
        }
        map.insert(k, v);
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("invalid config value: {e}")))
}
