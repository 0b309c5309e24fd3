//! Command-line front end: config resolution, commands and output files.
//!
//! Precedence is flags over the config file over defaults. Everything is
//! resolved and validated before any run starts, and files are written only
//! after every run has finished, each through a temporary file and a rename.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detector::ShiftConfig;
use crate::engine::report::{compare_strategies, ComparisonReport, Execution};
use crate::engine::{run, EstimatorConfig, PredictorKind, RunConfig, RunOutcome, Strategy};
use crate::error::{Result, TampaError};
use crate::planner::PlannerConfig;
use crate::scenario::{load_scenario, Scenario, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A scenario path, or the scenario itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(String),
    Inline(Box<ScenarioFile>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_scenario")]
    pub scenario: ScenarioSource,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub detector: ShiftConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub predictor: PredictorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_scenario() -> ScenarioSource {
    ScenarioSource::Path("flatbush12".into())
}
fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_seeds() -> Vec<u64> {
    (1..=20).collect()
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: default_scenario(),
            strategies: default_strategies(),
            seeds: default_seeds(),
            planner: PlannerConfig::default(),
            detector: ShiftConfig::default(),
            estimator: EstimatorConfig::default(),
            predictor: PredictorKind::default(),
            out: None,
            formats: default_formats(),
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            planner: self.planner.clone(),
            detector: self.detector,
            estimator: self.estimator.clone(),
            predictor: self.predictor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run_config().validate()?;
        if self.seeds.is_empty() {
            return Err(TampaError::validation("seeds", "at least one seed is required"));
        }
        if self.strategies.is_empty() {
            return Err(TampaError::validation("strategies", "at least one strategy is required"));
        }
        if self.formats.is_empty() {
            return Err(TampaError::validation("formats", "at least one output format is required"));
        }
        Ok(())
    }

    /// Reads a config file. Any output file of this tool also works: its
    /// embedded provenance block is used.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| TampaError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        let parse_err = |message: String| TampaError::Parse {
            path: path.display().to_string(),
            message,
        };
        let body = match text.lines().next() {
            Some(first) if first.starts_with('#') => first.trim_start_matches('#').trim(),
            _ => text.as_str(),
        };
        let mut value: Value = serde_json::from_str(body).map_err(|e| parse_err(e.to_string()))?;
        if let Some(p) = value.get_mut("provenance") {
            value = p
                .get_mut("config")
                .map(Value::take)
                .ok_or_else(|| parse_err("provenance block has no config".into()))?;
        }
        let mut config: ExperimentConfig = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        if let ScenarioSource::Path(p) = &config.scenario {
            let candidate = PathBuf::from(p);
            if !candidate.exists() && candidate.is_relative() {
                if let Some(dir) = path.parent() {
                    let beside = dir.join(&candidate);
                    if beside.exists() {
                        config.scenario = ScenarioSource::Path(beside.display().to_string());
                    }
                }
            }
        }
        Ok(config)
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            ScenarioSource::Path(p) => load_scenario(Path::new(p)),
            ScenarioSource::Inline(file) => (**file).clone().validate(),
        }
    }

    /// The config as embedded in outputs: scenario inline, no output
    /// directory, no sweep block.
    fn resolved(&self, scenario: &Scenario) -> ExperimentConfig {
        ExperimentConfig {
            scenario: ScenarioSource::Inline(Box::new(scenario.source().clone())),
            out: None,
            sweep: None,
            ..self.clone()
        }
    }
}

/// `"1,2,5-8"` style seed lists.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| TampaError::validation("seeds", format!("cannot read '{part}'"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if a > b {
                    return Err(bad(part));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(TampaError::validation("seeds", "at least one seed is required"));
    }
    Ok(out)
}

fn parse_list<T: for<'de> Deserialize<'de>>(field: &str, items: &[String]) -> Result<Vec<T>> {
    items
        .iter()
        .map(|s| {
            serde_json::from_value(Value::String(s.trim().to_string()))
                .map_err(|_| TampaError::validation(field, format!("unknown value '{s}'")))
        })
        .collect()
}

const SWEEP_ALIASES: &[(&str, &str)] = &[
    ("lambda", "planner.lambda"),
    ("zeta", "planner.zeta"),
    ("tau", "planner.tau"),
    ("num_slots", "planner.num_slots"),
    ("q", "detector.q_policy"),
    ("q_policy", "detector.q_policy"),
    ("aggregator", "detector.aggregator"),
    ("distance", "detector.distance"),
    ("prior_weight", "estimator.prior_weight"),
    ("prior", "estimator.prior"),
];

/// Reads one command-line sweep value: JSON when it parses, `fraction:x`
/// for the fractional aggregator, otherwise a plain string.
pub fn parse_sweep_value(text: &str) -> Value {
    let text = text.trim();
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        return v;
    }
    if let Some(theta) = text.strip_prefix("fraction:").and_then(|x| x.trim().parse::<f64>().ok()) {
        return json!({ "fraction": theta });
    }
    Value::String(text.to_string())
}

fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Object(m) => m
            .iter()
            .map(|(k, v)| format!("{k}-{}", value_label(v)))
            .collect::<Vec<_>>()
            .join("_"),
        other => other.to_string(),
    }
}

/// `config` with one parameter replaced; `param` is an alias or a dotted
/// path into the config.
pub fn with_param(config: &ExperimentConfig, param: &str, value: &Value) -> Result<ExperimentConfig> {
    let path = SWEEP_ALIASES
        .iter()
        .find(|(alias, _)| *alias == param)
        .map_or(param, |(_, p)| p);
    let mut doc = serde_json::to_value(config).map_err(|e| TampaError::InvalidState(e.to_string()))?;
    let mut slot = &mut doc;
    for key in path.split('.') {
        slot = slot
            .as_object_mut()
            .map(|m| m.entry(key.to_string()).or_insert(Value::Null))
            .ok_or_else(|| TampaError::validation("sweep.param", format!("'{param}' is not a config field")))?;
    }
    *slot = value.clone();
    let updated: ExperimentConfig = serde_json::from_value(doc)
        .map_err(|e| TampaError::validation("sweep.values", format!("{param} = {value}: {e}")))?;
    updated.validate()?;
    Ok(updated)
}

#[derive(Parser, Debug)]
#[command(name = "tampa", version, about = "Adaptive patrol planning under shifting complaint patterns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one strategy under one seed and write its trajectory and metrics.
    Simulate(CommonArgs),
    /// Run every strategy under every seed and write a comparison report.
    Compare(CommonArgs),
    /// Repeat the comparison for each value of one parameter.
    Sweep(SweepArgs),
    /// Check a scenario and config without running anything.
    Validate(CommonArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Scenario file, or `flatbush12` for the bundled one.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Experiment config (JSON); any output file of this tool also works.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds, e.g. `7` or `1-20` or `1,4,9`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Strategies: tampa, stationary, random.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output formats: csv, json.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter to vary, e.g. `lambda` or `detector.aggregator`.
    #[arg(long)]
    pub param: Option<String>,
    /// Values for the parameter, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
}

pub fn resolve(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &args.scenario {
        config.scenario = ScenarioSource::Path(s.display().to_string());
    }
    if let Some(s) = &args.seeds {
        config.seeds = parse_seeds(s)?;
    }
    if !args.strategy.is_empty() {
        config.strategies = parse_list("strategy", &args.strategy)?;
    }
    if let Some(o) = &args.out {
        config.out = Some(o.clone());
    }
    if !args.format.is_empty() {
        config.formats = parse_list("format", &args.format)?;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

/// A file ready to be written.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

fn provenance(config: &ExperimentConfig, seed: Option<u64>, strategy: Option<Strategy>) -> Value {
    let mut p = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    if let Some(seed) = seed {
        p["seed"] = json!(seed);
    }
    if let Some(s) = strategy {
        p["strategy"] = json!(s);
    }
    p
}

fn to_json<T: Serialize>(provenance: &Value, body: &T) -> Result<String> {
    let mut doc = json!({ "provenance": provenance });
    let body = serde_json::to_value(body).map_err(|e| TampaError::InvalidState(e.to_string()))?;
    if let Value::Object(m) = body {
        for (k, v) in m {
            doc[k] = v;
        }
    }
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| TampaError::InvalidState(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn csv_with_provenance(provenance: &Value, write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w).map_err(|e| TampaError::InvalidState(e.to_string()))?;
        w.flush().map_err(|e| TampaError::InvalidState(e.to_string()))?;
    }
    let head = json!({ "provenance": provenance });
    Ok(format!("# {head}\n{}", String::from_utf8(buf).expect("csv output is utf-8")))
}

pub fn trajectory_csv(outcome: &RunOutcome, provenance: &Value) -> Result<String> {
    csv_with_provenance(provenance, |w| {
        w.write_record(["t", "node", "status", "action", "r_g", "cumulative_Q", "trigger_fired"])?;
        let mut q = 0.0;
        for (i, r) in outcome.trajectory.records.iter().enumerate() {
            if i > 0 {
                q += r.utility;
            }
            w.write_record([
                r.t.to_string(),
                r.node.to_string(),
                r.kind.to_string(),
                r.action.to_string(),
                r.utility.to_string(),
                q.to_string(),
                r.trigger.to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn cumulative_csv(report: &ComparisonReport, provenance: &Value) -> Result<String> {
    csv_with_provenance(provenance, |w| {
        let mut header = vec!["t".to_string()];
        header.extend(report.strategies.iter().map(|s| s.strategy.to_string()));
        w.write_record(&header)?;
        for m in 0..=report.horizon as usize {
            let mut row = vec![m.to_string()];
            row.extend(report.strategies.iter().map(|s| s.mean_cumulative_q[m].to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

pub fn simulate_artifacts(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    config.validate()?;
    let scenario = config.load_scenario()?;
    let (strategy, seed) = (config.strategies[0], config.seeds[0]);
    let resolved = ExperimentConfig {
        strategies: vec![strategy],
        seeds: vec![seed],
        ..config.resolved(&scenario)
    };
    let outcome = run(&scenario, &config.run_config(), strategy, seed)?;
    let prov = provenance(&resolved, Some(seed), Some(strategy));
    let stem = format!("{strategy}_seed{seed}");
    let mut out = Vec::new();
    if config.formats.contains(&OutputFormat::Csv) {
        out.push(Artifact {
            name: format!("trajectory_{stem}.csv"),
            contents: trajectory_csv(&outcome, &prov)?,
        });
    }
    if config.formats.contains(&OutputFormat::Json) {
        out.push(Artifact {
            name: format!("metrics_{stem}.json"),
            contents: to_json(
                &prov,
                &json!({
                    "strategy": outcome.strategy,
                    "seed": outcome.seed,
                    "metrics": outcome.metrics,
                    "detections": outcome.detections,
                }),
            )?,
        });
    }
    Ok(out)
}

fn comparison_artifacts(config: &ExperimentConfig, scenario: &Scenario, stem: &str) -> Result<Vec<Artifact>> {
    let report = compare_strategies(
        scenario,
        &config.run_config(),
        &config.strategies,
        &config.seeds,
        Execution::Parallel,
    )?;
    let prov = provenance(&config.resolved(scenario), None, None);
    let mut out = Vec::new();
    if config.formats.contains(&OutputFormat::Json) {
        out.push(Artifact {
            name: format!("{stem}.json"),
            contents: to_json(&prov, &report)?,
        });
    }
    if config.formats.contains(&OutputFormat::Csv) {
        out.push(Artifact {
            name: format!("{stem}_cumulative_q.csv"),
            contents: cumulative_csv(&report, &prov)?,
        });
    }
    Ok(out)
}

pub fn compare_artifacts(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    config.validate()?;
    let scenario = config.load_scenario()?;
    comparison_artifacts(config, &scenario, "comparison")
}

pub fn sweep_artifacts(config: &ExperimentConfig) -> Result<Vec<Artifact>> {
    config.validate()?;
    let spec = config
        .sweep
        .clone()
        .ok_or_else(|| TampaError::validation("sweep", "give --param and --values or a sweep block"))?;
    if spec.values.is_empty() {
        return Err(TampaError::validation("sweep.values", "at least one value is required"));
    }
    let scenario = config.load_scenario()?;
    let cells = spec
        .values
        .iter()
        .map(|v| with_param(config, &spec.param, v).map(|c| (value_label(v), c)))
        .collect::<Result<Vec<_>>>()?;
    let mut labels = BTreeMap::new();
    for (label, _) in &cells {
        if labels.insert(label.clone(), ()).is_some() {
            return Err(TampaError::validation("sweep.values", format!("duplicate value {label}")));
        }
    }
    let mut out = Vec::new();
    for (label, cell) in cells {
        let stem = format!("sweep_{}_{}", spec.param.replace('.', "-"), label);
        out.extend(comparison_artifacts(&cell, &scenario, &stem)?);
    }
    Ok(out)
}

/// Writes every artifact through a temporary file and a rename.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| TampaError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let target = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        fs::write(&tmp, &a.contents).map_err(io(&tmp))?;
        fs::rename(&tmp, &target).map_err(io(&target))?;
    }
    Ok(())
}

fn validate_report(config: &ExperimentConfig) -> Result<String> {
    let s = config.load_scenario()?;
    Ok(format!(
        "ok: scenario {} with {} nodes, {} edge pairs, start {}, horizon {}, tau {}, {} shift event(s)",
        s.name,
        s.graph.node_count(),
        s.edge_pairs(),
        s.start,
        s.horizon,
        s.tau,
        s.complaints.shifts.len()
    ))
}

fn execute(command: Command) -> Result<String> {
    match command {
        Command::Validate(args) => validate_report(&resolve(&args)?),
        Command::Simulate(args) => {
            let config = resolve(&args)?;
            let artifacts = simulate_artifacts(&config)?;
            finish(&config, &artifacts)
        }
        Command::Compare(args) => {
            let config = resolve(&args)?;
            let artifacts = compare_artifacts(&config)?;
            finish(&config, &artifacts)
        }
        Command::Sweep(args) => {
            let mut config = resolve(&args.common)?;
            if let Some(param) = args.param {
                config.sweep = Some(SweepSpec {
                    param,
                    values: args.values.iter().map(|v| parse_sweep_value(v)).collect(),
                });
            } else if !args.values.is_empty() {
                return Err(TampaError::validation("sweep.param", "--values needs --param"));
            }
            let artifacts = sweep_artifacts(&config)?;
            finish(&config, &artifacts)
        }
    }
}

fn finish(config: &ExperimentConfig, artifacts: &[Artifact]) -> Result<String> {
    let dir = out_dir(config);
    write_artifacts(&dir, artifacts)?;
    Ok(artifacts
        .iter()
        .map(|a| format!("wrote {}", dir.join(&a.name).display()))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            EXIT_OK
        }
        Err(e) if e.is_validation() => {
            eprintln!("error: {e}");
            EXIT_VALIDATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
