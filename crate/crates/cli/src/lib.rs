//! Commands behind the `fcbf` binary. Each writes its artifacts plus a
//! `manifest.json` listing them into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use feasible_cbf::config::{ConfigError, EvalMode, LoadedConfig, RunConfig};
use feasible_cbf::learner::io::{load_model, save_model, write_dataset};
use feasible_cbf::learner::sampler::{sample_and_label, BatchMode};
use feasible_cbf::learner::training::{feedback_train, generalization_test, TrainingError};
use feasible_cbf::learner::Hypersurface;
use feasible_cbf::qp::ModelBank;
use feasible_cbf::scenarios::{self, ScenarioError, ScenarioKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Config(_) => CliError::Config(e.to_string()),
            TrainingError::Svm { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub version: String,
    pub wall_clock_ms: u64,
    /// File names relative to `output_dir`, the manifest included.
    pub artifacts: Vec<String>,
}

/// Parse `TYPE=PATH`.
pub fn parse_model_arg(s: &str) -> Result<(usize, PathBuf), String> {
    let (t, p) = s
        .split_once('=')
        .ok_or_else(|| format!("expected TYPE=PATH, got `{s}`"))?;
    let t = t
        .trim()
        .parse::<usize>()
        .map_err(|_| format!("unsafe-set type `{t}` is not a non-negative integer"))?;
    if p.is_empty() {
        return Err(format!("empty model path in `{s}`"));
    }
    Ok((t, PathBuf::from(p)))
}

pub fn load_models(models: &[(usize, PathBuf)]) -> Result<ModelBank, CliError> {
    let mut bank = ModelBank::new();
    for (t, p) in models {
        let h = load_model(p).map_err(|e| CliError::Config(e.to_string()))?;
        if bank.insert(*t, h).is_some() {
            return Err(CliError::Config(format!("model for type {t} given twice")));
        }
    }
    Ok(bank)
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }

    fn finish(mut self, command: &str, config: &Path, seed: Option<u64>, started: Instant) -> Result<RunManifest, CliError> {
        self.artifacts.push("manifest.json".into());
        let manifest = RunManifest {
            command: command.to_string(),
            config_path: config.display().to_string(),
            seed,
            output_dir: self.dir.display().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_ms: started.elapsed().as_millis() as u64,
            artifacts: self.artifacts.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("serializable") + "\n";
        let p = self.dir.join("manifest.json");
        fs::write(&p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        Ok(manifest)
    }
}

fn load(config: &Path) -> Result<LoadedConfig, CliError> {
    Ok(RunConfig::load(config)?)
}

/// `model.json` and `report.json`.
pub fn cmd_train(config: &Path, seed: Option<u64>, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = load(config)?;
    let setup = cfg.training_setup(seed)?;
    let mut o = Output::create(out)?;
    let (model, report) = feedback_train(&setup.problem, &setup.sampler, &setup.training)?;
    let p = o.path("model.json");
    save_model(&model, &p).map_err(|e| CliError::Runtime(e.to_string()))?;
    o.json("report.json", &report)?;
    o.finish("train", config, Some(setup.sampler.seed), started)
}

/// `trajectory.csv` and `summary.json`. An infeasible run is an outcome, not an error.
pub fn cmd_simulate(config: &Path, models: &[(usize, PathBuf)], out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = load(config)?;
    let scenario = cfg.scenario()?;
    let bank = load_models(models)?;
    let mut o = Output::create(out)?;
    let log = match scenario.kind {
        ScenarioKind::Robot => scenarios::run_robot(&scenario, &bank)?,
        ScenarioKind::Driving => scenarios::run_driving(&scenario, &bank)?,
    };
    o.write("trajectory.csv", &log.to_csv())?;
    o.json(
        "summary.json",
        &SimulationSummary {
            kind: scenario.kind,
            steps: log.records.len(),
            final_state: log.final_state,
            summary: log.summary.clone(),
        },
    )?;
    o.finish("simulate", config, None, started)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub kind: ScenarioKind,
    pub steps: usize,
    pub final_state: feasible_cbf::dynamics::State,
    #[serde(flatten)]
    pub summary: scenarios::RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mode: EvalMode,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_nonneg_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qp_infeasibility_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

fn model_for<'a>(cfg: &LoadedConfig, bank: &'a ModelBank) -> Result<&'a Hypersurface, CliError> {
    let problem = cfg.labeling_problem()?;
    let t = problem.type_id();
    bank.get(&t)
        .ok_or_else(|| CliError::Config(format!("no --model given for unsafe-set type {t}")))
}

/// `metrics.json`.
pub fn cmd_eval(config: &Path, models: &[(usize, PathBuf)], seed: Option<u64>, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = load(config)?;
    let problem = cfg.labeling_problem()?;
    let sampler = cfg.sampler(seed)?;
    if sampler.n_samples == 0 {
        return Err(CliError::Config("sampler.n_samples must be positive for eval".into()));
    }
    let bank = load_models(models)?;
    let h = model_for(&cfg, &bank)?;
    let mut o = Output::create(out)?;
    let metrics = match cfg.eval_mode() {
        EvalMode::Generalization => {
            let r = generalization_test(&problem, &sampler, h);
            EvalMetrics {
                mode: EvalMode::Generalization,
                n_samples: r.n_samples,
                h_nonneg_fraction: Some(r.h_nonneg_fraction),
                qp_infeasibility_rate: Some(r.qp_infeasibility_rate),
                accuracy: None,
            }
        }
        EvalMode::Accuracy => {
            let batch = sample_and_label(&problem, &sampler, None, BatchMode::Balanced);
            EvalMetrics {
                mode: EvalMode::Accuracy,
                n_samples: batch.samples.len(),
                h_nonneg_fraction: None,
                qp_infeasibility_rate: None,
                accuracy: (!batch.samples.is_empty()).then(|| h.accuracy(&batch.samples)),
            }
        }
    };
    if metrics.n_samples == 0 {
        return Err(CliError::Runtime(
            "no samples survived the initial-condition filter; metrics are empty".into(),
        ));
    }
    o.json("metrics.json", &metrics)?;
    o.finish("eval", config, Some(sampler.seed), started)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub mode: BatchMode,
    pub samples: usize,
    pub infeasible: usize,
    pub draws: usize,
    pub discarded: usize,
    pub solves: usize,
    pub infeasibility_rate: f64,
}

/// `dataset.csv` and `label_stats.json`; an active model is optional.
pub fn cmd_label(config: &Path, models: &[(usize, PathBuf)], seed: Option<u64>, out: &Path) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let cfg = load(config)?;
    let problem = cfg.labeling_problem()?;
    let sampler = cfg.sampler(seed)?;
    let bank = load_models(models)?;
    let surface = bank.get(&problem.type_id());
    let mode = cfg.label_mode();
    let mut o = Output::create(out)?;
    let batch = sample_and_label(&problem, &sampler, surface, mode);
    let p = o.path("dataset.csv");
    write_dataset(&batch.samples, &p).map_err(|e| CliError::Runtime(e.to_string()))?;
    o.json(
        "label_stats.json",
        &LabelStats {
            mode,
            samples: batch.samples.len(),
            infeasible: batch.count(feasible_cbf::learner::Label::Infeasible),
            draws: batch.draws,
            discarded: batch.discarded,
            solves: batch.solves,
            infeasibility_rate: batch.infeasibility_rate(),
        },
    )?;
    o.finish("label", config, Some(sampler.seed), started)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_args() {
        assert_eq!(parse_model_arg("1=a/b.json").unwrap(), (1, PathBuf::from("a/b.json")));
        assert!(parse_model_arg("a/b.json").is_err());
        assert!(parse_model_arg("x=m.json").is_err());
        assert!(parse_model_arg("0=").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Runtime("x".into()).exit_code(), 3);
        let e: CliError = ScenarioError::Diverged(1.0).into();
        assert_eq!(e.exit_code(), 3);
    }
}
