//! Run configuration: one JSON document fully determines a run.
//!
//! Sections: `dynamics`, `bounds`, `gains`, `unsafe_set`, `sampler`,
//! `kernel`, `training`, `scenario`, `eval`, `label`. Each command reads the
//! sections it needs and reports the first one missing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ControlBounds, MovingDisk, State};
use crate::learner::features::FeatureMap;
use crate::learner::sampler::{BatchMode, LabelingProblem, SamplerConfig};
use crate::learner::svm::{KernelParams, SvmConfig};
use crate::learner::training::TrainingConfig;
use crate::presets::TrainingSetup;
use crate::qp::ControllerConfig;
use crate::scenarios::{ScenarioConfig, ScenarioKind, SensorModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    /// serde's message names the field and carries line and column.
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("{path}: section `{section}` is required by this command")]
    Missing { path: String, section: &'static str },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub dt: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self { dt: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub control: ControlBounds,
    /// `(V_min, V_max)`; `null` disables the speed barriers.
    pub speed: Option<(f64, f64)>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            control: c.control_bounds,
            speed: c.speed_limits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub clf_epsilon: f64,
    pub hocbf: [f64; 2],
    pub speed: f64,
    pub feasibility: f64,
    pub cost: [[f64; 2]; 2],
    pub relax_penalty: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        let c = ControllerConfig::default();
        Self {
            clf_epsilon: c.clf_epsilon,
            hocbf: c.hocbf_gains,
            speed: c.speed_gain,
            feasibility: c.feasibility_gain,
            cost: c.cost,
            relax_penalty: c.relax_penalty,
        }
    }
}

/// One unsafe-set type at a canonical placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnsafeSetSection {
    pub disks: Vec<MovingDisk>,
    pub features: FeatureMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub train_sizes: Vec<usize>,
    pub test_sizes: Vec<usize>,
    pub rate_samples: usize,
    #[serde(default)]
    pub svm: SvmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub initial: State,
    pub destination: [f64; 2],
    pub obstacles: Vec<MovingDisk>,
    pub t_f: f64,
    pub desired_speed: f64,
    #[serde(default)]
    pub sensor: Option<SensorModel>,
    pub arrival_radius: f64,
    #[serde(default)]
    pub approach_gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// `H >= 0` fraction and augmented-program infeasibility rate.
    Generalization,
    /// Agreement of `sign H` with fresh balanced labels.
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub mode: EvalMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSection {
    pub mode: BatchMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub gains: GainsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unsafe_set: Option<UnsafeSetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelSection>,
}

/// A config paired with the path it came from, for diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: String,
    pub config: RunConfig,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &str) -> Result<LoadedConfig, ConfigError> {
        let config: RunConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_string(),
            source,
        })?;
        let loaded = LoadedConfig {
            path: path.to_string(),
            config,
        };
        loaded.validate_common()?;
        Ok(loaded)
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: p.clone(),
            source,
        })?;
        Self::from_json(&text, &p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            control_bounds: self.bounds.control,
            speed_limits: self.bounds.speed,
            clf_epsilon: self.gains.clf_epsilon,
            hocbf_gains: self.gains.hocbf,
            speed_gain: self.gains.speed,
            feasibility_gain: self.gains.feasibility,
            cost: self.gains.cost,
            relax_penalty: self.gains.relax_penalty,
        }
    }

    fn set_controller(&mut self, c: &ControllerConfig) {
        self.bounds = BoundsSection {
            control: c.control_bounds,
            speed: c.speed_limits,
        };
        self.gains = GainsSection {
            clf_epsilon: c.clf_epsilon,
            hocbf: c.hocbf_gains,
            speed: c.speed_gain,
            feasibility: c.feasibility_gain,
            cost: c.cost,
            relax_penalty: c.relax_penalty,
        };
    }

    pub fn from_training(setup: &TrainingSetup) -> Self {
        let mut c = RunConfig {
            dynamics: DynamicsSection { dt: setup.problem.dt },
            unsafe_set: Some(UnsafeSetSection {
                disks: setup.problem.disks.clone(),
                features: setup.problem.features,
            }),
            sampler: Some(setup.sampler.clone()),
            kernel: setup.training.kernel,
            training: Some(TrainingSection {
                epsilon: setup.training.epsilon,
                max_iterations: setup.training.max_iterations,
                train_sizes: setup.training.train_sizes.clone(),
                test_sizes: setup.training.test_sizes.clone(),
                rate_samples: setup.training.rate_samples,
                svm: setup.training.svm,
            }),
            ..RunConfig::default()
        };
        c.set_controller(&setup.problem.controller);
        c
    }

    /// Adds a scenario section; dynamics and controller come from `cfg`.
    pub fn with_scenario(mut self, cfg: &ScenarioConfig) -> Self {
        self.dynamics = DynamicsSection { dt: cfg.dt };
        self.set_controller(&cfg.controller);
        self.scenario = Some(ScenarioSection {
            kind: cfg.kind,
            initial: cfg.initial,
            destination: cfg.destination,
            obstacles: cfg.obstacles.clone(),
            t_f: cfg.t_f,
            desired_speed: cfg.desired_speed,
            sensor: cfg.sensor,
            arrival_radius: cfg.arrival_radius,
            approach_gain: cfg.approach_gain,
        });
        self
    }
}

impl LoadedConfig {
    fn invalid(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    fn missing(&self, section: &'static str) -> ConfigError {
        ConfigError::Missing {
            path: self.path.clone(),
            section,
        }
    }

    fn validate_common(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if !(c.dynamics.dt > 0.0) {
            return Err(self.invalid(format!("dynamics.dt = {} must be positive", c.dynamics.dt)));
        }
        if !c.bounds.control.is_valid() {
            return Err(self.invalid("bounds.control must satisfy u_min <= u_max"));
        }
        if let Some((lo, hi)) = c.bounds.speed {
            if !(lo <= hi) {
                return Err(self.invalid("bounds.speed must satisfy min <= max"));
            }
        }
        c.kernel
            .validate()
            .map_err(|e| self.invalid(format!("kernel: {e}")))?;
        if c.gains.hocbf.iter().chain([&c.gains.speed, &c.gains.feasibility]).any(|&k| !(k > 0.0)) {
            return Err(self.invalid("gains.hocbf, gains.speed and gains.feasibility must be positive"));
        }
        if let Some(s) = &c.sampler {
            s.validate().map_err(|e| self.invalid(format!("sampler: {e}")))?;
        }
        if let Some(u) = &c.unsafe_set {
            if u.disks.is_empty() {
                return Err(self.invalid("unsafe_set.disks must not be empty"));
            }
        }
        Ok(())
    }

    pub fn labeling_problem(&self) -> Result<LabelingProblem, ConfigError> {
        let u = self.config.unsafe_set.as_ref().ok_or_else(|| self.missing("unsafe_set"))?;
        Ok(LabelingProblem {
            disks: u.disks.clone(),
            features: u.features,
            controller: self.config.controller(),
            dt: self.config.dynamics.dt,
        })
    }

    /// Sampler section with the seed optionally overridden.
    pub fn sampler(&self, seed: Option<u64>) -> Result<SamplerConfig, ConfigError> {
        let s = self.config.sampler.as_ref().ok_or_else(|| self.missing("sampler"))?;
        Ok(match seed {
            Some(seed) => s.with_seed(seed),
            None => s.clone(),
        })
    }

    pub fn training_setup(&self, seed: Option<u64>) -> Result<TrainingSetup, ConfigError> {
        let t = self.config.training.as_ref().ok_or_else(|| self.missing("training"))?;
        let training = TrainingConfig {
            epsilon: t.epsilon,
            max_iterations: t.max_iterations,
            train_sizes: t.train_sizes.clone(),
            test_sizes: t.test_sizes.clone(),
            rate_samples: t.rate_samples,
            kernel: self.config.kernel,
            svm: t.svm,
        };
        training
            .validate()
            .map_err(|e| self.invalid(format!("training: {e}")))?;
        Ok(TrainingSetup {
            problem: self.labeling_problem()?,
            sampler: self.sampler(seed)?,
            training,
        })
    }

    pub fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let s = self.config.scenario.as_ref().ok_or_else(|| self.missing("scenario"))?;
        let cfg = ScenarioConfig {
            kind: s.kind,
            initial: s.initial,
            destination: s.destination,
            obstacles: s.obstacles.clone(),
            t_f: s.t_f,
            dt: self.config.dynamics.dt,
            desired_speed: s.desired_speed,
            controller: self.config.controller(),
            sensor: s.sensor,
            arrival_radius: s.arrival_radius,
            approach_gain: s.approach_gain,
        };
        cfg.validate().map_err(|e| self.invalid(format!("scenario: {e}")))?;
        Ok(cfg)
    }

    pub fn eval_mode(&self) -> EvalMode {
        self.config.eval.map_or(EvalMode::Generalization, |e| e.mode)
    }

    pub fn label_mode(&self) -> BatchMode {
        self.config.label.map_or(BatchMode::Natural, |l| l.mode)
    }
}
