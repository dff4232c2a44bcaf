//! Iterative feedback training: sample with the current hypersurface active,
//! retrain, repeat until the natural infeasibility rate drops below a target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::sampler::{sample_and_label, sample_and_label_with, BatchMode, LabelingProblem, SamplerConfig};
use crate::learner::svm::{train_svm, Hypersurface, KernelParams, Label, SvmConfig, SvmError};

#[derive(Debug, Error, PartialEq)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("classifier training failed at iteration {iteration}: {source}")]
    Svm { iteration: usize, source: SvmError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Stop once the infeasibility rate with the current model falls below this.
    pub epsilon: f64,
    #[serde(default = "TrainingConfig::default_max_iterations")]
    pub max_iterations: usize,
    /// Training-set size per iteration; the last entry repeats.
    pub train_sizes: Vec<usize>,
    /// Held-out balanced test-set size per iteration.
    pub test_sizes: Vec<usize>,
    /// Natural samples used to measure the infeasibility rate.
    pub rate_samples: usize,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub svm: SvmConfig,
}

impl TrainingConfig {
    fn default_max_iterations() -> usize {
        10
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.epsilon >= 0.0) {
            return Err(TrainingError::Config("epsilon must be non-negative".into()));
        }
        if self.max_iterations == 0 || self.train_sizes.is_empty() || self.test_sizes.is_empty() {
            return Err(TrainingError::Config(
                "max_iterations, train_sizes and test_sizes must be non-empty".into(),
            ));
        }
        if self.rate_samples == 0 {
            return Err(TrainingError::Config("rate_samples must be positive".into()));
        }
        Ok(())
    }

    fn size(list: &[usize], k: usize) -> usize {
        list[(k - 1).min(list.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Natural infeasibility rate with the previous model active.
    pub infeasibility_rate: f64,
    /// Held-out accuracy of this iteration's model.
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_infeasible_train: usize,
    pub support_vectors: usize,
    pub svm_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: Vec<IterationStats>,
    /// Iteration whose model is returned: the one with the lowest measured rate.
    pub selected_iteration: usize,
    /// Rate measured with the returned model.
    pub final_rate: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

fn mix(seed: u64, iteration: usize, purpose: u64) -> u64 {
    seed ^ (iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

const RATE: u64 = 1;
const TRAIN: u64 = 2;
const TEST: u64 = 3;

/// Natural infeasibility rate of `n` samples with `surface` active.
pub fn measure_rate(
    problem: &LabelingProblem,
    sampler: &SamplerConfig,
    surface: Option<&Hypersurface>,
    n: usize,
    seed: u64,
) -> f64 {
    let cfg = sampler.with_samples(n).with_seed(seed);
    sample_and_label(problem, &cfg, surface, BatchMode::Natural).infeasibility_rate()
}

fn finish(
    iterations: Vec<IterationStats>,
    selected: (usize, f64, Hypersurface),
    converged: bool,
    warning: Option<String>,
) -> (Hypersurface, TrainingReport) {
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    let (selected_iteration, final_rate, model) = selected;
    (
        model,
        TrainingReport {
            iterations,
            selected_iteration,
            final_rate,
            converged,
            warning,
        },
    )
}

/// Lowest measured rate wins; later iterations win ties.
fn best(scored: Vec<(usize, f64, Hypersurface)>) -> (usize, f64, Hypersurface) {
    scored
        .into_iter()
        .reduce(|a, b| if b.1 <= a.1 { b } else { a })
        .expect("at least one scored model")
}

pub fn feedback_train(
    problem: &LabelingProblem,
    sampler: &SamplerConfig,
    cfg: &TrainingConfig,
) -> Result<(Hypersurface, TrainingReport), TrainingError> {
    cfg.validate()?;
    sampler.validate().map_err(TrainingError::Config)?;
    let mut model: Option<Hypersurface> = None;
    let mut rows = Vec::new();
    // (iteration, rate measured with its model, model)
    let mut scored: Vec<(usize, f64, Hypersurface)> = Vec::new();

    for k in 1..=cfg.max_iterations {
        let rate = measure_rate(problem, sampler, model.as_ref(), cfg.rate_samples, mix(sampler.seed, k, RATE));
        if let Some(m) = &model {
            scored.push((k - 1, rate, m.clone()));
            if rate < cfg.epsilon {
                return Ok(finish(rows, (k - 1, rate, m.clone()), true, None));
            }
        }
        let n_train = TrainingConfig::size(&cfg.train_sizes, k);
        let n_test = TrainingConfig::size(&cfg.test_sizes, k);
        let train = sample_and_label(
            problem,
            &sampler.with_samples(n_train).with_seed(mix(sampler.seed, k, TRAIN)),
            model.as_ref(),
            BatchMode::Balanced,
        );
        let test = sample_and_label(
            problem,
            &sampler.with_samples(n_test).with_seed(mix(sampler.seed, k, TEST)),
            model.as_ref(),
            BatchMode::Balanced,
        );
        let fit = match train_svm(&train.samples, cfg.kernel, &cfg.svm) {
            Ok(fit) => fit,
            Err(SvmError::SingleClass) if model.is_some() => {
                let w = format!("iteration {k}: training batch has a single class; keeping earlier models");
                return Ok(finish(rows, best(scored), false, Some(w)));
            }
            Err(source) => return Err(TrainingError::Svm { iteration: k, source }),
        };
        let h = fit.hypersurface;
        let accuracy = h.accuracy(&test.samples);
        log::info!(
            "iteration {k}: rate {rate:.4}, accuracy {accuracy:.3}, {} support vectors",
            h.support_vectors.len()
        );
        rows.push(IterationStats {
            iteration: k,
            infeasibility_rate: rate,
            accuracy,
            n_train: train.samples.len(),
            n_test: test.samples.len(),
            n_infeasible_train: train.count(Label::Infeasible),
            support_vectors: h.support_vectors.len(),
            svm_iterations: fit.iterations,
        });
        if model.is_none() && rate < cfg.epsilon {
            return Ok(finish(rows, (k, rate, h), true, None));
        }
        model = Some(h);
    }
    let last = model.expect("at least one iteration");
    let last_rate = measure_rate(
        problem,
        sampler,
        Some(&last),
        cfg.rate_samples,
        mix(sampler.seed, cfg.max_iterations + 1, RATE),
    );
    scored.push((cfg.max_iterations, last_rate, last));
    let selected = best(scored);
    let converged = selected.1 < cfg.epsilon;
    let warning = (!converged).then(|| {
        format!(
            "iteration cap {} reached with infeasibility rate {:.4} >= {}",
            cfg.max_iterations, selected.1, cfg.epsilon
        )
    });
    Ok(finish(rows, selected, converged, warning))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub n_samples: usize,
    /// Fraction of retained samples with `H(z) >= 0`; NaN when none remain.
    pub h_nonneg_fraction: f64,
    /// Infeasibility rate with the learned row active.
    pub qp_infeasibility_rate: f64,
}

/// Evaluate a model on samples drawn from `sampler` (typically a wider
/// annulus than training). States with `H < 0` are kept and counted.
pub fn generalization_test(
    problem: &LabelingProblem,
    sampler: &SamplerConfig,
    surface: &Hypersurface,
) -> GeneralizationReport {
    let batch = sample_and_label_with(problem, sampler, Some(surface), BatchMode::Natural, false);
    let n = batch.samples.len();
    let nonneg = batch
        .samples
        .iter()
        .filter(|s| surface.eval(&s.features) >= 0.0)
        .count();
    GeneralizationReport {
        n_samples: n,
        h_nonneg_fraction: if n == 0 { f64::NAN } else { nonneg as f64 / n as f64 },
        qp_infeasibility_rate: batch.infeasibility_rate(),
    }
}
