//! Sampling states around a canonically placed unsafe set and labeling them
//! by QP feasibility, either one step ahead or along a closed-loop rollout.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::CertificateError;
use crate::dynamics::{advance_obstacle, step_euler, unicycle_system, wrap_angle, MovingDisk, State};
use crate::learner::features::{FeatureMap, SetFrame};
use crate::learner::svm::{Hypersurface, Label, LabeledSample};
use crate::qp::{self, assemble, ClfTargets, ControllerConfig, ModelBank};

/// One unsafe-set type at an arbitrary canonical placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingProblem {
    /// Disks forming the set; all share one `set_id` and `type_id`.
    pub disks: Vec<MovingDisk>,
    pub features: FeatureMap,
    pub controller: ControllerConfig,
    pub dt: f64,
}

impl LabelingProblem {
    pub fn type_id(&self) -> usize {
        self.disks.first().map_or(0, |d| d.type_id)
    }

    pub fn frame(&self) -> SetFrame {
        SetFrame::of_disks(&self.disks).expect("labeling problem has disks")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Distance from the set's reference point, uniform over the annulus area.
    pub radial_range: [f64; 2],
    #[serde(default = "SamplerConfig::full_circle")]
    pub heading_range: [f64; 2],
    /// Draw the heading as an offset from the bearing toward the set center.
    #[serde(default)]
    pub heading_toward_center: bool,
    pub speed_range: [f64; 2],
    /// When set, the set moves along +x at `ego speed - delta`, with `delta`
    /// uniform on this range.
    #[serde(default)]
    pub relative_speed_range: Option<[f64; 2]>,
    pub n_samples: usize,
    /// Rollout length; 1 labels by a single QP.
    #[serde(default = "SamplerConfig::one")]
    pub horizon: usize,
    /// Minimum minority-class fraction in balanced batches.
    #[serde(default = "SamplerConfig::default_balance")]
    pub class_balance: f64,
    /// Draw budget in multiples of `n_samples` for balanced batches.
    #[serde(default = "SamplerConfig::default_budget")]
    pub budget_factor: usize,
    pub seed: u64,
    /// Rollout goal lies on the far side of the set, this far past its center
    /// on the line from the start through the center.
    #[serde(default = "SamplerConfig::default_goal_offset")]
    pub rollout_goal_offset: f64,
    /// CLF speed set-point during rollouts.
    #[serde(default = "SamplerConfig::default_rollout_speed")]
    pub rollout_speed: f64,
}

impl SamplerConfig {
    fn full_circle() -> [f64; 2] {
        [-PI, PI]
    }
    fn one() -> usize {
        1
    }
    fn default_balance() -> f64 {
        0.3
    }
    fn default_budget() -> usize {
        20
    }
    fn default_goal_offset() -> f64 {
        20.0
    }
    fn default_rollout_speed() -> f64 {
        1.0
    }

    /// Regular-set defaults around a radius-7 disk.
    pub fn regular(n_samples: usize, seed: u64) -> Self {
        Self {
            radial_range: [7.0, 13.0],
            heading_range: Self::full_circle(),
            heading_toward_center: false,
            speed_range: [0.0, 2.0],
            relative_speed_range: None,
            n_samples,
            horizon: 1,
            class_balance: Self::default_balance(),
            budget_factor: Self::default_budget(),
            seed,
            rollout_goal_offset: Self::default_goal_offset(),
            rollout_speed: Self::default_rollout_speed(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let [r0, r1] = self.radial_range;
        if !(r0 >= 0.0 && r0 <= r1) {
            return Err(format!("radial_range {:?} must satisfy 0 <= min <= max", self.radial_range));
        }
        if self.heading_range[0] > self.heading_range[1] || self.speed_range[0] > self.speed_range[1] {
            return Err("heading_range and speed_range must be ordered".into());
        }
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        if !(0.0..=0.5).contains(&self.class_balance) {
            return Err("class_balance must lie in [0, 0.5]".into());
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_samples(&self, n_samples: usize) -> Self {
        Self {
            n_samples,
            ..self.clone()
        }
    }
}

/// Outcome of one drawn sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub features: Vec<f64>,
    /// `None` when the sample broke a barrier condition at time zero.
    pub label: Option<Label>,
    pub solves: usize,
    pub infeasible_solves: usize,
}

/// A labeled batch plus the solve statistics of every draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    pub samples: Vec<LabeledSample>,
    pub draws: usize,
    pub discarded: usize,
    pub solves: usize,
    pub infeasible_solves: usize,
}

impl LabelBatch {
    /// Infeasible solves over all solves; zero when nothing was solved.
    pub fn infeasibility_rate(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.infeasible_solves as f64 / self.solves as f64
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

/// How samples are drawn into a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// First `n` retained samples.
    Natural,
    /// Oversample the minority class up to `class_balance`.
    Balanced,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draw sample `index`: an initial state and the set's disks.
pub fn draw_state(
    problem: &LabelingProblem,
    cfg: &SamplerConfig,
    index: u64,
) -> (State, Vec<MovingDisk>) {
    let mut rng = sample_rng(cfg.seed, index);
    let frame = problem.frame();
    let [r0, r1] = cfg.radial_range;
    let radius = uniform(&mut rng, [r0 * r0, r1 * r1]).sqrt();
    let bearing = rng.random_range(-PI..PI);
    let mut heading = uniform(&mut rng, cfg.heading_range);
    let speed = uniform(&mut rng, cfg.speed_range);
    let mut disks = problem.disks.clone();
    if let Some(range) = cfg.relative_speed_range {
        let lead = (speed - uniform(&mut rng, range)).max(0.0);
        for d in &mut disks {
            d.velocity = [lead, 0.0];
        }
    }
    if cfg.heading_toward_center {
        heading = wrap_angle(bearing + PI + heading);
    }
    let s = State::new(
        frame.center[0] + radius * bearing.cos(),
        frame.center[1] + radius * bearing.sin(),
        heading,
        speed,
    );
    (s, disks)
}

/// Every barrier condition `psi_i >= 0` holds at `s`, including `H >= 0` when a
/// hypersurface is active.
pub fn satisfies_initial_conditions(
    problem: &LabelingProblem,
    s: &State,
    disks: &[MovingDisk],
    surface: Option<&Hypersurface>,
) -> bool {
    let x = s.to_array();
    for d in disks {
        let Ok(h) = problem.controller.disk_hocbf(*d) else {
            return false;
        };
        match h.psi_sequence(&x) {
            Ok(psi) if psi.iter().all(|&p| p >= 0.0) => {}
            _ => return false,
        }
    }
    for (h, _) in problem.controller.speed_hocbfs() {
        if h.psi_sequence(&x).map_or(true, |psi| psi.iter().any(|&p| p < 0.0)) {
            return false;
        }
    }
    if let Some(h) = surface {
        let frame = SetFrame::of_disks(disks).expect("non-empty");
        if h.eval(&problem.features.features(s, &frame)) < 0.0 {
            return false;
        }
    }
    true
}

/// Label one state: one QP when `horizon == 1`, otherwise a closed-loop
/// rollout that fails at the first infeasible QP.
pub fn label_state(
    problem: &LabelingProblem,
    cfg: &SamplerConfig,
    start: &State,
    disks: &[MovingDisk],
    models: &ModelBank,
) -> (Label, usize) {
    let sys = unicycle_system();
    let frame = SetFrame::of_disks(disks).expect("non-empty");
    let [dx, dy] = [frame.center[0] - start.x, frame.center[1] - start.y];
    let d = dx.hypot(dy);
    let (ux, uy) = if d > 1e-9 {
        (dx / d, dy / d)
    } else {
        (start.theta.cos(), start.theta.sin())
    };
    let goal = [
        frame.center[0] + cfg.rollout_goal_offset * ux,
        frame.center[1] + cfg.rollout_goal_offset * uy,
    ];
    let mut s = *start;
    let mut disks = disks.to_vec();
    for step in 0..cfg.horizon {
        let targets = ClfTargets {
            heading: Some((goal[1] - s.y).atan2(goal[0] - s.x)),
            speed: cfg.rollout_speed,
        };
        let assembled = match assemble(&s, &disks, &targets, models, problem.features, &problem.controller) {
            Ok(a) => a,
            Err(CertificateError::Singular) => return (Label::Infeasible, step + 1),
            Err(e) => panic!("labeling assembly failed: {e}"),
        };
        if cfg.horizon == 1 {
            let ok = qp::check_feasible(&assembled.problem).unwrap_or(false);
            return (if ok { Label::Feasible } else { Label::Infeasible }, 1);
        }
        let sol = match qp::solve(&assembled.problem) {
            Ok(sol) => sol,
            Err(_) => return (Label::Infeasible, step + 1),
        };
        let Some(u) = sol.control() else {
            return (Label::Infeasible, step + 1);
        };
        s = match step_euler(&sys, &s, &u, problem.dt) {
            Ok(n) => n,
            Err(_) => return (Label::Infeasible, step + 1),
        };
        for d in &mut disks {
            *d = advance_obstacle(d, problem.dt);
        }
    }
    (Label::Feasible, cfg.horizon)
}

pub fn evaluate_sample(
    problem: &LabelingProblem,
    cfg: &SamplerConfig,
    surface: Option<&Hypersurface>,
    discard_negative_surface: bool,
    index: u64,
) -> SampleOutcome {
    let (s, disks) = draw_state(problem, cfg, index);
    let frame = SetFrame::of_disks(&disks).expect("non-empty");
    let features = problem.features.features(&s, &frame);
    let gate = if discard_negative_surface { surface } else { None };
    if !satisfies_initial_conditions(problem, &s, &disks, gate) {
        return SampleOutcome {
            features,
            label: None,
            solves: 0,
            infeasible_solves: 0,
        };
    }
    let mut models = ModelBank::new();
    if let Some(h) = surface {
        models.insert(problem.type_id(), h.clone());
    }
    let (label, solves) = label_state(problem, cfg, &s, &disks, &models);
    SampleOutcome {
        features,
        label: Some(label),
        solves,
        infeasible_solves: usize::from(label == Label::Infeasible),
    }
}

const CHUNK: usize = 2048;

/// Sample, discard states violating the initial barrier conditions, and label
/// the rest. The infeasibility rate counts every QP solved up to the last
/// draw the batch needed; results do not depend on the thread count.
pub fn sample_and_label(
    problem: &LabelingProblem,
    cfg: &SamplerConfig,
    surface: Option<&Hypersurface>,
    mode: BatchMode,
) -> LabelBatch {
    sample_and_label_with(problem, cfg, surface, mode, true)
}

pub fn sample_and_label_with(
    problem: &LabelingProblem,
    cfg: &SamplerConfig,
    surface: Option<&Hypersurface>,
    mode: BatchMode,
    discard_negative_surface: bool,
) -> LabelBatch {
    let n = cfg.n_samples;
    let budget = match mode {
        BatchMode::Natural => n.saturating_mul(cfg.budget_factor.max(1)).max(n),
        BatchMode::Balanced => n.saturating_mul(cfg.budget_factor.max(1)),
    };
    let minority_target = (cfg.class_balance * n as f64).ceil() as usize;

    let mut kept: Vec<(u64, Vec<f64>, Label)> = Vec::new();
    let (mut draws, mut discarded, mut solves, mut infeasible) = (0usize, 0usize, 0usize, 0usize);
    let (mut pos, mut neg) = (0usize, 0usize);
    // class counts among the first n kept samples
    let mut natural = (0usize, 0usize);

    let done = |kept_len: usize, pos: usize, neg: usize| match mode {
        BatchMode::Natural => kept_len >= n,
        BatchMode::Balanced => kept_len >= n && pos.min(neg) >= minority_target,
    };

    'outer: while draws < budget && !done(kept.len(), pos, neg) {
        let start = draws;
        let end = (start + CHUNK).min(budget);
        let outcomes: Vec<SampleOutcome> = (start..end)
            .into_par_iter()
            .map(|i| evaluate_sample(problem, cfg, surface, discard_negative_surface, i as u64))
            .collect();
        for (offset, o) in outcomes.into_iter().enumerate() {
            draws = start + offset + 1;
            solves += o.solves;
            infeasible += o.infeasible_solves;
            match o.label {
                None => discarded += 1,
                Some(label) => {
                    if kept.len() < n {
                        match label {
                            Label::Feasible => natural.0 += 1,
                            Label::Infeasible => natural.1 += 1,
                        }
                    }
                    match label {
                        Label::Feasible => pos += 1,
                        Label::Infeasible => neg += 1,
                    }
                    kept.push(((draws - 1) as u64, o.features, label));
                }
            }
            if done(kept.len(), pos, neg) {
                break 'outer;
            }
        }
    }

    let samples = match mode {
        BatchMode::Natural => kept
            .into_iter()
            .take(n)
            .map(|(_, z, l)| LabeledSample::new(z, l))
            .collect(),
        BatchMode::Balanced => {
            let minority = if natural.1 <= natural.0 {
                Label::Infeasible
            } else {
                Label::Feasible
            };
            let (natural_minority, minority_pool) = if minority == Label::Infeasible {
                (natural.1, neg)
            } else {
                (natural.0, pos)
            };
            let total = kept.len().min(n);
            let take_minority = minority_pool.min(minority_target.max(natural_minority)).min(total);
            let take_majority = total - take_minority;
            let (mut tm, mut tj) = (0, 0);
            let mut chosen: Vec<(u64, Vec<f64>, Label)> = Vec::with_capacity(total);
            for item in kept {
                if item.2 == minority {
                    if tm < take_minority {
                        tm += 1;
                        chosen.push(item);
                    }
                } else if tj < take_majority {
                    tj += 1;
                    chosen.push(item);
                }
            }
            chosen.sort_by_key(|c| c.0);
            chosen
                .into_iter()
                .map(|(_, z, l)| LabeledSample::new(z, l))
                .collect()
        }
    };
    LabelBatch {
        samples,
        draws,
        discarded,
        solves,
        infeasible_solves: infeasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn regular_problem() -> LabelingProblem {
        LabelingProblem {
            disks: vec![MovingDisk::fixed([20.0, 35.0], 7.0)],
            features: FeatureMap::Robot,
            controller: ControllerConfig::default(),
            dt: 0.1,
        }
    }

    #[test]
    fn far_slow_sample_is_feasible() {
        let p = regular_problem();
        let cfg = SamplerConfig::regular(1, 0);
        let s = State::new(32.0, 35.0, 0.0, 0.2);
        let (label, solves) = label_state(&p, &cfg, &s, &p.disks, &ModelBank::new());
        assert_eq!((label, solves), (Label::Feasible, 1));
    }

    #[test]
    fn fast_head_on_sample_near_boundary_is_infeasible() {
        let p = regular_problem();
        let cfg = SamplerConfig::regular(1, 0);
        // 1 m from the boundary heading straight in at 0.9 m/s: psi_1 = 0.1, and
        // the second-order row needs u2 <= -0.8 against the -0.5 bound
        let s = State::new(28.0, 35.0, PI, 0.9);
        assert!(satisfies_initial_conditions(&p, &s, &p.disks, None));
        let (label, _) = label_state(&p, &cfg, &s, &p.disks, &ModelBank::new());
        assert_eq!(label, Label::Infeasible);
    }

    #[test]
    fn retained_samples_satisfy_initial_conditions() {
        let p = regular_problem();
        let cfg = SamplerConfig::regular(300, 5);
        for i in 0..300u64 {
            let o = evaluate_sample(&p, &cfg, None, true, i);
            if o.label.is_some() {
                let (s, d) = draw_state(&p, &cfg, i);
                assert!(satisfies_initial_conditions(&p, &s, &d, None));
            }
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let p = regular_problem();
        let cfg = SamplerConfig::regular(500, 42);
        let a = sample_and_label(&p, &cfg, None, BatchMode::Balanced);
        let b = sample_and_label(&p, &cfg, None, BatchMode::Balanced);
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 500);
        let minority = a.count(Label::Infeasible).min(a.count(Label::Feasible));
        assert!(minority >= 150, "minority {minority}");
    }

    #[test]
    fn natural_batch_reports_rate() {
        let p = regular_problem();
        let cfg = SamplerConfig::regular(2000, 1);
        let batch = sample_and_label(&p, &cfg, None, BatchMode::Natural);
        assert_eq!(batch.samples.len(), 2000);
        assert_eq!(batch.solves, 2000);
        let rate = batch.infeasibility_rate();
        assert!(rate > 0.0 && rate < 0.5, "rate {rate}");
    }
}
