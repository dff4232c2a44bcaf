//! Ready-made training setups and scenarios for the three case studies.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MovingDisk, State};
use crate::learner::features::FeatureMap;
use crate::learner::sampler::{LabelingProblem, SamplerConfig};
use crate::learner::svm::{KernelParams, SvmConfig};
use crate::learner::training::TrainingConfig;
use crate::qp::ControllerConfig;
use crate::scenarios::{irregular_obstacle, ScenarioConfig, ScenarioKind, SensorModel};

/// Everything `feedback_train` needs for one unsafe-set type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSetup {
    pub problem: LabelingProblem,
    pub sampler: SamplerConfig,
    pub training: TrainingConfig,
}

pub const REGULAR_TYPE: usize = 0;
pub const IRREGULAR_TYPE: usize = 1;
pub const VEHICLE_TYPE: usize = 2;

fn training(train: &[usize], test: &[usize], max_iterations: usize) -> TrainingConfig {
    TrainingConfig {
        epsilon: 0.001,
        max_iterations,
        train_sizes: train.to_vec(),
        test_sizes: test.to_vec(),
        rate_samples: 20_000,
        kernel: KernelParams::default(),
        svm: SvmConfig::default(),
    }
}

/// Single radius-7 disk, one-step labeling over radii `[7, 13]`.
pub fn regular_training(seed: u64) -> TrainingSetup {
    TrainingSetup {
        problem: LabelingProblem {
            disks: vec![MovingDisk::fixed([20.0, 35.0], 7.0).with_ids(REGULAR_TYPE, 0)],
            features: FeatureMap::Robot,
            controller: ControllerConfig::default(),
            dt: 0.1,
        },
        sampler: SamplerConfig::regular(1, seed),
        training: training(&[2000, 800, 600], &[1000, 200, 200], 3),
    }
}

/// Samples outside the regular training annulus, for the generalization check.
pub fn regular_generalization(seed: u64) -> SamplerConfig {
    let mut s = SamplerConfig::regular(20_000, seed);
    s.radial_range = [13.0, 32.0];
    s
}

/// Two overlapping disks, 60-step rollouts toward the far side of the set.
/// Headings are drawn within 0.7 rad of the bearing toward the set.
pub fn irregular_training(seed: u64) -> TrainingSetup {
    let mut sampler = SamplerConfig::regular(1, seed);
    sampler.radial_range = [0.0, 20.0];
    sampler.heading_toward_center = true;
    sampler.heading_range = [-0.7, 0.7];
    sampler.horizon = 60;
    sampler.rollout_speed = 2.0;
    TrainingSetup {
        problem: LabelingProblem {
            disks: irregular_obstacle(),
            features: FeatureMap::Robot,
            controller: ControllerConfig::default(),
            dt: 0.1,
        },
        sampler,
        training: training(&[5000, 1200, 1000], &[1000, 800, 200], 3),
    }
}

fn vehicle_controller() -> ControllerConfig {
    ControllerConfig {
        speed_limits: Some((0.0, 28.0)),
        ..ControllerConfig::default()
    }
}

/// Lead vehicle covered by a radius-2.5 disk; relative speed in `[0, 20]`.
pub fn driving_training(seed: u64) -> TrainingSetup {
    let mut sampler = SamplerConfig::regular(1, seed);
    sampler.radial_range = [2.5, 100.0];
    sampler.heading_range = [-0.3, 0.3];
    sampler.speed_range = [10.0, 28.0];
    sampler.relative_speed_range = Some([0.0, 20.0]);
    TrainingSetup {
        problem: LabelingProblem {
            disks: vec![MovingDisk::fixed([0.0, 0.0], 2.5).with_ids(VEHICLE_TYPE, 0)],
            features: FeatureMap::Driving,
            controller: vehicle_controller(),
            dt: 0.1,
        },
        sampler,
        training: training(&[2000, 1200, 1000], &[1000, 800, 200], 10),
    }
}

/// Start/goal pairs on opposite sides of the two-disk notch.
pub fn trap_cases() -> [ScenarioConfig; 2] {
    let case = |initial: State, destination: [f64; 2]| ScenarioConfig {
        initial,
        destination,
        obstacles: irregular_obstacle(),
        sensor: Some(SensorModel {
            range: 20.0,
            ..SensorModel::default()
        }),
        ..ScenarioConfig::robot_baseline()
    };
    let q = std::f64::consts::FRAC_PI_4;
    [
        case(State::new(10.0, 7.0, q, 1.0), [42.0, 40.0]),
        case(State::new(42.0, 40.0, -3.0 * q, 1.0), [10.0, 7.0]),
    ]
}

/// Ego at 28 m/s behind a 16 m/s lead 80 m ahead, offset 1 m laterally.
pub fn driving_overtake() -> ScenarioConfig {
    ScenarioConfig {
        kind: ScenarioKind::Driving,
        initial: State::new(0.0, 0.0, 0.0, 28.0),
        destination: [1e4, 0.0],
        obstacles: vec![MovingDisk::fixed([80.0, -1.0], 2.5)
            .with_velocity([16.0, 0.0])
            .with_ids(VEHICLE_TYPE, 0)],
        t_f: 10.0,
        dt: 0.1,
        desired_speed: 28.0,
        controller: vehicle_controller(),
        sensor: None,
        arrival_radius: 1.0,
        approach_gain: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setups_validate() {
        for s in [regular_training(0), irregular_training(0), driving_training(0)] {
            s.sampler.validate().unwrap();
            s.training.validate().unwrap();
            assert!(!s.problem.disks.is_empty());
        }
        for c in trap_cases() {
            c.validate().unwrap();
        }
        driving_overtake().validate().unwrap();
    }

    #[test]
    fn setup_round_trips_through_json() {
        let s = irregular_training(4);
        let text = serde_json::to_string(&s).unwrap();
        let back: TrainingSetup = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
