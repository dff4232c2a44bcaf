//! Relative-coordinate features between the controlled system and an unsafe
//! set, and their time derivatives along the dynamics.

use crate::dynamics::{MovingDisk, State};
use serde::{Deserialize, Serialize};

/// Reference point of an unsafe set: centroid of its disks and their shared
/// velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetFrame {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
}

impl SetFrame {
    pub fn fixed(center: [f64; 2]) -> Self {
        Self {
            center,
            velocity: [0.0, 0.0],
        }
    }

    /// Centroid and mean velocity of the given disks.
    pub fn of_disks<'a, I: IntoIterator<Item = &'a MovingDisk>>(disks: I) -> Option<Self> {
        let mut n = 0.0;
        let mut c = [0.0; 2];
        let mut v = [0.0; 2];
        for d in disks {
            n += 1.0;
            for i in 0..2 {
                c[i] += d.center[i];
                v[i] += d.velocity[i];
            }
        }
        (n > 0.0).then(|| Self {
            center: [c[0] / n, c[1] / n],
            velocity: [v[0] / n, v[1] / n],
        })
    }
}

/// `z' = drift + gain u`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRates {
    pub drift: Vec<f64>,
    pub gain: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// `(x - x_o, y - y_o, theta, v)`.
    Robot,
    /// `(x_o - x, y_o - y, vx_o - vx, vy_o - vy, theta)`: obstacle relative to
    /// the ego vehicle, along-lane first.
    Driving,
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Robot => 4,
            FeatureMap::Driving => 5,
        }
    }

    pub fn features(&self, s: &State, frame: &SetFrame) -> Vec<f64> {
        match self {
            FeatureMap::Robot => vec![
                s.x - frame.center[0],
                s.y - frame.center[1],
                s.theta,
                s.v,
            ],
            FeatureMap::Driving => {
                let [vx, vy] = s.velocity();
                vec![
                    frame.center[0] - s.x,
                    frame.center[1] - s.y,
                    frame.velocity[0] - vx,
                    frame.velocity[1] - vy,
                    s.theta,
                ]
            }
        }
    }

    /// Obstacle acceleration is taken as zero.
    pub fn feature_rates(&self, s: &State, frame: &SetFrame) -> FeatureRates {
        let (sn, cs) = s.theta.sin_cos();
        let v = s.v;
        match self {
            FeatureMap::Robot => FeatureRates {
                drift: vec![
                    v * cs - frame.velocity[0],
                    v * sn - frame.velocity[1],
                    0.0,
                    0.0,
                ],
                gain: vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            },
            FeatureMap::Driving => FeatureRates {
                drift: vec![
                    frame.velocity[0] - v * cs,
                    frame.velocity[1] - v * sn,
                    0.0,
                    0.0,
                    0.0,
                ],
                gain: vec![
                    [0.0, 0.0],
                    [0.0, 0.0],
                    [v * sn, -cs],
                    [-v * cs, -sn],
                    [1.0, 0.0],
                ],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{advance_obstacle, step_euler, unicycle_system, Control};
    use approx::assert_abs_diff_eq;

    #[test]
    fn robot_features() {
        let frame = SetFrame::fixed([20.0, 35.0]);
        let z = FeatureMap::Robot.features(&State::new(25.0, 35.0, 0.0, 1.0), &frame);
        assert_eq!(z, vec![5.0, 0.0, 0.0, 1.0]);
        let z = FeatureMap::Robot.features(&State::new(20.0, 35.0, 0.3, 0.7), &frame);
        assert_eq!(z, vec![0.0, 0.0, 0.3, 0.7]);
    }

    #[test]
    fn driving_features_close_the_gap() {
        let frame = SetFrame {
            center: [30.0, 0.0],
            velocity: [16.0, 0.0],
        };
        let ego = State::new(0.0, 0.0, 0.0, 28.0);
        let z = FeatureMap::Driving.features(&ego, &frame);
        assert_eq!(z, vec![30.0, 0.0, -12.0, 0.0, 0.0]);
        // negative relative speed shrinks the along-lane gap
        let rates = FeatureMap::Driving.feature_rates(&ego, &frame);
        assert_eq!(rates.drift[0], -12.0);
    }

    #[test]
    fn rates_match_finite_differences() {
        let sys = unicycle_system();
        let disk = MovingDisk::fixed([3.0, -2.0], 2.0).with_velocity([1.5, -0.5]);
        let s = State::new(-4.0, 1.0, 0.8, 5.0);
        let u = Control::new(0.15, -0.3);
        let dt = 1e-6;
        for map in [FeatureMap::Robot, FeatureMap::Driving] {
            let f0 = SetFrame::of_disks([&disk]).unwrap();
            let f1 = SetFrame::of_disks([&advance_obstacle(&disk, dt)]).unwrap();
            let z0 = map.features(&s, &f0);
            let z1 = map.features(&step_euler(&sys, &s, &u, dt).unwrap(), &f1);
            let r = map.feature_rates(&s, &f0);
            for i in 0..map.dim() {
                let analytic = r.drift[i] + r.gain[i][0] * u.u1 + r.gain[i][1] * u.u2;
                assert_abs_diff_eq!((z1[i] - z0[i]) / dt, analytic, epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn frame_of_pair_is_midpoint() {
        let a = MovingDisk::fixed([22.0, 28.0], 7.0);
        let b = MovingDisk::fixed([31.0, 19.0], 7.0);
        let f = SetFrame::of_disks([&a, &b]).unwrap();
        assert_eq!(f.center, [26.5, 23.5]);
        assert!(SetFrame::of_disks(std::iter::empty()).is_none());
    }
}
