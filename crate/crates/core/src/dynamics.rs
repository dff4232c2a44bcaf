//! Control-affine dynamics: the unicycle model, constant-velocity disk
//! obstacles and explicit Euler integration with piecewise-constant control.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("integration diverged: non-finite state after step")]
    Diverged,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -pi to +pi already; guard the opposite edge.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Unicycle state `(x, y, theta, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl State {
    /// Builds a state with the heading wrapped into `(-pi, pi]`.
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            v,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.v]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self, DynamicsError> {
        match s {
            [x, y, theta, v] => Ok(Self::new(*x, *y, *theta, *v)),
            _ => Err(DynamicsError::Dimension {
                expected: 4,
                got: s.len(),
            }),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.v * self.theta.cos(), self.v * self.theta.sin()]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

/// Turn rate `u1` and acceleration `u2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    pub u1: f64,
    pub u2: f64,
}

impl Control {
    pub const ZERO: Control = Control { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.u1, self.u2]
    }
}

/// Componentwise box on the control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
}

impl ControlBounds {
    pub fn new(u_min: [f64; 2], u_max: [f64; 2]) -> Self {
        Self { u_min, u_max }
    }

    /// Symmetric bounds `|u1| <= a`, `|u2| <= b`.
    pub fn symmetric(a: f64, b: f64) -> Self {
        Self::new([-a, -b], [a, b])
    }

    pub fn is_valid(&self) -> bool {
        self.u_min
            .iter()
            .zip(&self.u_max)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo <= hi)
    }

    pub fn contains(&self, u: &Control) -> bool {
        let u = u.to_array();
        (0..2).all(|i| u[i] >= self.u_min[i] && u[i] <= self.u_max[i])
    }
}

/// Componentwise box on the state; only the speed entries are enforced by the
/// controller (as degree-one barrier rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub x_min: [f64; 4],
    pub x_max: [f64; 4],
}

impl StateBounds {
    pub fn speed_only(v_min: f64, v_max: f64) -> Self {
        let inf = f64::INFINITY;
        Self {
            x_min: [-inf, -inf, -inf, v_min],
            x_max: [inf, inf, inf, v_max],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x_min.iter().zip(&self.x_max).all(|(lo, hi)| lo <= hi)
    }

    pub fn v_min(&self) -> f64 {
        self.x_min[3]
    }

    pub fn v_max(&self) -> f64 {
        self.x_max[3]
    }
}

/// `x' = f(x) + g(x) u` over flat state and control vectors.
pub trait AffineSystem {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Drift vector field `f(x)`.
    fn drift(&self, x: &[f64]) -> Vec<f64>;
    /// Actuation matrix `g(x)`, row-major `n x q`.
    fn actuation(&self, x: &[f64]) -> Vec<Vec<f64>>;

    /// `f(x) + g(x) u`.
    fn vector_field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut dx = self.drift(x);
        for (d, row) in dx.iter_mut().zip(self.actuation(x)) {
            *d += row.iter().zip(u).map(|(g, u)| g * u).sum::<f64>();
        }
        dx
    }
}

/// `x' = v cos(theta)`, `y' = v sin(theta)`, `theta' = u1`, `v' = u2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Unicycle;

pub fn unicycle_system() -> Unicycle {
    Unicycle
}

impl AffineSystem for Unicycle {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64]) -> Vec<f64> {
        let (theta, v) = (x[2], x[3]);
        vec![v * theta.cos(), v * theta.sin(), 0.0, 0.0]
    }

    fn actuation(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ]
    }
}

/// One explicit Euler step on a flat state; no angle handling.
pub fn euler_step_raw<S: AffineSystem>(
    sys: &S,
    x: &[f64],
    u: &[f64],
    dt: f64,
) -> Result<Vec<f64>, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    if x.len() != sys.state_dim() {
        return Err(DynamicsError::Dimension {
            expected: sys.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != sys.control_dim() {
        return Err(DynamicsError::Dimension {
            expected: sys.control_dim(),
            got: u.len(),
        });
    }
    let dx = sys.vector_field(x, u);
    let next: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + dt * d).collect();
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(DynamicsError::Diverged)
    }
}

/// `s + dt (f(s) + g(s) u)`. The heading is integrated as a real number and
/// not re-wrapped, so functions of the raw state stay continuous in time.
pub fn step_euler<S: AffineSystem>(
    sys: &S,
    s: &State,
    u: &Control,
    dt: f64,
) -> Result<State, DynamicsError> {
    match euler_step_raw(sys, &s.to_array(), &u.to_array(), dt)?[..] {
        [x, y, theta, v] => Ok(State { x, y, theta, v }),
        ref other => Err(DynamicsError::Dimension {
            expected: 4,
            got: other.len(),
        }),
    }
}

/// Disk-shaped unsafe region translating at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingDisk {
    pub center: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    pub radius: f64,
    /// Unsafe-set type; selects the learned hypersurface.
    #[serde(default)]
    pub type_id: usize,
    /// Unsafe set this disk belongs to; overlapping disks share one set.
    #[serde(default)]
    pub set_id: usize,
}

impl MovingDisk {
    pub fn fixed(center: [f64; 2], radius: f64) -> Self {
        Self {
            center,
            velocity: [0.0, 0.0],
            radius,
            type_id: 0,
            set_id: 0,
        }
    }

    pub fn with_velocity(mut self, velocity: [f64; 2]) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_ids(mut self, type_id: usize, set_id: usize) -> Self {
        self.type_id = type_id;
        self.set_id = set_id;
        self
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }
}

/// Translate the disk by `velocity * dt`.
pub fn advance_obstacle(o: &MovingDisk, dt: f64) -> MovingDisk {
    debug_assert!(dt >= 0.0);
    MovingDisk {
        center: [
            o.center[0] + o.velocity[0] * dt,
            o.center[1] + o.velocity[1] * dt,
        ],
        ..*o
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn unicycle_drift_examples() {
        let sys = unicycle_system();
        assert_eq!(sys.drift(&[0.0, 0.0, 0.0, 1.0]), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sys.drift(&[0.0, 0.0, PI / 2.0, 0.0]), vec![0.0, 0.0, 0.0, 0.0]);
        let f = sys.drift(&[3.0, 4.0, PI, 2.0]);
        assert_abs_diff_eq!(f[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-12);
        assert_eq!(&f[2..], &[0.0, 0.0]);
        for x in [[0.0, 0.0, 0.3, 1.0], [1.0, -2.0, -2.0, 0.5]] {
            let g = sys.actuation(&x);
            assert_eq!(g.len(), 4);
            assert!(g.iter().all(|row| row.len() == 2));
        }
    }

    #[test]
    fn euler_examples() {
        let sys = unicycle_system();
        let s = State::new(0.0, 0.0, 0.0, 1.0);
        let n = step_euler(&sys, &s, &Control::ZERO, 0.1).unwrap();
        assert_abs_diff_eq!(n.x, 0.1, epsilon = 1e-15);
        assert_eq!((n.y, n.theta, n.v), (0.0, 0.0, 1.0));

        let n = step_euler(&sys, &s, &Control::new(0.0, 0.5), 0.1).unwrap();
        assert_abs_diff_eq!(n.x, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(n.v, 1.05, epsilon = 1e-15);

        let rest = State::new(0.0, 0.0, 0.0, 0.0);
        let n = step_euler(&sys, &rest, &Control::new(0.2, 0.0), 0.1).unwrap();
        assert_abs_diff_eq!(n.theta, 0.02, epsilon = 1e-15);
        assert_eq!((n.x, n.y, n.v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn euler_rejects_bad_step_and_divergence() {
        let sys = unicycle_system();
        let s = State::new(0.0, 0.0, 0.0, 1.0);
        assert_eq!(
            step_euler(&sys, &s, &Control::ZERO, 0.0),
            Err(DynamicsError::NonPositiveStep(0.0))
        );
        let huge = State::new(0.0, 0.0, 0.0, f64::MAX);
        assert_eq!(
            step_euler(&sys, &huge, &Control::new(0.0, f64::MAX), 10.0),
            Err(DynamicsError::Diverged)
        );
    }

    #[test]
    fn obstacle_motion() {
        let o = MovingDisk::fixed([0.0, 0.0], 3.0).with_velocity([16.0, 0.0]);
        let a = advance_obstacle(&o, 0.1);
        assert_abs_diff_eq!(a.center[0], 1.6, epsilon = 1e-12);
        assert_eq!(a.center[1], 0.0);
        assert_eq!(a.radius, o.radius);

        let still = MovingDisk::fixed([4.0, -1.0], 7.0);
        assert_eq!(advance_obstacle(&still, 13.0), still);

        let o = MovingDisk::fixed([5.0, 5.0], 1.0).with_velocity([-1.0, 2.0]);
        assert_eq!(advance_obstacle(&o, 2.0).center, [3.0, 9.0]);
    }

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn step_matches_vector_field(
            x in -50.0..50.0f64, y in -50.0..50.0f64, th in -3.1..3.1f64, v in 0.0..3.0f64,
            u1 in -0.2..0.2f64, u2 in -0.5..0.5f64, dt in 1e-3..0.5f64,
        ) {
            let sys = unicycle_system();
            let s = State::new(x, y, th, v);
            let u = Control::new(u1, u2);
            let n = step_euler(&sys, &s, &u, dt).unwrap();
            let f = sys.vector_field(&s.to_array(), &u.to_array());
            prop_assert!((n.x - s.x - dt * f[0]).abs() < 1e-12);
            prop_assert!((n.y - s.y - dt * f[1]).abs() < 1e-12);
            prop_assert!((wrap_angle(n.theta - s.theta - dt * f[2])).abs() < 1e-12);
            prop_assert!((n.v - s.v - dt * f[3]).abs() < 1e-12);
            prop_assert!(n.theta > -PI && n.theta <= PI);
        }

        #[test]
        fn zero_control_keeps_heading_and_speed(th in -10.0..10.0f64, v in 0.0..5.0f64) {
            let sys = unicycle_system();
            let mut s = State::new(1.0, 2.0, th, v);
            let (th0, v0) = (s.theta, s.v);
            for _ in 0..20 {
                s = step_euler(&sys, &s, &Control::ZERO, 0.1).unwrap();
            }
            prop_assert_eq!(s.theta, th0);
            prop_assert_eq!(s.v, v0);
        }
    }
}
