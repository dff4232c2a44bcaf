//! Closed-loop experiments: robot navigation among disks detected by a
//! field-of-view sensor, and a straight-road overtake of a slower vehicle.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::CertificateError;
use crate::dynamics::{advance_obstacle, step_euler, unicycle_system, wrap_angle, MovingDisk, State};
use crate::learner::features::{FeatureMap, SetFrame};
use crate::qp::{self, assemble, group_sets, ClfTargets, ControllerConfig, ModelBank, QpStatus};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("certificate construction failed at t = {t}: {source}")]
    Certificate { t: f64, source: CertificateError },
    #[error("solver failure at t = {t}: {source}")]
    Solver { t: f64, source: qp::QpError },
    #[error("state diverged at t = {0}")]
    Diverged(f64),
}

/// Heading-centered cone sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub fov: f64,
    pub range: f64,
    /// Extra detection range on top of `range`.
    pub range_uncertainty: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov: 2.0 * PI / 3.0,
            range: 7.0,
            range_uncertainty: 1.0,
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fov > 0.0 && self.fov <= 2.0 * PI) || !(self.range > 0.0) || self.range_uncertainty < 0.0 {
            return Err(format!("sensor {self:?}: need fov in (0, 2pi], range > 0"));
        }
        Ok(())
    }

    /// Some point of the disk lies inside the cone within detection range.
    /// Range is measured to the disk boundary.
    pub fn sees(&self, s: &State, d: &MovingDisk) -> bool {
        let (dx, dy) = (d.center[0] - s.x, d.center[1] - s.y);
        let dist = dx.hypot(dy);
        if dist - d.radius > self.range + self.range_uncertainty {
            return false;
        }
        if dist <= d.radius || self.fov >= 2.0 * PI {
            return true;
        }
        let off = wrap_angle(dy.atan2(dx) - s.theta).abs();
        off <= self.fov / 2.0 + (d.radius / dist).asin()
    }
}

/// Sensor plus persistent memory of everything detected so far.
#[derive(Debug, Clone)]
pub struct Detector {
    sensor: Option<SensorModel>,
    known: Vec<bool>,
}

impl Detector {
    /// `None` sees every obstacle at all times.
    pub fn new(sensor: Option<SensorModel>, n_obstacles: usize) -> Self {
        Self {
            sensor,
            known: vec![sensor.is_none(); n_obstacles],
        }
    }

    /// Indices of the obstacles the controller knows about after observing `s`.
    pub fn update(&mut self, s: &State, obstacles: &[MovingDisk]) -> Vec<usize> {
        if let Some(sensor) = &self.sensor {
            for (k, o) in self.known.iter_mut().zip(obstacles) {
                *k |= sensor.sees(s, o);
            }
        }
        (0..obstacles.len()).filter(|&i| self.known[i]).collect()
    }
}

/// Stateless detection; obstacles visible from `s` right now.
pub fn detect(sensor: &SensorModel, s: &State, obstacles: &[MovingDisk]) -> Vec<usize> {
    (0..obstacles.len())
        .filter(|&i| sensor.sees(s, &obstacles[i]))
        .collect()
}

/// Heading toward `dest` by four-quadrant arctangent; `previous` is held
/// when the robot sits on the destination.
pub fn heading_to(s: &State, dest: [f64; 2], previous: f64) -> f64 {
    let (dx, dy) = (dest[0] - s.x, dest[1] - s.y);
    if dx == 0.0 && dy == 0.0 {
        previous
    } else {
        dy.atan2(dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Robot,
    Driving,
}

impl ScenarioKind {
    pub fn features(&self) -> FeatureMap {
        match self {
            ScenarioKind::Robot => FeatureMap::Robot,
            ScenarioKind::Driving => FeatureMap::Driving,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub initial: State,
    pub destination: [f64; 2],
    pub obstacles: Vec<MovingDisk>,
    pub t_f: f64,
    pub dt: f64,
    pub desired_speed: f64,
    #[serde(default)]
    pub controller: ControllerConfig,
    /// `None` means all obstacles are known from the start.
    #[serde(default)]
    pub sensor: Option<SensorModel>,
    #[serde(default = "ScenarioConfig::default_arrival")]
    pub arrival_radius: f64,
    /// Speed set-point is capped at `approach_gain * distance` near the goal.
    #[serde(default)]
    pub approach_gain: Option<f64>,
}

impl ScenarioConfig {
    fn default_arrival() -> f64 {
        1.0
    }

    pub fn steps(&self) -> usize {
        (self.t_f / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_f >= 0.0) {
            return bad(format!("t_f = {} must be non-negative", self.t_f));
        }
        let n = self.t_f / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return bad(format!("t_f = {} is not a multiple of dt = {}", self.t_f, self.dt));
        }
        if !self.controller.control_bounds.is_valid() {
            return bad("control bounds must satisfy u_min <= u_max".into());
        }
        if let Some(s) = &self.sensor {
            s.validate().map_err(ScenarioError::Config)?;
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return bad("obstacle radii must be positive".into());
        }
        Ok(())
    }

    /// Obstacle-field robot run from the origin toward `(40, 35)`.
    pub fn robot_baseline() -> Self {
        Self {
            kind: ScenarioKind::Robot,
            initial: State::new(0.0, 0.0, 0.0, 1.0),
            destination: [40.0, 35.0],
            obstacles: regular_obstacles(),
            t_f: 70.0,
            dt: 0.1,
            desired_speed: 2.0,
            controller: ControllerConfig::default(),
            sensor: Some(SensorModel::default()),
            arrival_radius: 1.0,
            approach_gain: Some(0.3),
        }
    }
}

pub fn regular_obstacles() -> Vec<MovingDisk> {
    [[32.0, 25.0], [20.0, 35.0], [30.0, 10.0]]
        .iter()
        .enumerate()
        .map(|(i, &c)| MovingDisk::fixed(c, 7.0).with_ids(0, i))
        .collect()
}

/// Two overlapping disks forming one set of type 1.
pub fn irregular_obstacle() -> Vec<MovingDisk> {
    vec![
        MovingDisk::fixed([22.0, 28.0], 7.0).with_ids(1, 0),
        MovingDisk::fixed([31.0, 19.0], 7.0).with_ids(1, 0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub state: State,
    pub u: [f64; 2],
    /// Per CLF row; NaN when the row was absent.
    pub delta: [f64; 2],
    pub status: QpStatus,
    /// Smallest disk barrier over all obstacles, known or not.
    pub min_b: f64,
    /// Smallest learned-surface value over active sets; NaN when none.
    pub h_min: f64,
    /// `(tag, lhs - rhs)` of every hard row.
    pub slacks: Vec<(String, f64)>,
    /// Driving runs: ego minus lead position, along-lane then lateral.
    #[serde(default)]
    pub lead_gap: Option<[f64; 2]>,
    /// Largest KKT residual of the solve; `None` when infeasible.
    #[serde(default)]
    pub kkt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub feasible_all_steps: bool,
    pub abort_time: Option<f64>,
    pub final_dist: f64,
    pub min_b: f64,
    /// Per obstacle, minimum over time.
    pub min_b_per_obstacle: Vec<f64>,
    pub arrived: bool,
    /// Wall-clock; left out of serialized output so runs compare byte-for-byte.
    #[serde(skip)]
    pub runtime_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    pub final_state: State,
    pub final_obstacles: Vec<MovingDisk>,
    pub summary: RunSummary,
}

impl TrajectoryLog {
    pub fn to_csv(&self) -> String {
        let gaps = self.records.iter().any(|r| r.lead_gap.is_some());
        let mut out = String::from("t,x,y,theta,v,u1,u2,delta1,delta2,qp_status,min_b,h_min");
        out.push_str(if gaps { ",gap_along,gap_lateral\n" } else { "\n" });
        for r in &self.records {
            let status = match r.status {
                QpStatus::Optimal => "optimal",
                QpStatus::Infeasible => "infeasible",
            };
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t, r.state.x, r.state.y, r.state.theta, r.state.v, r.u[0], r.u[1], r.delta[0], r.delta[1], status, r.min_b, r.h_min
            );
            if gaps {
                let [a, l] = r.lead_gap.unwrap_or([f64::NAN; 2]);
                let _ = write!(out, ",{a},{l}");
            }
            out.push('\n');
        }
        out
    }
}

fn disk_values(s: &State, obstacles: &[MovingDisk]) -> Vec<f64> {
    obstacles
        .iter()
        .map(|o| o.distance_to(s.position()) - o.radius)
        .collect()
}

/// Run the closed loop until `t_f` or the first infeasible program.
pub fn run(cfg: &ScenarioConfig, models: &ModelBank) -> Result<TrajectoryLog, ScenarioError> {
    cfg.validate()?;
    let started = Instant::now();
    let sys = unicycle_system();
    let features = cfg.kind.features();
    let mut s = cfg.initial;
    let mut obstacles = cfg.obstacles.clone();
    let mut detector = Detector::new(cfg.sensor, obstacles.len());
    let mut min_per = disk_values(&s, &obstacles);
    let mut records = Vec::with_capacity(cfg.steps());
    let mut arrived = false;
    let mut heading = heading_to(&s, cfg.destination, s.theta);
    let mut abort_time = None;

    for step in 0..cfg.steps() {
        let t = step as f64 * cfg.dt;
        let dist = (cfg.destination[0] - s.x).hypot(cfg.destination[1] - s.y);
        if dist <= cfg.arrival_radius {
            // the robot holds station here for the rest of the horizon
            arrived = true;
            break;
        }
        heading = heading_to(&s, cfg.destination, heading);
        let speed = match cfg.approach_gain {
            Some(k) => cfg.desired_speed.min(k * dist),
            None => cfg.desired_speed,
        };
        let targets = ClfTargets {
            heading: Some(heading),
            speed,
        };
        let known: Vec<MovingDisk> = detector
            .update(&s, &obstacles)
            .into_iter()
            .map(|i| obstacles[i])
            .collect();
        let assembled = assemble(&s, &known, &targets, models, features, &cfg.controller)
            .map_err(|source| ScenarioError::Certificate { t, source })?;
        let sol = qp::solve(&assembled.problem).map_err(|source| ScenarioError::Solver { t, source })?;

        let bs = disk_values(&s, &obstacles);
        let min_b = bs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut h_min = f64::NAN;
        for disks in group_sets(&known).values() {
            if let Some(h) = models.get(&disks[0].type_id) {
                let frame = SetFrame::of_disks(disks).expect("non-empty");
                let v = h.eval(&features.features(&s, &frame));
                h_min = if h_min.is_nan() { v } else { h_min.min(v) };
            }
        }
        let mut delta = [f64::NAN; 2];
        let mut slacks = Vec::new();
        let (u, status) = match sol.control() {
            Some(u) => {
                for (k, d) in sol.delta.iter().take(2).enumerate() {
                    delta[k] = *d;
                }
                for r in assembled.problem.rows.iter().filter(|r| r.relax.is_none()) {
                    slacks.push((format!("{:?}", r.tag), r.row.slack(&sol.u, 0.0)));
                }
                ([u.u1, u.u2], QpStatus::Optimal)
            }
            None => ([f64::NAN; 2], QpStatus::Infeasible),
        };
        records.push(StepRecord {
            t,
            state: s,
            u,
            delta,
            status,
            min_b,
            h_min,
            slacks,
            lead_gap: (cfg.kind == ScenarioKind::Driving)
                .then(|| obstacles.first().map(|o| [s.x - o.center[0], s.y - o.center[1]]))
                .flatten(),
            kkt: qp::kkt_residuals(&assembled.problem, &sol).map(|r| r.max()),
        });
        let Some(control) = sol.control() else {
            abort_time = Some(t);
            break;
        };
        s = step_euler(&sys, &s, &control, cfg.dt).map_err(|_| ScenarioError::Diverged(t))?;
        for o in &mut obstacles {
            *o = advance_obstacle(o, cfg.dt);
        }
        for (m, b) in min_per.iter_mut().zip(disk_values(&s, &obstacles)) {
            *m = m.min(b);
        }
    }
    let final_dist = (cfg.destination[0] - s.x).hypot(cfg.destination[1] - s.y);
    arrived |= final_dist <= cfg.arrival_radius;
    let summary = RunSummary {
        feasible_all_steps: abort_time.is_none(),
        abort_time,
        final_dist,
        min_b: min_per.iter().cloned().fold(f64::INFINITY, f64::min),
        min_b_per_obstacle: min_per,
        arrived,
        runtime_ms: started.elapsed().as_millis() as u64,
    };
    Ok(TrajectoryLog {
        records,
        final_state: s,
        final_obstacles: obstacles,
        summary,
    })
}

pub fn run_robot(cfg: &ScenarioConfig, models: &ModelBank) -> Result<TrajectoryLog, ScenarioError> {
    if cfg.kind != ScenarioKind::Robot {
        return Err(ScenarioError::Config("run_robot needs a robot scenario".into()));
    }
    run(cfg, models)
}

pub fn run_driving(cfg: &ScenarioConfig, models: &ModelBank) -> Result<TrajectoryLog, ScenarioError> {
    if cfg.kind != ScenarioKind::Driving {
        return Err(ScenarioError::Config("run_driving needs a driving scenario".into()));
    }
    run(cfg, models)
}

/// Along-lane position of the ego relative to the lead, per record.
pub fn along_lane_gaps(log: &TrajectoryLog) -> Vec<f64> {
    log.records.iter().filter_map(|r| r.lead_gap.map(|g| g[0])).collect()
}

/// Destinations a-h beyond the obstacle field.
pub fn eight_destinations() -> [[f64; 2]; 8] {
    [
        [40.0, 35.0],
        [45.0, 25.0],
        [44.0, 12.0],
        [36.0, 45.0],
        [25.0, 47.0],
        [12.0, 44.0],
        [46.0, 40.0],
        [42.0, 2.0],
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub label: char,
    pub destination: [f64; 2],
    pub feasible_all_steps: bool,
    pub final_dist: f64,
    pub min_b: f64,
    pub arrived: bool,
    pub controls_in_bounds: bool,
}

pub fn eight_destination_suite(
    base: &ScenarioConfig,
    models: &ModelBank,
) -> Result<Vec<SuiteRow>, ScenarioError> {
    use rayon::prelude::*;
    eight_destinations()
        .par_iter()
        .enumerate()
        .map(|(i, &dest)| {
            let cfg = ScenarioConfig {
                destination: dest,
                ..base.clone()
            };
            let log = run_robot(&cfg, models)?;
            let b = cfg.controller.control_bounds;
            let controls_in_bounds = log.records.iter().filter(|r| r.status == QpStatus::Optimal).all(|r| {
                (0..2).all(|k| r.u[k] >= b.u_min[k] && r.u[k] <= b.u_max[k])
            });
            Ok(SuiteRow {
                label: (b'a' + i as u8) as char,
                destination: dest,
                feasible_all_steps: log.summary.feasible_all_steps,
                final_dist: log.summary.final_dist,
                min_b: log.summary.min_b,
                arrived: log.summary.arrived,
                controls_in_bounds,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn disk_ahead_is_visible_and_behind_is_not() {
        let sensor = SensorModel::default();
        let s = State::new(0.0, 0.0, 0.0, 1.0);
        let ahead = MovingDisk::fixed([5.0, 0.0], 0.1);
        let behind = MovingDisk::fixed([-5.0, 0.0], 0.1);
        assert!(sensor.sees(&s, &ahead));
        assert!(!sensor.sees(&s, &behind));
        // 7.5 m lies inside range plus uncertainty
        assert!(sensor.sees(&s, &MovingDisk::fixed([7.6, 0.0], 0.1)));
        assert!(!sensor.sees(&s, &MovingDisk::fixed([8.2, 0.0], 0.1)));
    }

    #[test]
    fn detector_remembers() {
        let obstacles = [MovingDisk::fixed([5.0, 0.0], 0.5)];
        let mut d = Detector::new(Some(SensorModel::default()), 1);
        assert_eq!(d.update(&State::new(0.0, 0.0, PI, 1.0), &obstacles), Vec::<usize>::new());
        assert_eq!(d.update(&State::new(0.0, 0.0, 0.0, 1.0), &obstacles), vec![0]);
        assert_eq!(d.update(&State::new(0.0, 0.0, PI, 1.0), &obstacles), vec![0]);
    }

    #[test]
    fn headings() {
        let s = State::new(0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(heading_to(&s, [40.0, 35.0], 0.0), 0.7188, epsilon = 1e-4);
        assert_abs_diff_eq!(heading_to(&s, [0.0, 3.0], 0.0), PI / 2.0);
        assert_abs_diff_eq!(heading_to(&s, [-3.0, 0.0], 0.0), PI);
        assert_eq!(heading_to(&s, [0.0, 0.0], 0.4), 0.4);
    }

    fn open_field(dest: [f64; 2]) -> ScenarioConfig {
        ScenarioConfig {
            obstacles: vec![],
            destination: dest,
            t_f: 20.0,
            ..ScenarioConfig::robot_baseline()
        }
    }

    #[test]
    fn straight_cruise_without_obstacles() {
        let log = run_robot(&open_field([100.0, 0.0]), &ModelBank::new()).unwrap();
        assert_eq!(log.records.len(), 200);
        assert!(log.summary.feasible_all_steps);
        assert!(!log.summary.arrived);
        for r in &log.records {
            assert!(r.u[0].abs() <= 0.2 && r.u[1].abs() <= 0.5);
            assert_abs_diff_eq!(r.state.y, 0.0, epsilon = 1e-12);
        }
        // the relaxed speed CLF approaches the set-point slowly from below
        for w in log.records.windows(2) {
            assert!(w[1].state.v >= w[0].state.v - 1e-12);
        }
        assert!(log.final_state.v > 1.9 && log.final_state.v <= 2.0 + 1e-9, "{}", log.final_state.v);
    }

    #[test]
    fn destination_at_start_arrives_immediately() {
        let log = run_robot(&open_field([0.0, 0.0]), &ModelBank::new()).unwrap();
        assert!(log.summary.arrived);
        assert!(log.records.is_empty());
        assert_eq!(log.summary.final_dist, 0.0);
    }

    #[test]
    fn destination_inside_obstacle_is_unreachable_but_safe() {
        let mut cfg = open_field([20.0, 0.0]);
        cfg.obstacles = vec![MovingDisk::fixed([20.0, 0.0], 3.0)];
        cfg.t_f = 40.0;
        let log = run_robot(&cfg, &ModelBank::new()).unwrap();
        assert!(!log.summary.arrived);
        assert!(log.summary.min_b >= -1e-6 || !log.summary.feasible_all_steps);
    }

    #[test]
    fn rejects_misaligned_horizon() {
        let mut cfg = open_field([1.0, 0.0]);
        cfg.t_f = 1.05;
        assert!(matches!(run(&cfg, &ModelBank::new()), Err(ScenarioError::Config(_))));
    }

    #[test]
    fn faster_lead_is_followed_feasibly() {
        let cfg = ScenarioConfig {
            kind: ScenarioKind::Driving,
            initial: State::new(0.0, 0.0, 0.0, 16.0),
            destination: [1e4, 0.0],
            obstacles: vec![MovingDisk::fixed([40.0, 0.0], 2.5).with_velocity([28.0, 0.0])],
            t_f: 10.0,
            dt: 0.1,
            desired_speed: 16.0,
            controller: ControllerConfig {
                speed_limits: Some((0.0, 28.0)),
                ..ControllerConfig::default()
            },
            sensor: None,
            arrival_radius: 1.0,
            approach_gain: None,
        };
        let log = run_driving(&cfg, &ModelBank::new()).unwrap();
        assert!(log.summary.feasible_all_steps);
        assert!(log.summary.min_b > 0.0);
        let gaps = along_lane_gaps(&log);
        assert_eq!(gaps.len(), log.records.len());
        assert_abs_diff_eq!(gaps[0], -40.0);
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(log.to_csv().starts_with("t,x,y,theta,v,u1,u2,delta1,delta2,qp_status,min_b,h_min,gap_along,gap_lateral\n"));
    }
}
