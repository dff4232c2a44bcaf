use feasible_cbf::dynamics::State;
use feasible_cbf::presets;
use feasible_cbf::qp::{ModelBank, QpStatus};
use feasible_cbf::scenarios::{along_lane_gaps, eight_destinations, run, run_driving, run_robot, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_start(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> State {
    loop {
        let s = State::new(
            rng.random_range(-5.0..50.0),
            rng.random_range(-5.0..50.0),
            rng.random_range(-3.1..3.1),
            rng.random_range(0.0..2.0),
        );
        if cfg.obstacles.iter().all(|o| o.distance_to(s.position()) - o.radius > 0.5) {
            return s;
        }
    }
}

#[test]
fn barriers_stay_nonnegative_while_programs_are_feasible() {
    let base = ScenarioConfig {
        t_f: 15.0,
        sensor: None,
        ..ScenarioConfig::robot_baseline()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dests = eight_destinations();
    for k in 0..20 {
        let cfg = ScenarioConfig {
            initial: random_start(&mut rng, &base),
            destination: dests[k % 8],
            ..base.clone()
        };
        let log = run_robot(&cfg, &ModelBank::new()).unwrap();
        // executed steps only: the last record of an aborted run never moves
        for r in &log.records {
            assert!(r.min_b >= -1e-6, "run {k} t {}: {}", r.t, r.min_b);
        }
        if log.summary.feasible_all_steps {
            assert!(log.summary.min_b >= -1e-6);
        }
    }
}

#[test]
fn every_optimal_step_logs_small_kkt_residuals() {
    let log = run_robot(&ScenarioConfig::robot_baseline(), &ModelBank::new()).unwrap();
    assert!(!log.summary.feasible_all_steps);
    for r in &log.records {
        match r.status {
            QpStatus::Optimal => assert!(r.kkt.unwrap() <= 1e-6, "{:?}", r.kkt),
            QpStatus::Infeasible => assert!(r.kkt.is_none()),
        }
    }
    assert_eq!(log.records.last().unwrap().status, QpStatus::Infeasible);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = presets::trap_cases()[0].clone();
    let a = run(&cfg, &ModelBank::new()).unwrap();
    let b = run(&cfg, &ModelBank::new()).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(
        serde_json::to_string(&a.summary).unwrap(),
        serde_json::to_string(&b.summary).unwrap()
    );
}

#[test]
fn overtake_without_model_hits_an_infeasible_step() {
    let log = run_driving(&presets::driving_overtake(), &ModelBank::new()).unwrap();
    assert!(!log.summary.feasible_all_steps);
    let gaps = along_lane_gaps(&log);
    assert_eq!(gaps[0], -80.0);
    assert!(gaps.iter().all(|g| *g < 0.0));
    assert!(log.summary.min_b >= -1e-6);
}

#[test]
fn summary_json_omits_wall_clock() {
    let log = run_robot(&ScenarioConfig::robot_baseline(), &ModelBank::new()).unwrap();
    let v: serde_json::Value = serde_json::to_value(&log.summary).unwrap();
    assert!(v.get("runtime_ms").is_none());
    assert_eq!(v["feasible_all_steps"], false);
}
