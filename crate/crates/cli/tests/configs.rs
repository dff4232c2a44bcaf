//! The JSON files under `configs/` are the presets serialized. Run with
//! `FCBF_WRITE_CONFIGS=1` to regenerate them after changing a preset.

use std::path::PathBuf;

use feasible_cbf::config::{EvalMode, EvalSection, LabelSection, RunConfig};
use feasible_cbf::learner::sampler::{BatchMode, SamplerConfig};
use feasible_cbf::presets;
use feasible_cbf::scenarios::ScenarioConfig;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn expected() -> Vec<(&'static str, RunConfig)> {
    let regular = RunConfig::from_training(&presets::regular_training(7));
    let mut generalization = regular.clone();
    generalization.sampler = Some(presets::regular_generalization(7));
    generalization.eval = Some(EvalSection {
        mode: EvalMode::Generalization,
    });
    let mut accuracy = regular.clone();
    accuracy.sampler = Some(SamplerConfig::regular(1000, 8));
    accuracy.eval = Some(EvalSection { mode: EvalMode::Accuracy });
    let mut label = regular.clone();
    label.sampler = Some(SamplerConfig::regular(500, 3));
    label.label = Some(LabelSection { mode: BatchMode::Natural });

    let irregular = RunConfig::from_training(&presets::irregular_training(11));
    let [trap1, trap2] = presets::trap_cases();
    vec![
        ("baseline_robot.json", RunConfig::default().with_scenario(&ScenarioConfig::robot_baseline())),
        ("regular.json", regular.with_scenario(&ScenarioConfig::robot_baseline())),
        ("regular_generalization.json", generalization),
        ("regular_accuracy.json", accuracy),
        ("regular_label.json", label),
        ("irregular_trap1.json", irregular.clone().with_scenario(&trap1)),
        ("irregular_trap2.json", irregular.with_scenario(&trap2)),
        (
            "driving.json",
            RunConfig::from_training(&presets::driving_training(5)).with_scenario(&presets::driving_overtake()),
        ),
    ]
}

#[test]
fn shipped_configs_match_presets() {
    let dir = configs_dir();
    let write = std::env::var_os("FCBF_WRITE_CONFIGS").is_some();
    for (name, cfg) in expected() {
        let path = dir.join(name);
        let text = cfg.to_json() + "\n";
        if write {
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let loaded = RunConfig::from_json(&on_disk, name).unwrap();
        assert_eq!(loaded.config, cfg, "{name} is stale; regenerate with FCBF_WRITE_CONFIGS=1");
    }
}
