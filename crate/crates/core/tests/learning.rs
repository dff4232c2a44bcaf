use feasible_cbf::learner::io::{load_model, read_dataset, save_model, write_dataset};
use feasible_cbf::learner::sampler::{sample_and_label, BatchMode, SamplerConfig};
use feasible_cbf::learner::svm::train_svm;
use feasible_cbf::learner::training::{feedback_train, generalization_test, TrainingConfig};
use feasible_cbf::learner::Label;
use feasible_cbf::presets;

fn small_setup() -> presets::TrainingSetup {
    let mut s = presets::regular_training(21);
    s.training = TrainingConfig {
        train_sizes: vec![400, 200],
        test_sizes: vec![200, 100],
        max_iterations: 2,
        rate_samples: 2000,
        ..s.training
    };
    s
}

#[test]
fn labeling_is_reproducible_and_round_trips() {
    let s = presets::regular_training(0);
    let cfg = SamplerConfig::regular(300, 12);
    let a = sample_and_label(&s.problem, &cfg, None, BatchMode::Balanced);
    let b = sample_and_label(&s.problem, &cfg, None, BatchMode::Balanced);
    assert_eq!(a, b);
    assert!(a.count(Label::Infeasible) as f64 >= 0.3 * 300.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&a.samples, &path).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), a.samples);
}

#[test]
fn feedback_training_is_deterministic_and_models_reload() {
    let s = small_setup();
    let (h1, r1) = feedback_train(&s.problem, &s.sampler, &s.training).unwrap();
    let (h2, r2) = feedback_train(&s.problem, &s.sampler, &s.training).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(h1, h2);
    let best = r1
        .iterations
        .iter()
        .skip(1)
        .map(|r| r.infeasibility_rate)
        .chain([r1.final_rate])
        .fold(f64::INFINITY, f64::min);
    assert!(r1.final_rate <= best);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&h1, &path).unwrap();
    let back = load_model(&path).unwrap();
    let z = [3.0, -9.0, 0.4, 1.5];
    assert_eq!(back.eval(&z), h1.eval(&z));
}

#[test]
fn trained_dual_is_feasible() {
    let s = presets::regular_training(2);
    let batch = sample_and_label(&s.problem, &SamplerConfig::regular(600, 2), None, BatchMode::Balanced);
    let fit = train_svm(&batch.samples, s.training.kernel, &s.training.svm).unwrap();
    let c = s.training.svm.c;
    assert!(fit.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
    let balance: f64 = fit.alphas.iter().zip(&fit.labels).map(|(a, y)| a * y).sum();
    assert!(balance.abs() <= 1e-6, "{balance}");
    assert!(fit.hypersurface.accuracy(&batch.samples) > 0.85);
}

#[test]
fn generalization_inside_obstacle_keeps_nothing() {
    let s = small_setup();
    let (h, _) = feedback_train(&s.problem, &s.sampler, &s.training).unwrap();
    let mut inner = SamplerConfig::regular(200, 4);
    inner.radial_range = [0.0, 6.5];
    let r = generalization_test(&s.problem, &inner, &h);
    assert_eq!(r.n_samples, 0);
    assert!(r.h_nonneg_fraction.is_nan());
}
