use deeppcanet::dataset::{generate_toy_dataset, split_dataset};
use deeppcanet::hyperopt::{run_search, run_trials, sample_trial, SearchSpace};
use deeppcanet::netbuilder::{attach_head, grow_network, GrowOptions};
use deeppcanet::nn::{Activation, ModelState, OptimizerConfig, OptimizerKind};
use deeppcanet::representatives::select_representatives;
use deeppcanet::rng::seeded;
use deeppcanet::dataset::Split;

fn setup() -> (ModelState, Split) {
    let data = generate_toy_dataset(10, 2, 16, &mut seeded(1)).unwrap();
    let split = split_dataset(&data, (0.6, 0.2, 0.2), &mut seeded(2)).unwrap();
    let reps = select_representatives(&split.train, &mut seeded(3)).unwrap();
    let body = grow_network(&reps, 0.9, &GrowOptions::default()).unwrap();
    (attach_head(&body, 0.25, &mut seeded(4)).unwrap(), split)
}

#[test]
fn sampling_covers_the_space() {
    let space = SearchSpace::default();
    let mut rng = seeded(9);
    let draws: Vec<OptimizerConfig> = (0..10_000).map(|_| sample_trial(&space, &mut rng)).collect();
    assert!(draws.iter().all(|c| space.contains(c)));
    for k in OptimizerKind::ALL {
        assert!(draws.iter().any(|c| c.algorithm == k));
    }
    for a in Activation::ALL {
        assert!(draws.iter().any(|c| c.activation == a));
    }
    for b in &space.batch_sizes {
        assert!(draws.iter().any(|c| c.batch_size == *b));
    }
    // log-uniform: each decade of [1e-5, 1e-1] gets about a quarter of the draws
    for d in 0..4 {
        let lo = 10f64.powi(-5 + d);
        let share = draws.iter().filter(|c| c.learning_rate >= lo && c.learning_rate < lo * 10.0).count() as f64 / 1e4;
        assert!((share - 0.25).abs() < 0.03, "decade {d}: {share}");
    }
    let mid = draws.iter().filter(|c| c.dropout_p < 0.375).count() as f64 / 1e4;
    assert!((mid - 0.5).abs() < 0.03);
}

#[test]
fn divergent_trial_is_recorded_and_loses() {
    let (model, split) = setup();
    let bad = OptimizerConfig {
        algorithm: OptimizerKind::Sgd,
        learning_rate: 1e300,
        activation: Activation::Sigmoid,
        epochs: 2,
        ..OptimizerConfig::default()
    };
    let good = OptimizerConfig { epochs: 2, ..OptimizerConfig::default() };
    let result = run_trials(&[bad.clone(), good.clone()], &model, &split.train, &split.val).unwrap();
    assert_eq!(result.trials[0].val_accuracy, None);
    assert!(result.trials[1].val_accuracy.is_some());
    assert_eq!(result.best_index, 1);
    assert_eq!(result.best, good);
    let err = run_trials(&[bad.clone(), bad], &model, &split.train, &split.val).unwrap_err();
    assert!(err.to_string().contains("diverged"));
}

#[test]
fn search_is_reproducible() {
    let (model, split) = setup();
    let space = SearchSpace { n_trials: 3, trial_epochs: 2, ..SearchSpace::default() };
    let a = run_search(&space, &model, &split.train, &split.val, &mut seeded(5)).unwrap();
    let b = run_search(&space, &model, &split.train, &split.val, &mut seeded(5)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json_lines(), b.to_json_lines());
    assert_eq!(a.trials.len(), 3);
    let best = a.trials[a.best_index].val_accuracy.unwrap();
    assert!(a.trials.iter().all(|t| t.val_accuracy.is_none_or(|v| v <= best)));
    // earliest wins ties
    assert!(a.trials[..a.best_index].iter().all(|t| t.val_accuracy.is_none_or(|v| v < best)));
}

#[test]
fn invalid_space_is_rejected() {
    let (model, split) = setup();
    let space = SearchSpace { learning_rate: (1e-1, 1e-5), ..SearchSpace::default() };
    assert!(run_search(&space, &model, &split.train, &split.val, &mut seeded(0)).is_err());
    assert!(run_trials(&[], &model, &split.train, &split.val).is_err());
}
