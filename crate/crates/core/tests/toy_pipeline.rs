use sfconf::ensemble::{ensemble_confidence, ensemble_predict};
use sfconf::toy::{
    generate_dataset, predict_field, run_comparison, train_ensemble, train_gaussian_head,
    ComparisonConfig, DatasetSpec, TrainConfig, UNCALIBRATED,
};
use sfconf::{field_confidence, EstimatorConfig, Method};

fn small() -> (
    sfconf::toy::SyntheticDataset,
    sfconf::toy::SyntheticDataset,
    TrainConfig,
) {
    let spec = DatasetSpec::default();
    let train = generate_dataset(&spec, 600, 1).unwrap();
    let test = generate_dataset(&spec, 200, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        loss_samples: 8,
        ..TrainConfig::default()
    };
    (train, test, cfg)
}

#[test]
fn one_member_ensemble_is_train_then_predict() {
    let (train, test, cfg) = small();
    let e = train_ensemble(&train, &test, &cfg, &[7]).unwrap();
    let trained = train_gaussian_head(&train, &cfg.clone().with_seed(7)).unwrap();
    assert_eq!(
        e.members()[0],
        predict_field(&trained.model, &test.inputs).unwrap()
    );
}

#[test]
fn ensembles_are_deterministic_and_members_differ() {
    let (train, test, cfg) = small();
    let a = train_ensemble(&train, &test, &cfg, &[1, 2, 3]).unwrap();
    let b = train_ensemble(&train, &test, &cfg, &[1, 2, 3]).unwrap();
    assert_eq!(a.members(), b.members());
    assert_ne!(a.members()[0], a.members()[1]);
    assert!(train_ensemble(&train, &test, &cfg, &[]).is_err());
}

#[test]
fn ensemble_confidence_stays_between_members_and_below_exact() {
    let (train, test, cfg) = small();
    let e = train_ensemble(&train, &test, &cfg, &[4, 5, 6]).unwrap();
    let pred = ensemble_predict(&e);
    let lb = ensemble_confidence(&e, &EstimatorConfig::new(Method::LowerBound)).unwrap();
    let quad = ensemble_confidence(&e, &EstimatorConfig::new(Method::Quadrature)).unwrap();
    assert_eq!(lb.prediction, pred);
    for p in 0..pred.len() {
        let k = pred[p] as usize;
        let member: Vec<f64> = e
            .members()
            .iter()
            .map(|f| sfconf::confidence_lower_bound(f.pixel(p), k))
            .collect();
        let lo = member.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = member.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(lb.confidence[p] >= lo - 1e-15 && lb.confidence[p] <= hi + 1e-15);
        assert!(lb.confidence[p] <= quad.confidence[p] + 1e-7);
    }
}

#[test]
fn comparison_reports_three_methods_reproducibly() {
    let cfg = ComparisonConfig {
        train_size: 800,
        test_size: 400,
        train: TrainConfig {
            epochs: 4,
            loss_samples: 8,
            ..TrainConfig::default()
        },
        ..ComparisonConfig::default()
    };
    let a = run_comparison(&cfg, 3).unwrap();
    let b = run_comparison(&cfg, 3).unwrap();
    let names: Vec<&str> = a.evaluations.iter().map(|e| e.method.as_str()).collect();
    assert_eq!(names, [UNCALIBRATED, "lower-bound", "softmax-avg"]);
    assert_eq!(a.evaluations, b.evaluations);
    assert_eq!(a.field, b.field);

    let lb = field_confidence(&a.field, &EstimatorConfig::new(Method::LowerBound)).unwrap();
    let q = field_confidence(&a.field, &EstimatorConfig::new(Method::Quadrature)).unwrap();
    assert!(lb
        .confidence
        .iter()
        .zip(&q.confidence)
        .all(|(l, e)| *l <= e + 1e-7));
}
