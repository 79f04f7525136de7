mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use refnet::explain::{
    attribution_report, engineered_features, exact_shapley, gender_pair_code, pair_dataset, run_explain,
    train_pair_classifier, Endpoint, ExplainConfig, PairClassifierConfig, PairFeatureMode,
};
use refnet::linkpred::{roc_auc, ExperimentData};
use refnet::netbuild::ExtractConfig;
use refnet::numkit::rng::stream;
use refnet::numkit::{Activation, Dense, Mlp};
use refnet::synth::{generate, Mechanism, SynthConfig};
use refnet::Error;

fn zero_background(n: usize) -> Dense {
    Dense::zeros(1, n)
}

fn random_rows(rows: usize, cols: usize, seed: u64) -> Dense {
    let mut rng = stream(seed, &[]);
    Dense::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn random_mlp(n: usize, seed: u64) -> Mlp {
    Mlp::new(&[n, 5, 5, 1], &[Activation::Relu, Activation::Relu, Activation::Sigmoid], 0.0, seed).unwrap()
}

fn rows_of(d: &Dense) -> Vec<Vec<f64>> {
    (0..d.rows()).map(|i| d.row(i).to_vec()).collect()
}

#[test]
fn additive_and_product_examples() {
    let add = |x: &[f64]| x[0] + 2.0 * x[1];
    let a = exact_shapley(&add, &[1.0, 1.0], &zero_background(2)).unwrap();
    assert_eq!(a.phi, [1.0, 2.0]);
    let mul = |x: &[f64]| x[0] * x[1];
    let m = exact_shapley(&mul, &[1.0, 1.0], &zero_background(2)).unwrap();
    assert_eq!(m.phi, [0.5, 0.5]);
    assert_eq!(m.base_value, 0.0);
    assert_eq!(m.prediction, 1.0);
}

#[test]
fn limits_and_errors() {
    let f = |x: &[f64]| x.iter().sum::<f64>();
    let err = exact_shapley(&f, &[0.0; 17], &zero_background(17)).unwrap_err();
    assert!(matches!(err, Error::TooManyFeatures { got: 17, max: 16 }));
    assert!(exact_shapley(&f, &[0.0; 3], &Dense::zeros(0, 3)).is_err());
    assert!(exact_shapley(&f, &[0.0; 3], &zero_background(2)).is_err());
}

#[test]
fn dummy_feature_gets_exactly_zero() {
    let mut m = random_mlp(5, 3);
    let first = &mut m.layers[0].weights;
    for r in 0..first.rows() {
        first.set(r, 2, 0.0);
    }
    let bg = random_rows(20, 5, 4);
    let xs = random_rows(30, 5, 5);
    let model = |x: &[f64]| m.predict_row(x)[0];
    for i in 0..xs.rows() {
        let a = exact_shapley(&model, xs.row(i), &bg).unwrap();
        assert_eq!(a.phi[2], 0.0);
    }
}

#[test]
fn symmetric_features_share_credit() {
    let f = |x: &[f64]| (x[0] + x[1]).tanh() * x[2] + x[2];
    let mut bg = random_rows(15, 3, 6);
    for r in 0..bg.rows() {
        let v = bg.get(r, 0);
        bg.set(r, 1, v);
    }
    let a = exact_shapley(&f, &[0.7, 0.7, -1.2], &bg).unwrap();
    assert!((a.phi[0] - a.phi[1]).abs() < 1e-12, "{:?}", a.phi);
}

#[test]
fn matches_permutation_oracle() {
    for n in 1..=6 {
        let m = random_mlp(n, 10 + n as u64);
        let bg = random_rows(8, n, 20 + n as u64);
        let xs = random_rows(4, n, 30 + n as u64);
        let f = |x: &[f64]| m.predict_row(x)[0];
        let bg_rows = rows_of(&bg);
        for i in 0..xs.rows() {
            let exact = exact_shapley(&f, xs.row(i), &bg).unwrap();
            let oracle = common::permutation_shapley(&f, xs.row(i), &bg_rows);
            for (a, b) in exact.phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn constant_model_has_no_attribution() {
    let f = |_: &[f64]| 0.3;
    let names: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
    let r = attribution_report(&f, &names, &random_rows(10, 4, 1), &random_rows(5, 4, 2), None).unwrap();
    assert!(r.ranking.iter().all(|f| f.mean_abs_phi < 1e-9));
}

#[test]
fn ranking_orders_by_mean_abs_phi() {
    let f = |x: &[f64]| 3.0 * x[1] - x[0] + 0.1 * x[2];
    let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let r = attribution_report(&f, &names, &random_rows(50, 3, 7), &random_rows(20, 3, 8), Some(2)).unwrap();
    assert_eq!(r.ranking.len(), 2);
    assert_eq!(r.rank_of("b"), Some(1));
    assert_eq!(r.rank_of("a"), Some(2));
    let mut csv = Vec::new();
    r.write_ranking_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("feature,mean_abs_phi,rank\nb,"));
    let mut values = Vec::new();
    r.write_values_csv(&mut values).unwrap();
    assert_eq!(String::from_utf8(values).unwrap().lines().count(), 51);
}

#[test]
fn engineered_examples() {
    let e = |age, gender| Endpoint {
        age,
        gender,
        degree: 0.1,
        eigenvector: 0.2,
        betweenness: 0.3,
    };
    assert_eq!(engineered_features(&e(45.0, 0.0), &e(30.0, 1.0))[..2], [15.0, 3.0]);
    assert_eq!(gender_pair_code(0.0, 0.0), 0.0);
    assert_eq!(gender_pair_code(1.0, 1.0), 1.0);
    assert_eq!(gender_pair_code(1.0, 0.0), 2.0);
    assert_eq!(gender_pair_code(0.0, 1.0), 3.0);
    assert_eq!(gender_pair_code(0.5, 1.0), 4.0);
}

fn popularity_data() -> ExperimentData {
    let cfg = SynthConfig::mechanism(Mechanism::Popularity, 100);
    let out = generate(&cfg).unwrap();
    ExperimentData::prepare(
        &out.consultations,
        out.physician_table().unwrap(),
        &ExtractConfig::default(),
        Default::default(),
        cfg.window.end_year(),
    )
    .unwrap()
}

#[test]
fn classifier_signal_and_null() {
    let data = popularity_data();
    let out = run_explain(&data, &ExplainConfig::default(), 0).unwrap();
    assert!(out.test_auc > 0.7, "held-out AUC {}", out.test_auc);
    let p = out.classifier.predict(&out.dataset.rows);
    assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
    for a in &out.report.attributions {
        assert!(a.efficiency_gap() < 1e-9);
    }

    let engineered = pair_dataset(&data, PairFeatureMode::Engineered, 1).unwrap();
    for r in 0..engineered.rows.rows() {
        let row = engineered.rows.row(r);
        assert!(row[0] >= 0.0);
        assert!([0.0, 1.0, 2.0, 3.0].contains(&row[1]));
    }

    let ds = &out.dataset;
    let mut idx: Vec<usize> = (0..ds.labels.len()).collect();
    let mut rng = stream(3, &[]);
    idx.shuffle(&mut rng);
    let mut y = ds.labels.clone();
    y.shuffle(&mut rng);
    let (train, test) = idx.split_at(idx.len() * 4 / 5);
    let pick = |ix: &[usize]| -> Vec<f64> { ix.iter().map(|&i| y[i]).collect() };
    let clf =
        train_pair_classifier(&ds.rows.select_rows(train), &pick(train), &PairClassifierConfig::default(), 3).unwrap();
    let auc = roc_auc(&clf.predict(&ds.rows.select_rows(test)), &pick(test)).unwrap();
    assert!((0.45..=0.55).contains(&auc), "null AUC {auc}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn efficiency_holds(n in 1usize..=10, seed in any::<u64>(), bg_rows in 1usize..12) {
        let m = random_mlp(n, seed);
        let bg = random_rows(bg_rows, n, seed ^ 7);
        let x = random_rows(1, n, seed ^ 9);
        let f = |x: &[f64]| m.predict_row(x)[0];
        let a = exact_shapley(&f, x.row(0), &bg).unwrap();
        prop_assert!(a.efficiency_gap() < 1e-9, "gap {}", a.efficiency_gap());
    }
}
