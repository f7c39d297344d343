mod common;

use ndarray::{array, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{classification, gradient_check, regression, uniform};
use xaipipe::data::{generate_synthetic, RuleSpec, TaskKind};
use xaipipe::metrics::Metric;
use xaipipe::models::{
    default_grid, fit, grid_search, persist, Family, HyperValue, Linear, ModelConfig, ModelState, Node, ParamGrid,
    Predictor, Scaler, TrainedModel,
};
use HyperValue::{Int, Real};

fn stump_data() -> xaipipe::data::Dataset {
    let x = array![[0.1, 0.7], [0.2, 0.1], [0.45, 0.9], [0.55, 0.3], [0.8, 0.6], [0.95, 0.2]];
    classification(x, &[0, 0, 0, 1, 1, 1])
}

#[test]
fn decision_stump_splits_between_the_classes() {
    let ds = stump_data();
    let m = fit(&ModelConfig::new(Family::DecisionTree, 0).with("max_depth", Int(1)), &ds).unwrap();
    let ModelState::Tree(t) = &m.state else { panic!("tree state") };
    let Node::Split { feature, threshold, .. } = t.nodes[0] else { panic!("root split") };
    assert_eq!(feature, 0);
    assert!(threshold > 0.45 && threshold <= 0.55, "threshold {threshold}");
    let p = m.predict(array![[0.9, 0.5]].view()).unwrap();
    assert_eq!(p[0], 1.0);
}

#[test]
fn empty_matrix_gives_empty_predictions() {
    let m = fit(&ModelConfig::new(Family::DecisionTree, 0), &stump_data()).unwrap();
    assert_eq!(m.predict(Array2::zeros((0, 2)).view()).unwrap().len(), 0);
}

#[test]
fn wrong_width_is_rejected() {
    let m = fit(&ModelConfig::new(Family::Logistic, 0), &stump_data()).unwrap();
    assert!(m.predict(Array2::zeros((1, 3)).view()).is_err());
    assert!(m.gradient(Array1::zeros(1).view()).is_err());
}

#[test]
fn single_class_training_gives_a_constant_predictor() {
    let x = uniform(10, 3, 1);
    for f in Family::ALL {
        let m = fit(&ModelConfig::new(f, 0), &classification(x.clone(), &[0; 10])).unwrap();
        let p = m.predict(uniform(7, 3, 2).view()).unwrap();
        assert!(p.iter().all(|&v| v == 0.0), "{f}");
    }
}

#[test]
fn knn_with_one_neighbour_reproduces_training_labels() {
    let x = uniform(200, 4, 3);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] + r[1] > 1.0)).collect();
    let ds = classification(x.clone(), &y);
    let m = fit(&ModelConfig::new(Family::NearestNeighbors, 0).with("k", Int(1)), &ds).unwrap();
    let p = m.predict(x.view()).unwrap();
    assert!(p.iter().zip(&y).all(|(a, &b)| *a == b as f64));
}

#[test]
fn knn_probabilities_are_vote_fractions() {
    let x = array![[0.0], [0.1], [0.2], [5.0], [6.0]];
    let ds = classification(x, &[1, 1, 0, 0, 0]);
    let m = fit(&ModelConfig::new(Family::NearestNeighbors, 0).with("k", Int(3)), &ds).unwrap();
    let p = m.predict_proba(array![[0.05]].view()).unwrap();
    assert!((p[[0, 0]] - 1.0 / 3.0).abs() < 1e-12 && (p[[0, 1]] - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn forest_with_unanimous_votes_is_certain() {
    let x = uniform(60, 2, 4);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] > 0.5)).collect();
    let m = fit(&ModelConfig::new(Family::RandomForest, 3).with("n_trees", Int(15)), &classification(x, &y)).unwrap();
    let p = m.predict_proba(array![[0.999, 0.5]].view()).unwrap();
    assert_eq!((p[[0, 0]], p[[0, 1]]), (0.0, 1.0));
}

/// Newton gain of every threshold on every feature, computed from scratch.
fn best_root_split(x: &Array2<f64>, y: &[f64], lambda: f64) -> (usize, f64, f64) {
    let n = y.len() as f64;
    let prior = y.iter().sum::<f64>() / n;
    let g: Vec<f64> = y.iter().map(|t| prior - t).collect();
    let h = prior * (1.0 - prior);
    let score = |gs: f64, hs: f64| gs * gs / (hs + lambda);
    let total = score(g.iter().sum(), h * n);
    let mut best = (usize::MAX, f64::NAN, f64::NEG_INFINITY);
    for j in 0..x.ncols() {
        let mut vals: Vec<f64> = x.column(j).to_vec();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (mut gl, mut nl) = (0.0, 0.0);
            for (i, &v) in x.column(j).iter().enumerate() {
                if v <= t {
                    gl += g[i];
                    nl += 1.0;
                }
            }
            let gr: f64 = g.iter().sum::<f64>() - gl;
            let gain = score(gl, h * nl) + score(gr, h * (n - nl)) - total;
            if gain > best.2 {
                best = (j, t, gain);
            }
        }
    }
    best
}

#[test]
fn boosting_root_split_matches_brute_force_gain() {
    let ds = generate_synthetic(&RuleSpec::six_feature_noise(), 600, 5).unwrap();
    let y = ds.target.to_vec();
    let (feature, threshold, _) = best_root_split(&ds.features, &y, 1.0);
    let m = fit(&ModelConfig::new(Family::GradientBoosting, 0).with("n_trees", Int(1)), &ds).unwrap();
    let ModelState::Boosted(b) = &m.state else { panic!("boosted state") };
    let Node::Split { feature: f, threshold: t, .. } = b.rounds[0][0].nodes[0] else { panic!("root split") };
    assert_eq!(f, feature);
    assert!((t - threshold).abs() < 1e-12, "{t} vs {threshold}");
    // frozen from the oracle: the root splits on F31
    assert_eq!(feature, 30);
    assert!([3, 9, 19, 30, 56, 84].contains(&feature));
}

fn all_family_models(ds: &xaipipe::data::Dataset) -> Vec<TrainedModel> {
    Family::ALL
        .iter()
        .map(|&f| {
            let mut cfg = ModelConfig::new(f, 11);
            if f == Family::Mlp {
                cfg = cfg.with("epochs", Int(60));
            }
            fit(&cfg, ds).unwrap()
        })
        .collect()
}

#[test]
fn probability_rows_sum_to_one() {
    let x = uniform(150, 3, 6);
    let y: Vec<usize> = x.rows().into_iter().map(|r| ((r[0] * 3.0) as usize).min(2)).collect();
    let probe = uniform(100, 3, 7) * 3.0 - 1.0;
    for ds in [classification(x.clone(), &y), classification(x.clone(), &y.iter().map(|c| c % 2).collect::<Vec<_>>())] {
        for m in all_family_models(&ds) {
            let p = m.predict_proba(probe.view()).unwrap();
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9, "{}", m.id());
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)), "{}", m.id());
            }
        }
    }
}

#[test]
fn argmax_ties_go_to_the_lower_class() {
    let x = array![[0.0], [0.0]];
    let m = fit(&ModelConfig::new(Family::NearestNeighbors, 0).with("k", Int(2)), &classification(x, &[1, 0])).unwrap();
    assert_eq!(m.predict(array![[0.0]].view()).unwrap()[0], 0.0);
}

#[test]
fn regression_is_supported_by_every_family() {
    let x = uniform(120, 2, 8);
    let y = x.column(0).mapv(|v| 3.0 * v) + &x.column(1);
    let ds = regression(x.clone(), y);
    for m in all_family_models(&ds) {
        let p = m.predict(x.view()).unwrap();
        assert!(p.iter().all(|v| v.is_finite()), "{}", m.id());
        assert!(m.predict_proba(x.view()).is_err());
    }
}

#[test]
fn fitting_is_deterministic() {
    let x = uniform(120, 4, 9);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[1] > r[2])).collect();
    let ds = classification(x, &y);
    let a = all_family_models(&ds);
    let b = all_family_models(&ds);
    assert_eq!(a, b);
}

#[test]
fn one_tree_forest_without_bootstrap_equals_a_tree() {
    let x = uniform(200, 5, 10);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] * r[3] > 0.2)).collect();
    let ds = classification(x, &y);
    let dt = fit(&ModelConfig::new(Family::DecisionTree, 0).with("max_depth", Int(4)), &ds).unwrap();
    let rf = fit(
        &ModelConfig::new(Family::RandomForest, 0)
            .with("n_trees", Int(1))
            .with("bootstrap", Int(0))
            .with("max_features", HyperValue::None)
            .with("max_depth", Int(4)),
        &ds,
    )
    .unwrap();
    let probe = uniform(300, 5, 11);
    assert_eq!(dt.predict_proba(probe.view()).unwrap(), rf.predict_proba(probe.view()).unwrap());
}

#[test]
fn boosting_without_learning_rate_predicts_the_prior() {
    let x = uniform(80, 2, 12);
    let y: Vec<usize> = (0..80).map(|i| usize::from(i % 4 == 0)).collect();
    let cfg = ModelConfig::new(Family::GradientBoosting, 0)
        .with("learning_rate", Real(0.0))
        .with("n_trees", Int(5));
    let m = fit(&cfg, &classification(x.clone(), &y)).unwrap();
    assert!(m.output(uniform(20, 2, 13).view()).iter().all(|p| (p - 0.25).abs() < 1e-12));

    let t = x.column(0).to_owned() * 4.0;
    let mean = t.mean().unwrap();
    let m = fit(&cfg, &regression(x, t)).unwrap();
    assert!(m.predict(uniform(20, 2, 14).view()).unwrap().iter().all(|p| (p - mean).abs() < 1e-12));
}

fn zero_logistic(d: usize) -> TrainedModel {
    TrainedModel {
        config: ModelConfig::new(Family::Logistic, 0),
        n_features: d,
        task: TaskKind::Classification,
        n_classes: 2,
        state: ModelState::Linear(Linear {
            scaler: Scaler {
                mean: Array1::zeros(d),
                scale: Array1::ones(d),
            },
            weights: Array2::zeros((1, d)),
            bias: vec![0.0],
        }),
    }
}

#[test]
fn zero_weight_logistic_is_uniform_with_zero_gradient() {
    let m = zero_logistic(3);
    let p = m.predict_proba(uniform(5, 3, 15).view()).unwrap();
    assert!(p.iter().all(|&v| v == 0.5));
    assert_eq!(m.gradient(array![0.3, 0.2, 0.9].view()).unwrap(), Array1::<f64>::zeros(3));
}

#[test]
fn logistic_gradient_is_p_one_minus_p_times_w() {
    let x = uniform(200, 3, 16);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] - r[2] > 0.1)).collect();
    let m = fit(&ModelConfig::new(Family::Logistic, 0), &classification(x, &y)).unwrap();
    let ModelState::Linear(l) = &m.state else { panic!("linear state") };
    let w = l.raw_weights().row(0).to_owned();
    for q in uniform(20, 3, 17).rows() {
        let p = m.output_row(q);
        let g = m.gradient(q).unwrap();
        for j in 0..3 {
            assert!((g[j] - p * (1.0 - p) * w[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn differentiable_models_match_finite_differences() {
    let x = uniform(300, 4, 18);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] * r[1] + r[2] > 0.6)).collect();
    let yr = x.map_axis(Axis(1), |r| (3.0 * r[0]).sin() + r[1] * r[2]);
    let probes = uniform(100, 4, 19);
    let total = probes.len();
    let check = |m: &TrainedModel, what: &str| {
        let (e, compared) = gradient_check(m, &probes);
        assert!(e < 1e-4, "{what}: {e}");
        assert!(compared * 100 >= total * 99, "{what}: only {compared} of {total} coordinates off a kink");
    };
    for layers in [1, 2] {
        let cfg = ModelConfig::new(Family::Mlp, 2).with("layers", Int(layers)).with("epochs", Int(150));
        check(&fit(&cfg, &classification(x.clone(), &y)).unwrap(), &format!("classifier, {layers} layers"));
        check(&fit(&cfg, &regression(x.clone(), yr.clone())).unwrap(), &format!("regressor, {layers} layers"));
    }
    let lr = fit(&ModelConfig::new(Family::Logistic, 0), &classification(x.clone(), &y)).unwrap();
    check(&lr, "logistic");
}

#[test]
fn trees_are_not_differentiable() {
    let m = fit(&ModelConfig::new(Family::DecisionTree, 0), &stump_data()).unwrap();
    assert!(m.gradient(array![0.1, 0.2].view()).is_err());
    assert!(Predictor::gradient(&m, array![0.1, 0.2].view()).is_none());
}

#[test]
fn unknown_hyperparameter_fails_validation() {
    let cfg = ModelConfig::new(Family::NearestNeighbors, 0).with("max_depth", Int(2));
    assert!(fit(&cfg, &stump_data()).is_err());
}

#[test]
fn single_point_grid_returns_its_config() {
    let grid = ParamGrid::single(Family::DecisionTree).axis("max_depth", &[Int(2)]);
    let r = grid_search(&grid, &stump_data(), 2, Metric::Accuracy, 0).unwrap();
    assert_eq!(r.best.params.get("max_depth"), Some(&Int(2)));
    assert_eq!(r.scores.len(), 1);
}

#[test]
fn grid_search_rejects_bad_inputs() {
    let ds = stump_data();
    let g = default_grid(Family::DecisionTree);
    assert!(grid_search(&g, &ds, 7, Metric::Accuracy, 0).is_err());
    assert!(grid_search(&g, &ds, 2, Metric::R2, 0).is_err());
    let empty = ParamGrid::single(Family::DecisionTree).axis("max_depth", &[]);
    assert!(grid_search(&empty, &ds, 2, Metric::Accuracy, 0).is_err());
}

#[test]
fn deeper_tree_wins_on_the_conjunction_rule() {
    // ~2 positives per fold at 2000 samples make CV-AUC favour the smooth stump
    let ds = generate_synthetic(&RuleSpec::six_feature_noise(), 10_000, 1).unwrap();
    let grid = ParamGrid::single(Family::DecisionTree).axis("max_depth", &[Int(1), Int(8)]);
    let r = grid_search(&grid, &ds, 5, Metric::Auc, 0).unwrap();
    assert_eq!(r.best.params.get("max_depth"), Some(&Int(8)));
    let (shallow, deep) = (r.scores[0].1, r.scores[1].1);
    assert!(deep > shallow, "{deep} vs {shallow}");
}

#[test]
fn grid_search_is_deterministic() {
    let ds = generate_synthetic(&RuleSpec::two_feature_box(), 300, 4).unwrap();
    let a = grid_search(&default_grid(Family::RandomForest), &ds, 3, Metric::Auc, 9).unwrap();
    let b = grid_search(&default_grid(Family::RandomForest), &ds, 3, Metric::Auc, 9).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.scores, b.scores);
}

#[test]
fn persisted_models_round_trip() {
    let x = uniform(60, 3, 20);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] > 0.4)).collect();
    for m in all_family_models(&classification(x, &y)) {
        let text = persist::to_json(&m).unwrap();
        let back = persist::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(persist::to_json(&back).unwrap(), text);
    }
}

#[test]
fn persisted_format_is_stable() {
    let m = fit(&ModelConfig::new(Family::DecisionTree, 0).with("max_depth", Int(1)), &stump_data()).unwrap();
    let text = persist::to_json(&m).unwrap();
    let golden = include_str!("golden/decision_stump.json");
    assert_eq!(text.trim_end(), golden.trim_end());
    assert_eq!(persist::from_json(golden).unwrap(), m);
}

#[test]
fn foreign_model_files_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = zero_logistic(2 + rng.gen_range(0..3));
    let text = persist::to_json(&m).unwrap().replace("\"version\":1", "\"version\":99");
    assert!(persist::from_json(&text).is_err());
}
