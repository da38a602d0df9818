//! End-to-end pipeline behavior: isometry of full-rank SVD subspaces,
//! permutation-null accuracy, the episode protocol, and a smoke check that
//! the generic core works at `f32`.

mod common;

use common::*;
use subfactor::factorize::Method;
use subfactor::fewshot::{
    evaluate, evaluate_episodes, knn_predict, EpisodeSpec, EvalOptions, Metric,
};
use subfactor::matrix::{Mat, NonNegMatrix};
use subfactor::rng;

#[test]
fn svd_with_full_rank_matches_full_space_knn() {
    // k = M makes Xᵀ U an isometry of the sample cloud, so KNN predictions
    // agree with the full feature space exactly.
    for seed in 0..10u64 {
        let train = two_gaussian_classes(seed, 6, 12, 5.0, 9.0);
        let test = two_gaussian_classes(seed + 1000, 6, 5, 5.0, 9.0);
        let model = subfactor::factorize::truncated_svd(train.features(), 6).unwrap();
        let v_train = &model.v;
        let v_test = test.features().t_matmul(&model.u);
        let sub_preds = knn_predict(v_train, train.labels(), &v_test, 5, Metric::Euclidean).unwrap();

        let full_train = train.features().transpose();
        let full_test = test.features().transpose();
        let full_preds =
            knn_predict(&full_train, train.labels(), &full_test, 5, Metric::Euclidean).unwrap();
        assert_eq!(sub_preds, full_preds, "seed {seed}");
    }
}

#[test]
fn permuted_labels_score_at_chance_over_50_repeats() {
    let train = two_gaussian_classes(7, 8, 20, 5.0, 11.0);
    let test = two_gaussian_classes(8, 8, 6, 5.0, 11.0);
    let shuffled_train = permute_labels(&train, 123);
    let shuffled_test = permute_labels(&test, 124);
    let mut opts = EvalOptions::new(Method::Svd, 3);
    opts.repeats = 50;
    opts.seed = 9;
    let report = evaluate(&shuffled_train, &shuffled_test, &opts).unwrap();
    let chance = 0.5;
    assert!(
        (report.mean - chance).abs() <= 3.0 * report.std.max(1e-6),
        "mean {} std {} not within 3 std of {chance}",
        report.mean,
        report.std
    );
}

#[test]
fn episode_protocol_reports_shots_and_scores_separated_data() {
    let data = two_gaussian_classes(21, 6, 40, 5.0, 25.0);
    let episode = EpisodeSpec {
        ways: 2,
        shots: 10,
        query_per_class: 10,
        repeats: 5,
        seed: 3,
    };
    let mut opts = EvalOptions::new(Method::Nmf, 2);
    opts.hyper.iters = 120;
    let report = evaluate_episodes(&data, &episode, &opts).unwrap();
    assert_eq!(report.per_run_accuracy.len(), 5);
    assert_eq!(report.config_echo.protocol, "episode");
    assert_eq!(report.config_echo.shots, Some(10));
    assert!(report.mean > 0.95, "mean {}", report.mean);
}

#[test]
fn negative_features_fail_at_fit_time_for_nmf_family() {
    // Loading negative features is fine; the error surfaces when an
    // NMF-family fit is requested.
    let text = "# features=2 samples=4 classes=2\n0,-1.0,2.0\n1,3.0,4.0\n0,1.0,2.0\n1,2.0,1.0\n";
    let data: subfactor::fewshot::FeatureDataset<f64> =
        subfactor::io::features_from_csv(text).unwrap();
    assert!(!data.nonneg());
    let mut opts = EvalOptions::new(Method::Nmf, 1);
    opts.repeats = 1;
    opts.knn_k = 1;
    let err = evaluate(&data, &data, &opts).unwrap_err();
    assert_eq!(err.code(), "NonNegativityError");
    // SVD happily accepts the same data.
    let mut opts = EvalOptions::new(Method::Svd, 1);
    opts.repeats = 1;
    opts.knn_k = 1;
    assert!(evaluate(&data, &data, &opts).is_ok());
}

#[test]
fn generic_core_runs_at_f32() {
    let x32: Mat<f32> = rng::uniform_matrix(&mut rng::seeded(31, 0), 6, 5);
    let h = subfactor::factorize::Hyper::<f32> {
        iters: 30,
        ..Default::default()
    };
    let model = subfactor::factorize::nmf_fit(&NonNegMatrix::new(x32).unwrap(), 2, &h, 4).unwrap();
    assert!(model.u.min_entry() >= 0.0);
    for w in model.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-4 * (1.0 + w[0].abs()));
    }
    let svd32 = subfactor::factorize::truncated_svd(&model.u, 2).unwrap();
    let gram = svd32.u.t_matmul(&svd32.u);
    assert!(gram.distance_fro(&Mat::identity(2)) < 1e-5);
}
