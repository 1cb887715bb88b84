use std::path::PathBuf;

use ndarray::{array, Array2};
use nmflab::classify::{self, encode_hard};
use nmflab::dataset::{load_csv, LoadOptions};
use nmflab::kernel::{self, KernelDesign};
use nmflab::kmeans;
use nmflab::modelsel::{
    self, repeated_evaluation, CvCriterion, DesignCandidate, LabeledData, PipelineOutcome, Split, SplitSpec, Task,
};
use nmflab::trinmf::{self, InitMode, TriNmfConfig};
use nmflab::NonNegMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn planted_factorization_is_recovered_to_loss_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut draw = |r, c| NonNegMatrix::new(Array2::from_shape_fn((r, c), |_| rng.random_range(0.1..1.0))).unwrap();
    let x0 = draw(6, 3).column_normalize().0;
    let theta0 = draw(3, 4);
    let a0 = draw(4, 10);
    let y = x0.matmul(&theta0).unwrap().matmul(&a0).unwrap();
    let cfg = TriNmfConfig::new(3).with_init(InitMode::Random { seed: 1 }).with_max_iter(20_000).with_rel_tol(1e-10);
    let (_, report) = trinmf::fit(&y, &a0, &cfg).unwrap();
    let norm = y.as_array().mapv(|v| v * v).sum();
    assert!(report.final_loss <= 1e-4 * norm, "{} vs {}", report.final_loss, norm);
}

#[test]
fn iris_loads_with_expected_shape() {
    let d = load_csv(data("iris.csv"), &LoadOptions::scaled().with_label("species")).unwrap();
    assert_eq!(d.len(), 150);
    assert_eq!(d.feature_dim(), 4);
    assert_eq!(classify::classes_in_order(d.labels.as_ref().unwrap()).len(), 3);
    assert!(d.samples.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(d.dropped, 0);
}

#[test]
fn orthodont_sex_encoding_counts() {
    let d = load_csv(data("orthodont.csv"), &LoadOptions::default().with_label("sex").with_id("subject")).unwrap();
    let labels = d.labels.unwrap();
    let classes = classify::classes_in_order(&labels);
    assert_eq!(classes, vec!["Male", "Female"]);
    let a = encode_hard(&labels, &classes).unwrap();
    let sums = a.columns().as_array().sum_axis(ndarray::Axis(1));
    assert_eq!(sums.to_vec(), vec![16.0, 11.0]);
}

#[test]
fn orthodont_kernel_model_at_reported_bandwidth() {
    let d = load_csv(data("orthodont.csv"), &LoadOptions::default().with_label("sex").with_id("subject")).unwrap();
    let labels = d.labels.unwrap();
    let classes = classify::classes_in_order(&labels);
    let y = encode_hard(&labels, &classes).unwrap();
    let design = KernelDesign::gaussian_full(0.0079, d.samples.clone()).unwrap();
    let a = design.build_covariates(d.samples.view()).unwrap();
    let (model, _) = trinmf::fit(y.columns(), &a, &TriNmfConfig::new(2)).unwrap();
    let model = model.with_design(design).unwrap().with_class_names(classes).unwrap();
    let pred = classify::membership_probabilities(&model, &a).unwrap();

    let m01 = d.ids.unwrap().iter().position(|id| id == "M01").unwrap();
    let p = pred.probabilities.column(m01);
    assert!((p[0] - 0.94).abs() <= 0.05 && (p[1] - 0.06).abs() <= 0.05, "{p:?}");

    let cm = classify::confusion_matrix(&pred, &labels).unwrap();
    assert_eq!(cm.counts, vec![vec![14, 4], vec![2, 7]]);
    assert!((cm.accuracy() - 21.0 / 27.0).abs() < 1e-12);
}

#[test]
fn gaussian_beats_direct_on_iris_validation() {
    let d = load_csv(data("iris.csv"), &LoadOptions::scaled().with_label("species")).unwrap();
    let labels = d.labels.unwrap();
    let classes = classify::classes_in_order(&labels);
    let split = modelsel::stratified_split(&labels, &SplitSpec::standard(3)).unwrap();
    let pick = |idx: &[usize]| (d.samples.select(ndarray::Axis(0), idx), idx.iter().map(|&i| labels[i].as_str()).collect::<Vec<_>>());
    let ((xtr, ltr), (xva, lva)) = (pick(&split.train), pick(&split.valid));
    let (ytr, yva) = (encode_hard(&ltr, &classes).unwrap(), encode_hard(&lva, &classes).unwrap());
    let bmed = kernel::median_heuristic_beta(xtr.view()).unwrap();
    let candidates = [DesignCandidate::Direct, DesignCandidate::GaussianFull { beta: bmed }];
    let run = || {
        modelsel::grid_search(
            &Task { features: xtr.view(), targets: &ytr },
            &Task { features: xva.view(), targets: &yva },
            &candidates,
            &TriNmfConfig::new(3),
            CvCriterion::Accuracy,
        )
        .unwrap()
    };
    let out = run();
    assert_eq!(out.cv.chosen().candidate, candidates[1]);
    assert_eq!(run().cv, out.cv);
}

#[test]
fn two_blobs_get_one_landmark_each() {
    let pts = array![[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [5.0, 5.0], [5.2, 5.1], [4.9, 5.3]];
    let lm = kernel::select_landmarks(pts.view(), 2, 0).unwrap();
    let in_box = |c: ndarray::ArrayView1<f64>, lo: f64, hi: f64| c.iter().all(|v| (lo..=hi).contains(v));
    let low = lm.rows().into_iter().filter(|c| in_box(*c, 0.0, 0.3)).count();
    let high = lm.rows().into_iter().filter(|c| in_box(*c, 4.9, 5.3)).count();
    assert_eq!((low, high), (1, 1));
    assert_eq!(kmeans::kmeans(pts.view(), 1, 10, 0).unwrap().centroids.nrows(), 1);
}

#[test]
fn constant_prediction_baseline_is_near_half() {
    let labels: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "a".into() } else { "b".into() }).collect();
    let data = LabeledData::new(Array2::zeros((40, 1)), labels).unwrap();
    let always_a = |d: &LabeledData, s: &Split, _: u64| -> nmflab::Result<PipelineOutcome> {
        let hits = s.test.iter().filter(|&&i| d.labels[i] == "a").count();
        Ok(PipelineOutcome { accuracy: hits as f64 / s.test.len() as f64, confusion: None, chosen: None })
    };
    let sum = repeated_evaluation(&data, &SplitSpec::standard(0), 50, &always_a).unwrap();
    assert!((sum.mean_accuracy - 0.5).abs() <= 0.05);
    assert!(sum.sd_accuracy <= 0.05);
}
