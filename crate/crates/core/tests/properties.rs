use ndarray::{Array2, Axis};
use nmflab::classify::{self, encode_hard, encode_soft};
use nmflab::kernel::{self, KernelDesign, NystromBlocks};
use nmflab::modelsel::{
    self, fold_designs, fold_plans, repeated_evaluation, stratified_split, DesignFamily, LabeledData,
    NmfLabPipeline, SplitSpec,
};
use nmflab::trinmf::{self, InitMode, TriNmfConfig, TriNmfModel};
use nmflab::NonNegMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, seed: u64) -> NonNegMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NonNegMatrix::new(Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..1.0))).unwrap()
}

fn stochastic(rows: usize, cols: usize, seed: u64) -> NonNegMatrix {
    matrix(rows, cols, seed).column_normalize().0
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(p in 1usize..7, q in 1usize..7, r in 1usize..7, s in 1usize..7, seed in any::<u64>()) {
        let (a, b, c) = (matrix(p, q, seed), matrix(q, r, seed ^ 1), matrix(r, s, seed ^ 2));
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (l, r) in left.as_array().iter().zip(right.as_array().iter()) {
            prop_assert!((l - r).abs() <= 1e-9 * l.abs().max(r.abs()).max(1e-300));
        }
    }

    #[test]
    fn normalized_columns_sum_to_one(rows in 1usize..8, cols in 1usize..8, zero_mask in any::<u8>(), seed in any::<u64>()) {
        let mut m = matrix(rows, cols, seed).into_array();
        for c in 0..cols {
            if zero_mask & (1 << (c % 8)) != 0 {
                m.column_mut(c).fill(0.0);
            }
        }
        let (n, sums) = NonNegMatrix::new(m.clone()).unwrap().column_normalize();
        for (c, col) in n.as_array().axis_iter(Axis(1)).enumerate() {
            prop_assert!((col.sum() - 1.0).abs() <= 1e-12);
            prop_assert!((sums[c] - m.column(c).sum()).abs() <= 1e-12);
        }
    }

    #[test]
    fn self_division_tends_to_one(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let m = NonNegMatrix::new(matrix(rows, cols, seed).as_array().mapv(|v| v + 1e-3)).unwrap();
        let q = m.hadamard_div(&m, 1e-15).unwrap();
        prop_assert!(q.as_array().iter().all(|v| (v - 1.0).abs() < 1e-11));
    }

    #[test]
    fn loss_is_symmetric_and_zero_only_on_equality(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), same in any::<bool>()) {
        let a = matrix(rows, cols, seed);
        let b = if same { a.clone() } else { matrix(rows, cols, seed.wrapping_add(1)) };
        let (ab, ba) = (a.frobenius_loss(&b).unwrap(), b.frobenius_loss(&a).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(ab == 0.0, a == b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn fit_descends_and_keeps_basis_stochastic(
        p in 1usize..=20, n in 1usize..=50, r in 1usize..=10, q_pick in any::<usize>(), seed in any::<u64>(),
    ) {
        let q = 1 + q_pick % p.min(n);
        let y = matrix(p, n, seed);
        let a = matrix(r, n, seed ^ 0xabc);
        let cfg = TriNmfConfig::new(q).with_init(InitMode::Random { seed }).with_max_iter(200).with_rel_tol(1e-15);
        let mut problems = Vec::new();
        let (_, report) = trinmf::fit_observed(&y, &a, &cfg, |s| {
            if s.basis.sum_axis(Axis(0)).iter().any(|c| (c - 1.0).abs() > 1e-9) {
                problems.push(format!("iteration {}: basis not column-stochastic", s.iteration));
            }
            if s.basis.iter().chain(s.theta.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
                problems.push(format!("iteration {}: negative or non-finite factor", s.iteration));
            }
        }).unwrap();
        prop_assert!(problems.is_empty(), "{:?}", problems);
        for w in report.losses.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "loss rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn fit_is_scale_equivariant(c in 0.1f64..50.0, seed in any::<u64>()) {
        // Strictly positive planted instance, P = Q = 3.
        let x = stochastic(3, 3, seed);
        let theta = NonNegMatrix::new(matrix(3, 4, seed ^ 7).as_array().mapv(|v| v + 0.5)).unwrap();
        let a = NonNegMatrix::new(matrix(4, 12, seed ^ 9).as_array().mapv(|v| v + 0.1)).unwrap();
        let y = x.matmul(&theta).unwrap().matmul(&a).unwrap();
        let cfg = TriNmfConfig::new(3).with_max_iter(500);
        let (m1, _) = trinmf::fit(&y, &a, &cfg).unwrap();
        let (m2, _) = trinmf::fit(&y.scale(c).unwrap(), &a, &cfg).unwrap();
        prop_assert!(max_abs_diff(m1.basis().as_array(), m2.basis().as_array()) <= 1e-6);
        let scaled = m1.theta().as_array().mapv(|v| v * c);
        let rel = max_abs_diff(&scaled, m2.theta().as_array()) / scaled.iter().fold(0.0f64, |a, &b| a.max(b));
        prop_assert!(rel <= 1e-6, "relative theta gap {}", rel);
    }

    #[test]
    fn exact_factorization_is_a_fixed_point(seed in any::<u64>()) {
        let x = stochastic(4, 2, seed);
        let theta = NonNegMatrix::new(matrix(2, 3, seed ^ 3).as_array().mapv(|v| v + 0.2)).unwrap();
        let a = NonNegMatrix::new(matrix(3, 8, seed ^ 5).as_array().mapv(|v| v + 0.2)).unwrap();
        let y = x.matmul(&theta).unwrap().matmul(&a).unwrap();
        let (x1, t1) = trinmf::update_step(&y, &y, &x, &theta, &a, 1e-12).unwrap();
        prop_assert!(max_abs_diff(x.as_array(), x1.as_array()) < 1e-8);
        prop_assert!(max_abs_diff(theta.as_array(), t1.as_array()) < 1e-8);
    }

    #[test]
    fn kernel_on_own_anchors_is_symmetric(n in 2usize..15, d in 1usize..5, beta in 0.01f64..20.0, seed in any::<u64>()) {
        let samples = matrix(n, d, seed).into_array();
        let design = KernelDesign::gaussian_full(beta, samples.clone()).unwrap();
        let k = design.build_covariates(samples.view()).unwrap();
        let k = k.as_array();
        for i in 0..n {
            prop_assert!((k[[i, i]] - 1.0).abs() <= 1e-15);
            for j in 0..n {
                prop_assert!((k[[i, j]] - k[[j, i]]).abs() < 1e-12);
                prop_assert!(k[[i, j]] > 0.0 && k[[i, j]] <= 1.0);
            }
        }
    }

    #[test]
    fn median_heuristic_ignores_sample_order(n in 2usize..30, seed in any::<u64>()) {
        let samples = matrix(n, 3, seed).into_array();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let shuffled = samples.select(Axis(0), &order);
        prop_assert_eq!(
            kernel::median_heuristic_beta(samples.view()).unwrap(),
            kernel::median_heuristic_beta(shuffled.view()).unwrap()
        );
    }

    #[test]
    fn probabilities_lie_on_the_simplex(p in 1usize..6, q in 1usize..6, r in 1usize..6, n in 1usize..10, seed in any::<u64>(), zero_theta in any::<bool>()) {
        let theta = if zero_theta { NonNegMatrix::zeros(q, r).unwrap() } else { matrix(q, r, seed ^ 1) };
        let model = TriNmfModel::new(stochastic(p, q, seed), theta, KernelDesign::PassThrough { dim: r }, None).unwrap();
        let pred = classify::membership_probabilities(&model, &matrix(r, n, seed ^ 2)).unwrap();
        for col in pred.probabilities.as_array().axis_iter(Axis(1)) {
            prop_assert!((col.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(col.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn prediction_ignores_covariate_scale(c in 1e-3f64..1e3, seed in any::<u64>()) {
        let model = TriNmfModel::new(stochastic(3, 3, seed), matrix(3, 4, seed ^ 1), KernelDesign::PassThrough { dim: 4 }, None).unwrap();
        let a = NonNegMatrix::new(matrix(4, 5, seed ^ 2).as_array().mapv(|v| v + 0.01)).unwrap();
        let p1 = classify::membership_probabilities(&model, &a).unwrap();
        let p2 = classify::membership_probabilities(&model, &a.scale(c).unwrap()).unwrap();
        prop_assert_eq!(&p1.predicted, &p2.predicted);
        prop_assert!(max_abs_diff(p1.probabilities.as_array(), p2.probabilities.as_array()) <= 1e-12);
    }

    #[test]
    fn split_parts_are_disjoint_and_exhaustive(
        per_class in proptest::collection::vec(3usize..25, 1..4),
        train in 0.2f64..0.6, valid in 0.1f64..0.3, stratified in any::<bool>(), seed in any::<u64>(),
    ) {
        let labels: Vec<String> = per_class.iter().enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(format!("c{c}"), k)).collect();
        let spec = SplitSpec { train_frac: train, valid_frac: valid, test_frac: 1.0 - train - valid, stratified, seed };
        let s = stratified_split(&labels, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
    }

    #[test]
    fn training_designs_only_touch_training_samples(n in 6usize..30, k in 2usize..6, seed in any::<u64>()) {
        let labels: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "x" } else { "y" }).collect();
        let enc = encode_hard(&labels, &["x".to_string(), "y".to_string()]).unwrap();
        // Entry (i, j) of this matrix encodes the sample pair.
        let full = Array2::from_shape_fn((n, n), |(i, j)| (i * n + j) as f64);
        for plan in fold_plans(&enc, k.min(n), seed).unwrap() {
            let m = plan.train.len();
            let (tr, va) = fold_designs(&full, &plan).unwrap();
            prop_assert_eq!(tr.shape(), (m, m));
            prop_assert_eq!(va.shape(), (m, plan.held_out.len()));
            for &v in tr.as_array().iter().chain(va.as_array().iter()) {
                let (i, j) = (v as usize / n, v as usize % n);
                prop_assert!(plan.train.contains(&i), "held-out sample {} used as an anchor", i);
                prop_assert!(plan.train.contains(&j) || plan.held_out.contains(&j));
                if tr.as_array().iter().any(|&w| w == v) {
                    prop_assert!(plan.train.contains(&j));
                }
            }
        }
    }
}

#[test]
fn soft_labels_at_ratio_one_are_hard_labels() {
    let labels = ["b", "a", "c", "a", "b"];
    let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let soft = encode_soft(&labels, &classes, 1.0).unwrap();
    let hard = encode_hard(&labels, &classes).unwrap();
    let bits = |e: &classify::LabelEncoding| e.columns().as_array().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&soft), bits(&hard));
}

#[test]
fn permuted_identity_basis_permutes_coefficients() {
    let x = NonNegMatrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
    let model = TriNmfModel::new(x, matrix(3, 4, 1), KernelDesign::PassThrough { dim: 4 }, None).unwrap();
    let a = matrix(4, 6, 2);
    let (b_tilde, _) = model.coefficients(&a).unwrap().column_normalize();
    let y_tilde = classify::membership_probabilities(&model, &a).unwrap().probabilities;
    let perm = [1usize, 2, 0];
    for (row, &src) in perm.iter().enumerate() {
        assert_eq!(y_tilde.as_array().row(row), b_tilde.as_array().row(src));
    }
}

#[test]
fn nystrom_is_exact_with_every_sample_as_landmark() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = Array2::from_shape_fn((25, 2), |_| rng.random_range(0.0..1.0));
    let beta = 3.0;
    let full = kernel::gaussian_matrix(samples.view(), samples.view(), beta);
    let blocks = NystromBlocks {
        ridge: 1e-10,
        ..kernel::nystrom_design(samples.view(), samples.view(), beta, 0.0).unwrap()
    };
    let approx = blocks.approximate_kernel().unwrap();
    let rel = (&approx - &full).mapv(|v| v * v).sum().sqrt() / full.mapv(|v| v * v).sum().sqrt();
    assert!(rel < 1e-8, "relative error {rel}");
}

#[test]
fn nystrom_error_shrinks_with_more_landmarks_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let samples = Array2::from_shape_fn((60, 3), |_| rng.random_range(0.0..1.0));
    let beta = 2.0;
    let full = kernel::gaussian_matrix(samples.view(), samples.view(), beta);
    let mean_error = |m: usize| {
        (0..10)
            .map(|seed| {
                let lm = kernel::select_landmarks(samples.view(), m, seed).unwrap();
                let blocks = kernel::nystrom_design(samples.view(), lm.view(), beta, 0.0).unwrap();
                let blocks = NystromBlocks { ridge: kernel::default_ridge(&blocks.w), ..blocks };
                let approx = blocks.approximate_kernel().unwrap();
                (&approx - &full).mapv(|v| v * v).sum().sqrt()
            })
            .sum::<f64>()
            / 10.0
    };
    let errors: Vec<f64> = [2, 4, 8, 16, 32].iter().map(|&m| mean_error(m)).collect();
    assert!(errors.windows(2).all(|w| w[1] <= w[0]), "{errors:?}");
}

#[test]
fn repeated_evaluation_is_bitwise_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let features = Array2::from_shape_fn((30, 2), |(i, _)| (i / 10) as f64 * 0.4 + rng.random_range(0.0..0.3));
    let labels = (0..30).map(|i| format!("g{}", i / 10)).collect();
    let data = LabeledData::new(features, labels).unwrap();
    let pipeline = NmfLabPipeline::new(DesignFamily::Kernel);
    let run = || repeated_evaluation(&data, &SplitSpec::standard(11), 4, &pipeline).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.mean_accuracy.to_bits(), b.mean_accuracy.to_bits());
    assert_eq!(a.outcomes, b.outcomes);
}

#[test]
fn grid_search_refits_on_train_and_validation() {
    let classes = vec!["lo".to_string(), "hi".to_string()];
    let xtr = ndarray::array![[0.0, 0.1], [0.1, 0.0], [0.9, 1.0], [1.0, 0.8], [0.2, 0.1]];
    let xva = ndarray::array![[0.05, 0.1], [0.95, 0.9], [0.8, 0.9]];
    let ytr = encode_hard(&["lo", "lo", "hi", "hi", "lo"], &classes).unwrap();
    let yva = encode_hard(&["lo", "hi", "hi"], &classes).unwrap();
    let candidates = [
        modelsel::DesignCandidate::Direct,
        modelsel::DesignCandidate::GaussianFull { beta: 1.0 },
        modelsel::DesignCandidate::GaussianNystrom { beta: 1.0, landmarks: 3, seed: 0 },
    ];
    let out = modelsel::grid_search(
        &modelsel::Task { features: xtr.view(), targets: &ytr },
        &modelsel::Task { features: xva.view(), targets: &yva },
        &candidates,
        &TriNmfConfig::new(2),
        modelsel::CvCriterion::FrobeniusLoss,
    )
    .unwrap();
    assert_eq!(out.refit_samples, 8);
    assert_eq!(out.cv.candidates.len(), 3);
}
