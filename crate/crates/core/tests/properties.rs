use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

use pglmc::classifier;
use pglmc::harness::kfold_split;
use pglmc::io::{self, CsvOptions};
use pglmc::metrics;
use pglmc::qp::{self, SolverOptions};
use pglmc::synth::{self, SimSpec};
use pglmc::types::{class_means, Dataset, Label};
use pglmc::{train_pglmc, TrainConfig};

/// Two-class dataset with at least two samples per class.
fn dataset(max_n: usize, max_d: usize) -> impl Strategy<Value = Dataset> {
    (4..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-10.0..10.0f64, n * d),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(x, signs)| {
                let mut y: Vec<Label> = signs.iter().map(|&s| if s { 1 } else { -1 }).collect();
                y[0] = 1;
                y[1] = 1;
                y[2] = -1;
                y[3] = -1;
                Dataset::new(Array2::from_shape_vec((n, d), x).unwrap(), y).unwrap()
            })
    })
}

fn shuffled(data: &Dataset, keys: &[u32]) -> Dataset {
    let mut order: Vec<usize> = (0..data.n_samples()).collect();
    order.sort_by_key(|&i| (keys[i % keys.len()], i));
    data.select(&order)
}

fn labels(n: usize) -> impl Strategy<Value = Vec<Label>> {
    prop::collection::vec(prop_oneof![Just(1), Just(-1)], n)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn class_means_ignore_row_order(data in dataset(20, 4), keys in prop::collection::vec(any::<u32>(), 20)) {
        let (a, b) = class_means(&data).unwrap();
        let (c, e) = class_means(&shuffled(&data, &keys)).unwrap();
        for (u, v) in a.iter().chain(&b).zip(c.iter().chain(&e)) {
            prop_assert!(close(*u, *v, 1e-12));
        }
    }

    #[test]
    fn class_means_follow_translation(data in dataset(20, 4), shift in -50.0..50.0f64) {
        let moved = data.map_features(data.features().mapv(|v| v + shift)).unwrap();
        let (a, b) = class_means(&data).unwrap();
        let (c, e) = class_means(&moved).unwrap();
        for (u, v) in a.iter().chain(&b).zip(c.iter().chain(&e)) {
            prop_assert!(close(u + shift, *v, 1e-12));
        }
    }

    #[test]
    fn imbalance_factor_is_swap_invariant(data in dataset(30, 1)) {
        let f = data.imbalance_factor().unwrap();
        prop_assert_eq!(f, data.with_swapped_labels().imbalance_factor().unwrap());
        prop_assert!(f >= 1.0);
    }

    #[test]
    fn dual_optimum_ignores_row_order(data in dataset(14, 3), keys in prop::collection::vec(any::<u32>(), 14)) {
        let config = TrainConfig::new(1.0, 2.0);
        let a = train_pglmc(&data, &config).unwrap();
        let b = train_pglmc(&shuffled(&data, &keys), &config).unwrap();
        let scale = a.w.dot(&a.w).sqrt().max(1.0);
        for (u, v) in a.w.iter().zip(&b.w) {
            prop_assert!((u - v).abs() <= 1e-4 * scale, "{} vs {}", u, v);
        }
    }

    #[test]
    fn feasible_points_do_not_beat_the_optimum(
        data in dataset(12, 3),
        lambda in 0.0..5.0f64,
        fill in prop::collection::vec(0.0..1.0f64, 12),
    ) {
        let (mp, mm) = class_means(&data).unwrap();
        let p = qp::assemble_dual(&data, mp.view(), mm.view(), 1.0, 2.0).unwrap();
        let sol = qp::solve_dual(&p, 1e-8, 1_000_000).unwrap();

        // Pair positives with negatives so that sum y alpha = 0 holds exactly.
        let y = data.labels();
        let plus: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
        let minus: Vec<usize> = (0..y.len()).filter(|&i| y[i] == -1).collect();
        let mut beta = Array1::zeros(y.len() + 1);
        beta[0] = lambda;
        for (k, (&i, &j)) in plus.iter().zip(&minus).enumerate() {
            beta[i + 1] = fill[k];
            beta[j + 1] = fill[k];
        }
        prop_assert!(p.objective(beta.view()) <= sol.objective + 1e-8 * sol.objective.abs().max(1.0));
    }

    #[test]
    fn objective_trace_never_decreases(data in dataset(16, 3), c in 2.0..6.0f64) {
        let (mp, mm) = class_means(&data).unwrap();
        let p = qp::assemble_dual(&data, mp.view(), mm.view(), 1.0, c).unwrap();
        let opts = SolverOptions { record_trace: true, ..SolverOptions::for_problem(&p) };
        let sol = qp::solve_dual_with(&p, &opts).unwrap();
        for w in sol.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn gram_block_scales_quadratically(data in dataset(8, 3), s in 0.1..10.0f64) {
        let scaled = data.map_features(data.features().mapv(|v| v * s)).unwrap();
        let build = |d: &Dataset| {
            let (mp, mm) = class_means(d).unwrap();
            qp::assemble_dual(d, mp.view(), mm.view(), 1.0, 2.0).unwrap()
        };
        let (a, b) = (build(&data), build(&scaled));
        for (u, v) in a.a_matrix().iter().zip(b.a_matrix().iter()) {
            prop_assert!((u * s * s - v).abs() <= 1e-10 * v.abs().max(1.0) * s * s);
        }
    }

    #[test]
    fn predictions_survive_positive_rescaling(
        w in prop::collection::vec(-5.0..5.0f64, 3),
        b in -5.0..5.0f64,
        x in prop::collection::vec(-5.0..5.0f64, 30),
        k in 0.01..100.0f64,
    ) {
        let x = Array2::from_shape_vec((10, 3), x).unwrap();
        let mut m = train_pglmc(
            &Dataset::new(ndarray::array![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]], vec![1, -1]).unwrap(),
            &TrainConfig::default(),
        ).unwrap();
        m.w = Array1::from(w);
        m.b = b;
        let base = classifier::predict_batch(&m, x.view()).unwrap();
        m.w.mapv_inplace(|v| v * k);
        m.b *= k;
        let scaled = classifier::predict_batch(&m, x.view()).unwrap();
        for (p, q) in base.iter().zip(&scaled) {
            if p.score.abs() > 1e-9 {
                prop_assert_eq!(p.label, q.label);
            }
        }
    }

    #[test]
    fn swapping_labels_negates_the_classifier(data in dataset(14, 3)) {
        let config = TrainConfig::new(1.0, 3.0);
        let a = train_pglmc(&data, &config).unwrap();
        let b = train_pglmc(&data.with_swapped_labels(), &config).unwrap();
        let scale = a.w.dot(&a.w).sqrt().max(1.0);
        for (u, v) in a.w.iter().zip(&b.w) {
            prop_assert!((u + v).abs() <= 1e-4 * scale, "{} vs {}", u, v);
        }
        prop_assert!((a.b + b.b).abs() <= 1e-4 * scale.max(a.b.abs()));
    }

    #[test]
    fn metrics_are_bounded_and_swap_invariant(pairs in (2..60usize).prop_flat_map(|n| (labels(n), labels(n)))) {
        let (pred, mut truth) = pairs;
        truth[0] = 1;
        truth[1] = -1;
        let c = metrics::ccr(&pred, &truth).unwrap();
        let m = metrics::mwe(&pred, &truth).unwrap();
        prop_assert!((0.0..=1.0).contains(&c) && (0.0..=1.0).contains(&m));
        let flip = |v: &[Label]| v.iter().map(|l| -l).collect::<Vec<_>>();
        prop_assert_eq!(c, metrics::ccr(&flip(&pred), &flip(&truth)).unwrap());
        prop_assert_eq!(m, metrics::mwe(&flip(&pred), &flip(&truth)).unwrap());
        let (ep, em) = metrics::per_class_errors(&pred, &truth).unwrap();
        let (fp, fm) = metrics::per_class_errors(&flip(&pred), &flip(&truth)).unwrap();
        prop_assert_eq!((ep, em), (fm, fp));
    }

    #[test]
    fn angle_is_scale_invariant_and_supplementary(
        u in prop::collection::vec(-5.0..5.0f64, 4),
        v in prop::collection::vec(-5.0..5.0f64, 4),
        k in 0.01..100.0f64,
    ) {
        let (u, v) = (Array1::from(u), Array1::from(v));
        prop_assume!(u.dot(&u) > 1e-6 && v.dot(&v) > 1e-6);
        let a = metrics::direction_angle(u.view(), v.view()).unwrap();
        prop_assert!((0.0..=180.0).contains(&a));
        let scaled = metrics::direction_angle((&u * k).view(), v.view()).unwrap();
        prop_assert!((a - scaled).abs() <= 1e-9);
        let opposite = metrics::direction_angle((-&u).view(), v.view()).unwrap();
        prop_assert!((a + opposite - 180.0).abs() <= 1e-9);
    }

    #[test]
    fn folds_partition_the_sample(lab in (4..80usize).prop_flat_map(labels), k in 2..8usize, seed: u64) {
        let mut lab = lab;
        lab[0] = 1;
        lab[1] = -1;
        prop_assume!(lab.len() >= k);
        let folds = kfold_split(lab.len(), k, &lab, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.iter().copied()).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..lab.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let swapped: Vec<Label> = lab.iter().map(|l| -l).collect();
        prop_assert_eq!(folds, kfold_split(lab.len(), k, &swapped, seed).unwrap());
    }

    #[test]
    fn generators_are_deterministic(d in 1..40usize, n_plus in 1..10usize, n_minus in 1..10usize, seed: u64, block: bool) {
        let spec = if block {
            SimSpec::block(50 * (1 + d % 3), n_plus, n_minus, seed)
        } else {
            SimSpec::independent(d, n_plus, n_minus, seed)
        };
        let (a, ra) = synth::generate(&spec).unwrap();
        let (b, rb) = synth::generate(&spec).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(synth::generate_test(&spec, 3).unwrap(), synth::generate_test(&spec, 3).unwrap());
    }

    #[test]
    fn csv_round_trip_preserves_values(data in dataset(12, 5)) {
        let mut extreme = data.features().to_owned();
        extreme.index_axis_mut(Axis(1), 0).mapv_inplace(|v| v * 1e-300);
        let data = data.map_features(extreme).unwrap();
        let mut buf = Vec::new();
        io::write_dataset_csv(&data, &mut buf).unwrap();
        let back = io::read_dataset(buf.as_slice(), &CsvOptions::default()).unwrap();
        prop_assert_eq!(back.features(), data.features());
        prop_assert_eq!(back.labels(), data.labels());
    }
}
