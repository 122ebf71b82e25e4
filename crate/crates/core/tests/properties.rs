use proptest::prelude::*;
use vlme_core::protocols::{harmonic_mean, sample_k_shot};
use vlme_core::scoring::{argmax, probs_from_features, stable_softmax};
use vlme_core::swig::{t_predict, InputType, SwigConfig, SwigParams};
use vlme_core::training_free::{coordinate_greedy, exhaustive_search, Grid, SearchProblem, DEFAULT_BUDGET};
use vlme_core::zero_shot::{confidence_weights, mean_ensemble_predict, zs_ensemble_predict};
use vlme_core::{ClassEmbeddings, FeatureMatrix, LabelVector, Matrix, ProbMatrix};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn normalize(raw: Vec<f64>, k: usize) -> ProbMatrix {
    let n = raw.len() / k;
    let mut data = Vec::with_capacity(n * k);
    for row in raw.chunks(k) {
        let z: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / z));
    }
    ProbMatrix::new(n, k, data).unwrap()
}

/// `models` probability matrices of shape n x k with strictly positive entries.
fn prob_set(models: std::ops::Range<usize>) -> impl Strategy<Value = Vec<ProbMatrix>> {
    (models, 1usize..12, 2usize..7).prop_flat_map(|(m, n, k)| {
        prop::collection::vec(prop::collection::vec(1e-3f64..1.0, n * k), m)
            .prop_map(move |raws| raws.into_iter().map(|r| normalize(r, k)).collect())
    })
}

fn search_instance() -> impl Strategy<Value = (Vec<ProbMatrix>, Vec<usize>)> {
    (2usize..4, 5usize..25, 2usize..5).prop_flat_map(|(m, n, k)| {
        (
            prop::collection::vec(prop::collection::vec(1e-3f64..1.0, n * k), m + 1),
            prop::collection::vec(0..k, n),
        )
            .prop_map(move |(raws, labels)| (raws.into_iter().map(|r| normalize(r, k)).collect(), labels))
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn softmax_is_shift_invariant(
        scores in prop::collection::vec(-50.0f64..50.0, 1..20),
        shift in -100.0f64..100.0,
    ) {
        let a = stable_softmax(&scores).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let b = stable_softmax(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn probabilities_from_features_are_row_stochastic(
        (n, k, d) in (1usize..10, 2usize..8, 1usize..10),
        seed in any::<u64>(),
        tau in 0.01f64..2.0,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len).map(|_| { let v: f64 = rng.gen_range(-1.0..1.0); if v.abs() < 1e-3 { 0.5 } else { v } }).collect()
        };
        let f = FeatureMatrix::new(Matrix::new(n, d, draw(n * d)).unwrap()).unwrap();
        let c = ClassEmbeddings::new(Matrix::new(k, d, draw(k * d)).unwrap()).unwrap();
        let p = probs_from_features(&f, &c, tau).unwrap();
        for i in 0..n {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn argmax_does_not_depend_on_temperature(
        (n, k, d) in (1usize..8, 2usize..8, 2usize..8),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureMatrix::new(Matrix::new(n, d, (0..n * d).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap()).unwrap();
        let c = ClassEmbeddings::new(Matrix::new(k, d, (0..k * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()).unwrap();
        let at = |tau: f64| {
            let p = probs_from_features(&f, &c, tau).unwrap();
            (0..n).map(|i| argmax(p.row(i))).collect::<Vec<_>>()
        };
        let reference = at(1.0);
        prop_assert_eq!(&at(0.01), &reference);
        prop_assert_eq!(&at(100.0), &reference);
    }

    #[test]
    fn confidence_weights_are_normalized(models in prob_set(1..5)) {
        let refs: Vec<&ProbMatrix> = models.iter().collect();
        let w = confidence_weights(&refs).unwrap();
        for i in 0..w.rows() {
            let row = w.row(i);
            prop_assert!(row.iter().all(|&v| v > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_shot_rows_sum_to_two(models in prob_set(2..5), anchor_pick in any::<prop::sample::Index>()) {
        let refs: Vec<&ProbMatrix> = models.iter().collect();
        let anchor = anchor_pick.index(refs.len());
        let fused = zs_ensemble_predict(&refs, anchor).unwrap();
        for i in 0..fused.rows() {
            prop_assert!((fused.row(i).iter().sum::<f64>() - 2.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_shot_ignores_weak_model_order(models in prob_set(3..6), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let refs: Vec<&ProbMatrix> = models.iter().collect();
        let anchor = refs.len() - 1;
        let a = zs_ensemble_predict(&refs, anchor).unwrap();
        let mut weak: Vec<&ProbMatrix> = refs[..anchor].to_vec();
        weak.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        weak.push(refs[anchor]);
        let b = zs_ensemble_predict(&weak, anchor).unwrap();
        for i in 0..a.rows() {
            for (x, y) in a.row(i).iter().zip(b.row(i)) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn dominant_model_wins_the_fusion(models in prob_set(2..4)) {
        // when every model agrees on the top class, so does the ensemble
        let refs: Vec<&ProbMatrix> = models.iter().collect();
        let fused = zs_ensemble_predict(&refs, refs.len() - 1).unwrap();
        for i in 0..fused.rows() {
            let tops: Vec<usize> = refs.iter().map(|p| argmax(p.row(i))).collect();
            if tops.iter().all(|&t| t == tops[0]) {
                prop_assert_eq!(argmax(fused.row(i)), tops[0]);
            }
        }
    }

    #[test]
    fn zero_head_gating_is_the_mean_ensemble(models in prob_set(2..5), dim in 2usize..20, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let refs: Vec<&ProbMatrix> = models.iter().collect();
        let n = refs[0].rows();
        let cfg = SwigConfig::new(dim, 1, refs.len(), InputType::Features, false).unwrap();
        let mut params = SwigParams::zeros(&cfg);
        params.w1.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        params.b1.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let inputs = Matrix::new(n, dim, (0..n * dim).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let gated = t_predict(&params, &cfg, &inputs, &refs, 0).unwrap();
        let mean = mean_ensemble_predict(&refs).unwrap();
        prop_assert_eq!(gated.matrix(), mean.matrix());
    }

    #[test]
    fn greedy_never_beats_exhaustive((models, labels) in search_instance()) {
        let k = models[0].cols();
        let labels = LabelVector::new(labels, k).unwrap();
        let (anchor, weak) = models.split_last().unwrap();
        let grid = Grid::default();
        let problem = SearchProblem::new(weak.iter().collect(), anchor, &labels, &grid).unwrap();
        let ex = exhaustive_search(&problem, DEFAULT_BUDGET).unwrap();
        let gr = coordinate_greedy(&problem, 10).unwrap();
        prop_assert!(gr.best_accuracy <= ex.best_accuracy);
        prop_assert_eq!(ex.evaluated_count, 10u64.pow(weak.len() as u32));
    }

    #[test]
    fn harmonic_mean_is_bounded(a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let h = harmonic_mean(a, b).unwrap();
        let tol = 1e-12 * (a + b);
        prop_assert!(h >= a.min(b) - tol);
        prop_assert!(h <= (a + b) / 2.0 + tol);
        if a != b {
            prop_assert!(h < (a + b) / 2.0);
        }
    }

    #[test]
    fn k_shot_is_deterministic_and_clamped(
        labels in prop::collection::vec(0usize..6, 1..200),
        k in 1usize..20,
        seed in any::<u64>(),
    ) {
        let labels = LabelVector::new(labels, 6).unwrap();
        let classes = [0, 1, 2];
        let a = sample_k_shot(&labels, &classes, k, seed).unwrap();
        prop_assert_eq!(&a, &sample_k_shot(&labels, &classes, k, seed).unwrap());
        for &c in &classes {
            let available = labels.values().iter().filter(|&&y| y == c).count();
            let taken = a.indices.iter().filter(|&&i| labels.values()[i] == c).count();
            prop_assert_eq!(taken, k.min(available));
        }
        prop_assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
    }
}
