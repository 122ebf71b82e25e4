//! Checks against independently written reference computations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlme_core::fixtures::{monotone_instance, random_search_instance, separable_gating, synthetic_export};
use vlme_core::protocols::{
    fit, harmonic_mean, run_base_to_new, run_cross_dataset, run_domain_generalization, sample_k_shot,
    FitOptions, FittedEnsemble, MetricBlock, Strategy,
};
use vlme_core::scoring::{accuracy, correct_count};
use vlme_core::swig::{
    batch_loss, swig_backward, swig_forward, swig_init, swig_inputs, t_predict, Batch, InputType,
    SwigConfig, SwigParams,
};
use vlme_core::train::{swig_train, TrainConfig, TrainSet};
use vlme_core::training_free::{
    coordinate_greedy, exhaustive_search, Grid, SearchMode, SearchProblem, DEFAULT_BUDGET,
};
use vlme_core::zero_shot::{mean_ensemble_predict, zs_ensemble_predict};
use vlme_core::{EnsembleData, LabelVector, Matrix, ModelOutputs, ProbMatrix};

// ---------------------------------------------------------------------------
// grid search

/// Three nested loops over the grid; keeps the first best in lexicographic order.
fn brute_force_three(weak: &[ProbMatrix], anchor: &ProbMatrix, labels: &[usize]) -> ([f64; 3], usize) {
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let k = anchor.cols();
    let mut best = ([0.0; 3], 0usize);
    let mut first = true;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let mut correct = 0;
                for (s, &y) in labels.iter().enumerate() {
                    let score = |j: usize| {
                        a * weak[0].row(s)[j] + b * weak[1].row(s)[j] + c * weak[2].row(s)[j] + anchor.row(s)[j]
                    };
                    let mut arg = 0;
                    for j in 1..k {
                        if score(j) > score(arg) {
                            arg = j;
                        }
                    }
                    correct += (arg == y) as usize;
                }
                if first || correct > best.1 {
                    best = ([a, b, c], correct);
                    first = false;
                }
            }
        }
    }
    best
}

#[test]
fn exhaustive_matches_nested_loops() {
    for seed in [7u64, 0, 13] {
        let inst = random_search_instance(seed, 200, 10, 3);
        let grid = Grid::default();
        let problem = SearchProblem::new(inst.weak.iter().collect(), &inst.anchor, &inst.labels, &grid).unwrap();
        let result = exhaustive_search(&problem, DEFAULT_BUDGET).unwrap();
        let (w, correct) = brute_force_three(&inst.weak, &inst.anchor, inst.labels.values());
        assert_eq!(result.evaluated_count, 1000);
        assert_eq!(result.correct, correct, "seed {seed}");
        assert_eq!(result.weights.values, w.to_vec(), "seed {seed}");
    }
}

#[test]
fn monotone_fixture_accuracy_rises_along_grid() {
    let inst = monotone_instance();
    let grid = Grid::default();
    // score every grid point by hand
    let mut accs = Vec::new();
    for &w in grid.values() {
        let mut correct = 0;
        for s in 0..inst.labels.len() {
            let f0 = w * inst.weak[0].row(s)[0] + inst.anchor.row(s)[0];
            let f1 = w * inst.weak[0].row(s)[1] + inst.anchor.row(s)[1];
            correct += (f0 >= f1) as usize;
        }
        accs.push(correct);
    }
    assert!(accs.windows(2).all(|p| p[1] > p[0]), "{accs:?}");
    assert_eq!(*accs.last().unwrap(), 20);

    let problem = SearchProblem::new(inst.weak.iter().collect(), &inst.anchor, &inst.labels, &grid).unwrap();
    let ex = exhaustive_search(&problem, DEFAULT_BUDGET).unwrap();
    assert_eq!(ex.weights.values, vec![1.0]);
    assert_eq!(ex.best_accuracy, 1.0);
    let greedy = coordinate_greedy(&problem, 10).unwrap();
    assert_eq!(greedy.weights.values, vec![1.0]);
    assert_eq!(greedy.mode, SearchMode::CoordinateGreedy);
}

#[test]
fn greedy_with_one_weak_model_is_exhaustive() {
    for seed in 0..5 {
        let inst = random_search_instance(seed, 150, 6, 1);
        let grid = Grid::default();
        let problem = SearchProblem::new(inst.weak.iter().collect(), &inst.anchor, &inst.labels, &grid).unwrap();
        let ex = exhaustive_search(&problem, DEFAULT_BUDGET).unwrap();
        let gr = coordinate_greedy(&problem, 10).unwrap();
        assert_eq!(ex.weights, gr.weights);
        assert_eq!(ex.correct, gr.correct);
    }
}

#[test]
fn greedy_never_beats_exhaustive() {
    for seed in 0..10 {
        let inst = random_search_instance(100 + seed, 120, 5, 3);
        let grid = Grid::default();
        let problem = SearchProblem::new(inst.weak.iter().collect(), &inst.anchor, &inst.labels, &grid).unwrap();
        let ex = exhaustive_search(&problem, DEFAULT_BUDGET).unwrap();
        let gr = coordinate_greedy(&problem, 10).unwrap();
        assert!(gr.correct <= ex.correct);
        assert!(gr.trace.windows(2).all(|p| p[1] >= p[0]));
    }
}

// ---------------------------------------------------------------------------
// gating network

/// Forward pass written out with explicit loops.
fn reference_forward(p: &SwigParams, x: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; p.hidden_dim];
    for r in 0..p.hidden_dim {
        let mut z = p.b1[r];
        for c in 0..p.input_dim {
            z += p.w1[r * p.input_dim + c] * x[c];
        }
        h[r] = if z > 0.0 { z } else { 0.0 };
    }
    let mut o = vec![0.0; p.num_weight];
    for r in 0..p.num_weight {
        o[r] = p.b2[r];
        for c in 0..p.hidden_dim {
            o[r] += p.w2[r * p.hidden_dim + c] * h[c];
        }
    }
    let m = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = o.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

#[test]
fn forward_matches_reference() {
    let cfg = SwigConfig::new(48, 4, 3, InputType::Features, false).unwrap();
    let mut params = swig_init(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for b in params.b2.iter_mut().chain(params.b1.iter_mut()) {
        *b = rng.gen_range(-0.5..0.5);
    }
    for _ in 0..20 {
        let x: Vec<f64> = (0..48).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let got = swig_forward(&params, &x).unwrap();
        let want = reference_forward(&params, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(got.iter().all(|&w| w > 0.0));
    }
}

/// One sample, two models, four inputs, two hidden units (one active, one not).
///
/// With x = (1, 2, -1, 0.5):
///   z1 = 0.1 + 0.4 - 0.3 - 0.2 + 0.05 = 0.05 (active), z2 = -0.45 (inactive)
///   o  = (0.05 + 0.2, -0.05 - 0.1) = (0.25, -0.15)
///   w1 = 1 / (1 + e^-0.4), w2 = 1 - w1
///   F  = 0.3 w1 + 0.8 w2, L = -ln F
///   dL/dw_i = -P_i[y] / F, whose w-weighted mean is -1, so dL/do_i = w_i (1 - P_i[y] / F)
///   dW2[i] = dL/do_i * h, db2 = dL/do
///   dh1 = dL/do_1 * 1 + dL/do_2 * (-1); dW1 row 1 = dh1 * x, db1 = (dh1, 0); row 2 is zero.
#[test]
fn backward_matches_hand_derivation() {
    let cfg = SwigConfig::new(4, 2, 2, InputType::Features, false).unwrap();
    assert_eq!(cfg.hidden_dim(), 2);
    let params = SwigParams::from_parts(
        &cfg,
        vec![0.1, 0.2, 0.3, -0.4, -0.5, 0.1, 0.2, 0.3],
        vec![0.05, -0.1],
        vec![1.0, 2.0, -1.0, 0.5],
        vec![0.2, -0.1],
    )
    .unwrap();
    let x = [1.0, 2.0, -1.0, 0.5];
    let inputs = Matrix::new(1, 4, x.to_vec()).unwrap();
    let p1 = ProbMatrix::from_rows(&[[0.7, 0.3]]).unwrap();
    let p2 = ProbMatrix::from_rows(&[[0.2, 0.8]]).unwrap();
    let labels = LabelVector::new(vec![1], 2).unwrap();
    let probs = [&p1, &p2];
    let batch = Batch {
        inputs: &inputs,
        probs: &probs,
        anchor: 1,
        labels: &labels,
        indices: &[0],
    };
    let (loss, g) = swig_backward(&params, &cfg, &batch).unwrap();

    let w1 = 1.0 / (1.0 + (-0.4f64).exp());
    let w2 = 1.0 - w1;
    let f = 0.3 * w1 + 0.8 * w2;
    assert!((loss - (-f.ln())).abs() < 1e-14);
    assert!((loss - 0.6918357010377418).abs() < 1e-12);
    let do1 = w1 * (1.0 - 0.3 / f);
    let do2 = w2 * (1.0 - 0.8 / f);
    let h1 = 0.05;
    let dh1 = do1 - do2;
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-13);
    assert!(close(&g.b2, &[do1, do2]), "{:?}", g.b2);
    assert!(close(&g.w2, &[do1 * h1, 0.0, do2 * h1, 0.0]), "{:?}", g.w2);
    assert!(close(&g.b1, &[dh1, 0.0]), "{:?}", g.b1);
    let row1: Vec<f64> = x.iter().map(|v| dh1 * v).collect();
    assert!(close(&g.w1[..4], &row1), "{:?}", g.w1);
    assert!(close(&g.w1[4..], &[0.0; 4]));
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ProbMatrix {
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = row.iter().sum();
        data.extend(row.iter().map(|v| v / z));
    }
    ProbMatrix::new(n, k, data).unwrap()
}

/// Smallest |pre-activation| over the batch; perturbations stay off ReLU kinks when this is large.
fn min_pre_activation(p: &SwigParams, inputs: &Matrix) -> f64 {
    let mut min = f64::INFINITY;
    for x in inputs.iter_rows() {
        for r in 0..p.hidden_dim {
            let z = p.b1[r] + (0..p.input_dim).map(|c| p.w1[r * p.input_dim + c] * x[c]).sum::<f64>();
            min = min.min(z.abs());
        }
    }
    min
}

#[test]
fn gradients_match_finite_differences() {
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for case in 0..8u64 {
        let input_type = if case % 2 == 0 { InputType::Features } else { InputType::Logits };
        let anchor_fixed = case % 4 >= 2;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let (n_models, k, n) = (3, 4, 6);
        let probs: Vec<ProbMatrix> = (0..n_models).map(|_| random_probs(&mut rng, n, k)).collect();
        let refs: Vec<&ProbMatrix> = probs.iter().collect();
        let inputs = match input_type {
            InputType::Logits => {
                let models: Vec<ModelOutputs> = probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| ModelOutputs { name: format!("m{i}"), probs: p.clone(), features: None })
                    .collect();
                swig_inputs(&models, InputType::Logits).unwrap()
            }
            InputType::Features => {
                let d = 24;
                Matrix::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
            }
        };
        let cfg = SwigConfig::new(inputs.cols(), 2, n_models, input_type, anchor_fixed).unwrap();
        let labels = LabelVector::new((0..n).map(|_| rng.gen_range(0..k)).collect(), k).unwrap();
        let indices: Vec<usize> = (0..n).collect();
        let batch = Batch { inputs: &inputs, probs: &refs, anchor: 1, labels: &labels, indices: &indices };

        // random parameters well away from ReLU kinks
        let mut params = swig_init(&cfg, case).unwrap();
        let mut attempt = 0;
        loop {
            for v in params.w2.iter_mut().chain(params.b2.iter_mut()) {
                *v = rng.gen_range(-1.0..1.0);
            }
            for v in params.b1.iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
            if min_pre_activation(&params, &inputs) > 1e-2 {
                break;
            }
            attempt += 1;
            assert!(attempt < 1000);
        }

        let (_, grad) = swig_backward(&params, &cfg, &batch).unwrap();
        for _ in 0..20 {
            let i = rng.gen_range(0..params.num_params());
            let orig = params.get_flat(i);
            let mut plus = params.clone();
            plus.set_flat(i, orig + eps);
            let mut minus = params.clone();
            minus.set_flat(i, orig - eps);
            let numeric = (batch_loss(&plus, &cfg, &batch).unwrap() - batch_loss(&minus, &cfg, &batch).unwrap())
                / (2.0 * eps);
            let analytic = grad.get_flat(i);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "case {case} coord {i}: analytic {analytic} numeric {numeric}");
        }
    }
    assert!(worst < 1e-4);
}

#[test]
fn zero_head_on_identical_models_has_flat_output_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_probs(&mut rng, 8, 5);
    let probs = [&p, &p, &p];
    let inputs = Matrix::new(8, 16, (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels = LabelVector::new((0..8).map(|i| i % 5).collect(), 5).unwrap();
    let indices: Vec<usize> = (0..8).collect();
    for anchor_fixed in [false, true] {
        let cfg = SwigConfig::new(16, 4, 3, InputType::Features, anchor_fixed).unwrap();
        let mut params = swig_init(&cfg, 2).unwrap();
        params.w2.iter_mut().for_each(|v| *v = 0.0);
        let batch = Batch { inputs: &inputs, probs: &probs, anchor: 2, labels: &labels, indices: &indices };
        let (_, g) = swig_backward(&params, &cfg, &batch).unwrap();
        assert!(g.w2.iter().chain(&g.b2).all(|v| v.abs() < 1e-15), "{:?}", g.b2);
    }
}

fn separable_train_set(data: &EnsembleData) -> (Matrix, SwigConfig) {
    let inputs = swig_inputs(data.models(), InputType::Features).unwrap();
    let cfg = SwigConfig::new(inputs.cols(), 32, data.models().len(), InputType::Features, false).unwrap();
    (inputs, cfg)
}

#[test]
fn separable_task_is_learned() {
    let data = separable_gating(11, 1024, 8, 4, 64);
    let (inputs, cfg) = separable_train_set(&data);
    let probs = data.prob_refs();
    let set = TrainSet { inputs: &inputs, probs: &probs, anchor: data.anchor(), labels: data.labels() };
    for seed in 1..=3 {
        let train = TrainConfig { seed, ..TrainConfig::default() };
        let out = swig_train(&set, &cfg, &train).unwrap();
        let fused = t_predict(&out.params, &cfg, &inputs, &probs, data.anchor()).unwrap();
        let acc = accuracy(&fused, data.labels()).unwrap();
        assert!(acc >= 0.99, "seed {seed}: accuracy {acc}");
        assert_eq!(out.epoch_losses.len(), 5);
        assert!(out.epoch_losses[4] < out.epoch_losses[0], "seed {seed}: {:?}", out.epoch_losses);
    }
}

#[test]
fn separable_task_target_is_reachable() {
    // fusing with a one-hot weight on each sample's correct model is always right
    let data = separable_gating(11, 1024, 8, 4, 64);
    let n = data.num_samples();
    let mut correct = 0;
    for s in 0..n {
        let y = data.labels().values()[s];
        correct += data.models().iter().any(|m| vlme_core::scoring::argmax(m.probs.row(s)) == y) as usize;
    }
    assert_eq!(correct, n);
}

#[test]
fn training_is_bit_reproducible() {
    let data = separable_gating(4, 300, 6, 3, 32);
    let (inputs, cfg) = separable_train_set(&data);
    let probs = data.prob_refs();
    let set = TrainSet { inputs: &inputs, probs: &probs, anchor: data.anchor(), labels: data.labels() };
    let train = TrainConfig { seed: 9, batch_size: 32, ..TrainConfig::default() };
    let a = swig_train(&set, &cfg, &train).unwrap();
    let b = swig_train(&set, &cfg, &train).unwrap();
    for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let other = swig_train(&set, &cfg, &TrainConfig { seed: 10, ..train }).unwrap();
    assert_ne!(a.params, other.params);

    let zero = TrainConfig { epochs: 0, ..train };
    assert!(swig_train(&set, &cfg, &zero).is_err());
}

// ---------------------------------------------------------------------------
// protocols

#[test]
fn k_shot_seeds_give_distinct_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let labels = LabelVector::new((0..2000).map(|_| rng.gen_range(0..10)).collect(), 10).unwrap();
    let base: Vec<usize> = (0..5).collect();
    let sets: Vec<Vec<usize>> = (1..=3).map(|s| sample_k_shot(&labels, &base, 16, s).unwrap().indices).collect();
    for s in &sets {
        assert_eq!(s.len(), 16 * base.len());
        assert!(s.iter().all(|&i| labels.values()[i] < 5));
        for c in &base {
            assert_eq!(s.iter().filter(|&&i| labels.values()[i] == *c).count(), 16);
        }
    }
    assert_ne!(sets[0], sets[1]);
    assert_ne!(sets[1], sets[2]);
    assert_ne!(sets[0], sets[2]);
}

fn identical_models(seed: u64, n: usize, k: usize) -> EnsembleData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let p = random_probs(&mut rng, n, k);
    let models = (0..3)
        .map(|i| ModelOutputs { name: format!("m{i}"), probs: p.clone(), features: None })
        .collect();
    EnsembleData::new(
        "same".into(),
        (0..k).map(|c| format!("c{c}")).collect(),
        LabelVector::new(labels, k).unwrap(),
        models,
        2,
    )
    .unwrap()
}

#[test]
fn base_to_new_zero_shot_with_identical_models() {
    let data = identical_models(3, 400, 6);
    let report = run_base_to_new(&data, &data, Strategy::Zs, &FitOptions::default(), &[1, 2, 3], 16, &vlme_core::training_free::Sequential).unwrap();
    let block = report.datasets[0].averaged;
    // a single model scored on each class subset
    let single = |classes: &[usize]| {
        let sub = data.restrict_classes(classes).unwrap();
        100.0 * accuracy(&sub.models()[0].probs, sub.labels()).unwrap()
    };
    assert_eq!(block.base_acc, Some(single(&[0, 1, 2])));
    assert_eq!(block.new_acc, Some(single(&[3, 4, 5])));
}

#[test]
fn base_to_new_averages_per_seed_blocks() {
    let export = synthetic_export(5, "synthetic", 600, 8, &[12, 16, 20]);
    let data = export.to_ensemble();
    let seeds = [1, 2, 3];
    let opts = FitOptions { search_mode: SearchMode::Exhaustive, ..FitOptions::default() };
    let report = run_base_to_new(&data, &data, Strategy::Tf, &opts, &seeds, 16, &vlme_core::training_free::Sequential).unwrap();
    let ds = &report.datasets[0];
    assert_eq!(ds.per_seed.len(), 3);
    let mean = |f: fn(&MetricBlock) -> Option<f64>| ds.per_seed.iter().map(|b| f(b).unwrap()).sum::<f64>() / 3.0;
    assert_eq!(ds.averaged.base_acc, Some(mean(|b| b.base_acc)));
    assert_eq!(ds.averaged.new_acc, Some(mean(|b| b.new_acc)));
    let hm = harmonic_mean(ds.averaged.base_acc.unwrap(), ds.averaged.new_acc.unwrap()).unwrap();
    assert_eq!(ds.averaged.hm, Some(hm));
}

#[test]
fn static_search_beats_grid_floor_on_search_set() {
    let inst = monotone_instance();
    let models = vec![
        ModelOutputs { name: "weak".into(), probs: inst.weak[0].clone(), features: None },
        ModelOutputs { name: "anchor".into(), probs: inst.anchor.clone(), features: None },
    ];
    let data = EnsembleData::new("mono".into(), vec!["a".into(), "b".into()], inst.labels.clone(), models, 1).unwrap();
    let fitted = fit(&data, Strategy::Tf, &FitOptions::default(), 1, &vlme_core::training_free::Sequential).unwrap();
    let acc = fitted.evaluate(&data).unwrap();
    let anchor_only = 100.0 * accuracy(&inst.anchor, &inst.labels).unwrap();
    let floor = FittedEnsemble::from_static_weights(&data, vlme_core::training_free::StaticWeights { values: vec![0.1] })
        .unwrap()
        .evaluate(&data)
        .unwrap();
    assert!(acc >= floor);
    assert!(acc >= anchor_only);
    assert_eq!(acc, 100.0);
}

#[test]
fn uniform_static_weights_transfer_like_the_mean_ensemble() {
    let source = synthetic_export(8, "source", 300, 6, &[8, 8, 8]).to_ensemble();
    let target = synthetic_export(9, "target", 250, 9, &[8, 8, 8]).to_ensemble();
    let fitted = FittedEnsemble::from_static_weights(&source, vlme_core::training_free::StaticWeights { values: vec![1.0, 1.0] }).unwrap();
    let report = run_cross_dataset(&[(1, fitted)], std::slice::from_ref(&target)).unwrap();
    let mean = mean_ensemble_predict(&target.prob_refs()).unwrap();
    let want = 100.0 * accuracy(&mean, target.labels()).unwrap();
    assert_eq!(report.datasets[0].averaged.acc, Some(want));
}

#[test]
fn logits_gating_does_not_transfer() {
    let source = synthetic_export(8, "source", 300, 6, &[8, 8, 8]).to_ensemble();
    let target = synthetic_export(9, "target", 100, 9, &[8, 8, 8]).to_ensemble();
    let opts = FitOptions {
        input_type: InputType::Logits,
        downsample: 2,
        ..FitOptions::default()
    };
    let fitted = fit(&source, Strategy::Tune, &opts, 1, &vlme_core::training_free::Sequential).unwrap();
    assert!(run_cross_dataset(&[(1, fitted)], &[target]).is_err());
}

#[test]
fn feature_gating_transfers_across_class_counts() {
    let source = synthetic_export(8, "source", 300, 6, &[16, 16, 32]).to_ensemble();
    let target = synthetic_export(9, "target", 100, 9, &[16, 16, 32]).to_ensemble();
    let fitted = fit(&source, Strategy::Tune, &FitOptions::default(), 1, &vlme_core::training_free::Sequential).unwrap();
    let report = run_cross_dataset(&[(1, fitted)], &[target]).unwrap();
    assert!(report.datasets[0].averaged.acc.is_some());
}

#[test]
fn identical_variant_reproduces_source_accuracy() {
    let data = synthetic_export(2, "src", 300, 5, &[8, 12]).to_ensemble();
    let fitted = FittedEnsemble::unfitted(Strategy::Zs, &data).unwrap();
    let direct = fitted.evaluate(&data).unwrap();
    let report = run_domain_generalization(&[(1, fitted.clone())], data.class_names(), std::slice::from_ref(&data)).unwrap();
    assert_eq!(report.datasets[0].averaged.acc, Some(direct));
    let zs = zs_ensemble_predict(&data.prob_refs(), data.anchor()).unwrap();
    let correct = correct_count(&zs, data.labels()).unwrap() as f64;
    assert!((direct - 100.0 * correct / data.num_samples() as f64).abs() < 1e-12);

    let other = synthetic_export(2, "other", 300, 6, &[8, 12]).to_ensemble();
    assert!(run_domain_generalization(&[(1, fitted)], data.class_names(), &[other]).is_err());
}
