//! Synthetic datasets with known structure, for tests, examples and benchmarks.
//!
//! Everything is generated from an explicit seed with ChaCha8.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{EnsembleData, ModelOutputs};
use crate::matrix::{ClassEmbeddings, FeatureMatrix, LabelVector, Matrix, ProbMatrix};
use crate::scoring::{probs_from_features, stable_softmax};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("class_{c}")).collect()
}

/// Weak models, anchor and labels for a grid-search instance.
#[derive(Debug, Clone)]
pub struct SearchInstance {
    pub weak: Vec<ProbMatrix>,
    pub anchor: ProbMatrix,
    pub labels: LabelVector,
}

/// Random instance where every model is noisy but better than chance.
///
/// Each model's logits are Gaussian noise plus a bump of random height on the
/// true class.
pub fn random_search_instance(seed: u64, n: usize, k: usize, weak: usize) -> SearchInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let mut model = |strength: f64| {
        let mut data = Vec::with_capacity(n * k);
        let mut logits = alloc::vec![0.0; k];
        for &y in &labels {
            for (c, l) in logits.iter_mut().enumerate() {
                *l = 1.5 * gaussian(&mut rng) + if c == y { strength * rng.gen::<f64>() } else { 0.0 };
            }
            data.extend(stable_softmax(&logits).expect("finite logits"));
        }
        ProbMatrix::new(n, k, data).expect("softmax rows")
    };
    let weak_models = (0..weak).map(|_| model(2.0)).collect();
    let anchor = model(2.5);
    SearchInstance {
        weak: weak_models,
        anchor,
        labels: LabelVector::new(labels, k).expect("labels in range"),
    }
}

/// One weak model that is right exactly where the anchor is wrong.
///
/// Ten samples are misclassified by the anchor with margins 0.05, 0.15, ...,
/// 0.95; the weak model is one-hot on the truth there, so weight `w` repairs
/// every sample whose margin is below `w`. On the other ten samples the
/// anchor is right by 0.8 and the weak model is wrong by only 0.2, which no
/// weight up to 1.0 can flip. Search-set accuracy therefore rises strictly
/// along the default grid and peaks at 1.0.
pub fn monotone_instance() -> SearchInstance {
    let mut weak = Vec::new();
    let mut anchor = Vec::new();
    let mut labels = Vec::new();
    for i in 0..10 {
        let margin = 0.05 + 0.1 * i as f64;
        anchor.push([(1.0 - margin) / 2.0, (1.0 + margin) / 2.0]);
        weak.push([1.0, 0.0]);
        labels.push(0);
    }
    for _ in 0..10 {
        anchor.push([0.9, 0.1]);
        weak.push([0.4, 0.6]);
        labels.push(0);
    }
    SearchInstance {
        weak: alloc::vec![ProbMatrix::from_rows(&weak).expect("rows")],
        anchor: ProbMatrix::from_rows(&anchor).expect("rows"),
        labels: LabelVector::new(labels, 2).expect("labels"),
    }
}

/// Gating task where exactly one model is right in each region of feature space.
///
/// A sample's region `r` is drawn uniformly from the models. Model `r`'s
/// feature block carries a constant signal of norm 20 (about the norm of raw
/// image features), the other blocks carry small noise only. Model `r` puts 0.85 on the true class; every other model puts
/// 0.85 on its own distinct wrong class. Fusion is correct exactly when the
/// region's model receives the largest weight.
pub fn separable_gating(seed: u64, n: usize, k: usize, models: usize, block_dim: usize) -> EnsembleData {
    assert!(k > models, "need a distinct wrong class per model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let regions: Vec<usize> = (0..n).map(|_| rng.gen_range(0..models)).collect();
    let signal = 20.0 / libm::sqrt(block_dim as f64);
    let noise = 0.1 / libm::sqrt(block_dim as f64);

    let mut outputs = Vec::with_capacity(models);
    for m in 0..models {
        let mut probs = Vec::with_capacity(n * k);
        let mut feats = Vec::with_capacity(n * block_dim);
        for (&y, &r) in labels.iter().zip(&regions) {
            let target = if r == m { y } else { (y + 1 + m) % k };
            let rest = 0.15 / (k - 1) as f64;
            probs.extend((0..k).map(|c| if c == target { 0.85 } else { rest }));
            for _ in 0..block_dim {
                let base = if r == m { signal } else { 0.0 };
                feats.push(base + noise * gaussian(&mut rng));
            }
        }
        outputs.push(ModelOutputs {
            name: format!("model_{m}"),
            probs: ProbMatrix::new(n, k, probs).expect("rows"),
            features: Some(FeatureMatrix::new(Matrix::new(n, block_dim, feats).expect("shape")).expect("finite")),
        });
    }
    EnsembleData::new(
        String::from("separable"),
        class_names(k),
        LabelVector::new(labels, k).expect("labels"),
        outputs,
        models - 1,
    )
    .expect("consistent fixture")
}

/// Raw per-model tensors of a synthetic "vision-language" export.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    pub name: String,
    pub features: FeatureMatrix,
    pub class_embeddings: ClassEmbeddings,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticExport {
    pub dataset_name: String,
    pub class_names: Vec<String>,
    pub labels: LabelVector,
    pub models: Vec<SyntheticModel>,
    /// Index of the strongest model.
    pub anchor: usize,
}

impl SyntheticExport {
    /// Scores every model and bundles the result.
    pub fn to_ensemble(&self) -> EnsembleData {
        let models = self
            .models
            .iter()
            .map(|m| ModelOutputs {
                name: m.name.clone(),
                probs: probs_from_features(&m.features, &m.class_embeddings, m.temperature)
                    .expect("valid synthetic model"),
                features: Some(m.features.clone()),
            })
            .collect();
        EnsembleData::new(
            self.dataset_name.clone(),
            self.class_names.clone(),
            self.labels.clone(),
            models,
            self.anchor,
        )
        .expect("consistent synthetic export")
    }
}

/// Models of increasing quality over a shared label set.
///
/// Every class has a latent prototype; model `i` sees a random linear view of
/// it plus noise, with less noise for later models. The last model is the
/// anchor. `dims` gives each model's feature width.
pub fn synthetic_export(seed: u64, name: &str, n: usize, k: usize, dims: &[usize]) -> SyntheticExport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = 16;
    let protos: Vec<f64> = (0..k * latent).map(|_| gaussian(&mut rng)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    // per-sample latent code shared by all models
    let codes: Vec<f64> = labels
        .iter()
        .flat_map(|&y| protos[y * latent..(y + 1) * latent].to_vec())
        .zip(core::iter::repeat_with(|| 0.9 * gaussian(&mut rng)))
        .map(|(p, e)| p + e)
        .collect();

    let count = dims.len();
    let mut models = Vec::with_capacity(count);
    for (i, &d) in dims.iter().enumerate() {
        let proj: Vec<f64> = (0..d * latent).map(|_| gaussian(&mut rng) / libm::sqrt(latent as f64)).collect();
        let project = |v: &[f64], out: &mut Vec<f64>| {
            for r in 0..d {
                out.push(proj[r * latent..(r + 1) * latent].iter().zip(v).map(|(a, b)| a * b).sum());
            }
        };
        let mut emb = Vec::with_capacity(k * d);
        for c in 0..k {
            project(&protos[c * latent..(c + 1) * latent], &mut emb);
        }
        let noise = 1.6 - 0.9 * i as f64 / (count.max(2) - 1) as f64;
        let mut feats = Vec::with_capacity(n * d);
        for s in 0..n {
            let start = feats.len();
            project(&codes[s * latent..(s + 1) * latent], &mut feats);
            for v in &mut feats[start..] {
                *v += noise * gaussian(&mut rng);
            }
        }
        models.push(SyntheticModel {
            name: format!("model_{i}"),
            features: FeatureMatrix::new(Matrix::new(n, d, feats).expect("shape")).expect("finite"),
            class_embeddings: ClassEmbeddings::new(Matrix::new(k, d, emb).expect("shape")).expect("finite"),
            temperature: 0.05 + 0.01 * i as f64,
        });
    }
    SyntheticExport {
        dataset_name: String::from(name),
        class_names: class_names(k),
        labels: LabelVector::new(labels, k).expect("labels"),
        models,
        anchor: count - 1,
    }
}
