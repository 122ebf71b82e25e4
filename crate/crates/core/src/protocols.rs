//! Evaluation protocols: zero-shot, base-to-new, cross-dataset and domain
//! generalization, each averaged over seeds.
//!
//! Accuracies in reports are percentages.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::EnsembleData;
use crate::error::{Error, Result};
use crate::matrix::{LabelVector, ScoreMatrix};
use crate::scoring::accuracy;
use crate::swig::{swig_inputs, t_predict, InputType, SwigConfig, SwigParams, DEFAULT_DOWNSAMPLE};
use crate::train::{swig_train, TrainConfig, TrainSet};
use crate::training_free::{
    coordinate_greedy, exhaustive_search_with, tf_predict, Grid, SearchExecutor, SearchMode,
    SearchProblem, SearchResult, StaticWeights, DEFAULT_BUDGET,
};
use crate::zero_shot::{caw_all_predict, mean_ensemble_predict, split_anchor, zs_ensemble_predict};

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
pub const DEFAULT_SHOTS: usize = 16;

// stream of the shot sampler, kept apart from the training streams of the same seed
const SHOT_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassSplit {
    pub base: Vec<usize>,
    pub new: Vec<usize>,
}

/// First `ceil(K/2)` classes are base, the rest are new.
pub fn base_new_split(num_classes: usize) -> Result<ClassSplit> {
    if num_classes < 2 {
        return Err(Error::Config(alloc::format!(
            "base/new split needs at least 2 classes, got {num_classes}"
        )));
    }
    let cut = num_classes.div_ceil(2);
    Ok(ClassSplit {
        base: (0..cut).collect(),
        new: (cut..num_classes).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShotSample {
    /// Sorted, unique sample indices.
    pub indices: Vec<usize>,
    pub shots_per_class: usize,
    pub seed: u64,
    /// Requested classes that had no samples at all.
    pub skipped_classes: Vec<usize>,
}

/// Draws `min(k, available)` samples per listed class without replacement.
pub fn sample_k_shot(labels: &LabelVector, classes: &[usize], k: usize, seed: u64) -> Result<ShotSample> {
    if k == 0 {
        return Err(Error::Config("shots per class must be at least 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); labels.num_classes()];
    for (i, &y) in labels.values().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHOT_STREAM);
    let mut indices = Vec::new();
    let mut skipped = Vec::new();
    for &c in classes {
        let members = by_class.get_mut(c).ok_or(Error::LabelOutOfRange {
            index: 0,
            label: c,
            num_classes: labels.num_classes(),
        })?;
        if members.is_empty() {
            skipped.push(c);
            continue;
        }
        let take = k.min(members.len());
        let (chosen, _) = members.partial_shuffle(&mut rng, take);
        indices.extend_from_slice(chosen);
    }
    indices.sort_unstable();
    indices.dedup();
    Ok(ShotSample {
        indices,
        shots_per_class: k,
        seed,
        skipped_classes: skipped,
    })
}

/// `2ab / (a + b)`. Works on fractions or percentages alike.
pub fn harmonic_mean(a: f64, b: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
        return Err(Error::Config(alloc::format!(
            "harmonic mean needs non-negative finite inputs, got {a} and {b}"
        )));
    }
    if a + b == 0.0 {
        return Err(Error::Config("harmonic mean of two zeros is undefined".into()));
    }
    Ok(2.0 * a * b / (a + b))
}

/// Metrics of one evaluation, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricBlock {
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub base_acc: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub new_acc: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub hm: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub acc: Option<f64>,
}

impl MetricBlock {
    pub fn accuracy(acc: f64) -> Self {
        Self {
            acc: Some(acc),
            ..Self::default()
        }
    }

    pub fn base_new(base: f64, new: f64) -> Result<Self> {
        Ok(Self {
            base_acc: Some(base),
            new_acc: Some(new),
            hm: Some(harmonic_mean(base, new)?),
            acc: None,
        })
    }

    /// Mean of base, new and plain accuracy; the HM is recomputed from the
    /// averaged base and new accuracies.
    pub fn average(blocks: &[MetricBlock]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Empty("metric blocks to average"));
        }
        fn mean(blocks: &[MetricBlock], f: impl Fn(&MetricBlock) -> Option<f64>) -> Result<Option<f64>> {
            let present = blocks.iter().filter(|b| f(b).is_some()).count();
            if present == 0 {
                return Ok(None);
            }
            if present != blocks.len() {
                return Err(Error::Config("cannot average blocks with different metrics".into()));
            }
            Ok(Some(blocks.iter().filter_map(&f).sum::<f64>() / blocks.len() as f64))
        }
        let base_acc = mean(blocks, |b| b.base_acc)?;
        let new_acc = mean(blocks, |b| b.new_acc)?;
        let acc = mean(blocks, |b| b.acc)?;
        let hm = match (base_acc, new_acc) {
            (Some(b), Some(n)) => Some(harmonic_mean(b, n)?),
            _ => None,
        };
        Ok(Self {
            base_acc,
            new_acc,
            hm,
            acc,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Strategy {
    /// Confidence-aware weak models plus the anchor at weight 1.
    Zs,
    Mean,
    CawAll,
    Tf,
    Tune,
}

impl Strategy {
    pub fn needs_fit(self) -> bool {
        matches!(self, Strategy::Tf | Strategy::Tune)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Zs => "zs",
            Strategy::Mean => "mean",
            Strategy::CawAll => "caw_all",
            Strategy::Tf => "tf",
            Strategy::Tune => "tune",
        })
    }
}

impl core::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zs" => Ok(Self::Zs),
            "mean" => Ok(Self::Mean),
            "caw_all" | "caw-all" => Ok(Self::CawAll),
            "tf" => Ok(Self::Tf),
            "tune" => Ok(Self::Tune),
            other => Err(Error::Config(alloc::format!("unknown strategy {other:?}"))),
        }
    }
}

/// Knobs of the fitted strategies.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub grid: Grid,
    pub search_mode: SearchMode,
    pub sweeps: usize,
    pub budget: u64,
    pub downsample: usize,
    pub input_type: InputType,
    pub anchor_fixed: bool,
    /// The seed field is overwritten by the protocol seed.
    pub train: TrainConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            search_mode: SearchMode::Exhaustive,
            sweeps: 10,
            budget: DEFAULT_BUDGET,
            downsample: DEFAULT_DOWNSAMPLE,
            input_type: InputType::Features,
            anchor_fixed: false,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedKind {
    Zs,
    Mean,
    CawAll,
    Tf {
        weights: StaticWeights,
        /// Present when the weights came from a search in this process.
        search: Option<SearchResult>,
    },
    Tune {
        config: SwigConfig,
        params: SwigParams,
        epoch_losses: Vec<f64>,
    },
}

/// A strategy ready to score any split with the same model list.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnsemble {
    pub model_names: Vec<String>,
    pub anchor: usize,
    pub kind: FittedKind,
}

impl FittedEnsemble {
    pub fn strategy(&self) -> Strategy {
        match self.kind {
            FittedKind::Zs => Strategy::Zs,
            FittedKind::Mean => Strategy::Mean,
            FittedKind::CawAll => Strategy::CawAll,
            FittedKind::Tf { .. } => Strategy::Tf,
            FittedKind::Tune { .. } => Strategy::Tune,
        }
    }

    pub fn unfitted(strategy: Strategy, data: &EnsembleData) -> Result<Self> {
        let kind = match strategy {
            Strategy::Zs => FittedKind::Zs,
            Strategy::Mean => FittedKind::Mean,
            Strategy::CawAll => FittedKind::CawAll,
            other => {
                return Err(Error::Config(alloc::format!(
                    "strategy {other} must be fitted on a labeled split"
                )))
            }
        };
        Ok(Self {
            model_names: data.model_names().into_iter().map(String::from).collect(),
            anchor: data.anchor(),
            kind,
        })
    }

    pub fn from_static_weights(data: &EnsembleData, weights: StaticWeights) -> Result<Self> {
        if weights.values.len() + 1 != data.models().len() {
            return Err(Error::ShapeMismatch {
                what: "static weights vs weak models",
                expected: data.models().len() - 1,
                found: weights.values.len(),
            });
        }
        Ok(Self {
            model_names: data.model_names().into_iter().map(String::from).collect(),
            anchor: data.anchor(),
            kind: FittedKind::Tf { weights, search: None },
        })
    }

    fn check_compatible(&self, data: &EnsembleData) -> Result<()> {
        let names = data.model_names();
        if names.len() != self.model_names.len()
            || names.iter().zip(&self.model_names).any(|(a, b)| *a != b.as_str())
        {
            return Err(Error::Config(alloc::format!(
                "model list {:?} does not match the fitted list {:?}",
                names,
                self.model_names
            )));
        }
        if data.anchor() != self.anchor {
            return Err(Error::Config(alloc::format!(
                "anchor index {} does not match the fitted anchor {}",
                data.anchor(),
                self.anchor
            )));
        }
        Ok(())
    }

    /// Fused scores for every sample of `data`.
    pub fn predict(&self, data: &EnsembleData) -> Result<ScoreMatrix> {
        self.check_compatible(data)?;
        let probs = data.prob_refs();
        match &self.kind {
            FittedKind::Zs => zs_ensemble_predict(&probs, data.anchor()),
            FittedKind::Mean => mean_ensemble_predict(&probs),
            FittedKind::CawAll => caw_all_predict(&probs),
            FittedKind::Tf { weights, .. } => {
                let (weak, anchor) = split_anchor(&probs, data.anchor())?;
                tf_predict(weights, &weak, anchor)
            }
            FittedKind::Tune { config, params, .. } => {
                let inputs = swig_inputs(data.models(), config.input_type)?;
                t_predict(params, config, &inputs, &probs, data.anchor())
            }
        }
    }

    /// Top-1 accuracy on `data`, in percent.
    pub fn evaluate(&self, data: &EnsembleData) -> Result<f64> {
        Ok(100.0 * accuracy(&self.predict(data)?, data.labels())?)
    }
}

/// Fits `strategy` on a labeled split. `seed` drives all training randomness.
pub fn fit(
    data: &EnsembleData,
    strategy: Strategy,
    opts: &FitOptions,
    seed: u64,
    executor: &dyn SearchExecutor,
) -> Result<FittedEnsemble> {
    let model_names: Vec<String> = data.model_names().into_iter().map(String::from).collect();
    let probs = data.prob_refs();
    let kind = match strategy {
        Strategy::Zs | Strategy::Mean | Strategy::CawAll => {
            return FittedEnsemble::unfitted(strategy, data);
        }
        Strategy::Tf => {
            let (weak, anchor) = split_anchor(&probs, data.anchor())?;
            let problem = SearchProblem::new(weak, anchor, data.labels(), &opts.grid)?;
            let result = match opts.search_mode {
                SearchMode::Exhaustive => exhaustive_search_with(&problem, opts.budget, executor)?,
                SearchMode::CoordinateGreedy => coordinate_greedy(&problem, opts.sweeps)?,
            };
            FittedKind::Tf {
                weights: result.weights.clone(),
                search: Some(result),
            }
        }
        Strategy::Tune => {
            let inputs = swig_inputs(data.models(), opts.input_type)?;
            let config = SwigConfig::new(
                inputs.cols(),
                opts.downsample,
                data.models().len(),
                opts.input_type,
                opts.anchor_fixed,
            )?;
            let train = TrainConfig { seed, ..opts.train };
            let set = TrainSet {
                inputs: &inputs,
                probs: &probs,
                anchor: data.anchor(),
                labels: data.labels(),
            };
            let outcome = swig_train(&set, &config, &train)?;
            FittedKind::Tune {
                config,
                params: outcome.params,
                epoch_losses: outcome.epoch_losses,
            }
        }
    };
    Ok(FittedEnsemble {
        model_names,
        anchor: data.anchor(),
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProtocolKind {
    ZeroShot,
    BaseToNew,
    CrossDataset,
    DomainGeneralization,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::ZeroShot => "zero_shot",
            ProtocolKind::BaseToNew => "base_to_new",
            ProtocolKind::CrossDataset => "cross_dataset",
            ProtocolKind::DomainGeneralization => "domain_generalization",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetResult {
    pub dataset: String,
    pub per_seed: Vec<MetricBlock>,
    pub averaged: MetricBlock,
}

impl DatasetResult {
    fn new(dataset: String, per_seed: Vec<MetricBlock>) -> Result<Self> {
        let averaged = MetricBlock::average(&per_seed)?;
        Ok(Self {
            dataset,
            per_seed,
            averaged,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub protocol: ProtocolKind,
    pub strategy: Strategy,
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetResult>,
    /// Mean over datasets of the seed-averaged blocks.
    pub average: MetricBlock,
}

impl EvalReport {
    fn new(protocol: ProtocolKind, strategy: Strategy, seeds: &[u64], datasets: Vec<DatasetResult>) -> Result<Self> {
        let avg: Vec<MetricBlock> = datasets.iter().map(|d| d.averaged).collect();
        Ok(Self {
            protocol,
            strategy,
            seeds: seeds.to_vec(),
            datasets,
            average: MetricBlock::average(&avg)?,
        })
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        Err(Error::Empty("seed list"))
    } else {
        Ok(())
    }
}

/// Zero-shot evaluation of an unfitted strategy on full test sets.
pub fn run_zero_shot(datasets: &[EnsembleData], strategy: Strategy) -> Result<EvalReport> {
    if datasets.is_empty() {
        return Err(Error::Empty("dataset list"));
    }
    let results = datasets
        .iter()
        .map(|d| {
            let acc = FittedEnsemble::unfitted(strategy, d)?.evaluate(d)?;
            DatasetResult::new(d.dataset_name().to_string(), alloc::vec![MetricBlock::accuracy(acc)])
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(ProtocolKind::ZeroShot, strategy, &[], results)
}

fn check_same_class_space(a: &EnsembleData, b: &EnsembleData) -> Result<()> {
    if a.class_names() != b.class_names() {
        return Err(Error::Config(alloc::format!(
            "class space of {:?} ({} classes) does not match {:?} ({} classes)",
            a.dataset_name(),
            a.num_classes(),
            b.dataset_name(),
            b.num_classes()
        )));
    }
    Ok(())
}

/// Few-shot fitting split: `shots` samples per class (all samples when 0).
pub fn few_shot_split(data: &EnsembleData, shots: usize, seed: u64) -> Result<EnsembleData> {
    if shots == 0 {
        return Ok(data.clone());
    }
    let classes: Vec<usize> = (0..data.num_classes()).collect();
    let sample = sample_k_shot(data.labels(), &classes, shots, seed)?;
    data.select_samples(&sample.indices)
}

/// Base-to-new generalization.
///
/// `train` is the training pool and `test` the test set, both over the full
/// class space. Per seed the strategy is fitted on a `shots`-per-class sample
/// of the base classes of `train`, then evaluated on the base and new classes
/// of `test` separately.
pub fn run_base_to_new(
    train: &EnsembleData,
    test: &EnsembleData,
    strategy: Strategy,
    opts: &FitOptions,
    seeds: &[u64],
    shots: usize,
    executor: &dyn SearchExecutor,
) -> Result<EvalReport> {
    check_seeds(seeds)?;
    check_same_class_space(train, test)?;
    let split = base_new_split(test.num_classes())?;
    let base_test = test.restrict_classes(&split.base)?;
    let new_test = test.restrict_classes(&split.new)?;
    let base_train = if strategy.needs_fit() {
        Some(train.restrict_classes(&split.base)?)
    } else {
        None
    };

    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let fitted = match &base_train {
            Some(pool) => fit(&few_shot_split(pool, shots, seed)?, strategy, opts, seed, executor)?,
            None => FittedEnsemble::unfitted(strategy, test)?,
        };
        per_seed.push(MetricBlock::base_new(
            fitted.evaluate(&base_test)?,
            fitted.evaluate(&new_test)?,
        )?);
    }
    let result = DatasetResult::new(test.dataset_name().to_string(), per_seed)?;
    EvalReport::new(ProtocolKind::BaseToNew, strategy, seeds, alloc::vec![result])
}

/// Fits once per seed on a few-shot sample of `source`.
pub fn fit_per_seed(
    source: &EnsembleData,
    strategy: Strategy,
    opts: &FitOptions,
    seeds: &[u64],
    shots: usize,
    executor: &dyn SearchExecutor,
) -> Result<Vec<(u64, FittedEnsemble)>> {
    check_seeds(seeds)?;
    seeds
        .iter()
        .map(|&seed| {
            let split = if strategy.needs_fit() {
                few_shot_split(source, shots, seed)?
            } else {
                source.clone()
            };
            Ok((seed, fit(&split, strategy, opts, seed, executor)?))
        })
        .collect()
}

fn check_transferable(fitted: &[(u64, FittedEnsemble)]) -> Result<Strategy> {
    let first = fitted.first().ok_or(Error::Empty("fitted artifacts"))?;
    for (_, f) in fitted {
        if let FittedKind::Tune { config, .. } = &f.kind {
            if config.input_type == InputType::Logits {
                return Err(Error::Config(
                    "a gating network on probability inputs depends on the source class count \
                     and cannot transfer across datasets"
                        .into(),
                ));
            }
        }
    }
    Ok(first.1.strategy())
}

fn evaluate_targets(
    protocol: ProtocolKind,
    fitted: &[(u64, FittedEnsemble)],
    targets: &[EnsembleData],
) -> Result<EvalReport> {
    let strategy = check_transferable(fitted)?;
    if targets.is_empty() {
        return Err(Error::Empty("target dataset list"));
    }
    let seeds: Vec<u64> = fitted.iter().map(|(s, _)| *s).collect();
    let results = targets
        .iter()
        .map(|t| {
            let per_seed = fitted
                .iter()
                .map(|(_, f)| Ok(MetricBlock::accuracy(f.evaluate(t)?)))
                .collect::<Result<Vec<_>>>()?;
            DatasetResult::new(t.dataset_name().to_string(), per_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(protocol, strategy, &seeds, results)
}

/// Applies source-fitted artifacts to target datasets with their own label spaces.
pub fn run_cross_dataset(fitted: &[(u64, FittedEnsemble)], targets: &[EnsembleData]) -> Result<EvalReport> {
    evaluate_targets(ProtocolKind::CrossDataset, fitted, targets)
}

/// Applies source-fitted artifacts to distribution-shifted variants that share
/// the source label space.
pub fn run_domain_generalization(
    fitted: &[(u64, FittedEnsemble)],
    source_classes: &[String],
    variants: &[EnsembleData],
) -> Result<EvalReport> {
    for v in variants {
        if v.class_names() != source_classes {
            return Err(Error::Config(alloc::format!(
                "variant {:?} does not share the source label space",
                v.dataset_name()
            )));
        }
    }
    evaluate_targets(ProtocolKind::DomainGeneralization, fitted, variants)
}
