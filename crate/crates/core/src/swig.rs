//! Sample-aware weight generator: a two-layer gating network.
//!
//! ```text
//! h = relu(W1 x + b1)          x: concatenated per-model inputs, length f_dim
//! o = W2 h + b2                h: length f_dim / downsample
//! w = softmax(o)               w: one weight per gated model
//! ```
//!
//! In free mode every model is gated and the fused row is the convex mixture
//! `sum_i w_i P_i`. In anchor-fixed mode only the weak models are gated and
//! the anchor is added with weight 1, as in the other two strategies.

use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ModelOutputs;
use crate::error::{Error, Result};
use crate::matrix::{LabelVector, Matrix, ProbMatrix, ScoreMatrix};
use crate::scoring::softmax_into;
use crate::zero_shot::{check_same_shape, mix_row, split_anchor};

pub const DEFAULT_DOWNSAMPLE: usize = 32;

/// Probability floor inside the log of the training loss.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InputType {
    /// Concatenated image features of every model.
    Features,
    /// Concatenated probability rows of every model (length n * K).
    Logits,
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputType::Features => "features",
            InputType::Logits => "logits",
        })
    }
}

impl core::str::FromStr for InputType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "features" => Ok(Self::Features),
            "logits" | "probs" => Ok(Self::Logits),
            other => Err(Error::Config(alloc::format!("unknown input type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SwigConfig {
    pub input_dim: usize,
    pub downsample: usize,
    pub num_models: usize,
    pub input_type: InputType,
    pub anchor_fixed: bool,
}

impl SwigConfig {
    pub fn new(
        input_dim: usize,
        downsample: usize,
        num_models: usize,
        input_type: InputType,
        anchor_fixed: bool,
    ) -> Result<Self> {
        let cfg = Self {
            input_dim,
            downsample,
            num_models,
            input_type,
            anchor_fixed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_models < 2 {
            return Err(Error::TooFewModels {
                needed: 2,
                found: self.num_models,
            });
        }
        if self.input_dim == 0 {
            return Err(Error::Config("gating input dimension is zero".into()));
        }
        if self.downsample == 0 {
            return Err(Error::Config("downsampling scale must be at least 1".into()));
        }
        if self.input_dim / self.downsample == 0 {
            return Err(Error::Config(alloc::format!(
                "downsampling scale {} leaves no hidden units for input dimension {}",
                self.downsample,
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_dim / self.downsample
    }

    /// n in free mode, n - 1 when the anchor is fixed at weight 1.
    pub fn num_weight(&self) -> usize {
        if self.anchor_fixed {
            self.num_models - 1
        } else {
            self.num_models
        }
    }
}

/// Weights and biases of the gating network, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SwigParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_weight: usize,
    /// hidden x input
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// num_weight x hidden
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl SwigParams {
    pub fn zeros(config: &SwigConfig) -> Self {
        let (d, h, o) = (config.input_dim, config.hidden_dim(), config.num_weight());
        Self {
            input_dim: d,
            hidden_dim: h,
            num_weight: o,
            w1: alloc::vec![0.0; h * d],
            b1: alloc::vec![0.0; h],
            w2: alloc::vec![0.0; o * h],
            b2: alloc::vec![0.0; o],
        }
    }

    /// Builds params from raw buffers, checking every length against `config`.
    pub fn from_parts(
        config: &SwigConfig,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(config);
        for (what, dst, src) in [
            ("W1", &mut p.w1, w1),
            ("b1", &mut p.b1, b1),
            ("W2", &mut p.w2, w2),
            ("b2", &mut p.b2, b2),
        ] {
            if dst.len() != src.len() {
                return Err(Error::ShapeMismatch {
                    what,
                    expected: dst.len(),
                    found: src.len(),
                });
            }
            if let Some(index) = src.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index });
            }
            *dst = src;
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Mutable views of (W1, b1, W2, b2).
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn get_flat(&self, i: usize) -> f64 {
        let mut i = i;
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, i: usize, v: f64) {
        let mut i = i;
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index out of range")
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights from ChaCha8, zero biases.
pub fn swig_init(config: &SwigConfig, seed: u64) -> Result<SwigParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = SwigParams::zeros(config);
    let b1 = 1.0 / libm::sqrt(p.input_dim as f64);
    for v in p.w1.iter_mut() {
        *v = rng.gen_range(-b1..b1);
    }
    let b2 = 1.0 / libm::sqrt(p.hidden_dim as f64);
    for v in p.w2.iter_mut() {
        *v = rng.gen_range(-b2..b2);
    }
    Ok(p)
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

pub(crate) fn forward_into(params: &SwigParams, x: &[f64], cache: &mut ForwardCache) -> Result<()> {
    if x.len() != params.input_dim {
        return Err(Error::ShapeMismatch {
            what: "gating input length",
            expected: params.input_dim,
            found: x.len(),
        });
    }
    let (d, h) = (params.input_dim, params.hidden_dim);
    cache.pre.clear();
    cache.hidden.clear();
    for j in 0..h {
        let row = &params.w1[j * d..(j + 1) * d];
        let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params.b1[j];
        cache.pre.push(z);
        cache.hidden.push(if z > 0.0 { z } else { 0.0 });
    }
    cache.logits.clear();
    for k in 0..params.num_weight {
        let row = &params.w2[k * h..(k + 1) * h];
        let z = row.iter().zip(&cache.hidden).map(|(w, v)| w * v).sum::<f64>() + params.b2[k];
        cache.logits.push(z);
    }
    cache.weights.resize(params.num_weight, 0.0);
    softmax_into(&cache.logits, &mut cache.weights)
}

/// Per-sample fusion weights; they sum to one.
pub fn swig_forward(params: &SwigParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut cache = ForwardCache::default();
    forward_into(params, x, &mut cache)?;
    Ok(cache.weights)
}

/// Builds the N x f_dim gating input matrix for `models`.
pub fn swig_inputs(models: &[ModelOutputs], input_type: InputType) -> Result<Matrix> {
    let first = models.first().ok_or(Error::TooFewModels {
        needed: 2,
        found: 0,
    })?;
    let n = first.probs.rows();
    let mut blocks: Vec<&Matrix> = Vec::with_capacity(models.len());
    for m in models {
        let block = match input_type {
            InputType::Logits => m.probs.matrix(),
            InputType::Features => m
                .features
                .as_ref()
                .ok_or_else(|| {
                    Error::Config(alloc::format!(
                        "model {:?} has no image features; feature-input gating needs them",
                        m.name
                    ))
                })?
                .matrix(),
        };
        if block.rows() != n {
            return Err(Error::ShapeMismatch {
                what: "gating input rows across models",
                expected: n,
                found: block.rows(),
            });
        }
        blocks.push(block);
    }
    let dim: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut data = Vec::with_capacity(n * dim);
    for s in 0..n {
        for b in &blocks {
            data.extend_from_slice(b.row(s));
        }
    }
    Matrix::new(n, dim, data)
}

/// Splits models into the gated ones and an optional fixed anchor.
fn gated_models<'a>(
    config: &SwigConfig,
    probs: &[&'a ProbMatrix],
    anchor: usize,
) -> Result<(Vec<&'a ProbMatrix>, Option<&'a ProbMatrix>)> {
    if probs.len() != config.num_models {
        return Err(Error::ShapeMismatch {
            what: "models vs gating config",
            expected: config.num_models,
            found: probs.len(),
        });
    }
    if config.anchor_fixed {
        let (weak, a) = split_anchor(probs, anchor)?;
        Ok((weak, Some(a)))
    } else {
        if anchor >= probs.len() {
            return Err(Error::AnchorOutOfRange {
                anchor,
                models: probs.len(),
            });
        }
        Ok((probs.to_vec(), None))
    }
}

fn check_inputs(config: &SwigConfig, params: &SwigParams, inputs: &Matrix, n: usize) -> Result<()> {
    if inputs.cols() != config.input_dim || params.input_dim != config.input_dim {
        return Err(Error::ShapeMismatch {
            what: "gating input dimension",
            expected: config.input_dim,
            found: inputs.cols(),
        });
    }
    if params.num_weight != config.num_weight() || params.hidden_dim != config.hidden_dim() {
        return Err(Error::ShapeMismatch {
            what: "gating output count",
            expected: config.num_weight(),
            found: params.num_weight,
        });
    }
    if inputs.rows() != n {
        return Err(Error::ShapeMismatch {
            what: "gating input rows vs samples",
            expected: n,
            found: inputs.rows(),
        });
    }
    Ok(())
}

/// Fused scores with per-sample gating weights.
pub fn t_predict(
    params: &SwigParams,
    config: &SwigConfig,
    inputs: &Matrix,
    probs: &[&ProbMatrix],
    anchor: usize,
) -> Result<ScoreMatrix> {
    let (gated, fixed) = gated_models(config, probs, anchor)?;
    let (n, k) = check_same_shape(probs)?;
    check_inputs(config, params, inputs, n)?;
    let mut out = Matrix::zeros(n, k);
    let mut cache = ForwardCache::default();
    let mut buf = Vec::with_capacity(gated.len());
    for s in 0..n {
        forward_into(params, inputs.row(s), &mut cache)?;
        mix_row(&cache.weights, &gated, s, fixed, out.row_mut(s), &mut buf);
    }
    Ok(ScoreMatrix::new(out))
}

/// Negative log-likelihood of `label` under a fused row.
///
/// With the anchor fixed the fused row sums to 2 and is halved first.
pub fn swig_loss(fused_row: &[f64], label: usize, anchor_fixed: bool) -> f64 {
    let scale = if anchor_fixed { 0.5 } else { 1.0 };
    -libm::log((fused_row[label] * scale).max(LOSS_FLOOR))
}

/// A mini-batch view over the training split.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a Matrix,
    pub probs: &'a [&'a ProbMatrix],
    pub anchor: usize,
    pub labels: &'a LabelVector,
    pub indices: &'a [usize],
}

/// Mean loss and mean gradients over the batch.
///
/// The probability rows are constants; only the gating network is
/// differentiated. Per-sample contributions are accumulated in batch order.
pub fn swig_backward(
    params: &SwigParams,
    config: &SwigConfig,
    batch: &Batch<'_>,
) -> Result<(f64, SwigParams)> {
    backward_impl(params, config, batch, true)
}

/// Mean loss over the batch without gradients.
pub fn batch_loss(params: &SwigParams, config: &SwigConfig, batch: &Batch<'_>) -> Result<f64> {
    backward_impl(params, config, batch, false).map(|(l, _)| l)
}

fn backward_impl(
    params: &SwigParams,
    config: &SwigConfig,
    batch: &Batch<'_>,
    with_grad: bool,
) -> Result<(f64, SwigParams)> {
    if batch.indices.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let (gated, fixed) = gated_models(config, batch.probs, batch.anchor)?;
    let (n, _) = check_same_shape(batch.probs)?;
    check_inputs(config, params, batch.inputs, n)?;
    if batch.labels.len() != n {
        return Err(Error::ShapeMismatch {
            what: "labels vs samples",
            expected: n,
            found: batch.labels.len(),
        });
    }

    let (d, h, o) = (params.input_dim, params.hidden_dim, params.num_weight);
    let mut grad = SwigParams::zeros(config);
    let mut cache = ForwardCache::default();
    let mut g = alloc::vec![0.0; o];
    let mut delta_o = alloc::vec![0.0; o];
    let mut delta_h = alloc::vec![0.0; h];
    let mut total_loss = 0.0;
    let scale = if fixed.is_some() { 0.5 } else { 1.0 };

    for &s in batch.indices {
        let y = batch.labels.values()[s];
        let x = batch.inputs.row(s);
        forward_into(params, x, &mut cache)?;

        let mut fused_y: f64 = cache
            .weights
            .iter()
            .zip(&gated)
            .map(|(w, p)| w * p.row(s)[y])
            .sum();
        if let Some(a) = fixed {
            fused_y += a.row(s)[y];
        }
        let lik = fused_y * scale;
        if lik < LOSS_FLOOR {
            total_loss += -libm::log(LOSS_FLOOR);
            continue;
        }
        total_loss += -libm::log(lik);
        if !with_grad {
            continue;
        }

        // dL/dw_i, then through the softmax
        for (gi, p) in g.iter_mut().zip(&gated) {
            *gi = -p.row(s)[y] / fused_y;
        }
        let mean_g: f64 = cache.weights.iter().zip(&g).map(|(w, gi)| w * gi).sum();
        for ((dz, w), gi) in delta_o.iter_mut().zip(&cache.weights).zip(&g) {
            *dz = w * (gi - mean_g);
        }

        for k in 0..o {
            let dz = delta_o[k];
            grad.b2[k] += dz;
            for (gw, hv) in grad.w2[k * h..(k + 1) * h].iter_mut().zip(&cache.hidden) {
                *gw += dz * hv;
            }
        }
        for j in 0..h {
            delta_h[j] = if cache.pre[j] > 0.0 {
                (0..o).map(|k| params.w2[k * h + j] * delta_o[k]).sum()
            } else {
                0.0
            };
        }
        for j in 0..h {
            let dz = delta_h[j];
            grad.b1[j] += dz;
            if dz != 0.0 {
                for (gw, xv) in grad.w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += dz * xv;
                }
            }
        }
    }

    let inv = 1.0 / batch.indices.len() as f64;
    for t in grad.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((total_loss * inv, grad))
}
