//! Zero-shot fusion: confidence-aware weighting (CAW) plus the mean baseline.
//!
//! A model's confidence on a sample is its maximum class probability. The
//! weak models' confidences go through a softmax to give per-sample weights;
//! the anchor model is added on top with weight 1.0:
//!
//! ```text
//! fused(s) = sum_i w_i(s) * P_i(s) + P_anchor(s)
//! ```
//!
//! Fused rows therefore sum to 2 and are treated as scores, not probabilities.
//! Sums over models are taken in ascending order of the terms, which makes
//! the result bit-identical under any permutation of the weak models.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix, ScoreMatrix};
use crate::scoring::{softmax_into, sorted_sum};

/// One weight per (sample, model); rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleWeights(Matrix);

impl PerSampleWeights {
    pub fn new(m: Matrix) -> Self {
        Self(m)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn models(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

pub(crate) fn check_same_shape(models: &[&ProbMatrix]) -> Result<(usize, usize)> {
    let first = models.first().ok_or(Error::TooFewModels {
        needed: 1,
        found: 0,
    })?;
    let (n, k) = (first.rows(), first.cols());
    for m in &models[1..] {
        if m.rows() != n {
            return Err(Error::ShapeMismatch {
                what: "sample count across models",
                expected: n,
                found: m.rows(),
            });
        }
        if m.cols() != k {
            return Err(Error::ShapeMismatch {
                what: "class count across models",
                expected: k,
                found: m.cols(),
            });
        }
    }
    Ok((n, k))
}

/// Writes `sum_i weights[i] * models[i].row(sample) (+ anchor row)` into `out`.
pub(crate) fn mix_row(
    weights: &[f64],
    models: &[&ProbMatrix],
    sample: usize,
    anchor: Option<&ProbMatrix>,
    out: &mut [f64],
    buf: &mut Vec<f64>,
) {
    for (c, o) in out.iter_mut().enumerate() {
        let mixed = sorted_sum(
            weights
                .iter()
                .zip(models)
                .map(|(w, m)| w * m.row(sample)[c]),
            buf,
        );
        *o = match anchor {
            Some(a) => mixed + a.row(sample)[c],
            None => mixed,
        };
    }
}

/// Softmax over each model's maximum probability, per sample.
pub fn confidence_weights(weak: &[&ProbMatrix]) -> Result<PerSampleWeights> {
    let (n, _) = check_same_shape(weak)?;
    let m = weak.len();
    let mut data = alloc::vec![0.0; n * m];
    let mut conf = alloc::vec![0.0; m];
    for s in 0..n {
        for (c, model) in conf.iter_mut().zip(weak) {
            *c = model.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        softmax_into(&conf, &mut data[s * m..(s + 1) * m])?;
    }
    Ok(PerSampleWeights(Matrix::new(n, m, data)?))
}

fn weighted_predict(
    weights: &PerSampleWeights,
    models: &[&ProbMatrix],
    anchor: Option<&ProbMatrix>,
) -> Result<ScoreMatrix> {
    let (n, k) = check_same_shape(models)?;
    let mut out = Matrix::zeros(n, k);
    let mut buf = Vec::with_capacity(models.len());
    for s in 0..n {
        mix_row(weights.row(s), models, s, anchor, out.row_mut(s), &mut buf);
    }
    Ok(ScoreMatrix::new(out))
}

/// Splits `models` into (weak models in ascending index order, anchor).
pub fn split_anchor<'a>(
    models: &[&'a ProbMatrix],
    anchor_index: usize,
) -> Result<(Vec<&'a ProbMatrix>, &'a ProbMatrix)> {
    let anchor = *models.get(anchor_index).ok_or(Error::AnchorOutOfRange {
        anchor: anchor_index,
        models: models.len(),
    })?;
    let weak = models
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor_index)
        .map(|(_, m)| *m)
        .collect();
    Ok((weak, anchor))
}

/// Zero-shot ensemble: CAW over the weak models plus the anchor at weight 1.
pub fn zs_ensemble_predict(models: &[&ProbMatrix], anchor_index: usize) -> Result<ScoreMatrix> {
    if models.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            found: models.len(),
        });
    }
    let (weak, anchor) = split_anchor(models, anchor_index)?;
    check_same_shape(models)?;
    let weights = confidence_weights(&weak)?;
    weighted_predict(&weights, &weak, Some(anchor))
}

/// Elementwise average of the probability matrices.
pub fn mean_ensemble_predict(models: &[&ProbMatrix]) -> Result<ScoreMatrix> {
    if models.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            found: models.len(),
        });
    }
    let (n, _) = check_same_shape(models)?;
    let m = models.len();
    let w = 1.0 / m as f64;
    let weights = PerSampleWeights(Matrix::new(n, m, alloc::vec![w; n * m])?);
    weighted_predict(&weights, models, None)
}

/// CAW applied to every model in `models`, with no anchor exemption.
pub fn caw_all_predict(models: &[&ProbMatrix]) -> Result<ScoreMatrix> {
    if models.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            found: models.len(),
        });
    }
    let weights = confidence_weights(models)?;
    weighted_predict(&weights, models, None)
}
