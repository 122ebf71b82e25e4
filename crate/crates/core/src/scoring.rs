//! Temperature-scaled cosine scoring and the basic classification math shared
//! by every strategy.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{ClassEmbeddings, FeatureMatrix, LabelVector, Matrix, ProbMatrix};

/// Softmax with the maximum subtracted first so large scores cannot overflow.
pub fn stable_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; scores.len()];
    softmax_into(scores, &mut out)?;
    Ok(out)
}

/// Same as [`stable_softmax`] but writes into `out` (which must have the same length).
pub fn softmax_into(scores: &[f64], out: &mut [f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty("softmax input"));
    }
    if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "softmax input",
            index,
        });
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = libm::exp(s - max);
    }
    let total = sorted_sum(out.iter().copied(), &mut Vec::new());
    out.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Sums the values in ascending order so the result does not depend on the
/// order the terms arrive in.
pub(crate) fn sorted_sum(terms: impl Iterator<Item = f64>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(terms);
    buf.sort_unstable_by(f64::total_cmp);
    buf.iter().sum()
}

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Per-model class probabilities: softmax over `cos(f, c_k) / tau`.
pub fn probs_from_features(
    features: &FeatureMatrix,
    class_emb: &ClassEmbeddings,
    temperature: f64,
) -> Result<ProbMatrix> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Config(alloc::format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if features.dim() != class_emb.dim() {
        return Err(Error::ShapeMismatch {
            what: "feature dim vs class embedding dim",
            expected: class_emb.dim(),
            found: features.dim(),
        });
    }
    let k = class_emb.num_classes();
    let d = class_emb.dim();

    let mut unit_classes = Vec::with_capacity(k * d);
    for c in 0..k {
        let row = class_emb.row(c);
        let norm = l2_norm(row);
        if norm == 0.0 {
            return Err(Error::ZeroNorm {
                what: "class embedding",
                row: c,
            });
        }
        unit_classes.extend(row.iter().map(|v| v / norm));
    }

    let mut data = Vec::with_capacity(features.rows() * k);
    let mut scores = alloc::vec![0.0; k];
    let mut probs = alloc::vec![0.0; k];
    for i in 0..features.rows() {
        let f = features.row(i);
        let norm = l2_norm(f);
        if norm == 0.0 {
            return Err(Error::ZeroNorm {
                what: "feature",
                row: i,
            });
        }
        for (c, s) in scores.iter_mut().enumerate() {
            let unit_c = &unit_classes[c * d..(c + 1) * d];
            let dot: f64 = f.iter().zip(unit_c).map(|(a, b)| a * b).sum();
            *s = (dot / norm) / temperature;
        }
        softmax_into(&scores, &mut probs)?;
        data.extend_from_slice(&probs);
    }
    ProbMatrix::from_matrix(Matrix::new(features.rows(), k, data)?)
}

/// Number of rows whose argmax equals the label.
pub fn correct_count<M: AsRef<Matrix>>(scores: &M, labels: &LabelVector) -> Result<usize> {
    let m = scores.as_ref();
    if m.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            what: "score rows vs labels",
            expected: labels.len(),
            found: m.rows(),
        });
    }
    if m.cols() != labels.num_classes() {
        return Err(Error::ShapeMismatch {
            what: "score columns vs label classes",
            expected: labels.num_classes(),
            found: m.cols(),
        });
    }
    Ok(m
        .iter_rows()
        .zip(labels.values())
        .filter(|(row, &y)| argmax(row) == y)
        .count())
}

/// Top-1 accuracy in `[0, 1]`.
pub fn accuracy<M: AsRef<Matrix>>(scores: &M, labels: &LabelVector) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Empty("label vector"));
    }
    Ok(correct_count(scores, labels)? as f64 / labels.len() as f64)
}
