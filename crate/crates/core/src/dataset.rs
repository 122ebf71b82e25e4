//! In-memory view of one evaluated split: every model's outputs plus labels.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, LabelVector, ProbMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputs {
    pub name: String,
    pub probs: ProbMatrix,
    /// Image features; required only when a gating network consumes them.
    pub features: Option<FeatureMatrix>,
}

/// All models evaluated on the same samples with the same class ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleData {
    dataset_name: String,
    class_names: Vec<String>,
    labels: LabelVector,
    models: Vec<ModelOutputs>,
    anchor: usize,
}

impl EnsembleData {
    pub fn new(
        dataset_name: String,
        class_names: Vec<String>,
        labels: LabelVector,
        models: Vec<ModelOutputs>,
        anchor: usize,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::TooFewModels {
                needed: 1,
                found: 0,
            });
        }
        if anchor >= models.len() {
            return Err(Error::AnchorOutOfRange {
                anchor,
                models: models.len(),
            });
        }
        let n = labels.len();
        let k = labels.num_classes();
        if n == 0 {
            return Err(Error::Empty("label vector"));
        }
        if class_names.len() != k {
            return Err(Error::ShapeMismatch {
                what: "class names vs num_classes",
                expected: k,
                found: class_names.len(),
            });
        }
        for m in &models {
            if m.probs.rows() != n {
                return Err(Error::ShapeMismatch {
                    what: "model sample count vs labels",
                    expected: n,
                    found: m.probs.rows(),
                });
            }
            if m.probs.cols() != k {
                return Err(Error::ShapeMismatch {
                    what: "model class count vs num_classes",
                    expected: k,
                    found: m.probs.cols(),
                });
            }
            if let Some(f) = &m.features {
                if f.rows() != n {
                    return Err(Error::ShapeMismatch {
                        what: "feature rows vs labels",
                        expected: n,
                        found: f.rows(),
                    });
                }
            }
        }
        Ok(Self {
            dataset_name,
            class_names,
            labels,
            models,
            anchor,
        })
    }

    pub fn dataset_name(&self) -> &str {
        &self.dataset_name
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn models(&self) -> &[ModelOutputs] {
        &self.models
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn prob_refs(&self) -> Vec<&ProbMatrix> {
        self.models.iter().map(|m| &m.probs).collect()
    }

    pub fn model_names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }

    /// Subset of models by index; the anchor must be among them.
    pub fn select_models(&self, indices: &[usize]) -> Result<Self> {
        let mut models = Vec::with_capacity(indices.len());
        let mut anchor = None;
        for (pos, &i) in indices.iter().enumerate() {
            let m = self.models.get(i).ok_or(Error::AnchorOutOfRange {
                anchor: i,
                models: self.models.len(),
            })?;
            if i == self.anchor {
                anchor = Some(pos);
            }
            models.push(m.clone());
        }
        let anchor = anchor.ok_or_else(|| {
            Error::Config("model selection must include the anchor model".into())
        })?;
        Self::new(
            self.dataset_name.clone(),
            self.class_names.clone(),
            self.labels.clone(),
            models,
            anchor,
        )
    }

    /// Keeps the given samples, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("sample selection"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.num_samples()) {
            return Err(Error::ShapeMismatch {
                what: "sample index (exclusive bound)",
                expected: self.num_samples(),
                found: bad,
            });
        }
        let models = self
            .models
            .iter()
            .map(|m| {
                Ok(ModelOutputs {
                    name: m.name.clone(),
                    probs: m.probs.select_rows(indices)?,
                    features: m.features.as_ref().map(|f| f.select_rows(indices)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.dataset_name.clone(),
            self.class_names.clone(),
            self.labels.select(indices),
            models,
            self.anchor,
        )
    }

    /// Restricts the label space to `classes` (relabelled `0..classes.len()`
    /// in the given order). Samples of other classes are dropped and every
    /// model's probabilities are renormalized over the kept classes.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Self> {
        let k = self.num_classes();
        let mut remap = alloc::vec![usize::MAX; k];
        for (new, &c) in classes.iter().enumerate() {
            if c >= k {
                return Err(Error::LabelOutOfRange {
                    index: new,
                    label: c,
                    num_classes: k,
                });
            }
            remap[c] = new;
        }
        let keep: Vec<usize> = self
            .labels
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &y)| remap[y] != usize::MAX)
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            return Err(Error::Empty("samples in the restricted class set"));
        }
        let labels = LabelVector::new(
            keep.iter().map(|&i| remap[self.labels.values()[i]]).collect(),
            classes.len(),
        )?;
        let models = self
            .models
            .iter()
            .map(|m| {
                Ok(ModelOutputs {
                    name: m.name.clone(),
                    probs: m.probs.select_rows(&keep)?.restrict_classes(classes)?,
                    features: m.features.as_ref().map(|f| f.select_rows(&keep)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            self.dataset_name.clone(),
            classes.iter().map(|&c| self.class_names[c].clone()).collect(),
            labels,
            models,
            self.anchor,
        )
    }
}
