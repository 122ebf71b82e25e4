//! Dataset manifests: a JSON description of one evaluated split.
//!
//! ```json
//! {
//!   "dataset_name": "caltech101",
//!   "num_classes": 100,
//!   "class_names": ["accordion", "..."],
//!   "labels_file": "labels.vet",
//!   "anchor_index": 3,
//!   "models": [
//!     { "name": "RN50", "feature_dim": 1024,
//!       "features_file": "rn50_feat.vet",
//!       "class_embeddings_file": "rn50_text.vet",
//!       "temperature": 0.01 },
//!     { "name": "CoCoOp", "feature_dim": 512, "probs_file": "cocoop.vet" }
//!   ]
//! }
//! ```
//!
//! File paths are relative to the manifest's directory. The labels file is a
//! rank-1 tensor of integral values. A model either carries class
//! probabilities (`probs_file`) or the pieces to compute them
//! (`features_file`, `class_embeddings_file`, `temperature`). A probability
//! source may still name a `features_file` for feature-input gating.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlme_core::matrix::LOAD_ROW_SUM_TOL;
use vlme_core::scoring::probs_from_features;
use vlme_core::{ClassEmbeddings, EnsembleData, FeatureMatrix, LabelVector, Matrix, ModelOutputs, ProbMatrix};

use crate::error::{Error, Result};
use crate::format::{self, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub labels_file: String,
    pub anchor_index: usize,
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_embeddings_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

/// Where a model's class probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Probs,
    Features,
}

impl ModelEntry {
    pub fn source_kind(&self) -> std::result::Result<SourceKind, String> {
        let scoring = [self.class_embeddings_file.is_some(), self.temperature.is_some()];
        match (&self.probs_file, &self.features_file) {
            (Some(_), _) if scoring.iter().any(|&s| s) => Err(format!(
                "model {:?} mixes probs_file with class_embeddings_file/temperature; use exactly one source",
                self.name
            )),
            (Some(_), _) => Ok(SourceKind::Probs),
            (None, Some(_)) if scoring.iter().all(|&s| s) => Ok(SourceKind::Features),
            (None, Some(_)) => Err(format!(
                "model {:?} has features_file but is missing class_embeddings_file or temperature",
                self.name
            )),
            (None, None) => Err(format!(
                "model {:?} names neither probs_file nor features_file",
                self.name
            )),
        }
    }
}

/// A fully validated manifest together with its tensors.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub path: PathBuf,
    pub manifest: DatasetManifest,
    pub data: EnsembleData,
    /// Hex SHA-256 over the manifest and every file it references.
    pub digest: String,
}

struct Loader<'a> {
    manifest_path: &'a Path,
    base: PathBuf,
    hasher: Sha256,
}

impl Loader<'_> {
    fn tensor(&mut self, rel: &str) -> Result<Tensor> {
        let path = self.base.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.hasher.update((rel.len() as u64).to_le_bytes());
        self.hasher.update(rel.as_bytes());
        self.hasher.update(Sha256::digest(&bytes));
        format::decode(&bytes).map_err(|source| Error::Format { path, source })
    }

    fn matrix(&mut self, rel: &str, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let path = self.base.join(rel);
        let t = self.tensor(rel)?;
        if t.shape != [rows, cols] {
            return Err(Error::manifest(
                self.manifest_path,
                format!("{what} {} has shape {:?}, expected [{rows}, {cols}]", path.display(), t.shape),
            ));
        }
        t.into_matrix().map_err(|source| Error::Format { path, source })
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::manifest(self.manifest_path, message)
    }
}

pub fn parse_manifest(path: &Path) -> Result<(DatasetManifest, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((manifest, bytes))
}

/// Reads, validates and scores everything a manifest describes.
pub fn load_manifest(path: &Path) -> Result<LoadedDataset> {
    let (manifest, bytes) = parse_manifest(path)?;
    let mut loader = Loader {
        manifest_path: path,
        base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        hasher: Sha256::new(),
    };
    loader.hasher.update(Sha256::digest(&bytes));
    let m = &manifest;
    let k = m.num_classes;

    if k < 2 {
        return Err(loader.fail(format!("num_classes must be at least 2, got {k}")));
    }
    if m.class_names.len() != k {
        return Err(loader.fail(format!(
            "{} class names for num_classes = {k}",
            m.class_names.len()
        )));
    }
    if m.models.is_empty() {
        return Err(loader.fail("manifest lists no models"));
    }
    if m.anchor_index >= m.models.len() {
        return Err(loader.fail(format!(
            "anchor_index {} out of range for {} models",
            m.anchor_index,
            m.models.len()
        )));
    }

    let label_path = loader.base.join(&m.labels_file);
    let raw = loader
        .tensor(&m.labels_file)?
        .into_vector()
        .map_err(|source| Error::Format {
            path: label_path.clone(),
            source,
        })?;
    let mut labels = Vec::with_capacity(raw.len());
    for (i, &v) in raw.iter().enumerate() {
        if v.fract() != 0.0 || v < 0.0 {
            return Err(loader.fail(format!("label {v} at index {i} is not a non-negative integer")));
        }
        labels.push(v as usize);
    }
    let labels = LabelVector::new(labels, k).map_err(|e| Error::data(label_path.display().to_string(), e))?;
    let n = labels.len();

    let mut models = Vec::with_capacity(m.models.len());
    for entry in &m.models {
        let kind = entry.source_kind().map_err(|msg| loader.fail(msg))?;
        let context = format!("{}: model {:?}", path.display(), entry.name);
        let features = match &entry.features_file {
            Some(f) => {
                let mat = loader.matrix(f, n, entry.feature_dim, "features")?;
                Some(FeatureMatrix::new(mat).map_err(|e| Error::data(&context, e))?)
            }
            None => None,
        };
        let probs = match kind {
            SourceKind::Probs => {
                let rel = entry.probs_file.as_deref().expect("probs source");
                let mat = loader.matrix(rel, n, k, "probabilities")?;
                ProbMatrix::from_loaded(mat, LOAD_ROW_SUM_TOL).map_err(|e| Error::data(&context, e))?
            }
            SourceKind::Features => {
                let rel = entry.class_embeddings_file.as_deref().expect("features source");
                let emb = loader.matrix(rel, k, entry.feature_dim, "class embeddings")?;
                let emb = ClassEmbeddings::new(emb).map_err(|e| Error::data(&context, e))?;
                let tau = entry.temperature.expect("features source");
                let feats = features.as_ref().expect("features source");
                probs_from_features(feats, &emb, tau).map_err(|e| Error::data(&context, e))?
            }
        };
        models.push(ModelOutputs {
            name: entry.name.clone(),
            probs,
            features,
        });
    }

    let data = EnsembleData::new(m.dataset_name.clone(), m.class_names.clone(), labels, models, m.anchor_index)
        .map_err(|e| Error::data(path.display().to_string(), e))?;
    Ok(LoadedDataset {
        path: path.to_path_buf(),
        digest: hex::encode(loader.hasher.finalize()),
        manifest,
        data,
    })
}

/// One model to write with [`write_dataset`].
#[derive(Debug, Clone)]
pub enum ModelExport {
    Probs {
        name: String,
        probs: ProbMatrix,
        features: Option<FeatureMatrix>,
    },
    Features {
        name: String,
        features: FeatureMatrix,
        class_embeddings: ClassEmbeddings,
        temperature: f64,
    },
}

/// Writes tensors and a manifest named `<stem>.json` into `dir`.
///
/// Tensor files are named `<stem>.<model>.<part>.vet`. Returns the manifest path.
pub fn write_dataset(
    dir: &Path,
    stem: &str,
    dataset_name: &str,
    class_names: &[String],
    labels: &LabelVector,
    models: &[ModelExport],
    anchor_index: usize,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |file: String, m: &Matrix| -> Result<String> {
        let path = dir.join(&file);
        format::write_matrix(&path, m).map_err(|source| Error::Format { path, source })?;
        Ok(file)
    };
    let labels_file = format!("{stem}.labels.vet");
    let label_values: Vec<f64> = labels.values().iter().map(|&v| v as f64).collect();
    let lpath = dir.join(&labels_file);
    format::write_vector(&lpath, &label_values).map_err(|source| Error::Format { path: lpath, source })?;

    let mut entries = Vec::with_capacity(models.len());
    for m in models {
        let entry = match m {
            ModelExport::Probs { name, probs, features } => ModelEntry {
                name: name.clone(),
                feature_dim: features.as_ref().map_or(0, |f| f.dim()),
                probs_file: Some(write(format!("{stem}.{name}.probs.vet"), probs.matrix())?),
                features_file: features
                    .as_ref()
                    .map(|f| write(format!("{stem}.{name}.features.vet"), f.matrix()))
                    .transpose()?,
                class_embeddings_file: None,
                temperature: None,
            },
            ModelExport::Features {
                name,
                features,
                class_embeddings,
                temperature,
            } => ModelEntry {
                name: name.clone(),
                feature_dim: features.dim(),
                probs_file: None,
                features_file: Some(write(format!("{stem}.{name}.features.vet"), features.matrix())?),
                class_embeddings_file: Some(write(
                    format!("{stem}.{name}.text.vet"),
                    class_embeddings.matrix(),
                )?),
                temperature: Some(*temperature),
            },
        };
        entries.push(entry);
    }
    let manifest = DatasetManifest {
        dataset_name: dataset_name.to_string(),
        num_classes: class_names.len(),
        class_names: class_names.to_vec(),
        labels_file,
        anchor_index,
        models: entries,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry() -> ModelEntry {
        ModelEntry {
            name: "m".into(),
            feature_dim: 4,
            probs_file: None,
            features_file: None,
            class_embeddings_file: None,
            temperature: None,
        }
    }

    #[test]
    fn source_variants() {
        let mut e = entry();
        assert!(e.source_kind().is_err());
        e.probs_file = Some("p".into());
        assert_eq!(e.source_kind(), Ok(SourceKind::Probs));
        e.features_file = Some("f".into());
        assert_eq!(e.source_kind(), Ok(SourceKind::Probs));
        e.temperature = Some(0.01);
        assert!(e.source_kind().is_err());
        e.probs_file = None;
        assert!(e.source_kind().is_err());
        e.class_embeddings_file = Some("c".into());
        assert_eq!(e.source_kind(), Ok(SourceKind::Features));
    }
}
