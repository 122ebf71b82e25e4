#![allow(dead_code)]

use std::path::{Path, PathBuf};

use vlme::manifest::{write_dataset, ModelExport};
use vlme_core::fixtures::{synthetic_export, SyntheticExport};

/// How the written manifest describes its models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Features,
    Probs,
    ProbsOnly,
}

fn models(export: &SyntheticExport, source: Source) -> Vec<ModelExport> {
    let data = export.to_ensemble();
    export
        .models
        .iter()
        .zip(data.models())
        .map(|(m, out)| match source {
            Source::Features => ModelExport::Features {
                name: m.name.clone(),
                features: m.features.clone(),
                class_embeddings: m.class_embeddings.clone(),
                temperature: m.temperature,
            },
            Source::Probs => ModelExport::Probs {
                name: m.name.clone(),
                probs: out.probs.clone(),
                features: Some(m.features.clone()),
            },
            Source::ProbsOnly => ModelExport::Probs {
                name: m.name.clone(),
                probs: out.probs.clone(),
                features: None,
            },
        })
        .collect()
}

pub fn write_export(dir: &Path, stem: &str, export: &SyntheticExport, source: Source) -> PathBuf {
    write_dataset(
        dir,
        stem,
        &export.dataset_name,
        &export.class_names,
        &export.labels,
        &models(export, source),
        export.anchor,
    )
    .unwrap()
}

/// Keeps the listed samples of every model.
pub fn subset(export: &SyntheticExport, indices: &[usize]) -> SyntheticExport {
    let mut out = export.clone();
    out.labels = export.labels.select(indices);
    for m in &mut out.models {
        m.features = m.features.select_rows(indices);
    }
    out
}

/// Writes `<stem>_train.json` and `<stem>_test.json` drawn from one synthetic population.
pub fn write_split(
    dir: &Path,
    stem: &str,
    seed: u64,
    n_train: usize,
    n_test: usize,
    k: usize,
    dims: &[usize],
    source: Source,
) -> (PathBuf, PathBuf) {
    let export = synthetic_export(seed, stem, n_train + n_test, k, dims);
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    (
        write_export(dir, &format!("{stem}_train"), &subset(&export, &train), source),
        write_export(dir, &format!("{stem}_test"), &subset(&export, &test), source),
    )
}
