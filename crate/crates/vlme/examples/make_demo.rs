//! Writes a small synthetic benchmark for trying out the CLI.
//!
//! ```text
//! cargo run -p vlme --example make_demo -- demo/
//! vlme inspect --manifest demo/demo_test.json --format text
//! vlme protocol base-to-new --train demo/demo_train.json --test demo/demo_test.json --strategy tune
//! ```
//!
//! Four models of increasing quality (the last is the anchor) over a shared
//! label space: a train pool and a test split of `demo`, a shifted variant
//! with the same classes, and an unrelated dataset with its own classes.

use std::path::{Path, PathBuf};

use vlme::manifest::{write_dataset, ModelExport};
use vlme_core::fixtures::{synthetic_export, SyntheticExport};

const DIMS: [usize; 4] = [64, 64, 96, 128];

fn subset(export: &SyntheticExport, indices: &[usize]) -> SyntheticExport {
    let mut out = export.clone();
    out.labels = export.labels.select(indices);
    for m in &mut out.models {
        m.features = m.features.select_rows(indices);
    }
    out
}

fn write(dir: &Path, stem: &str, export: &SyntheticExport) -> vlme::Result<PathBuf> {
    let models: Vec<ModelExport> = export
        .models
        .iter()
        .map(|m| ModelExport::Features {
            name: m.name.clone(),
            features: m.features.clone(),
            class_embeddings: m.class_embeddings.clone(),
            temperature: m.temperature,
        })
        .collect();
    write_dataset(dir, stem, &export.dataset_name, &export.class_names, &export.labels, &models, export.anchor)
}

fn main() -> vlme::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    let (n_train, n_test) = (1600, 1000);
    let demo = synthetic_export(7, "demo", n_train + n_test, 20, &DIMS);
    let train: Vec<usize> = (0..n_train).collect();
    let test: Vec<usize> = (n_train..n_train + n_test).collect();
    let written = [
        write(&dir, "demo_train", &subset(&demo, &train))?,
        write(&dir, "demo_test", &subset(&demo, &test))?,
        write(&dir, "demo_shift", &synthetic_export(8, "demo_shift", 800, 20, &DIMS))?,
        write(&dir, "other", &synthetic_export(9, "other", 800, 12, &DIMS))?,
    ];
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
