//! Fitted ensembles on disk.
//!
//! Static weights are a single JSON file. A gating network is a directory
//! holding `W1.vet`, `b1.vet`, `W2.vet`, `b2.vet` and a `swig.json` sidecar
//! with the network shape, model list and training settings.
//!
//! Tensors are stored at f32 precision, so trained parameters are rounded
//! with [`round_to_storage`] before they are evaluated or written; a saved
//! network then scores exactly like the one that was reported.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vlme_core::protocols::{FittedEnsemble, FittedKind};
use vlme_core::swig::{SwigConfig, SwigParams};
use vlme_core::train::TrainConfig;
use vlme_core::training_free::{SearchResult, StaticWeights};

use crate::error::{Error, Result};
use crate::format;

pub const SIDECAR: &str = "swig.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub model_names: Vec<String>,
    pub anchor_index: usize,
    /// One weight per non-anchor model, in model order.
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwigSidecar {
    pub model_names: Vec<String>,
    pub anchor_index: usize,
    pub config: SwigConfig,
    pub train: TrainConfig,
    pub epoch_losses: Vec<f64>,
}

/// Rounds every parameter to the nearest f32.
pub fn round_to_storage(params: &mut SwigParams) {
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_weights(path: &Path, fitted: &FittedEnsemble) -> Result<()> {
    let FittedKind::Tf { weights, search } = &fitted.kind else {
        return Err(Error::Usage(format!("{} is not a static-weight ensemble", fitted.strategy())));
    };
    write_json(
        path,
        &WeightsFile {
            model_names: fitted.model_names.clone(),
            anchor_index: fitted.anchor,
            weights: weights.values.clone(),
            search: search.clone(),
        },
    )
}

pub fn load_weights(path: &Path) -> Result<FittedEnsemble> {
    let file: WeightsFile = read_json(path)?;
    if file.weights.len() + 1 != file.model_names.len() || file.anchor_index >= file.model_names.len() {
        return Err(Error::manifest(
            path,
            format!(
                "{} weights and anchor {} do not fit {} models",
                file.weights.len(),
                file.anchor_index,
                file.model_names.len()
            ),
        ));
    }
    if file.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::manifest(path, "weights must be finite"));
    }
    Ok(FittedEnsemble {
        model_names: file.model_names,
        anchor: file.anchor_index,
        kind: FittedKind::Tf {
            weights: StaticWeights { values: file.weights },
            search: file.search,
        },
    })
}

pub fn save_swig(dir: &Path, fitted: &FittedEnsemble, train: &TrainConfig) -> Result<()> {
    let FittedKind::Tune {
        config,
        params,
        epoch_losses,
    } = &fitted.kind
    else {
        return Err(Error::Usage(format!("{} is not a gating network", fitted.strategy())));
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shapes = [
        ("W1", vec![params.hidden_dim, params.input_dim]),
        ("b1", vec![params.hidden_dim]),
        ("W2", vec![params.num_weight, params.hidden_dim]),
        ("b2", vec![params.num_weight]),
    ];
    for ((name, shape), data) in shapes.iter().zip(params.tensors()) {
        let path = dir.join(format!("{name}.vet"));
        let values: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        format::write_tensor(&path, shape, &values).map_err(|source| Error::Format { path, source })?;
    }
    write_json(
        &dir.join(SIDECAR),
        &SwigSidecar {
            model_names: fitted.model_names.clone(),
            anchor_index: fitted.anchor,
            config: *config,
            train: *train,
            epoch_losses: epoch_losses.clone(),
        },
    )
}

pub fn load_swig(dir: &Path) -> Result<(FittedEnsemble, TrainConfig)> {
    let side_path = dir.join(SIDECAR);
    let side: SwigSidecar = read_json(&side_path)?;
    side.config
        .validate()
        .map_err(|e| Error::data(side_path.display().to_string(), e))?;
    if side.model_names.len() != side.config.num_models || side.anchor_index >= side.model_names.len() {
        return Err(Error::manifest(&side_path, "model list does not match the network config"));
    }
    let (f, h, o) = (side.config.input_dim, side.config.hidden_dim(), side.config.num_weight());
    let mut parts = Vec::with_capacity(4);
    for (name, shape) in [("W1", vec![h, f]), ("b1", vec![h]), ("W2", vec![o, h]), ("b2", vec![o])] {
        let path = dir.join(format!("{name}.vet"));
        let t = format::read_tensor(&path).map_err(|source| Error::Format {
            path: path.clone(),
            source,
        })?;
        if t.shape != shape {
            return Err(Error::manifest(
                &path,
                format!("shape {:?} does not match the network config {shape:?}", t.shape),
            ));
        }
        parts.push(t.data.into_iter().map(f64::from).collect::<Vec<f64>>());
    }
    let b2 = parts.pop().expect("four parts");
    let w2 = parts.pop().expect("four parts");
    let b1 = parts.pop().expect("four parts");
    let w1 = parts.pop().expect("four parts");
    let params = SwigParams::from_parts(&side.config, w1, b1, w2, b2)
        .map_err(|e| Error::data(dir.display().to_string(), e))?;
    Ok((
        FittedEnsemble {
            model_names: side.model_names,
            anchor: side.anchor_index,
            kind: FittedKind::Tune {
                config: side.config,
                params,
                epoch_losses: side.epoch_losses,
            },
        },
        side.train,
    ))
}

/// Loads either artifact kind: a directory is a gating network, a file holds static weights.
pub fn load_artifact(path: &Path) -> Result<FittedEnsemble> {
    if path.is_dir() {
        load_swig(path).map(|(f, _)| f)
    } else {
        load_weights(path)
    }
}
