//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 when a
//! file cannot be read or written.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use vlme_core::protocols::{
    fit, fit_per_seed, run_base_to_new, run_cross_dataset, run_domain_generalization, run_zero_shot,
    FitOptions, FittedEnsemble, FittedKind, Strategy, DEFAULT_SEEDS, DEFAULT_SHOTS,
};
use vlme_core::scoring::accuracy;
use vlme_core::swig::{InputType, DEFAULT_DOWNSAMPLE};
use vlme_core::train::TrainConfig;
use vlme_core::training_free::{Grid, SearchMode, DEFAULT_BUDGET};
use vlme_core::EnsembleData;

use crate::artifact;
use crate::error::{Error, Result, EXIT_OK};
use crate::manifest::{load_manifest, LoadedDataset};
use crate::parallel::{with_threads, RayonExecutor};
use crate::report::{eval_table, pct, recorded_command, Kit, ManifestDigest, OutputFormat, Report, Table};

fn parse<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

/// Ensemble fusion of vision-language classifiers.
///
/// Reports are JSON by default: {kit, command, seeds, manifests, config,
/// result}. `--format text` prints an aligned table, `--format csv` the same
/// table as comma-separated values. Accuracies are percentages.
#[derive(Debug, Parser)]
#[command(name = "vlme", version)]
pub struct Cli {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for the grid search; results do not depend on it.
    #[arg(long, short = 'j', global = true, env = "VLME_THREADS", default_value_t = 1)]
    pub threads: usize,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero-shot ensemble: confidence-weighted weak models plus the anchor.
    Zs(ManifestsArg),
    /// Plain average of all models.
    Mean(ManifestsArg),
    /// Confidence-aware weights over all models, anchor included.
    CawAll(ManifestsArg),
    /// Grid search for static weak-model weights on a labeled split.
    TfSearch(TfSearchArgs),
    /// Evaluates saved static weights.
    TfEval(EvalArgs),
    /// Trains the sample-aware weight generator.
    Tune(TuneArgs),
    /// Evaluates a saved weight generator.
    TEval(EvalArgs),
    /// Evaluation protocols over several splits and seeds.
    #[command(subcommand)]
    Protocol(ProtocolCommand),
    /// Shapes, sources and standalone accuracy of every model.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct ManifestsArg {
    #[arg(long = "manifest", required = true, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Weight grid as start:stop:step.
    #[arg(long, default_value = "0.1:1.0:0.1", value_parser = parse::<Grid>)]
    pub grid: Grid,
    /// exhaustive or greedy (coordinate ascent).
    #[arg(long, default_value = "exhaustive", value_parser = parse::<SearchMode>)]
    pub mode: SearchMode,
    /// Maximum sweeps of the greedy search.
    #[arg(long, default_value_t = 10)]
    pub sweeps: usize,
    /// Largest grid an exhaustive search may visit.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    /// Hidden width is input width divided by this.
    #[arg(long, default_value_t = DEFAULT_DOWNSAMPLE)]
    pub downsample: usize,
    /// features (concatenated image features) or logits (concatenated probabilities).
    #[arg(long, default_value = "features", value_parser = parse::<InputType>)]
    pub input_type: InputType,
    /// Keep the anchor at weight 1 and generate weights for the other models only.
    #[arg(long)]
    pub anchor_fixed: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            grid: self.search.grid.clone(),
            search_mode: self.search.mode,
            sweeps: self.search.sweeps,
            budget: self.search.budget,
            downsample: self.train.downsample,
            input_type: self.train.input_type,
            anchor_fixed: self.train.anchor_fixed,
            train: train_config(&self.train, 1),
        }
    }
}

fn train_config(t: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch,
        initial_lr: t.lr,
        seed,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Args)]
pub struct TfSearchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Save the weights as JSON.
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Static weights file (tf-eval) or parameter directory (t-eval).
    #[arg(long, visible_alias = "weights", visible_alias = "params")]
    pub artifact: PathBuf,
    #[arg(long = "manifest", required = true, num_args = 1..)]
    pub manifests: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Save W1, b1, W2, b2 and a sidecar into this directory.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    pub seeds: Vec<u64>,
    /// Samples per class in each fitting split; 0 uses the whole split.
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    pub shots: usize,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Fit per seed on this labeled source split.
    #[arg(long, conflicts_with = "artifact", required_unless_present = "artifact")]
    pub source: Option<PathBuf>,
    /// Or apply a saved artifact.
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    #[arg(long, value_parser = parse::<Strategy>, default_value = "tune")]
    pub strategy: Strategy,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Subcommand)]
pub enum ProtocolCommand {
    /// Unfitted strategy on full test splits.
    ZeroShot {
        #[arg(long, value_parser = parse::<Strategy>, default_value = "zs")]
        strategy: Strategy,
        #[arg(long = "manifest", required = true, num_args = 1..)]
        manifests: Vec<PathBuf>,
    },
    /// Fit on few-shot base classes, evaluate base and new classes.
    BaseToNew {
        /// Training pool over all classes.
        #[arg(long)]
        train: PathBuf,
        /// Test split over all classes.
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_parser = parse::<Strategy>)]
        strategy: Strategy,
        #[command(flatten)]
        seeds: SeedArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit on a source dataset, evaluate on targets with their own classes.
    CrossDataset {
        #[command(flatten)]
        transfer: TransferArgs,
        #[arg(long = "target", required = true, num_args = 1..)]
        targets: Vec<PathBuf>,
    },
    /// Fit on a source dataset, evaluate on shifted variants with the same classes.
    DomainGen {
        #[command(flatten)]
        transfer: TransferArgs,
        #[arg(long = "variant", required = true, num_args = 1..)]
        variants: Vec<PathBuf>,
    },
}

/// Parses `args`, runs the command and writes the report. Returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads;
    let outcome = with_threads(threads, || execute(&cli, &args));
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, args: &[String]) -> Result<()> {
    let report = dispatch(&cli.command, recorded_command(args))?;
    let mut buf = Vec::new();
    report.render(cli.format, &mut buf).map_err(Error::Output)?;
    match &cli.out {
        Some(path) => fs::write(path, &buf).map_err(|e| Error::io(path, e)),
        None => io::stdout().write_all(&buf).map_err(Error::Output),
    }
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<LoadedDataset>> {
    paths.iter().map(|p| load_manifest(p)).collect()
}

fn datasets(loaded: &[LoadedDataset]) -> Vec<EnsembleData> {
    loaded.iter().map(|l| l.data.clone()).collect()
}

fn digests(loaded: &[&LoadedDataset]) -> Vec<ManifestDigest> {
    loaded.iter().map(|&l| l.into()).collect()
}

fn to_value(v: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("report values serialize")
}

struct Envelope {
    command: Vec<String>,
    seeds: Vec<u64>,
    manifests: Vec<ManifestDigest>,
    config: serde_json::Value,
}

impl Envelope {
    fn finish(self, result: serde_json::Value, table: Table) -> Report {
        Report {
            kit: Kit::default(),
            command: self.command,
            seeds: self.seeds,
            manifests: self.manifests,
            config: self.config,
            result,
            table,
        }
    }
}

#[derive(Debug, Serialize)]
struct DatasetAccuracy {
    dataset: String,
    acc: f64,
}

#[derive(Debug, Serialize)]
struct FittedEvaluation {
    strategy: Strategy,
    model_names: Vec<String>,
    datasets: Vec<DatasetAccuracy>,
    average: f64,
}

fn evaluate_fitted(fitted: &FittedEnsemble, loaded: &[LoadedDataset]) -> Result<(serde_json::Value, Table)> {
    let mut rows = Vec::with_capacity(loaded.len());
    for l in loaded {
        let acc = fitted
            .evaluate(&l.data)
            .map_err(|e| Error::data(l.path.display().to_string(), e))?;
        rows.push(DatasetAccuracy {
            dataset: l.data.dataset_name().to_string(),
            acc,
        });
    }
    let average = rows.iter().map(|r| r.acc).sum::<f64>() / rows.len() as f64;
    let mut table = Table::new(&["dataset", "acc"]);
    for r in &rows {
        table.push(vec![r.dataset.clone(), pct(r.acc)]);
    }
    if rows.len() > 1 {
        table.push(vec!["average".into(), pct(average)]);
    }
    let result = FittedEvaluation {
        strategy: fitted.strategy(),
        model_names: fitted.model_names.clone(),
        datasets: rows,
        average,
    };
    Ok((to_value(&result), table))
}

fn fit_config(strategy: Strategy, opts: &FitOptions) -> serde_json::Value {
    match strategy {
        Strategy::Tf => json!({
            "grid": opts.grid.values(),
            "search_mode": opts.search_mode,
            "sweeps": opts.sweeps,
            "budget": opts.budget,
        }),
        Strategy::Tune => {
            let train = &opts.train;
            json!({
                "downsample": opts.downsample,
                "input_type": opts.input_type,
                "anchor_fixed": opts.anchor_fixed,
                "epochs": train.epochs,
                "batch_size": train.batch_size,
                "initial_lr": train.initial_lr,
                "momentum": train.momentum,
                "warmup_epochs": train.warmup_epochs,
                "warmup_lr": train.warmup_lr,
                "seed": "per protocol seed",
            })
        }
        _ => json!({}),
    }
}

fn dispatch(command: &Command, recorded: Vec<String>) -> Result<Report> {
    let executor = RayonExecutor::default();
    match command {
        Command::Zs(a) | Command::Mean(a) | Command::CawAll(a) => {
            let strategy = match command {
                Command::Zs(_) => Strategy::Zs,
                Command::Mean(_) => Strategy::Mean,
                _ => Strategy::CawAll,
            };
            let loaded = load_all(&a.manifests)?;
            let report = run_zero_shot(&datasets(&loaded), strategy)?;
            let env = Envelope {
                command: recorded,
                seeds: vec![],
                manifests: digests(&loaded.iter().collect::<Vec<_>>()),
                config: json!({ "strategy": strategy }),
            };
            Ok(env.finish(to_value(&report), eval_table(&report)))
        }

        Command::TfSearch(a) => {
            let loaded = load_manifest(&a.manifest)?;
            let opts = FitOptions {
                grid: a.search.grid.clone(),
                search_mode: a.search.mode,
                sweeps: a.search.sweeps,
                budget: a.search.budget,
                ..FitOptions::default()
            };
            let fitted = fit(&loaded.data, Strategy::Tf, &opts, 0, &executor)?;
            if let Some(path) = &a.weights_out {
                artifact::save_weights(path, &fitted)?;
            }
            let FittedKind::Tf { search: Some(search), .. } = &fitted.kind else {
                unreachable!("tf fit returns a search result");
            };
            let mut table = Table::new(&["model", "weight"]);
            let mut w = search.weights.values.iter();
            for (i, name) in fitted.model_names.iter().enumerate() {
                let weight = if i == fitted.anchor { 1.0 } else { *w.next().expect("one weight per weak model") };
                let tag = if i == fitted.anchor { " (anchor)" } else { "" };
                table.push(vec![format!("{name}{tag}"), format!("{weight}")]);
            }
            table.push(vec!["search accuracy".into(), pct(100.0 * search.best_accuracy)]);
            table.push(vec!["evaluated".into(), search.evaluated_count.to_string()]);
            let env = Envelope {
                command: recorded,
                seeds: vec![],
                manifests: digests(&[&loaded]),
                config: json!({
                    "strategy": Strategy::Tf,
                    "grid": opts.grid.values(),
                    "search_mode": opts.search_mode,
                    "sweeps": opts.sweeps,
                    "budget": opts.budget,
                }),
            };
            let result = json!({
                "model_names": fitted.model_names,
                "anchor_index": fitted.anchor,
                "search": search,
            });
            Ok(env.finish(result, table))
        }

        Command::TfEval(a) | Command::TEval(a) => {
            let fitted = match command {
                Command::TfEval(_) => artifact::load_weights(&a.artifact)?,
                _ => artifact::load_swig(&a.artifact)?.0,
            };
            let loaded = load_all(&a.manifests)?;
            let (result, table) = evaluate_fitted(&fitted, &loaded)?;
            let config = match &fitted.kind {
                FittedKind::Tf { weights, .. } => json!({ "strategy": Strategy::Tf, "weights": weights.values }),
                FittedKind::Tune { config, .. } => json!({ "strategy": Strategy::Tune, "network": config }),
                _ => json!({}),
            };
            let env = Envelope {
                command: recorded,
                seeds: vec![],
                manifests: digests(&loaded.iter().collect::<Vec<_>>()),
                config,
            };
            Ok(env.finish(result, table))
        }

        Command::Tune(a) => {
            let loaded = load_manifest(&a.manifest)?;
            let train = train_config(&a.train, a.seed);
            let opts = FitOptions {
                downsample: a.train.downsample,
                input_type: a.train.input_type,
                anchor_fixed: a.train.anchor_fixed,
                train,
                ..FitOptions::default()
            };
            let mut fitted = fit(&loaded.data, Strategy::Tune, &opts, a.seed, &executor)?;
            let FittedKind::Tune {
                config,
                params,
                epoch_losses,
            } = &mut fitted.kind
            else {
                unreachable!("tune fit returns a network");
            };
            artifact::round_to_storage(params);
            let (config, epoch_losses) = (*config, epoch_losses.clone());
            let fused = fitted.predict(&loaded.data)?;
            let train_acc = 100.0 * accuracy(&fused, loaded.data.labels())?;
            if let Some(dir) = &a.params_out {
                artifact::save_swig(dir, &fitted, &train)?;
            }
            let mut table = Table::new(&["epoch", "loss"]);
            for (e, l) in epoch_losses.iter().enumerate() {
                table.push(vec![(e + 1).to_string(), format!("{l:.6}")]);
            }
            table.push(vec!["train accuracy".into(), pct(train_acc)]);
            let env = Envelope {
                command: recorded,
                seeds: vec![a.seed],
                manifests: digests(&[&loaded]),
                config: json!({ "strategy": Strategy::Tune, "network": config, "train": train }),
            };
            let result = json!({
                "model_names": fitted.model_names,
                "anchor_index": fitted.anchor,
                "hidden_dim": config.hidden_dim(),
                "num_weight": config.num_weight(),
                "epoch_losses": epoch_losses,
                "train_accuracy": train_acc,
            });
            Ok(env.finish(result, table))
        }

        Command::Protocol(p) => protocol(p, recorded, &executor),
        Command::Inspect(a) => inspect(&a.manifest, recorded),
    }
}

fn protocol(p: &ProtocolCommand, recorded: Vec<String>, executor: &RayonExecutor) -> Result<Report> {
    match p {
        ProtocolCommand::ZeroShot { strategy, manifests } => {
            let loaded = load_all(manifests)?;
            let report = run_zero_shot(&datasets(&loaded), *strategy)?;
            let env = Envelope {
                command: recorded,
                seeds: vec![],
                manifests: digests(&loaded.iter().collect::<Vec<_>>()),
                config: json!({ "protocol": report.protocol, "strategy": strategy }),
            };
            Ok(env.finish(to_value(&report), eval_table(&report)))
        }
        ProtocolCommand::BaseToNew {
            train,
            test,
            strategy,
            seeds,
            fit,
        } => {
            let train = load_manifest(train)?;
            let test = load_manifest(test)?;
            let opts = fit.options();
            let report = run_base_to_new(
                &train.data,
                &test.data,
                *strategy,
                &opts,
                &seeds.seeds,
                seeds.shots,
                executor,
            )?;
            let env = Envelope {
                command: recorded,
                seeds: seeds.seeds.clone(),
                manifests: digests(&[&train, &test]),
                config: json!({
                    "protocol": report.protocol,
                    "strategy": strategy,
                    "shots": seeds.shots,
                    "split": "first ceil(K/2) classes are base",
                    "fit": fit_config(*strategy, &opts),
                }),
            };
            Ok(env.finish(to_value(&report), eval_table(&report)))
        }
        ProtocolCommand::CrossDataset { transfer, targets } => {
            let loaded = load_all(targets)?;
            let (fitted, source, config) = transfer_artifacts(transfer, executor)?;
            let report = run_cross_dataset(&fitted, &datasets(&loaded))?;
            transfer_report(report, recorded, source, loaded, config)
        }
        ProtocolCommand::DomainGen { transfer, variants } => {
            let loaded = load_all(variants)?;
            let (fitted, source, config) = transfer_artifacts(transfer, executor)?;
            let classes = match &source {
                Some(s) => s.data.class_names().to_vec(),
                None => loaded[0].data.class_names().to_vec(),
            };
            let report = run_domain_generalization(&fitted, &classes, &datasets(&loaded))?;
            transfer_report(report, recorded, source, loaded, config)
        }
    }
}

type Transfer = (Vec<(u64, FittedEnsemble)>, Option<LoadedDataset>, serde_json::Value);

fn transfer_artifacts(t: &TransferArgs, executor: &RayonExecutor) -> Result<Transfer> {
    match (&t.source, &t.artifact) {
        (Some(src), _) => {
            let source = load_manifest(src)?;
            let opts = t.fit.options();
            let fitted = fit_per_seed(&source.data, t.strategy, &opts, &t.seeds.seeds, t.seeds.shots, executor)?;
            let config = json!({
                "strategy": t.strategy,
                "shots": t.seeds.shots,
                "fit": fit_config(t.strategy, &opts),
            });
            Ok((fitted, Some(source), config))
        }
        (None, Some(path)) => {
            let (fitted, seed) = if path.is_dir() {
                let (f, train) = artifact::load_swig(path)?;
                (f, train.seed)
            } else {
                (artifact::load_weights(path)?, 0)
            };
            let config = json!({ "strategy": fitted.strategy(), "artifact": path.display().to_string() });
            Ok((vec![(seed, fitted)], None, config))
        }
        (None, None) => Err(Error::Usage("either --source or --artifact is required".into())),
    }
}

fn transfer_report(
    report: vlme_core::protocols::EvalReport,
    recorded: Vec<String>,
    source: Option<LoadedDataset>,
    targets: Vec<LoadedDataset>,
    mut config: serde_json::Value,
) -> Result<Report> {
    config["protocol"] = to_value(&report.protocol);
    let mut all: Vec<&LoadedDataset> = source.iter().collect();
    all.extend(targets.iter());
    let env = Envelope {
        command: recorded,
        seeds: report.seeds.clone(),
        manifests: digests(&all),
        config,
    };
    Ok(env.finish(to_value(&report), eval_table(&report)))
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    name: String,
    source: &'static str,
    feature_dim: Option<usize>,
    temperature: Option<f64>,
    accuracy: f64,
}

fn inspect(path: &Path, recorded: Vec<String>) -> Result<Report> {
    let loaded = load_manifest(path)?;
    let data = &loaded.data;
    let mut models = Vec::new();
    let mut table = Table::new(&["model", "source", "feature_dim", "acc"]);
    for (i, (m, entry)) in data.models().iter().zip(&loaded.manifest.models).enumerate() {
        let acc = 100.0 * accuracy(&m.probs, data.labels())?;
        let source = if entry.probs_file.is_some() { "probs" } else { "features" };
        let feature_dim = m.features.as_ref().map(|f| f.dim());
        let tag = if i == data.anchor() { " (anchor)" } else { "" };
        table.push(vec![
            format!("{}{tag}", m.name),
            source.into(),
            feature_dim.map_or_else(|| "absent".into(), |d| d.to_string()),
            pct(acc),
        ]);
        models.push(ModelSummary {
            name: m.name.clone(),
            source,
            feature_dim,
            temperature: entry.temperature,
            accuracy: acc,
        });
    }
    let result = json!({
        "dataset": data.dataset_name(),
        "num_samples": data.num_samples(),
        "num_classes": data.num_classes(),
        "anchor_index": data.anchor(),
        "models": models,
    });
    let env = Envelope {
        command: recorded,
        seeds: vec![],
        manifests: digests(&[&loaded]),
        config: json!({}),
    };
    Ok(env.finish(result, table))
}
