//! Command-line front end: argument definitions and the stages behind each subcommand.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::dataset::{
    augment_balance, generate_toy_dataset, load_dataset, remap_scenario, save_dataset, split_dataset,
    LabeledImageSet, PreprocessConfig, Scenario, Split,
};
use crate::error::{Error, Result};
use crate::evaluation::{classification_metrics, confusion_matrix, grad_cam, roc_auc, MetricsReport, RocCurve};
use crate::hyperopt::{run_search, SearchSpace};
use crate::image::write_image;
use crate::netbuilder::{attach_head, count_complexity, grow_network, ComplexityReport, GrowOptions};
use crate::nn::{argmax, checkpoint_load, checkpoint_save, train, ModelState, OptimizerConfig, Tensor};
use crate::representatives::{select_representatives, RepresentativeSet};
use crate::rng::{seeded, stream};

pub const DEFAULT_EPSILON: f64 = 0.99;
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.7, 0.15, 0.15);
pub const HEAD_DROPOUT: f64 = 0.25;
/// Grades accepted in `labels.csv`.
pub const MAX_GRADES: usize = 5;

const SPLIT_STREAM: u64 = 1;
const AUGMENT_STREAM: u64 = 2;
const REPRESENT_STREAM: u64 = 3;
const HEAD_STREAM: u64 = 4;
const TUNE_STREAM: u64 = 5;
const INIT_STREAM: u64 = 6;

#[derive(Debug, Parser)]
#[command(name = "dpcn", version, about = "Build, train and inspect DeepPCANet classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset root holding labels.csv and images/
    #[arg(long)]
    pub data: PathBuf,
    /// Grading scenario: sc1 keeps grades, sc2 is 0 vs 1-4, sc3 is 0-1 vs 2-4
    #[arg(long, default_value = "sc1")]
    pub scenario: Scenario,
    /// Square input side; omitted keeps images that are already square with a side divisible by 4, otherwise 64
    #[arg(long)]
    pub side: Option<usize>,
    /// Master seed for every random choice
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (computation is sequential; 1 is bit-deterministic)
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic oriented-grating dataset
    Toygen {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Select representative training images
    Represent {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Grow the architecture and write arch.json plus a PCA-initialized checkpoint
    Build {
        #[command(flatten)]
        data: DataArgs,
        /// Energy threshold in (0, 1]
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Random hyperparameter search from an initial checkpoint
    Tune {
        #[command(flatten)]
        data: DataArgs,
        /// Initial model (from build)
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Epochs per trial
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Train a model
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Initial model; when absent, --arch is randomly initialized
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        arch: Option<PathBuf>,
        /// Optimizer configuration JSON; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Metrics on the test split
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Grad-CAM heatmaps for the test split
    Gradcam {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Target class; defaults to each image's true class
        #[arg(long)]
        class: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// represent, build, tune (when --trials > 0), train and eval in one run
    Pipeline {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        /// Tuning trials; 0 trains with the default optimizer configuration
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Loaded, relabelled, split and (train only) balanced data.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: Split,
    pub num_classes: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("epsilon out of range: {epsilon} not in (0,1]")))
    }
}

/// Reads the dataset, applies the scenario, resizes when needed, splits 70/15/15 and
/// balances the training part.
pub fn prepare_data(args: &DataArgs) -> Result<PreparedData> {
    if args.threads == 0 {
        return Err(Error::invalid("--threads must be >= 1"));
    }
    if args.threads > 1 {
        info!("computation is sequential; --threads {} has no effect", args.threads);
    }
    let raw = load_dataset(&args.data, MAX_GRADES)?;
    let set = match args.scenario {
        Scenario::Sc1 => {
            let classes = raw.labels().into_iter().max().unwrap_or(0) + 1;
            LabeledImageSet::new(raw.into_items(), classes.max(2))?
        }
        s => remap_scenario(&raw, s)?,
    };
    let (h, w, _) = set.shape().ok_or(Error::NoSamples)?;
    let native = h == w && h % 4 == 0;
    let cfg = match args.side {
        Some(side) => Some(PreprocessConfig { target_side: side, ..PreprocessConfig::default() }),
        None if native => None,
        None => Some(PreprocessConfig::default()),
    };
    let set = match cfg {
        Some(cfg) => {
            let items = set
                .items()
                .iter()
                .map(|it| crate::dataset::preprocess_image(it, &cfg))
                .collect::<Result<Vec<_>>>()?;
            LabeledImageSet::new(items, set.num_classes())?
        }
        None => set,
    };
    let num_classes = set.num_classes();
    let mut split = split_dataset(&set, SPLIT_RATIOS, &mut stream(args.seed, SPLIT_STREAM))?;
    split.train = augment_balance(&split.train, &mut stream(args.seed, AUGMENT_STREAM), &PreprocessConfig::default())?;
    info!(
        "data: {} classes, train {}, val {}, test {}",
        num_classes,
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(PreparedData { split, num_classes })
}

pub fn represent_stage(data: &PreparedData, seed: u64) -> Result<RepresentativeSet> {
    select_representatives(&data.split.train, &mut stream(seed, REPRESENT_STREAM))
}

/// Grows the body from the representatives and attaches a freshly initialized head.
pub fn build_stage(reps: &RepresentativeSet, epsilon: f64, seed: u64) -> Result<ModelState> {
    check_epsilon(epsilon)?;
    let body = grow_network(reps, epsilon, &GrowOptions::default())?;
    attach_head(&body, HEAD_DROPOUT, &mut stream(seed, HEAD_STREAM))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub num_test: usize,
    pub depth: usize,
    pub complexity: ComplexityReport,
    pub metrics: MetricsReport,
}

/// Metrics of `model` on `set`, plus the ROC curve for two classes.
pub fn evaluate_model(model: &ModelState, set: &LabeledImageSet) -> Result<(EvalSummary, Option<RocCurve>)> {
    let x = Tensor::from_images(set.items())?;
    let truth = set.labels();
    let mut scores = Vec::with_capacity(set.len());
    let mut predicted = Vec::with_capacity(set.len());
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(32) {
        let probs = model.predict(&x.select(chunk))?;
        for r in 0..chunk.len() {
            let row = probs.row(r);
            predicted.push(argmax(row));
            if row.len() == 2 {
                scores.push(row[1]);
            }
        }
    }
    let cm = confusion_matrix(&truth, &predicted, model.num_classes())?;
    let metrics = classification_metrics(&cm)?;
    let roc = if model.num_classes() == 2 {
        let positive: Vec<bool> = truth.iter().map(|&t| t == 1).collect();
        match roc_auc(&scores, &positive) {
            Ok(r) => Some(r),
            Err(e) => {
                warn!("ROC skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let summary = EvalSummary {
        num_test: set.len(),
        depth: model.arch().depth(),
        complexity: count_complexity(model.arch())?,
        metrics,
    };
    Ok((summary, roc))
}

fn write_eval(out: &Path, summary: &EvalSummary, roc: Option<&RocCurve>) -> Result<()> {
    write_file(&out.join("metrics.json"), &to_json(summary))?;
    if let Some(r) = roc {
        write_file(&out.join("roc.csv"), r.to_csv().as_bytes())?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelState> {
    checkpoint_load(&read_file(path)?)
}

fn load_config(path: Option<&Path>) -> Result<OptimizerConfig> {
    match path {
        Some(p) => serde_json::from_slice(&read_file(p)?)
            .map_err(|e| Error::Format(format!("{}: {e}", p.display()))),
        None => Ok(OptimizerConfig::default()),
    }
}

fn check_model_data(model: &ModelState, data: &PreparedData) -> Result<()> {
    let (h, w, c) = data.split.train.shape().ok_or(Error::NoSamples)?;
    if model.num_classes() != data.num_classes || [h, w, c] != model.arch().input {
        return Err(Error::invalid(format!(
            "model expects {:?} with {} classes; data is {:?} with {} classes",
            model.arch().input,
            model.num_classes(),
            [h, w, c],
            data.num_classes
        )));
    }
    Ok(())
}

fn train_and_write(
    model: &ModelState,
    data: &PreparedData,
    mut cfg: OptimizerConfig,
    epochs: usize,
    seed: u64,
    out: &Path,
) -> Result<ModelState> {
    cfg.epochs = epochs;
    cfg.seed = seed;
    let (trained, report) = train(model, &data.split.train, &data.split.val, &cfg)?;
    write_file(&out.join("model.dpcn"), &checkpoint_save(&trained))?;
    write_file(&out.join("train_config.json"), &to_json(&cfg))?;
    write_file(&out.join("train_report.json"), &to_json(&report))?;
    Ok(trained)
}

fn write_heatmaps(model: &ModelState, set: &LabeledImageSet, class: Option<usize>, out: &Path) -> Result<usize> {
    let dir = out.join("heatmaps");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for item in set.items() {
        let target = class.unwrap_or(item.grade);
        let map = grad_cam(model, item, target)?;
        write_image(&dir.join(format!("{}_c{target}.pgm", item.id)), &map.to_image())?;
        write_image(&dir.join(format!("{}_c{target}_overlay.ppm", item.id)), &map.overlay(&item.pixels))?;
    }
    Ok(set.len())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Toygen { classes, per_class, side, seed, out } => {
            let set = generate_toy_dataset(per_class, classes, side, &mut seeded(seed))?;
            save_dataset(&out, &set)?;
            println!("wrote {} images to {}", set.len(), out.display());
        }
        Command::Represent { data, out } => {
            let prepared = prepare_data(&data)?;
            let reps = represent_stage(&prepared, data.seed)?;
            reps.write(&out)?;
            println!("selected {} representatives", reps.len());
        }
        Command::Build { data, epsilon, out } => {
            check_epsilon(epsilon)?;
            let prepared = prepare_data(&data)?;
            let reps = represent_stage(&prepared, data.seed)?;
            let model = build_stage(&reps, epsilon, data.seed)?;
            write_file(&out.join("representatives.json"), &reps.manifest_json())?;
            write_file(&out.join("arch.json"), &model.arch().to_json())?;
            write_file(&out.join("model_init.dpcn"), &checkpoint_save(&model))?;
            println!("built depth {} with {} parameters", model.arch().depth(), model.num_parameters());
        }
        Command::Tune { data, checkpoint, trials, epochs, out } => {
            let prepared = prepare_data(&data)?;
            let model = load_model(&checkpoint)?;
            check_model_data(&model, &prepared)?;
            let space = SearchSpace { trial_epochs: epochs, n_trials: trials, ..SearchSpace::default() };
            let result = run_search(&space, &model, &prepared.split.train, &prepared.split.val, &mut stream(data.seed, TUNE_STREAM))?;
            write_file(&out.join("trials.jsonl"), &result.to_json_lines())?;
            write_file(&out.join("best_config.json"), &to_json(&result.best))?;
            println!("best trial {} of {}", result.best_index, result.trials.len());
        }
        Command::Train { data, checkpoint, arch, config, epochs, out } => {
            let prepared = prepare_data(&data)?;
            let model = match (checkpoint, arch) {
                (Some(c), _) => load_model(&c)?,
                (None, Some(a)) => {
                    let spec = crate::netbuilder::load_arch(&read_file(&a)?)?;
                    ModelState::random(spec, &mut stream(data.seed, INIT_STREAM))?
                }
                (None, None) => return Err(Error::invalid("train needs --checkpoint or --arch")),
            };
            check_model_data(&model, &prepared)?;
            let cfg = load_config(config.as_deref())?;
            train_and_write(&model, &prepared, cfg, epochs, data.seed, &out)?;
            println!("wrote {}", out.join("model.dpcn").display());
        }
        Command::Eval { data, checkpoint, out } => {
            let prepared = prepare_data(&data)?;
            let model = load_model(&checkpoint)?;
            check_model_data(&model, &prepared)?;
            let (summary, roc) = evaluate_model(&model, &prepared.split.test)?;
            write_eval(&out, &summary, roc.as_ref())?;
            println!("test accuracy {:.4}", summary.metrics.accuracy);
        }
        Command::Gradcam { data, checkpoint, class, out } => {
            let prepared = prepare_data(&data)?;
            let model = load_model(&checkpoint)?;
            check_model_data(&model, &prepared)?;
            let n = write_heatmaps(&model, &prepared.split.test, class, &out)?;
            println!("wrote {n} heatmaps");
        }
        Command::Pipeline { data, epsilon, epochs, trials, config, out } => {
            check_epsilon(epsilon)?;
            let summary = run_pipeline(&data, epsilon, epochs, trials, config.as_deref(), &out)?;
            println!("depth {} test accuracy {:.4}", summary.depth, summary.metrics.accuracy);
        }
    }
    Ok(())
}

/// Every stage in sequence, writing `representatives.json`, `arch.json`,
/// `model_init.dpcn`, `model.dpcn`, `train_report.json`, `metrics.json` and, for
/// two classes, `roc.csv` under `out`.
pub fn run_pipeline(
    data: &DataArgs,
    epsilon: f64,
    epochs: usize,
    trials: usize,
    config: Option<&Path>,
    out: &Path,
) -> Result<EvalSummary> {
    check_epsilon(epsilon)?;
    let prepared = prepare_data(data)?;
    let reps = represent_stage(&prepared, data.seed)?;
    write_file(&out.join("representatives.json"), &reps.manifest_json())?;
    let model = build_stage(&reps, epsilon, data.seed)?;
    write_file(&out.join("arch.json"), &model.arch().to_json())?;
    write_file(&out.join("model_init.dpcn"), &checkpoint_save(&model))?;
    let cfg = if trials > 0 {
        let space = SearchSpace { n_trials: trials, ..SearchSpace::default() };
        let result = run_search(&space, &model, &prepared.split.train, &prepared.split.val, &mut stream(data.seed, TUNE_STREAM))?;
        write_file(&out.join("trials.jsonl"), &result.to_json_lines())?;
        result.best
    } else {
        load_config(config)?
    };
    let trained = train_and_write(&model, &prepared, cfg, epochs, data.seed, out)?;
    let (summary, roc) = evaluate_model(&trained, &prepared.split.test)?;
    write_eval(out, &summary, roc.as_ref())?;
    Ok(summary)
}

/// Runs the parsed command, printing failures as `error[<kind>]: <message>` on one line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            1
        }
    }
}
