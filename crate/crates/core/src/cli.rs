//! Command-line front end. The `modclass` binary only calls [`run`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataset::{load_dir, split, FrameSet, SplitSpec, Splits};
use crate::ensemble::{Ensemble, EnsembleReport, EnsembleSpec};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelConfig, SeMsfn, HYPERPARAMETER_GRID};
use crate::signal::{synth_dataset, ModulationMode, SynthSpec};
use crate::tensor::checkpoint::Checkpoint;
use crate::train::{evaluate, report_csv, rerender_summary, train_with, Control, TrainConfig, TrainingCurve};
use crate::util::write_atomic;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const MODEL_FILE: &str = "model.ckpt";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "modclass", version, about = "Modulation classification toolkit")]
pub struct Cli {
    /// Worker threads for synthesis and evaluation; 1 makes every run bit-reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize labeled I/Q frames into shards.
    Synth(SynthArgs),
    /// Train a classifier on a shard directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a shard directory.
    Eval(EvalArgs),
    /// Evaluate a voting ensemble described by a JSON spec.
    Ensemble(EnsembleArgs),
    /// Rebuild summary.json from the CSVs of an eval or ensemble run.
    Report(ReportArgs),
}

fn desk_modes() -> Vec<String> {
    ModulationMode::DESK_SET.map(|m| m.name().to_string()).to_vec()
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Comma-separated mode names.
    #[arg(long, default_values_t = desk_modes(), value_delimiter = ',')]
    pub modes: Vec<String>,
    #[arg(long, default_value_t = -20, allow_negative_numbers = true)]
    pub snr_min: i32,
    #[arg(long, default_value_t = 30, allow_negative_numbers = true)]
    pub snr_max: i32,
    #[arg(long, default_value_t = 2)]
    pub snr_step: i32,
    #[arg(long, default_value_t = 100)]
    pub frames_per_cell: usize,
    #[arg(long, default_value_t = 4096)]
    pub shard_size: usize,
    #[arg(long, env = "MODCLASS_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn snr_grid(&self) -> Result<Vec<i32>> {
        if self.snr_step <= 0 {
            return Err(invalid!("--snr-step must be positive"));
        }
        if self.snr_min > self.snr_max {
            return Err(invalid!("--snr-min exceeds --snr-max"));
        }
        Ok((self.snr_min..=self.snr_max).step_by(self.snr_step as usize).collect())
    }

    pub fn spec(&self) -> Result<SynthSpec> {
        let modes = self
            .modes
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<ModulationMode>>>()?;
        Ok(SynthSpec {
            shard_size: self.shard_size,
            ..SynthSpec::new(modes, self.snr_grid()?, self.frames_per_cell, self.seed)
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 9)]
    pub kernel_size: usize,
    /// Bottleneck blocks per stage (number of branches).
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    /// Squeeze-and-excitation reduction ratio.
    #[arg(long, default_value_t = 1)]
    pub reduction: usize,
    /// Number of stacked multi-scale stages.
    #[arg(long, default_value_t = 2)]
    pub repetition: usize,
    /// Channel width of every branch.
    #[arg(long, default_value_t = 32)]
    pub base_filters: usize,
    /// Build the network without squeeze-and-excitation blocks.
    #[arg(long)]
    pub no_se: bool,
}

impl ModelArgs {
    pub fn config(&self, num_classes: usize, input_length: usize) -> ModelConfig {
        ModelConfig {
            kernel_size: self.kernel_size,
            blocks: self.blocks,
            reduction_ratio: self.reduction,
            repetition: self.repetition,
            num_classes,
            base_filters: self.base_filters,
            se_enabled: !self.no_se,
            input_length,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Shard directory.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Seeds weight initialization and batch order.
    #[arg(long, env = "MODCLASS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Seeds the train/val/test split; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Also save the current weights every N epochs.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Train every row of the block/reduction/repetition grid in turn.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Restrict the confusion matrix to one SNR.
    #[arg(long, allow_negative_numbers = true)]
    pub confusion_snr: Option<i32>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EnsembleArgs {
    /// JSON file listing member checkpoints and the tie-break rule.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    #[arg(long, allow_negative_numbers = true)]
    pub confusion_snr: Option<i32>,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory holding accuracy_by_snr.csv and confusion.csv.
    #[arg(long)]
    pub dir: PathBuf,
}

/// Provenance record written next to a command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub wall_seconds: f64,
}

impl RunManifest<'_> {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join(RUN_MANIFEST_FILE), text.as_bytes())
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite(_) => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            }
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid!("cannot build thread pool: {e}"))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::Report(a) => cmd_report(a),
    })
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let start = Instant::now();
    let spec = args.spec()?;
    let manifest = synth_dataset(&spec, &args.out)?;
    info!(
        "wrote {} frames in {} shards to {}",
        manifest.total_frames,
        manifest.shards.len(),
        args.out.display()
    );
    RunManifest {
        command: "synth",
        config: to_value(&spec),
        seed: Some(args.seed),
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&args.out)
}

/// Dataset plus its split, as recorded in a checkpoint.
fn load_split(data: &Path, split_seed: u64) -> Result<(FrameSet, Splits)> {
    if !data.is_dir() {
        return Err(invalid!("data directory {} does not exist", data.display()));
    }
    let set = load_dir(data)?;
    let splits = split(&set, &SplitSpec::new(split_seed))?;
    Ok((set, splits))
}

fn select(splits: &Splits, name: SplitName) -> Vec<usize> {
    match name {
        SplitName::Train => splits.train.clone(),
        SplitName::Val => splits.val.clone(),
        SplitName::Test => splits.test.clone(),
        SplitName::All => {
            let mut all: Vec<usize> = splits.train.iter().chain(&splits.val).chain(&splits.test).copied().collect();
            all.sort_unstable();
            all
        }
    }
}

fn class_names(set: &FrameSet) -> Vec<&'static str> {
    set.classes.iter().map(|m| m.name()).collect()
}

/// Outcome of one training run as written to `training.json`.
#[derive(Debug, Serialize)]
struct TrainingSummary {
    param_count: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_accuracy: f64,
    test_accuracy: f64,
}

fn train_one(
    set: &FrameSet,
    splits: &Splits,
    config: ModelConfig,
    cfg: &TrainConfig,
    split_seed: u64,
    out: &Path,
) -> Result<(SeMsfn, TrainingCurve, TrainingSummary)> {
    std::fs::create_dir_all(out)?;
    let mut model = SeMsfn::new(config, cfg.seed)?;
    info!("training {:?}: {} parameters", config, model.param_count());
    let extra = json!({
        "classes": class_names(set),
        "split_seed": split_seed,
        "train": cfg,
    });
    let ckpt_dir = out.join("checkpoints");
    let curve = train_with(&mut model, set, &splits.train, &splits.val, cfg, |stats, m| {
        if cfg.checkpoint_every.is_some_and(|k| stats.epoch % k == 0) {
            std::fs::create_dir_all(&ckpt_dir)?;
            m.save(&ckpt_dir.join(format!("epoch-{:03}.ckpt", stats.epoch)), extra.clone())?;
        }
        Ok(Control::Continue)
    })?;
    model.save(&out.join(MODEL_FILE), extra)?;
    let report = evaluate(&model, set, &splits.test, 256, None)?;
    report_csv(&report, Some(&curve), out)?;
    let best = curve.best().copied().expect("at least one epoch");
    let summary = TrainingSummary {
        param_count: model.param_count(),
        epochs_run: curve.epochs.len(),
        best_epoch: best.epoch,
        best_val_accuracy: best.val_accuracy,
        test_accuracy: report.overall_accuracy(),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_atomic(&out.join("training.json"), text.as_bytes())?;
    Ok((model, curve, summary))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: args.seed,
        checkpoint_every: args.checkpoint_every,
        early_stop_patience: args.patience,
    };
    cfg.validate()?;
    let split_seed = args.split_seed.unwrap_or(args.seed);
    let (set, splits) = load_split(&args.data, split_seed)?;
    let length = set
        .frames
        .first()
        .map(|f| f.len())
        .ok_or_else(|| invalid!("dataset is empty"))?;
    let base = args.model.config(set.num_classes(), length);
    base.validate()?;

    if args.grid {
        let mut rows = csv::Writer::from_writer(Vec::new());
        let header = [
            "block", "reduction", "repetition", "kernel_size", "params", "best_val_accuracy", "test_accuracy",
        ];
        rows.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
        for (i, &row) in HYPERPARAMETER_GRID.iter().enumerate() {
            let config = base.with_grid_row(row);
            let dir = args.out.join(format!("row-{:02}", i + 1));
            let (_, _, s) = train_one(&set, &splits, config, &cfg, split_seed, &dir)?;
            rows.write_record([
                row.0.to_string(),
                row.1.to_string(),
                row.2.to_string(),
                config.kernel_size.to_string(),
                s.param_count.to_string(),
                s.best_val_accuracy.to_string(),
                s.test_accuracy.to_string(),
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = rows.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(&args.out.join("grid.csv"), &bytes)?;
    } else {
        let (_, _, s) = train_one(&set, &splits, base, &cfg, split_seed, &args.out)?;
        info!(
            "best epoch {} val {:.4} test {:.4}",
            s.best_epoch, s.best_val_accuracy, s.test_accuracy
        );
    }
    RunManifest {
        command: "train",
        config: json!({ "args": to_value(args), "model": base, "train": cfg, "split_seed": split_seed }),
        seed: Some(args.seed),
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&args.out)
}

/// Loads a checkpoint and the split seed and class table recorded with it.
fn load_member(path: &Path) -> Result<(SeMsfn, u64, Vec<String>)> {
    let ckpt = Checkpoint::load(path)?;
    let model = SeMsfn::from_checkpoint(&ckpt)?;
    let extra = ckpt.header.get("extra");
    let seed = extra
        .and_then(|e| e.get("split_seed"))
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Incompatible(format!("{} records no split seed", path.display())))?;
    let classes = extra
        .and_then(|e| e.get("classes"))
        .and_then(|c| serde_json::from_value(c.clone()).ok())
        .ok_or_else(|| Error::Incompatible(format!("{} records no class table", path.display())))?;
    Ok((model, seed, classes))
}

fn check_classes(path: &Path, recorded: &[String], set: &FrameSet) -> Result<()> {
    if recorded.iter().map(String::as_str).ne(class_names(set)) {
        return Err(Error::Incompatible(format!(
            "{} was trained on classes {recorded:?}, data has {:?}",
            path.display(),
            class_names(set)
        )));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let (model, split_seed, classes) = load_member(&args.checkpoint)?;
    let (set, splits) = load_split(&args.data, split_seed)?;
    check_classes(&args.checkpoint, &classes, &set)?;
    let indices = select(&splits, args.split);
    let report = evaluate(&model, &set, &indices, args.batch_size, args.confusion_snr)?;
    report_csv(&report, None, &args.out)?;
    info!("overall accuracy {:.4} on {} frames", report.overall_accuracy(), indices.len());
    RunManifest {
        command: "eval",
        config: json!({ "args": to_value(args), "model": model.config(), "split_seed": split_seed }),
        seed: Some(split_seed),
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&args.out)
}

fn write_members(report: &EnsembleReport, out: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = vec![["member".to_string(), "accuracy".to_string()]];
    rows.extend(report.members.iter().map(|m| [m.name.clone(), m.accuracy.to_string()]));
    rows.push(["ensemble".into(), report.report.overall_accuracy().to_string()]);
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(&out.join("members.csv"), &bytes)
}

pub fn cmd_ensemble(args: &EnsembleArgs) -> Result<()> {
    let start = Instant::now();
    let spec = EnsembleSpec::load(&args.spec)?;
    let mut members = Vec::with_capacity(spec.members.len());
    let mut split_seed = None;
    let mut data: Option<(FrameSet, Splits)> = None;
    for path in &spec.members {
        let (model, seed, classes) = load_member(path)?;
        match split_seed {
            None => {
                split_seed = Some(seed);
                data = Some(load_split(&args.data, seed)?);
            }
            Some(s) if s != seed => warn!(
                "{} was split with seed {seed}, evaluating on seed {s}; its training frames may leak into the test split",
                path.display()
            ),
            Some(_) => {}
        }
        let (set, _) = data.as_ref().expect("loaded with the first member");
        check_classes(path, &classes, set)?;
        members.push((path.display().to_string(), model));
    }
    let (set, splits) = data.ok_or_else(|| invalid!("ensemble spec lists no members"))?;
    let length = members[0].1.config().input_length;
    if let Some((name, _)) = members.iter().find(|(_, m)| m.config().input_length != length) {
        return Err(Error::Incompatible(format!("member {name} expects a different input length")));
    }
    let ensemble = Ensemble::new(members, spec.tie_break)?;
    let indices = select(&splits, args.split);
    let t = Instant::now();
    let report = ensemble.evaluate(&set, &indices, args.batch_size, args.confusion_snr)?;
    info!(
        "ensemble of {} accuracy {:.4} ({:.3} ms per frame)",
        ensemble.len(),
        report.report.overall_accuracy(),
        t.elapsed().as_secs_f64() * 1e3 / indices.len() as f64
    );
    report_csv(&report.report, None, &args.out)?;
    write_members(&report, &args.out)?;
    RunManifest {
        command: "ensemble",
        config: json!({ "args": to_value(args), "spec": spec }),
        seed: split_seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&args.out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let start = Instant::now();
    let summary = rerender_summary(&args.dir)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    RunManifest {
        command: "report",
        config: to_value(args),
        seed: None,
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: start.elapsed().as_secs_f64(),
    }
    .write(&args.dir)
}
