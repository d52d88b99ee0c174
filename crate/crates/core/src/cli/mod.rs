//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data or I/O error, 3 numeric failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, KEYS};

use crate::data::{
    channel_stats_of, decode_image, gen_synthetic, load_manifest, normalize_image, split_dataset, square_resize, ChannelStats, Dataset,
    DatasetManifest, Record,
};
use crate::error::Error;
use crate::eval::{evaluate, extract_feature_maps, Evaluation};
use crate::model::checkpoint::peek_architecture;
use crate::model::{build, default_labels, load_checkpoint, save_checkpoint, Architecture, HeadMode, Model, ModelConfig};
use crate::plot::{line_chart, Series};
use crate::sort::run_stream;
use crate::train::{train_with_progress, TrainingReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

const NUM_CLASSES: usize = 4;

/// Legend name, points, dashed.
type NamedSeries = (String, Vec<(f64, f64)>, bool);

fn key_help(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, h)| h)
}

macro_rules! options {
    ($(#[$doc:meta])* $name:ident { $($field:ident),* $(,)? }) => {
        $(#[$doc])*
        #[derive(Args, Debug)]
        pub struct $name {
            /// Config file of `key = value` lines; flags override it
            #[arg(long, value_name = "FILE")]
            config: Option<PathBuf>,
            $(
                #[arg(long, value_name = "VALUE", help = key_help(stringify!($field)))]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn resolve(&self) -> Result<ExperimentConfig, CliError> {
                let mut c = ExperimentConfig::default();
                if let Some(p) = &self.config {
                    c.load_file(p).map_err(CliError::Usage)?;
                }
                $(
                    if let Some(v) = &self.$field {
                        c.set(stringify!($field), v).map_err(CliError::Usage)?;
                    }
                )*
                Ok(c)
            }
        }
    };
}

options!(
    /// Per-channel mean and standard deviation of a dataset
    StatsArgs { manifest, input_size, out_dir }
);
options!(
    /// Stratified train/validation split of a manifest
    SplitArgs { manifest, train_fraction, seed, out_dir }
);
options!(
    /// Train a classifier on the training split and validate on the rest
    TrainArgs {
        manifest, pretrained, stats, out_dir, arch, input_size, width, hidden, epochs, batch_size, learning_rate, beta1, beta2,
        epsilon, seed, freeze, augment, flip_prob, crop_padding, zoom_lo, zoom_hi, bn_mode, train_fraction,
    }
);
options!(
    /// Accuracy, confusion matrix and per-image predictions for a checkpoint
    EvalArgs { checkpoint, manifest, stats, out_dir }
);
options!(
    /// Train several architectures on the same split and compare their curves
    CompareArgs {
        manifest, stats, out_dir, archs, input_size, width, hidden, epochs, batch_size, learning_rate, beta1, beta2, epsilon,
        seed, augment, flip_prob, crop_padding, zoom_lo, zoom_hi, bn_mode, train_fraction, overfit_margin,
    }
);
options!(
    /// Export normalized activation maps for one image
    FeatureMapsArgs { checkpoint, image, selector, out_dir }
);
options!(
    /// Classify a stream of images and route each to a compartment
    SortArgs { checkpoint, manifest, input_dir, image, threshold, compartments, biodegradable, out_dir }
);
options!(
    /// Write a procedural four-class image set with a manifest
    GenSyntheticArgs { per_class, size, seed, out_dir }
);

#[derive(Subcommand, Debug)]
enum Command {
    Stats(StatsArgs),
    Split(SplitArgs),
    Train(TrainArgs),
    Eval(EvalArgs),
    Compare(CompareArgs),
    FeatureMaps(FeatureMapsArgs),
    Sort(SortArgs),
    GenSynthetic(GenSyntheticArgs),
}

/// Waste-image classifier: data preparation, training, evaluation and sorting.
#[derive(Parser, Debug)]
#[command(name = "binbrain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_) | Error::NonDeterministicFunction(..) => EXIT_NUMERIC,
        Error::UnknownPolicy(_) | Error::UnknownArchitecture(_) | Error::UnknownSelector(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Stats(a) => stats(a.resolve()?),
        Command::Split(a) => split(a.resolve()?),
        Command::Train(a) => train(a.resolve()?),
        Command::Eval(a) => eval(a.resolve()?),
        Command::Compare(a) => compare(a.resolve()?),
        Command::FeatureMaps(a) => feature_maps(a.resolve()?),
        Command::Sort(a) => sort(a.resolve()?),
        Command::GenSynthetic(a) => synthetic(a.resolve()?),
    }
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| CliError::Usage(format!("missing required key {key} (--{} or config file)", key.replace('_', "-"))))
}

fn out_dir(cfg: &ExperimentConfig) -> CliResult<&Path> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::UnwritableDirectory { path: dir.into(), source: e })?;
    Ok(dir)
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn stats(cfg: ExperimentConfig) -> CliResult {
    let manifest = load_manifest(require(&cfg.manifest, "manifest")?)?;
    let stats = crate::data::compute_channel_stats(&manifest, cfg.input_size)?;
    let out = out_dir(&cfg)?;
    stats.write(out.join("stats.csv"))?;
    print!("{}", stats.to_csv());
    Ok(())
}

/// Re-roots a manifest at `root`, turning record paths absolute when the
/// roots differ.
fn rebase(manifest: &DatasetManifest, root: &Path) -> CliResult<DatasetManifest> {
    let same = fs::canonicalize(&manifest.root).ok() == fs::canonicalize(root).ok();
    let base = fs::canonicalize(&manifest.root).map_err(|e| Error::io(&manifest.root, e))?;
    let records = manifest
        .records
        .iter()
        .map(|r| Record { path: if same { r.path.clone() } else { base.join(&r.path).display().to_string() }, label: r.label })
        .collect();
    Ok(DatasetManifest { root: root.into(), records })
}

fn split(cfg: ExperimentConfig) -> CliResult {
    let manifest = load_manifest(require(&cfg.manifest, "manifest")?)?;
    let (train, val) = split_dataset(&manifest, cfg.train_fraction, cfg.seed)?;
    let out = out_dir(&cfg)?;
    rebase(&train, out)?.write(out.join("train.csv"))?;
    rebase(&val, out)?.write(out.join("val.csv"))?;
    println!("train {} {:?}", train.len(), train.label_counts());
    println!("val {} {:?}", val.len(), val.label_counts());
    Ok(())
}

struct Run {
    model: Model,
    report: TrainingReport,
    evaluation: Evaluation,
}

/// Split, load, train and validate one architecture; writes the run's
/// artifacts into `out`.
fn run_training(cfg: &ExperimentConfig, arch: Architecture, out: &Path) -> CliResult<Run> {
    let manifest = load_manifest(require(&cfg.manifest, "manifest")?)?;
    let labels = default_labels(NUM_CLASSES);
    let mut model = match &cfg.pretrained {
        Some(p) => {
            let stored = peek_architecture(p)?;
            load_checkpoint(p, stored, &HeadMode::ReinitHead { labels, hidden: cfg.hidden, seed: cfg.seed })?
        }
        None => build(&ModelConfig {
            arch,
            width: cfg.width,
            input_size: cfg.input_size,
            hidden: cfg.hidden,
            labels,
            seed: cfg.seed,
        })?,
    };
    let (train_m, val_m) = split_dataset(&manifest, cfg.train_fraction, cfg.seed)?;
    let train_set = Dataset::load(&train_m, model.input_size())?;
    let val_set = Dataset::load(&val_m, model.input_size())?;
    let stats = match &cfg.stats {
        Some(p) => ChannelStats::read(p)?,
        None => channel_stats_of(train_set.samples.iter().map(|s| &s.image))?,
    };
    let train_cfg = cfg.train_config();
    eprintln!(
        "{}: {} parameters, {} train / {} val images",
        model.architecture(),
        model.parameter_count(),
        train_set.len(),
        val_set.len()
    );
    let report = train_with_progress(&mut model, &train_set, &val_set, &stats, &train_cfg, |e| {
        eprintln!(
            "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  train_acc {:.4}  val_acc {:.4}  ({:.1}s)",
            e.epoch, e.train_loss, e.val_loss, e.train_accuracy, e.val_accuracy, e.seconds
        );
    })?;
    let evaluation = evaluate(&model, &val_set, &stats, train_cfg.batch_size)?;

    save_checkpoint(&model, out.join("model.ckpt"))?;
    stats.write(out.join("stats.csv"))?;
    report.write_csv(out.join("report.csv"))?;
    write(out.join("loss.svg"), report.loss_chart(&format!("{} loss", model.architecture())))?;
    write(out.join("accuracy.svg"), report.accuracy_chart(&format!("{} accuracy", model.architecture())))?;
    evaluation.write(out)?;
    Ok(Run { model, report, evaluation })
}

fn train(cfg: ExperimentConfig) -> CliResult {
    let out = out_dir(&cfg)?;
    let run = run_training(&cfg, cfg.arch, out)?;
    let last = run.report.final_metrics().expect("at least one epoch");
    println!("architecture {}", run.model.architecture());
    println!("final train_loss {:.4} val_loss {:.4}", last.train_loss, last.val_loss);
    println!("final train_acc {:.4} val_acc {:.4}", last.train_accuracy, last.val_accuracy);
    match run.report.saturation_epoch {
        Some(e) => println!("validation accuracy saturated after epoch {e}"),
        None => println!("validation accuracy did not saturate"),
    }
    println!("validation confusion matrix:\n{}", run.evaluation.confusion.to_csv()?);
    Ok(())
}

fn load_for_inference(cfg: &ExperimentConfig) -> CliResult<Model> {
    let path = require(&cfg.checkpoint, "checkpoint")?;
    let arch = peek_architecture(path)?;
    let mut model = load_checkpoint(path, arch, &HeadMode::Strict { labels: None })?;
    if let Some(p) = &cfg.stats {
        model.channel_stats = Some(ChannelStats::read(p)?);
    }
    Ok(model)
}

fn eval(cfg: ExperimentConfig) -> CliResult {
    let model = load_for_inference(&cfg)?;
    let manifest = load_manifest(require(&cfg.manifest, "manifest")?)?;
    let data = Dataset::load(&manifest, model.input_size())?;
    let stats = model.channel_stats.unwrap_or(ChannelStats::IDENTITY);
    let evaluation = evaluate(&model, &data, &stats, cfg.train.batch_size)?;
    evaluation.write(out_dir(&cfg)?)?;
    println!("accuracy {:.4} ({} of {})", evaluation.accuracy, evaluation.confusion.trace(), evaluation.confusion.total());
    println!("misclassified {}", evaluation.misclassified().count());
    print!("{}", evaluation.confusion.to_csv()?);
    Ok(())
}

fn compare(cfg: ExperimentConfig) -> CliResult {
    if cfg.archs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two architectures".into()));
    }
    let out = out_dir(&cfg)?;
    let mut merged = String::from("run,arch,epoch,train_loss,val_loss,train_acc,val_acc,seconds\n");
    let mut summary = String::from("run,arch,parameters,final_train_loss,final_val_loss,final_val_acc,gap,overfit,saturation_epoch\n");
    let mut loss_series = Vec::new();
    let mut acc_series = Vec::new();
    for (i, &arch) in cfg.archs.iter().enumerate() {
        let name = format!("run{}_{arch}", i + 1);
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| Error::UnwritableDirectory { path: dir.clone(), source: e })?;
        let run = run_training(&cfg, arch, &dir)?;
        for line in run.report.to_csv().lines().skip(1) {
            merged.push_str(&format!("{},{arch},{line}\n", i + 1));
        }
        let last = run.report.final_metrics().expect("at least one epoch");
        let gap = (last.val_loss - last.train_loss).abs();
        let overfit = gap >= cfg.overfit_margin;
        summary.push_str(&format!(
            "{},{arch},{},{},{},{},{},{overfit},{}\n",
            i + 1,
            run.model.parameter_count(),
            crate::textfmt::sig17(last.train_loss),
            crate::textfmt::sig17(last.val_loss),
            crate::textfmt::sig17(last.val_accuracy),
            crate::textfmt::sig17(gap),
            run.report.saturation_epoch.map_or(String::new(), |e| e.to_string())
        ));
        println!("{name}: val_acc {:.4} gap {:.4}{}", last.val_accuracy, gap, if overfit { "  OVERFIT" } else { "" });
        let pts = |f: fn(&crate::train::EpochMetrics) -> f64| -> Vec<(f64, f64)> {
            run.report.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect()
        };
        loss_series.push((format!("{name} train"), pts(|e| e.train_loss), false));
        loss_series.push((format!("{name} val"), pts(|e| e.val_loss), true));
        acc_series.push((format!("{name} train"), pts(|e| e.train_accuracy), false));
        acc_series.push((format!("{name} val"), pts(|e| e.val_accuracy), true));
    }
    let chart = |title: &str, y: &str, s: &[NamedSeries]| {
        let series: Vec<Series<'_>> = s.iter().map(|(n, p, d)| Series { name: n, points: p.clone(), dashed: *d }).collect();
        line_chart(title, "epoch", y, &series)
    };
    write(out.join("compare.csv"), merged)?;
    write(out.join("summary.csv"), summary)?;
    write(out.join("compare_loss.svg"), chart("Training and validation loss", "loss", &loss_series))?;
    write(out.join("compare_accuracy.svg"), chart("Training and validation accuracy", "accuracy", &acc_series))?;
    Ok(())
}

fn feature_maps(cfg: ExperimentConfig) -> CliResult {
    let model = load_for_inference(&cfg)?;
    let path = require(&cfg.image, "image")?;
    let size = model.input_size();
    let image = square_resize(&decode_image(path)?, size);
    let x = normalize_image(&image, &model.channel_stats.unwrap_or(ChannelStats::IDENTITY), size)?;
    let out = out_dir(&cfg)?;
    for &sel in &cfg.selectors {
        let set = extract_feature_maps(&model, &x, sel)?;
        let files = set.write_pgm(out.join("feature_maps"))?;
        println!("{} {} {}x{}x{} -> {} files", sel.name(), set.layer, set.channels(), set.height(), set.width(), files.len());
    }
    Ok(())
}

fn sort(cfg: ExperimentConfig) -> CliResult {
    let model = load_for_inference(&cfg)?;
    let mut items: Vec<PathBuf> = Vec::new();
    if let Some(m) = &cfg.manifest {
        let manifest = load_manifest(m)?;
        items.extend(manifest.records.iter().map(|r| manifest.resolve(r)));
    }
    if let Some(dir) = &cfg.input_dir {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        items.extend(files);
    }
    items.extend(cfg.image.clone());
    if items.is_empty() {
        return Err(CliError::Usage("nothing to sort: give --manifest, --input-dir or --image".into()));
    }
    let report = run_stream(&model, &items, &cfg.router)?;
    let out = out_dir(&cfg)?;
    write(out.join("decisions.csv"), report.log_csv())?;
    write(out.join("tallies.csv"), report.tallies_csv())?;
    for e in report.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!("{}: {}", e.item, e.error.as_deref().unwrap_or_default());
    }
    print!("{}", report.tallies_csv());
    Ok(())
}

fn synthetic(cfg: ExperimentConfig) -> CliResult {
    let out = cfg.out_dir.as_path();
    let manifest = gen_synthetic(out, cfg.per_class, cfg.size, cfg.seed)?;
    println!("{} images written, manifest {}", manifest.len(), out.join("manifest.csv").display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_taxonomy() {
        assert_eq!(exit_code(&Error::NonFiniteLoss { epoch: 1, batch: 2 }), EXIT_NUMERIC);
        assert_eq!(exit_code(&Error::EmptyManifest("m".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::UnknownArchitecture("x".into())), EXIT_USAGE);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["binbrain", "stats", "--bogus", "1"]), EXIT_USAGE);
        assert_eq!(run(["binbrain"]), EXIT_USAGE);
        assert_eq!(run(["binbrain", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_manifest_file_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("absent.csv");
        let out = dir.path().join("out");
        let code = run(["binbrain", "train", "--manifest", m.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_DATA);
        assert_eq!(run(["binbrain", "train"]), EXIT_USAGE);
    }
}
