//! Flat `key = value` experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{AugmentPolicy, DEFAULT_INPUT_SIZE};
use crate::layers::Mode;
use crate::model::{Architecture, FeatureSelector, FreezePolicy, DEFAULT_HIDDEN};
use crate::sort::RouterConfig;
use crate::train::TrainConfig;

/// Every key accepted in a config file or as a `--key` flag.
pub const KEYS: &[(&str, &str)] = &[
    ("manifest", "dataset manifest CSV (path,label)"),
    ("checkpoint", "model checkpoint to read"),
    ("pretrained", "checkpoint whose backbone initializes training (head is re-initialized)"),
    ("stats", "channel statistics CSV to use instead of computing them"),
    ("out_dir", "directory for all outputs"),
    ("image", "input image (P6 PPM)"),
    ("input_dir", "directory of images to sort, processed in file-name order"),
    ("arch", "mini_resnet18 | mini_vgg"),
    ("archs", "comma-separated architectures to compare"),
    ("input_size", "model input side: 32, 64, 128 or 512"),
    ("width", "base channel width"),
    ("hidden", "classifier head hidden units"),
    ("epochs", "training epochs"),
    ("batch_size", "mini-batch size"),
    ("learning_rate", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam epsilon"),
    ("seed", "seed for initialization, split, shuffling, augmentation and synthesis"),
    ("freeze", "none | head_only | feature_extraction | fine_tune"),
    ("augment", "true | false"),
    ("flip_prob", "horizontal flip probability"),
    ("crop_padding", "edge-replicated padding before the random crop"),
    ("zoom_lo", "smallest zoom factor (<= 1)"),
    ("zoom_hi", "largest zoom factor (>= 1)"),
    ("bn_mode", "batch norm during updates: train | eval"),
    ("train_fraction", "share of each label used for training"),
    ("overfit_margin", "final |val_loss - train_loss| at which a run is flagged"),
    ("threshold", "minimum confidence to route to a compartment"),
    ("compartments", "label:compartment map, e.g. glass:1,metal:2,paper:3,plastic:4"),
    ("biodegradable", "comma-separated biodegradable labels"),
    ("selector", "initial | middle | last | all"),
    ("per_class", "synthetic images per label"),
    ("size", "synthetic image side in pixels"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub image: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub arch: Architecture,
    pub archs: Vec<Architecture>,
    pub input_size: usize,
    pub width: usize,
    pub hidden: usize,
    pub train: TrainConfig,
    pub augment: bool,
    pub augment_policy: AugmentPolicy,
    pub train_fraction: f64,
    pub overfit_margin: f64,
    pub router: RouterConfig,
    pub selectors: Vec<FeatureSelector>,
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: None,
            checkpoint: None,
            pretrained: None,
            stats: None,
            out_dir: PathBuf::from("out"),
            image: None,
            input_dir: None,
            arch: Architecture::MiniResnet18,
            archs: vec![Architecture::MiniResnet18, Architecture::MiniVgg],
            input_size: DEFAULT_INPUT_SIZE,
            width: 16,
            hidden: DEFAULT_HIDDEN,
            train: TrainConfig::default(),
            augment: true,
            augment_policy: AugmentPolicy::default(),
            train_fraction: 0.8,
            overfit_margin: 0.1,
            router: RouterConfig::default(),
            selectors: FeatureSelector::ALL.to_vec(),
            per_class: 100,
            size: 64,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn named<T: FromStr<Err = crate::Error>>(value: &str) -> Result<T, String> {
    value.parse().map_err(|e: crate::Error| e.to_string())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "manifest" => self.manifest = Some(v.into()),
            "checkpoint" => self.checkpoint = Some(v.into()),
            "pretrained" => self.pretrained = Some(v.into()),
            "stats" => self.stats = Some(v.into()),
            "out_dir" => self.out_dir = v.into(),
            "image" => self.image = Some(v.into()),
            "input_dir" => self.input_dir = Some(v.into()),
            "arch" => self.arch = named(v)?,
            "archs" => self.archs = v.split(',').map(|a| named(a.trim())).collect::<Result<_, _>>()?,
            "input_size" => self.input_size = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.adam.learning_rate = parse(key, v)?,
            "beta1" => self.train.adam.beta1 = parse(key, v)?,
            "beta2" => self.train.adam.beta2 = parse(key, v)?,
            "epsilon" => self.train.adam.epsilon = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "freeze" => self.train.freeze = Some(named::<FreezePolicy>(v)?),
            "augment" => self.augment = parse(key, v)?,
            "flip_prob" => self.augment_policy.horizontal_flip_prob = parse(key, v)?,
            "crop_padding" => self.augment_policy.crop_padding = parse(key, v)?,
            "zoom_lo" => self.augment_policy.zoom_range.0 = parse(key, v)?,
            "zoom_hi" => self.augment_policy.zoom_range.1 = parse(key, v)?,
            "bn_mode" => {
                self.train.bn_mode = match v {
                    "train" => Mode::Train,
                    "eval" => Mode::Eval,
                    _ => return Err(format!("invalid value {v:?} for bn_mode")),
                }
            }
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "overfit_margin" => self.overfit_margin = parse(key, v)?,
            "threshold" => self.router.threshold = parse(key, v)?,
            "compartments" => self.router.compartments = RouterConfig::parse_compartments(v).map_err(|e| e.to_string())?,
            "biodegradable" => self.router.biodegradable = RouterConfig::parse_biodegradable(v).map_err(|e| e.to_string())?,
            "selector" => {
                self.selectors = if v == "all" { FeatureSelector::ALL.to_vec() } else { vec![named(v)?] };
            }
            "per_class" => self.per_class = parse(key, v)?,
            "size" => self.size = parse(key, v)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), i + 1))?;
            self.set(key.trim(), value).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
        }
        Ok(())
    }

    /// Training configuration with the shared seed and augmentation folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            augment: self.augment.then_some(AugmentPolicy { seed: self.seed, ..self.augment_policy }),
            ..self.train.clone()
        }
    }
}
