use crate::data::LABELS;
use crate::error::{Error, Result};
use crate::layers::{BatchNormConfig, ConvGeometry, RunningStats};
use crate::model::init::{init_tensor, InitKind};
use crate::model::{Architecture, BlockSpec, FeatureSelector, Layer, Model, ParamStore};

pub const SUPPORTED_INPUT_SIZES: [usize; 4] = [32, 64, 128, 512];
pub const DEFAULT_HIDDEN: usize = 256;
const HEAD_PREFIX: &str = "head.";

/// Everything needed to rebuild a model's topology.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub width: usize,
    pub input_size: usize,
    pub hidden: usize,
    pub labels: Vec<String>,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(arch: Architecture, width: usize, input_size: usize, num_classes: usize) -> Self {
        ModelConfig {
            arch,
            width,
            input_size,
            hidden: DEFAULT_HIDDEN,
            labels: default_labels(num_classes),
            seed: 0,
        }
    }
}

/// The waste vocabulary for four classes, `class{i}` otherwise.
pub fn default_labels(num_classes: usize) -> Vec<String> {
    if num_classes == LABELS.len() {
        LABELS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|i| format!("class{i}")).collect()
    }
}

struct Builder {
    params: ParamStore,
    seed: u64,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: InitKind) {
        let t = init_tensor(shape, kind, self.seed, self.params.len());
        self.params.push(name, t, true);
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, bias: bool) -> Layer {
        let fan_in = cin * k * k;
        self.push(format!("{name}.weight"), vec![cout, cin, k, k], InitKind::FanIn(fan_in));
        if bias {
            self.push(format!("{name}.bias"), vec![cout], InitKind::Bias(fan_in));
        }
        Layer::Conv { name: name.to_string(), geometry: ConvGeometry::new(stride, pad), bias }
    }

    fn bn_params(&mut self, name: &str, c: usize) -> RunningStats {
        self.push(format!("{name}.gamma"), vec![c], InitKind::Ones);
        self.push(format!("{name}.beta"), vec![c], InitKind::Zeros);
        RunningStats::new(c)
    }

    fn bn(&mut self, name: &str, c: usize) -> Layer {
        Layer::BatchNorm { name: name.to_string(), running: self.bn_params(name, c) }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize, stride: usize) -> Layer {
        self.conv(&format!("{name}.conv1"), cin, cout, 3, stride, 1, false);
        let bn1 = self.bn_params(&format!("{name}.bn1"), cout);
        self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, 1, false);
        let bn2 = self.bn_params(&format!("{name}.bn2"), cout);
        let downsample = (stride > 1 || cin != cout).then(|| {
            self.conv(&format!("{name}.downsample.conv"), cin, cout, 1, stride, 0, false);
            self.bn_params(&format!("{name}.downsample.bn"), cout)
        });
        Layer::Block(Box::new(BlockSpec {
            name: name.to_string(),
            in_channels: cin,
            out_channels: cout,
            stride,
            bn1,
            bn2,
            downsample,
        }))
    }

    fn linear(&mut self, name: &str, fin: usize, fout: usize) -> Layer {
        self.push(format!("{name}.weight"), vec![fin, fout], InitKind::FanIn(fin));
        self.push(format!("{name}.bias"), vec![fout], InitKind::Bias(fin));
        Layer::Linear { name: name.to_string() }
    }
}

fn check(width: usize, input_size: usize, labels: &[String], hidden: usize) -> Result<()> {
    if !SUPPORTED_INPUT_SIZES.contains(&input_size) {
        return Err(Error::UnsupportedInputSize(input_size));
    }
    if width < 4 {
        return Err(Error::InvalidArgument(format!("width must be at least 4, got {width}")));
    }
    if labels.is_empty() || hidden == 0 {
        return Err(Error::InvalidArgument("need at least one class and a positive hidden width".into()));
    }
    Ok(())
}

pub fn build(config: &ModelConfig) -> Result<Model> {
    match config.arch {
        Architecture::MiniResnet18 => resnet18(config),
        Architecture::MiniVgg => vgg(config),
    }
}

/// ResNet18 topology at base width `width`: stem conv + max pool, four stages
/// of two basic blocks with widths `(w, 2w, 4w, 8w)`, global average pool,
/// classifier head.
pub fn build_mini_resnet18(width: usize, input_size: usize, num_classes: usize, seed: u64) -> Result<Model> {
    let mut c = ModelConfig::new(Architecture::MiniResnet18, width, input_size, num_classes);
    c.seed = seed;
    build(&c)
}

/// Plain VGG-style stack: three blocks of two 3x3 conv + relu and a 2x2 max
/// pool, widths `(w, 2w, 4w)`, average-pooled to a 4x4 grid and flattened.
pub fn build_mini_vgg(width: usize, input_size: usize, num_classes: usize, seed: u64) -> Result<Model> {
    let mut c = ModelConfig::new(Architecture::MiniVgg, width, input_size, num_classes);
    c.seed = seed;
    build(&c)
}

fn resnet18(config: &ModelConfig) -> Result<Model> {
    let &ModelConfig { width: w, input_size, hidden, seed, .. } = config;
    check(w, input_size, &config.labels, hidden)?;
    let mut b = Builder { params: ParamStore::new(), seed };
    let mut backbone = Vec::new();
    backbone.push(if input_size >= 64 {
        b.conv("stem.conv", 3, w, 7, 2, 3, false)
    } else {
        b.conv("stem.conv", 3, w, 3, 1, 1, false)
    });
    backbone.push(b.bn("stem.bn", w));
    backbone.push(Layer::Relu);
    let mut taps = vec![(FeatureSelector::Initial, backbone.len() - 1)];
    backbone.push(Layer::MaxPool { window: 3, stride: 2, padding: 1 });

    let mut cin = w;
    for stage in 1..=4 {
        let cout = w << (stage - 1);
        for j in 0..2 {
            let stride = if stage > 1 && j == 0 { 2 } else { 1 };
            backbone.push(b.block(&format!("layer{stage}.{j}"), cin, cout, stride));
            cin = cout;
        }
        match stage {
            2 => taps.push((FeatureSelector::Middle, backbone.len() - 1)),
            4 => taps.push((FeatureSelector::Last, backbone.len() - 1)),
            _ => {}
        }
    }
    backbone.push(Layer::GlobalAvgPool);
    backbone.push(Layer::Flatten);
    finish(config, b.params, backbone, taps, 8 * w)
}

fn vgg(config: &ModelConfig) -> Result<Model> {
    let &ModelConfig { width: w, input_size, hidden, seed, .. } = config;
    check(w, input_size, &config.labels, hidden)?;
    let mut b = Builder { params: ParamStore::new(), seed };
    let mut backbone = Vec::new();
    let mut taps = Vec::new();
    let mut cin = 3;
    for blk in 1..=3 {
        let cout = w << (blk - 1);
        for k in 1..=2 {
            backbone.push(b.conv(&format!("block{blk}.conv{k}"), cin, cout, 3, 1, 1, true));
            backbone.push(Layer::Relu);
            cin = cout;
            if blk == 1 && k == 1 {
                taps.push((FeatureSelector::Initial, backbone.len() - 1));
            }
        }
        match blk {
            2 => taps.push((FeatureSelector::Middle, backbone.len() - 1)),
            3 => taps.push((FeatureSelector::Last, backbone.len() - 1)),
            _ => {}
        }
        backbone.push(Layer::MaxPool { window: 2, stride: 2, padding: 0 });
    }
    backbone.push(Layer::AvgPool { window: input_size / 32 });
    backbone.push(Layer::Flatten);
    finish(config, b.params, backbone, taps, 4 * w * 16)
}

fn finish(
    config: &ModelConfig,
    params: ParamStore,
    backbone: Vec<Layer>,
    taps: Vec<(FeatureSelector, usize)>,
    feature_dim: usize,
) -> Result<Model> {
    let model = Model {
        arch: config.arch,
        width: config.width,
        input_size: config.input_size,
        hidden: config.hidden,
        labels: Vec::new(),
        backbone,
        head: Vec::new(),
        params,
        taps,
        feature_dim,
        bn_config: BatchNormConfig::default(),
        channel_stats: None,
    };
    attach_classifier_head(model, config.hidden, &config.labels, config.seed)
}

/// Replaces the classifier head with a freshly initialized
/// `linear(features, hidden) -> relu -> linear(hidden, classes) -> log_softmax`.
/// Backbone parameters are untouched.
pub fn attach_classifier_head(mut model: Model, hidden: usize, labels: &[String], seed: u64) -> Result<Model> {
    if !matches!(model.backbone.last(), Some(Layer::Flatten)) {
        return Err(Error::NoFeatureVector);
    }
    if labels.is_empty() || hidden == 0 {
        return Err(Error::InvalidArgument("need at least one class and a positive hidden width".into()));
    }
    model.params.remove_prefix(HEAD_PREFIX);
    let mut b = Builder { params: std::mem::take(&mut model.params), seed };
    let fc1 = b.linear("head.fc1", model.feature_dim, hidden);
    let fc2 = b.linear("head.fc2", hidden, labels.len());
    model.params = b.params;
    model.head = vec![fc1, Layer::Relu, fc2, Layer::LogSoftmax];
    model.hidden = hidden;
    model.labels = labels.to_vec();
    Ok(model)
}
