//! Network assembly, parameter storage, freeze policies and checkpoints.

mod builders;
pub mod checkpoint;
mod freeze;
mod init;
mod params;

use std::fmt;
use std::str::FromStr;

pub use builders::{attach_classifier_head, build, build_mini_resnet18, build_mini_vgg, default_labels, ModelConfig};
pub use builders::{DEFAULT_HIDDEN, SUPPORTED_INPUT_SIZES};
pub use checkpoint::{load_checkpoint, save_checkpoint, HeadMode};
pub use freeze::{apply_freeze_policy, FreezePolicy};
pub use params::{ParamStore, Parameter};

use crate::autodiff::{Graph, Var};
use crate::data::ChannelStats;
use crate::error::{Error, Result};
use crate::layers::{self, BasicBlockHandles, BatchNormConfig, BnHandles, ConvGeometry, Mode, RunningStats};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    MiniResnet18,
    MiniVgg,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::MiniResnet18 => "mini_resnet18",
            Architecture::MiniVgg => "mini_vgg",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini_resnet18" => Ok(Architecture::MiniResnet18),
            "mini_vgg" => Ok(Architecture::MiniVgg),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }
}

/// Where feature maps are captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSelector {
    Initial,
    Middle,
    Last,
}

impl FeatureSelector {
    pub const ALL: [FeatureSelector; 3] =
        [FeatureSelector::Initial, FeatureSelector::Middle, FeatureSelector::Last];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSelector::Initial => "initial",
            FeatureSelector::Middle => "middle",
            FeatureSelector::Last => "last",
        }
    }
}

impl FromStr for FeatureSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(FeatureSelector::Initial),
            "middle" => Ok(FeatureSelector::Middle),
            "last" => Ok(FeatureSelector::Last),
            other => Err(Error::UnknownSelector(other.to_string())),
        }
    }
}

/// A residual basic block. Parameters live in the model's [`ParamStore`]
/// under `{name}.conv1.weight`, `{name}.bn1.gamma`, ... and
/// `{name}.downsample.conv.weight` / `{name}.downsample.bn.*`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub bn1: RunningStats,
    pub bn2: RunningStats,
    pub downsample: Option<RunningStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Weight `{name}.weight` of shape `[O,C,k,k]`, optional `{name}.bias`.
    Conv { name: String, geometry: ConvGeometry, bias: bool },
    /// Affine `{name}.gamma`/`{name}.beta`.
    BatchNorm { name: String, running: RunningStats },
    Relu,
    MaxPool { window: usize, stride: usize, padding: usize },
    AvgPool { window: usize },
    GlobalAvgPool,
    Flatten,
    Block(Box<BlockSpec>),
    /// Weight `{name}.weight` of shape `[F,G]`, bias `{name}.bias`.
    Linear { name: String },
    LogSoftmax,
}

/// Handles produced by one forward pass.
pub struct ForwardPass {
    /// `[N, classes]` log-probabilities.
    pub output: Var,
    /// Parameter index -> leaf on the graph.
    pub bindings: Vec<(usize, Var)>,
    pub taps: Vec<(FeatureSelector, Var)>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub(crate) arch: Architecture,
    pub(crate) width: usize,
    pub(crate) input_size: usize,
    pub(crate) hidden: usize,
    pub(crate) labels: Vec<String>,
    pub(crate) backbone: Vec<Layer>,
    pub(crate) head: Vec<Layer>,
    pub(crate) params: ParamStore,
    pub(crate) taps: Vec<(FeatureSelector, usize)>,
    pub(crate) feature_dim: usize,
    pub(crate) bn_config: BatchNormConfig,
    pub channel_stats: Option<ChannelStats>,
}

impl Model {
    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn backbone(&self) -> &[Layer] {
        &self.backbone
    }

    pub fn head(&self) -> &[Layer] {
        &self.head
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.params.iter().filter(|p| p.trainable).map(|p| p.name.as_str()).collect()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Adds the gradients from a backward pass into each parameter's grad slot.
    pub fn accumulate_grads(&mut self, pass: &ForwardPass, grads: &crate::autodiff::Gradients) -> Result<()> {
        for &(idx, var) in &pass.bindings {
            if let Some(g) = grads.get(var) {
                self.params.by_index_mut(idx).tensor.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Running statistics in traversal order, with their layer paths.
    pub fn running_stats(&self) -> Vec<(String, &RunningStats)> {
        let mut out = Vec::new();
        for layer in self.backbone.iter().chain(&self.head) {
            match layer {
                Layer::BatchNorm { name, running } => out.push((name.clone(), running)),
                Layer::Block(b) => {
                    out.push((format!("{}.bn1", b.name), &b.bn1));
                    out.push((format!("{}.bn2", b.name), &b.bn2));
                    if let Some(ds) = &b.downsample {
                        out.push((format!("{}.downsample.bn", b.name), ds));
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn running_stats_mut(&mut self) -> Vec<&mut RunningStats> {
        let mut out = Vec::new();
        for layer in self.backbone.iter_mut().chain(self.head.iter_mut()) {
            match layer {
                Layer::BatchNorm { running, .. } => out.push(running),
                Layer::Block(b) => {
                    out.push(&mut b.bn1);
                    out.push(&mut b.bn2);
                    if let Some(ds) = &mut b.downsample {
                        out.push(ds);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Records a forward pass. Trainable parameters become gradient-tracking
    /// leaves; in train mode batch norms fold batch statistics into their
    /// running statistics.
    pub fn forward(&mut self, g: &mut Graph, input: Var, mode: Mode) -> Result<ForwardPass> {
        let (pass, batch_stats) = self.run(g, input, mode, true)?;
        if mode == Mode::Train {
            let momentum = self.bn_config.momentum;
            for (running, batch) in self.running_stats_mut().into_iter().zip(batch_stats) {
                if let Some(batch) = batch {
                    running.update(&batch, momentum);
                }
            }
        }
        Ok(pass)
    }

    /// Eval-mode forward without gradient tracking. Returns the graph so that
    /// callers can read captured feature maps.
    pub fn forward_eval(&self, input: Tensor) -> Result<(Graph, ForwardPass)> {
        let mut g = Graph::new();
        let x = g.constant(input);
        let (pass, _) = self.run(&mut g, x, Mode::Eval, false)?;
        Ok((g, pass))
    }

    /// Log-probabilities `[N, classes]` for a `[N,3,S,S]` batch, eval mode.
    pub fn predict(&self, input: Tensor) -> Result<Tensor> {
        let (g, pass) = self.forward_eval(input)?;
        Ok(g.value(pass.output).clone())
    }

    fn run(
        &self,
        g: &mut Graph,
        input: Var,
        mode: Mode,
        track: bool,
    ) -> Result<(ForwardPass, Vec<Option<RunningStats>>)> {
        let shape = g.value(input).shape().to_vec();
        let s = self.input_size;
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s {
            return Err(Error::shape(format!("model expects [N,3,{s},{s}] input, got {shape:?}")));
        }
        let bindings: Vec<(usize, Var)> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let t = p.tensor.clone().with_requires_grad(track && p.trainable);
                (i, g.leaf(t))
            })
            .collect();
        let var = |name: &str| -> Result<Var> {
            self.params
                .index_of(name)
                .map(|i| bindings[i].1)
                .ok_or_else(|| Error::ArchMismatch(format!("missing parameter {name}")))
        };

        let mut stats = Vec::new();
        let mut taps = Vec::new();
        let mut x = input;
        for (i, layer) in self.backbone.iter().chain(&self.head).enumerate() {
            x = self.apply(g, layer, x, mode, &var, &mut stats)?;
            for (sel, _) in self.taps.iter().filter(|(_, at)| *at == i) {
                taps.push((*sel, x));
            }
        }
        Ok((ForwardPass { output: x, bindings, taps }, stats))
    }

    fn apply(
        &self,
        g: &mut Graph,
        layer: &Layer,
        x: Var,
        mode: Mode,
        var: &dyn Fn(&str) -> Result<Var>,
        stats: &mut Vec<Option<RunningStats>>,
    ) -> Result<Var> {
        let bn_handles = |name: &str, running| -> Result<BnHandles<'_>> {
            Ok(BnHandles { gamma: var(&format!("{name}.gamma"))?, beta: var(&format!("{name}.beta"))?, running })
        };
        match layer {
            Layer::Conv { name, geometry, bias } => {
                let b = if *bias { Some(var(&format!("{name}.bias"))?) } else { None };
                layers::conv2d(g, x, var(&format!("{name}.weight"))?, b, *geometry)
            }
            Layer::BatchNorm { name, running } => {
                let h = bn_handles(name, running)?;
                let (y, s) = layers::batch_norm(g, x, h.gamma, h.beta, running, self.bn_config, mode)?;
                stats.push(s);
                Ok(y)
            }
            Layer::Relu => layers::relu(g, x),
            Layer::MaxPool { window, stride, padding } => {
                layers::max_pool2d(g, x, *window, *stride, *padding)
            }
            Layer::AvgPool { window } => {
                if *window == 1 {
                    Ok(x)
                } else {
                    layers::avg_pool2d(g, x, *window)
                }
            }
            Layer::GlobalAvgPool => layers::global_avg_pool(g, x),
            Layer::Flatten => layers::flatten(g, x),
            Layer::Block(b) => {
                let n = &b.name;
                let handles = BasicBlockHandles {
                    conv1: var(&format!("{n}.conv1.weight"))?,
                    bn1: bn_handles(&format!("{n}.bn1"), &b.bn1)?,
                    conv2: var(&format!("{n}.conv2.weight"))?,
                    bn2: bn_handles(&format!("{n}.bn2"), &b.bn2)?,
                    downsample: match &b.downsample {
                        Some(r) => Some((
                            var(&format!("{n}.downsample.conv.weight"))?,
                            bn_handles(&format!("{n}.downsample.bn"), r)?,
                        )),
                        None => None,
                    },
                    stride: b.stride,
                };
                let out = layers::residual_block(g, x, &handles, self.bn_config, mode)?;
                stats.extend(out.batch_stats);
                Ok(out.output)
            }
            Layer::Linear { name } => layers::linear(
                g,
                x,
                var(&format!("{name}.weight"))?,
                var(&format!("{name}.bias"))?,
            ),
            Layer::LogSoftmax => layers::log_softmax(g, x),
        }
    }

    /// Parameter names grouped per convolutional layer in forward order
    /// (conv1, conv2, downsample within a block), each with the affine
    /// parameters of the batch norm that follows it.
    pub fn conv_units(&self) -> Vec<Vec<String>> {
        let mut units = Vec::new();
        let bn = |n: &str| vec![format!("{n}.gamma"), format!("{n}.beta")];
        for (i, layer) in self.backbone.iter().enumerate() {
            match layer {
                Layer::Conv { name, bias, .. } => {
                    let mut unit = vec![format!("{name}.weight")];
                    if *bias {
                        unit.push(format!("{name}.bias"));
                    }
                    if let Some(Layer::BatchNorm { name, .. }) = self.backbone.get(i + 1) {
                        unit.extend(bn(name));
                    }
                    units.push(unit);
                }
                Layer::Block(b) => {
                    let n = &b.name;
                    for k in ["1", "2"] {
                        let mut unit = vec![format!("{n}.conv{k}.weight")];
                        unit.extend(bn(&format!("{n}.bn{k}")));
                        units.push(unit);
                    }
                    if b.downsample.is_some() {
                        let mut unit = vec![format!("{n}.downsample.conv.weight")];
                        unit.extend(bn(&format!("{n}.downsample.bn")));
                        units.push(unit);
                    }
                }
                _ => {}
            }
        }
        units
    }

    /// Names of the classifier-head parameters.
    pub fn head_parameter_names(&self) -> Vec<String> {
        self.head
            .iter()
            .filter_map(|l| match l {
                Layer::Linear { name } => Some([format!("{name}.weight"), format!("{name}.bias")]),
                _ => None,
            })
            .flatten()
            .collect()
    }
}
