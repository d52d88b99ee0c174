//! ResNet basic block: two 3x3 conv + batch-norm stages plus a shortcut.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::layers::batchnorm::{batch_norm, BatchNormConfig, RunningStats};
use crate::layers::conv::{conv2d, ConvGeometry};
use crate::layers::{relu, Mode};

/// Affine parameters and running statistics of one batch norm.
#[derive(Clone, Copy)]
pub struct BnHandles<'a> {
    pub gamma: Var,
    pub beta: Var,
    pub running: &'a RunningStats,
}

/// Recorded parameters of a basic block. `downsample` is the 1x1 projection
/// (conv, bn) used when the stride or channel count changes.
pub struct BasicBlockHandles<'a> {
    pub conv1: Var,
    pub bn1: BnHandles<'a>,
    pub conv2: Var,
    pub bn2: BnHandles<'a>,
    pub downsample: Option<(Var, BnHandles<'a>)>,
    pub stride: usize,
}

/// Output of a block plus fresh batch statistics for `bn1`, `bn2` and the
/// downsample bn (train mode only).
pub struct BlockOutput {
    pub output: Var,
    pub batch_stats: Vec<Option<RunningStats>>,
}

/// `relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))`.
pub fn residual_block(
    g: &mut Graph,
    input: Var,
    block: &BasicBlockHandles<'_>,
    config: BatchNormConfig,
    mode: Mode,
) -> Result<BlockOutput> {
    let in_ch = g.value(input).shape().get(1).copied().unwrap_or(0);
    let out_ch = g.value(block.conv1).shape()[0];
    let needs_projection = block.stride > 1 || in_ch != out_ch;
    if needs_projection != block.downsample.is_some() {
        return Err(Error::shape(format!(
            "block {in_ch}->{out_ch} stride {}: downsample {}",
            block.stride,
            if block.downsample.is_some() { "given but not needed" } else { "required" }
        )));
    }
    let mut stats = Vec::with_capacity(3);
    let bn = |g: &mut Graph, x: Var, h: &BnHandles<'_>, stats: &mut Vec<_>| -> Result<Var> {
        let (y, s) = batch_norm(g, x, h.gamma, h.beta, h.running, config, mode)?;
        stats.push(s);
        Ok(y)
    };

    let y = conv2d(g, input, block.conv1, None, ConvGeometry::new(block.stride, 1))?;
    let y = bn(g, y, &block.bn1, &mut stats)?;
    let y = relu(g, y)?;
    let y = conv2d(g, y, block.conv2, None, ConvGeometry::new(1, 1))?;
    let y = bn(g, y, &block.bn2, &mut stats)?;

    let shortcut = match &block.downsample {
        Some((conv, h)) => {
            let s = conv2d(g, input, *conv, None, ConvGeometry::new(block.stride, 0))?;
            bn(g, s, h, &mut stats)?
        }
        None => input,
    };
    if g.value(y).shape() != g.value(shortcut).shape() {
        return Err(Error::shape(format!(
            "residual branch {:?} vs shortcut {:?}",
            g.value(y).shape(),
            g.value(shortcut).shape()
        )));
    }
    let sum = g.add(y, shortcut)?;
    Ok(BlockOutput { output: relu(g, sum)?, batch_stats: stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    struct Owned {
        running: Vec<RunningStats>,
    }

    fn handles<'a>(
        g: &mut Graph,
        owned: &'a Owned,
        cin: usize,
        cout: usize,
        stride: usize,
        weight: f64,
    ) -> BasicBlockHandles<'a> {
        let bn = |g: &mut Graph, i: usize| BnHandles {
            gamma: g.parameter(Tensor::full(vec![cout], 1.7).unwrap()),
            beta: g.parameter(Tensor::zeros(vec![cout]).unwrap()),
            running: &owned.running[i],
        };
        let conv1 = g.parameter(Tensor::full(vec![cout, cin, 3, 3], weight).unwrap());
        let bn1 = bn(g, 0);
        let conv2 = g.parameter(Tensor::full(vec![cout, cout, 3, 3], weight).unwrap());
        let bn2 = bn(g, 1);
        let downsample = (stride > 1 || cin != cout).then(|| {
            let c = g.parameter(Tensor::full(vec![cout, cin, 1, 1], 0.1).unwrap());
            (c, bn(g, 2))
        });
        BasicBlockHandles { conv1, bn1, conv2, bn2, downsample, stride }
    }

    #[test]
    fn zero_branch_gives_relu_of_input() {
        let owned = Owned { running: vec![RunningStats::new(2); 3] };
        let mut g = Graph::new();
        let data: Vec<f64> = (0..32).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = g.constant(Tensor::new(vec![2, 2, 2, 4], data.clone()).unwrap());
        let block = handles(&mut g, &owned, 2, 2, 1, 0.0);
        let out = residual_block(&mut g, x, &block, BatchNormConfig::default(), Mode::Train).unwrap();
        let want: Vec<f64> = data.iter().map(|v| v.max(0.0)).collect();
        assert_eq!(g.value(out.output).data(), &want[..]);
        assert_eq!(out.batch_stats.len(), 2);
    }

    #[test]
    fn stride_two_doubles_channels_and_halves_space() {
        let owned = Owned { running: vec![RunningStats::new(6); 3] };
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![1, 3, 8, 8], 0.5).unwrap());
        let block = handles(&mut g, &owned, 3, 6, 2, 0.05);
        let out = residual_block(&mut g, x, &block, BatchNormConfig::default(), Mode::Eval).unwrap();
        assert_eq!(g.value(out.output).shape(), &[1, 6, 4, 4]);
    }

    #[test]
    fn missing_downsample_is_rejected() {
        let owned = Owned { running: vec![RunningStats::new(4); 3] };
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(vec![1, 2, 4, 4], 0.5).unwrap());
        let mut block = handles(&mut g, &owned, 2, 4, 1, 0.1);
        block.downsample = None;
        assert!(matches!(
            residual_block(&mut g, x, &block, BatchNormConfig::default(), Mode::Eval),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
