use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    GlobalAvg,
}

fn nchw(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::shape(format!("{what} expects [N,C,H,W], got {:?}", t.shape()))),
    }
}

/// `pool2d(kind, window, stride)`; global averaging ignores window and stride.
pub fn pool2d(g: &mut Graph, input: Var, kind: PoolKind, window: usize, stride: usize) -> Result<Var> {
    match kind {
        PoolKind::Max => max_pool2d(g, input, window, stride, 0),
        PoolKind::GlobalAvg => global_avg_pool(g, input),
    }
}

/// Max over `window x window` patches; padded cells never win. The gradient
/// goes to the first maximum in row-major order.
pub fn max_pool2d(
    g: &mut Graph,
    input: Var,
    window: usize,
    stride: usize,
    padding: usize,
) -> Result<Var> {
    let x = g.value(input);
    let [n, c, h, w] = nchw(x, "max pool")?;
    if window == 0 || stride == 0 || window > h + 2 * padding || window > w + 2 * padding {
        return Err(Error::WindowTooLarge { window, height: h, width: w });
    }
    if padding >= window {
        return Err(Error::InvalidArgument(format!("padding {padding} >= window {window}")));
    }
    let oh = (h + 2 * padding - window) / stride + 1;
    let ow = (w + 2 * padding - window) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..][..h * w];
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = usize::MAX;
                for ki in 0..window {
                    let y = (oi * stride + ki) as isize - padding as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    for kj in 0..window {
                        let xx = (oj * stride + kj) as isize - padding as isize;
                        if xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let idx = y as usize * w + xx as usize;
                        if best_at == usize::MAX || src[idx] > best {
                            best = src[idx];
                            best_at = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(plane * h * w + best_at);
            }
        }
    }
    let out = Tensor::new(vec![n, c, oh, ow], out)?;
    Ok(g.record(&[input], out, MaxPoolFn { argmax }))
}

struct MaxPoolFn {
    argmax: Vec<usize>,
}

impl Backward for MaxPoolFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let mut dx = vec![0.0; ctx.inputs[0].numel()];
        for (&src, &gy) in self.argmax.iter().zip(ctx.grad_output) {
            dx[src] += gy;
        }
        Ok(vec![Some(dx)])
    }
}

/// Non-overlapping average pooling with a square window (stride = window).
pub fn avg_pool2d(g: &mut Graph, input: Var, window: usize) -> Result<Var> {
    let x = g.value(input);
    let [n, c, h, w] = nchw(x, "average pool")?;
    if window == 0 || window > h || window > w {
        return Err(Error::WindowTooLarge { window, height: h, width: w });
    }
    let (oh, ow) = (h / window, w / window);
    let scale = 1.0 / (window * window) as f64;
    let mut out = vec![0.0; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x.data()[plane * h * w..][..h * w];
        for oi in 0..oh {
            for oj in 0..ow {
                let mut s = 0.0;
                for ki in 0..window {
                    for kj in 0..window {
                        s += src[(oi * window + ki) * w + oj * window + kj];
                    }
                }
                out[(plane * oh + oi) * ow + oj] = s * scale;
            }
        }
    }
    let out = Tensor::new(vec![n, c, oh, ow], out)?;
    Ok(g.record(&[input], out, AvgPoolFn { window, dims: [n * c, h, w, oh, ow] }))
}

struct AvgPoolFn {
    window: usize,
    dims: [usize; 5],
}

impl Backward for AvgPoolFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let [planes, h, w, oh, ow] = self.dims;
        let k = self.window;
        let scale = 1.0 / (k * k) as f64;
        let mut dx = vec![0.0; planes * h * w];
        for plane in 0..planes {
            for oi in 0..oh {
                for oj in 0..ow {
                    let gy = ctx.grad_output[(plane * oh + oi) * ow + oj] * scale;
                    for ki in 0..k {
                        for kj in 0..k {
                            dx[plane * h * w + (oi * k + ki) * w + oj * k + kj] = gy;
                        }
                    }
                }
            }
        }
        Ok(vec![Some(dx)])
    }
}

/// Mean over H×W, giving `[N,C,1,1]`.
pub fn global_avg_pool(g: &mut Graph, input: Var) -> Result<Var> {
    let x = g.value(input);
    let [n, c, h, w] = nchw(x, "global average pool")?;
    let spatial = h * w;
    let out: Vec<f64> = x
        .data()
        .chunks(spatial)
        .map(|p| p.iter().sum::<f64>() / spatial as f64)
        .collect();
    let out = Tensor::new(vec![n, c, 1, 1], out)?;
    Ok(g.record(&[input], out, GlobalAvgFn { spatial }))
}

struct GlobalAvgFn {
    spatial: usize,
}

impl Backward for GlobalAvgFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let s = self.spatial;
        let dx = ctx
            .grad_output
            .iter()
            .flat_map(|&gy| std::iter::repeat_n(gy / s as f64, s))
            .collect();
        Ok(vec![Some(dx)])
    }
}
