//! 2-D cross-correlation with symmetric zero padding, lowered to a matrix
//! product over im2col columns.

use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize) -> Self {
        ConvGeometry { stride, padding }
    }

    /// `floor((size + 2 padding - kernel) / stride) + 1`, or `None` if empty.
    pub fn output_size(&self, size: usize, kernel: usize) -> Option<usize> {
        let padded = size + 2 * self.padding;
        if self.stride == 0 || kernel == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / self.stride + 1)
    }
}

/// Kernel, optional bias and geometry of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub kernel: Tensor,
    pub bias: Option<Tensor>,
    pub geometry: ConvGeometry,
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Dims {
    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Columns of all images side by side: `[C*kh*kw, N*oh*ow]`.
    fn col_cols(&self) -> usize {
        self.n * self.oh * self.ow
    }
}

fn dims(input: &Tensor, kernel: &Tensor, geometry: ConvGeometry) -> Result<Dims> {
    let (&[n, c, h, w], &[oc, kc, kh, kw]) = (input.shape(), kernel.shape()) else {
        return Err(Error::shape(format!(
            "conv2d expects [N,C,H,W] input and [O,C,kh,kw] kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        )));
    };
    if c != kc {
        return Err(Error::shape(format!("conv2d input has {c} channels, kernel expects {kc}")));
    }
    if geometry.stride == 0 {
        return Err(Error::EmptyOutput("stride must be at least 1".into()));
    }
    let (Some(oh), Some(ow)) = (geometry.output_size(h, kh), geometry.output_size(w, kw)) else {
        return Err(Error::EmptyOutput(format!(
            "{h}x{w} input, {kh}x{kw} kernel, stride {}, padding {}",
            geometry.stride, geometry.padding
        )));
    };
    Ok(Dims { n, c, h, w, oc, kh, kw, oh, ow, stride: geometry.stride, pad: geometry.padding })
}

fn im2col(x: &[f64], d: &Dims) -> Vec<f64> {
    let cols = d.col_cols();
    let spatial = d.oh * d.ow;
    let mut out = vec![0.0; d.col_rows() * cols];
    for ci in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                for ni in 0..d.n {
                    let src = &x[(ni * d.c + ci) * d.h * d.w..][..d.h * d.w];
                    let dst = &mut dst_row[ni * spatial..(ni + 1) * spatial];
                    for oi in 0..d.oh {
                        let y = (oi * d.stride + ki) as isize - d.pad as isize;
                        if y < 0 || y >= d.h as isize {
                            continue;
                        }
                        let src_row = &src[y as usize * d.w..][..d.w];
                        for oj in 0..d.ow {
                            let xx = (oj * d.stride + kj) as isize - d.pad as isize;
                            if xx >= 0 && xx < d.w as isize {
                                dst[oi * d.ow + oj] = src_row[xx as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im(cols_data: &[f64], d: &Dims) -> Vec<f64> {
    let cols = d.col_cols();
    let spatial = d.oh * d.ow;
    let mut x = vec![0.0; d.n * d.c * d.h * d.w];
    for ci in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ci * d.kh + ki) * d.kw + kj;
                let src_row = &cols_data[row * cols..(row + 1) * cols];
                for ni in 0..d.n {
                    let dst = &mut x[(ni * d.c + ci) * d.h * d.w..][..d.h * d.w];
                    let src = &src_row[ni * spatial..(ni + 1) * spatial];
                    for oi in 0..d.oh {
                        let y = (oi * d.stride + ki) as isize - d.pad as isize;
                        if y < 0 || y >= d.h as isize {
                            continue;
                        }
                        for oj in 0..d.ow {
                            let xx = (oj * d.stride + kj) as isize - d.pad as isize;
                            if xx >= 0 && xx < d.w as isize {
                                dst[y as usize * d.w + xx as usize] += src[oi * d.ow + oj];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Forward pass without recording; shared by the tape op and by callers that
/// only need values.
pub fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: Option<&Tensor>,
    geometry: ConvGeometry,
) -> Result<Tensor> {
    let d = dims(input, kernel, geometry)?;
    if let Some(b) = bias {
        if b.shape() != [d.oc] {
            return Err(Error::shape(format!("conv2d bias {:?} for {} outputs", b.shape(), d.oc)));
        }
    }
    let cols = im2col(input.data(), &d);
    let ncols = d.col_cols();
    let mut prod = vec![0.0; d.oc * ncols];
    gemm(d.oc, d.col_rows(), ncols, kernel.data(), false, &cols, false, &mut prod, false);

    // [O, N*S] -> [N, O, S]
    let spatial = d.oh * d.ow;
    let mut out = vec![0.0; d.n * d.oc * spatial];
    for o in 0..d.oc {
        let b = bias.map_or(0.0, |b| b.data()[o]);
        for ni in 0..d.n {
            let src = &prod[o * ncols + ni * spatial..][..spatial];
            let dst = &mut out[(ni * d.oc + o) * spatial..][..spatial];
            dst.iter_mut().zip(src).for_each(|(y, x)| *y = x + b);
        }
    }
    Tensor::new(vec![d.n, d.oc, d.oh, d.ow], out)
}

/// Records a convolution on the tape. `bias`, when given, has shape `[O]`.
pub fn conv2d(
    g: &mut Graph,
    input: Var,
    kernel: Var,
    bias: Option<Var>,
    geometry: ConvGeometry,
) -> Result<Var> {
    let out = conv2d_forward(g.value(input), g.value(kernel), bias.map(|b| g.value(b)), geometry)?;
    let mut inputs = vec![input, kernel];
    inputs.extend(bias);
    Ok(g.record(&inputs, out, Conv2dFn { geometry }))
}

struct Conv2dFn {
    geometry: ConvGeometry,
}

impl Backward for Conv2dFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let (input, kernel) = (ctx.inputs[0], ctx.inputs[1]);
        let d = dims(input, kernel, self.geometry)?;
        let spatial = d.oh * d.ow;
        let ncols = d.col_cols();

        // grad_output [N, O, S] -> [O, N*S]
        let mut gmat = vec![0.0; d.oc * ncols];
        for ni in 0..d.n {
            for o in 0..d.oc {
                gmat[o * ncols + ni * spatial..][..spatial]
                    .copy_from_slice(&ctx.grad_output[(ni * d.oc + o) * spatial..][..spatial]);
            }
        }

        let grad_kernel = ctx.needs_grad[1].then(|| {
            let cols = im2col(input.data(), &d);
            let mut gk = vec![0.0; d.oc * d.col_rows()];
            gemm(d.oc, ncols, d.col_rows(), &gmat, false, &cols, true, &mut gk, false);
            gk
        });
        let grad_input = ctx.needs_grad[0].then(|| {
            let mut gcols = vec![0.0; d.col_rows() * ncols];
            gemm(d.col_rows(), d.oc, ncols, kernel.data(), true, &gmat, false, &mut gcols, false);
            col2im(&gcols, &d)
        });
        let mut grads = vec![grad_input, grad_kernel];
        if ctx.inputs.len() == 3 {
            grads.push(ctx.needs_grad[2].then(|| {
                (0..d.oc).map(|o| gmat[o * ncols..(o + 1) * ncols].iter().sum()).collect()
            }));
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_by_two() {
        let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let k = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = conv2d_forward(&x, &k, None, ConvGeometry::new(1, 0)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[6.0, 8.0, 12.0, 14.0]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::new(vec![2, 1, 3, 4], (0..24).map(|i| i as f64 * 0.3 - 2.0).collect())
            .unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d_forward(&x, &k, None, ConvGeometry::new(1, 0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let x = Tensor::zeros(vec![1, 1, 2, 2]).unwrap();
        let k = Tensor::zeros(vec![2, 1, 1, 1]).unwrap();
        let b = Tensor::from_vec(vec![1.5, -2.0]).unwrap();
        let y = conv2d_forward(&x, &k, Some(&b), ConvGeometry::new(1, 0)).unwrap();
        assert_eq!(y.data(), &[1.5, 1.5, 1.5, 1.5, -2.0, -2.0, -2.0, -2.0]);
    }

    #[test]
    fn errors() {
        let x = Tensor::zeros(vec![1, 2, 3, 3]).unwrap();
        let k = Tensor::zeros(vec![1, 3, 3, 3]).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &k, None, ConvGeometry::new(1, 0)),
            Err(Error::ShapeMismatch(_))
        ));
        let k = Tensor::zeros(vec![1, 2, 5, 5]).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &k, None, ConvGeometry::new(1, 0)),
            Err(Error::EmptyOutput(_))
        ));
        // padding rescues it
        assert!(conv2d_forward(&x, &k, None, ConvGeometry::new(1, 1)).is_ok());
    }

    #[test]
    fn output_size_formula() {
        let g = ConvGeometry::new(2, 1);
        assert_eq!(g.output_size(8, 3), Some(4));
        assert_eq!(g.output_size(7, 3), Some(4));
        assert_eq!(ConvGeometry::new(1, 0).output_size(2, 3), None);
    }
}
