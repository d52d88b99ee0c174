use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tensor::Tensor;

/// `input [N,F] · weight [F,G] + bias [G]`.
pub fn linear(g: &mut Graph, input: Var, weight: Var, bias: Var) -> Result<Var> {
    let (x, w, b) = (g.value(input), g.value(weight), g.value(bias));
    let (&[n, f], &[f2, o]) = (x.shape(), w.shape()) else {
        return Err(Error::shape(format!(
            "linear expects [N,F] input and [F,G] weight, got {:?} and {:?}",
            x.shape(),
            w.shape()
        )));
    };
    if f != f2 || b.shape() != [o] {
        return Err(Error::shape(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0; n * o];
    for row in out.chunks_mut(o) {
        row.copy_from_slice(b.data());
    }
    gemm(n, f, o, x.data(), false, w.data(), false, &mut out, true);
    let out = Tensor::new(vec![n, o], out)?;
    Ok(g.record(&[input, weight, bias], out, LinearFn { n, f, o }))
}

/// Collapses everything after the batch axis: `[N, ...] -> [N, prod(...)]`.
pub fn flatten(g: &mut Graph, input: Var) -> Result<Var> {
    let shape = g.value(input).shape();
    let n = *shape.first().ok_or_else(|| Error::shape("flatten of a scalar"))?;
    let rest = shape[1..].iter().product::<usize>();
    g.reshape(input, vec![n, rest])
}

struct LinearFn {
    n: usize,
    f: usize,
    o: usize,
}

impl Backward for LinearFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let (n, f, o) = (self.n, self.f, self.o);
        let gy = ctx.grad_output;
        let dx = ctx.needs_grad[0].then(|| {
            let mut dx = vec![0.0; n * f];
            gemm(n, o, f, gy, false, ctx.inputs[1].data(), true, &mut dx, false);
            dx
        });
        let dw = ctx.needs_grad[1].then(|| {
            let mut dw = vec![0.0; f * o];
            gemm(f, n, o, ctx.inputs[0].data(), true, gy, false, &mut dw, false);
            dw
        });
        let db = ctx.needs_grad[2].then(|| {
            let mut db = vec![0.0; o];
            for row in gy.chunks(o) {
                db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
            }
            db
        });
        Ok(vec![dx, dw, db])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_zero_bias() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[&[1.0, -2.0, 3.0], &[0.5, 0.0, 9.0]]).unwrap());
        let mut eye = vec![0.0; 9];
        (0..3).for_each(|i| eye[i * 4] = 1.0);
        let w = g.constant(Tensor::new(vec![3, 3], eye).unwrap());
        let b = g.constant(Tensor::zeros(vec![3]).unwrap());
        let y = linear(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn zero_input_gives_bias_rows() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![3, 2]).unwrap());
        let w = g.constant(Tensor::full(vec![2, 2], 4.0).unwrap());
        let b = g.constant(Tensor::from_vec(vec![0.5, -1.5]).unwrap());
        let y = linear(&mut g, x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -1.5, 0.5, -1.5, 0.5, -1.5]);
    }

    #[test]
    fn feature_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![1, 3]).unwrap());
        let w = g.constant(Tensor::zeros(vec![2, 2]).unwrap());
        let b = g.constant(Tensor::zeros(vec![2]).unwrap());
        assert!(matches!(linear(&mut g, x, w, b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn flatten_keeps_batch_axis() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(vec![2, 3, 1, 1]).unwrap());
        let y = flatten(&mut g, x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 3]);
    }
}
