use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise log-softmax of `[N,K]`, computed as `x - max - log(sum(exp(x - max)))`.
pub fn log_softmax(g: &mut Graph, input: Var) -> Result<Var> {
    let x = g.value(input);
    let &[_, k] = x.shape() else {
        return Err(Error::shape(format!("log_softmax expects [N,K], got {:?}", x.shape())));
    };
    let out = Tensor::new(x.shape().to_vec(), log_softmax_rows(x.data(), k))?;
    Ok(g.record(&[input], out, LogSoftmaxFn { k }))
}

pub(crate) fn log_softmax_rows(data: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - max - lse));
    }
    out
}

/// Probabilities as the exponential of log-softmax.
pub fn softmax_rows(data: &[f64], k: usize) -> Vec<f64> {
    log_softmax_rows(data, k).into_iter().map(f64::exp).collect()
}

struct LogSoftmaxFn {
    k: usize,
}

impl Backward for LogSoftmaxFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let mut dx = Vec::with_capacity(ctx.grad_output.len());
        for (gy, y) in ctx.grad_output.chunks(self.k).zip(ctx.output.data().chunks(self.k)) {
            let total: f64 = gy.iter().sum();
            dx.extend(gy.iter().zip(y).map(|(g, y)| g - y.exp() * total));
        }
        Ok(vec![Some(dx)])
    }
}
