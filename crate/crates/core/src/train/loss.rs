use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `-(1/N) * sum_i log_probs[i, targets[i]]`.
pub fn nll_loss(g: &mut Graph, log_probs: Var, targets: &[usize]) -> Result<Var> {
    let lp = g.value(log_probs);
    let &[n, k] = lp.shape() else {
        return Err(Error::shape(format!("nll loss expects [N,K] log-probabilities, got {:?}", lp.shape())));
    };
    if targets.len() != n {
        return Err(Error::shape(format!("{} targets for {n} rows", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::TargetOutOfRange { target: t, classes: k });
    }
    let total: f64 = targets.iter().enumerate().map(|(i, &t)| lp.data()[i * k + t]).sum();
    let out = Tensor::scalar(-total / n as f64);
    Ok(g.record(&[log_probs], out, NllFn { targets: targets.to_vec(), classes: k }))
}

struct NllFn {
    targets: Vec<usize>,
    classes: usize,
}

impl Backward for NllFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let n = self.targets.len();
        let scale = -ctx.grad_output[0] / n as f64;
        let mut dx = vec![0.0; n * self.classes];
        for (i, &t) in self.targets.iter().enumerate() {
            dx[i * self.classes + t] = scale;
        }
        Ok(vec![Some(dx)])
    }
}
