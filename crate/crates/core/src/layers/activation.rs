use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
}

pub fn activation(g: &mut Graph, input: Var, kind: ActivationKind) -> Result<Var> {
    match kind {
        ActivationKind::Relu => relu(g, input),
    }
}

/// `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(g: &mut Graph, input: Var) -> Result<Var> {
    let out = g.value(input).map(|x| if x > 0.0 { x } else { 0.0 });
    Ok(g.record(&[input], out, ReluFn))
}

struct ReluFn;

impl Backward for ReluFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let dx = ctx
            .inputs[0]
            .data()
            .iter()
            .zip(ctx.grad_output)
            .map(|(&x, &gy)| if x > 0.0 { gy } else { 0.0 })
            .collect();
        Ok(vec![Some(dx)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn run(xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut g = Graph::new();
        let x = g.parameter(Tensor::from_vec(xs.to_vec()).unwrap());
        let y = relu(&mut g, x).unwrap();
        let out = g.value(y).data().to_vec();
        let loss = g.sum(y).unwrap();
        (out, g.backward(loss).unwrap().get(x).unwrap().to_vec())
    }

    #[test]
    fn clamps_negatives_and_zero_has_zero_slope() {
        let (y, dx) = run(&[-1.0, 0.0, 2.0]);
        assert_eq!(y, vec![0.0, 0.0, 2.0]);
        assert_eq!(dx, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn all_negative_and_all_positive() {
        assert_eq!(run(&[-3.0, -0.1]), (vec![0.0, 0.0], vec![0.0, 0.0]));
        assert_eq!(run(&[0.5, 4.0]), (vec![0.5, 4.0], vec![1.0, 1.0]));
    }
}
