//! Central finite-difference verification of recorded gradients.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest `|analytic - numeric| / max(|analytic|, 1e-8)` over all elements.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1e-8))
        .fold(0.0, f64::max)
}

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every element `i`.
pub fn numeric_gradient(
    mut f: impl FnMut(&Tensor) -> Result<f64>,
    input: &Tensor,
    h: f64,
) -> Result<Vec<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let first = f(input)?;
    let second = f(input)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministicFunction(first, second));
    }
    let mut probe = input.clone();
    let mut grad = Vec::with_capacity(input.numel());
    for i in 0..input.numel() {
        let x = input.data()[i];
        probe.data_mut()[i] = x + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = x - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = x;
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Compares the tape's gradient of `function` at `input` with central differences.
///
/// `function` builds a scalar from its argument on the given graph.
pub fn finite_difference_check<F>(function: F, input: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.parameter(input.clone());
    let y = function(&mut g, x)?;
    let analytic = g.backward(y)?;
    let analytic = analytic.get(x).expect("input is a leaf").to_vec();

    let numeric = numeric_gradient(
        |t| {
            let mut g = Graph::new();
            let x = g.constant(t.clone());
            let y = function(&mut g, x)?;
            g.value(y).item()
        },
        input,
        h,
    )?;
    Ok(max_relative_error(&analytic, &numeric))
}
