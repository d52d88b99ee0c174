//! Deterministic parameter initialization.
//!
//! Parameter `i` (declaration order) draws from the stream keyed by
//! `(seed, i)`. Conv and linear weights are fan-in scaled uniform
//! `U(-sqrt(6/fan_in), sqrt(6/fan_in))`; biases `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
//! batch-norm gamma is 1 and beta 0.

use rand::Rng;

use crate::rng::{keyed_rng, DOMAIN_INIT};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub(crate) enum InitKind {
    /// Weight with the given fan-in.
    FanIn(usize),
    /// Bias of a layer with the given fan-in.
    Bias(usize),
    Ones,
    Zeros,
}

pub(crate) fn init_tensor(shape: Vec<usize>, kind: InitKind, seed: u64, index: usize) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = match kind {
        InitKind::Ones => vec![1.0; numel],
        InitKind::Zeros => vec![0.0; numel],
        InitKind::FanIn(fan_in) | InitKind::Bias(fan_in) => {
            let bound = match kind {
                InitKind::FanIn(_) => (6.0 / fan_in as f64).sqrt(),
                _ => 1.0 / (fan_in as f64).sqrt(),
            };
            let mut rng = keyed_rng(seed, &[DOMAIN_INIT, index as u64]);
            (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
        }
    };
    Tensor::new(shape, data).expect("initializer shape")
}
