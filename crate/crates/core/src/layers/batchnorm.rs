use crate::autodiff::{Backward, BackwardCtx, Graph, Var};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::Tensor;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormConfig {
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig { momentum: DEFAULT_MOMENTUM, epsilon: DEFAULT_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }

    pub fn update(&mut self, batch: &RunningStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

/// Self-contained batch norm with its own affine parameters and running statistics.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running: RunningStats,
    pub config: BatchNormConfig,
    pub mode: Mode,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNormState {
            gamma: Tensor::full(vec![channels], 1.0)?,
            beta: Tensor::zeros(vec![channels])?,
            running: RunningStats::new(channels),
            config: BatchNormConfig::default(),
            mode: Mode::Train,
        })
    }

    /// Registers `gamma`/`beta` as trainable leaves and normalizes `input`.
    /// Returns the output and the `(gamma, beta)` handles.
    pub fn forward(&mut self, g: &mut Graph, input: Var) -> Result<(Var, Var, Var)> {
        if self.config.epsilon <= 0.0 || self.running.var.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("batch norm needs epsilon > 0, running_var >= 0".into()));
        }
        let gamma = g.parameter(self.gamma.clone());
        let beta = g.parameter(self.beta.clone());
        let (out, batch) = batch_norm(g, input, gamma, beta, &self.running, self.config, self.mode)?;
        if let Some(batch) = batch {
            self.running.update(&batch, self.config.momentum);
        }
        Ok((out, gamma, beta))
    }
}

/// Per-channel normalization of `[N,C,H,W]`. In train mode the batch
/// statistics (population variance) are returned for the caller to fold into
/// its running statistics.
pub fn batch_norm(
    g: &mut Graph,
    input: Var,
    gamma: Var,
    beta: Var,
    running: &RunningStats,
    config: BatchNormConfig,
    mode: Mode,
) -> Result<(Var, Option<RunningStats>)> {
    let x = g.value(input);
    let &[n, c, h, w] = x.shape() else {
        return Err(Error::shape(format!("batch norm expects [N,C,H,W], got {:?}", x.shape())));
    };
    for (name, t) in [("gamma", g.value(gamma)), ("beta", g.value(beta))] {
        if t.shape() != [c] {
            return Err(Error::shape(format!("batch norm {name} {:?} for {c} channels", t.shape())));
        }
    }
    if running.mean.len() != c || running.var.len() != c {
        return Err(Error::shape(format!("running statistics do not cover {c} channels")));
    }
    let per_channel = n * h * w;
    let spatial = h * w;
    let (mean, var) = match mode {
        Mode::Train => {
            if per_channel < 2 {
                return Err(Error::BatchTooSmall(per_channel));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ci in 0..c {
                let vals = || (0..n).flat_map(move |ni| &x.data()[(ni * c + ci) * spatial..][..spatial]);
                let m = vals().sum::<f64>() / per_channel as f64;
                mean[ci] = m;
                var[ci] = vals().map(|v| (v - m) * (v - m)).sum::<f64>() / per_channel as f64;
            }
            (mean, var)
        }
        Mode::Eval => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + config.epsilon).sqrt()).collect();
    let (gd, bd) = (g.value(gamma).data(), g.value(beta).data());
    let mut x_hat = vec![0.0; x.numel()];
    let mut out = vec![0.0; x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            let off = (ni * c + ci) * spatial;
            for i in off..off + spatial {
                let xh = (x.data()[i] - mean[ci]) * inv_std[ci];
                x_hat[i] = xh;
                out[i] = gd[ci] * xh + bd[ci];
            }
        }
    }
    let out = Tensor::new(x.shape().to_vec(), out)?;
    let batch = (mode == Mode::Train).then_some(RunningStats { mean, var });
    let rule = BatchNormFn { x_hat, inv_std, mode, dims: [n, c, spatial] };
    Ok((g.record(&[input, gamma, beta], out, rule), batch))
}

struct BatchNormFn {
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
    dims: [usize; 3],
}

impl Backward for BatchNormFn {
    fn backward(&self, ctx: &BackwardCtx<'_>) -> Result<Vec<Option<Vec<f64>>>> {
        let [n, c, spatial] = self.dims;
        let dy = ctx.grad_output;
        let gamma = ctx.inputs[1].data();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * spatial;
                for i in off..off + spatial {
                    sum_dy[ci] += dy[i];
                    sum_dy_xhat[ci] += dy[i] * self.x_hat[i];
                }
            }
        }
        let grad_input = ctx.needs_grad[0].then(|| {
            let m = (n * spatial) as f64;
            let mut dx = vec![0.0; dy.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let off = (ni * c + ci) * spatial;
                    let k = gamma[ci] * self.inv_std[ci];
                    for i in off..off + spatial {
                        dx[i] = match self.mode {
                            Mode::Train => {
                                k * (dy[i] - sum_dy[ci] / m - self.x_hat[i] * sum_dy_xhat[ci] / m)
                            }
                            Mode::Eval => k * dy[i],
                        };
                    }
                }
            }
            dx
        });
        Ok(vec![
            grad_input,
            ctx.needs_grad[1].then_some(sum_dy_xhat),
            ctx.needs_grad[2].then_some(sum_dy),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, c: usize, hw: usize) -> Tensor {
        let data = (0..n * c * hw * hw).map(|i| ((i * 37 % 23) as f64 * 0.41).sin() * 3.0 + 1.0);
        Tensor::new(vec![n, c, hw, hw], data.collect()).unwrap()
    }

    fn channel_moments(t: &Tensor, ci: usize) -> (f64, f64) {
        let &[n, c, h, w] = t.shape() else { unreachable!() };
        let vals: Vec<f64> = (0..n)
            .flat_map(|ni| t.data()[(ni * c + ci) * h * w..][..h * w].to_vec())
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v)
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut bn = BatchNormState::new(3).unwrap();
        let mut g = Graph::new();
        let x = g.constant(sample(4, 3, 3));
        let (y, _, _) = bn.forward(&mut g, x).unwrap();
        for ci in 0..3 {
            let (m, v) = channel_moments(g.value(y), ci);
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let mut bn = BatchNormState::new(2).unwrap();
        bn.gamma = Tensor::zeros(vec![2]).unwrap();
        bn.beta = Tensor::from_vec(vec![0.25, -3.0]).unwrap();
        let mut g = Graph::new();
        let x = g.constant(sample(2, 2, 2));
        let (y, _, _) = bn.forward(&mut g, x).unwrap();
        let out = g.value(y);
        for (i, v) in out.data().iter().enumerate() {
            let ci = (i / 4) % 2;
            assert_eq!(*v, [0.25, -3.0][ci]);
        }
    }

    #[test]
    fn eval_with_batch_moments_matches_train() {
        let input = sample(3, 2, 3);
        let mut stats = RunningStats::new(2);
        for ci in 0..2 {
            let (m, v) = channel_moments(&input, ci);
            stats.mean[ci] = m;
            stats.var[ci] = v;
        }
        let mut train = BatchNormState::new(2).unwrap();
        train.gamma = Tensor::from_vec(vec![1.3, 0.7]).unwrap();
        train.beta = Tensor::from_vec(vec![0.1, -0.2]).unwrap();
        let mut eval = train.clone();
        eval.mode = Mode::Eval;
        eval.running = stats;

        let mut g = Graph::new();
        let x = g.constant(input);
        let (a, _, _) = train.forward(&mut g, x).unwrap();
        let (b, _, _) = eval.forward(&mut g, x).unwrap();
        assert!(g.value(a).max_abs_diff(g.value(b)) < 1e-8);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut bn = BatchNormState::new(1).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 1, 1, 1], vec![1.0, 3.0]).unwrap());
        bn.forward(&mut g, x).unwrap();
        assert!((bn.running.mean[0] - 0.2).abs() < 1e-15);
        assert!((bn.running.var[0] - (0.9 + 0.1 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_value_batch_is_rejected_in_train_mode() {
        let mut bn = BatchNormState::new(1).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        assert!(matches!(bn.forward(&mut g, x), Err(Error::BatchTooSmall(1))));
        bn.mode = Mode::Eval;
        assert!(bn.forward(&mut g, x).is_ok());
    }
}
