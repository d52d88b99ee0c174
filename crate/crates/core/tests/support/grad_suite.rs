use binbrain::grad_check::finite_difference_check;
use binbrain::layers::{
    avg_pool2d, batch_norm, conv2d, flatten, global_avg_pool, linear, log_softmax, max_pool2d, relu, residual_block,
    BasicBlockHandles, BatchNormConfig, BnHandles, ConvGeometry, Mode, RunningStats,
};
use binbrain::train::nll_loss;
use binbrain::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;
const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values with magnitude in `[0.1, 1]` and random sign, away from relu kinks.
fn signed(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let t = random(shape, seed, 0.1, 1.0);
    let data = t.data().iter().map(|&v| if rng.gen::<bool>() { v } else { -v }).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces to a scalar with fixed pseudo-random weights so every output
/// element carries a distinct, order-one gradient.
fn weighted_sum(g: &mut Graph, y: Var) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let w = g.constant(random(&shape, 991, -1.0, 1.0));
    let p = g.mul(y, w)?;
    g.sum(p)
}

pub type Results = Vec<(String, f64)>;

/// Worst relative error over all seeds, recorded under `name`; a failed
/// evaluation counts as infinite error.
fn check(r: &mut Results, name: &str, shape: &[usize], input: impl Fn(u64) -> Tensor, f: impl Fn(&mut Graph, Var, u64) -> Result<Var>) {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let x = input(seed);
        if x.shape() != shape {
            worst = f64::INFINITY;
        }
        let err = finite_difference_check(
            |g, v| {
                let y = f(g, v, seed)?;
                weighted_sum(g, y)
            },
            &x,
            H,
        )
        .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
    }
    r.push((name.to_string(), worst));
}

pub fn elementwise(r: &mut Results) {
    let s = [3, 4];
    let other = |seed| signed(&s, seed + 100);
    let den = |seed| random(&s, seed + 200, 0.5, 2.0);
    check(r, "add lhs", &s, |sd| signed(&s, sd), |g, x, sd| {
        let b = g.constant(other(sd));
        g.add(x, b)
    });
    check(r, "sub rhs", &s, |sd| signed(&s, sd), |g, x, sd| {
        let a = g.constant(other(sd));
        g.sub(a, x)
    });
    check(r, "mul", &s, |sd| signed(&s, sd), |g, x, sd| {
        let b = g.constant(other(sd));
        g.mul(x, b)
    });
    check(r, "mul self", &s, |sd| signed(&s, sd), |g, x, _| g.mul(x, x));
    check(r, "div numerator", &s, |sd| signed(&s, sd), |g, x, sd| {
        let b = g.constant(den(sd));
        g.div(x, b)
    });
    check(r, "div denominator", &s, den, |g, x, sd| {
        let a = g.constant(other(sd));
        g.div(a, x)
    });
    check(r, "scalar ops", &s, |sd| signed(&s, sd), |g, x, _| {
        let y = g.mul(x, 2.5)?;
        let y = g.add(y, -0.75)?;
        let y = g.div(y, 1.5)?;
        g.sub(y, 0.25)
    });
    check(r, "sum and reshape", &s, |sd| signed(&s, sd), |g, x, _| {
        let r = g.reshape(x, vec![2, 6])?;
        let sq = g.mul(r, r)?;
        g.sum(sq)
    });
}

pub fn matmul(r: &mut Results) {
    check(r, "matmul lhs", &[3, 5], |sd| signed(&[3, 5], sd), |g, x, sd| {
        let b = g.constant(signed(&[5, 4], sd + 7));
        g.matmul(x, b)
    });
    check(r, "matmul rhs", &[5, 4], |sd| signed(&[5, 4], sd), |g, x, sd| {
        let a = g.constant(signed(&[3, 5], sd + 7));
        g.matmul(a, x)
    });
}

pub fn convolution(r: &mut Results) {
    let geo = ConvGeometry::new(2, 1);
    let xs = [2, 3, 5, 5];
    let ks = [4, 3, 3, 3];
    check(r, "conv2d input", &xs, |sd| signed(&xs, sd), |g, x, sd| {
        let k = g.constant(signed(&ks, sd + 1));
        let b = g.constant(signed(&[4], sd + 2));
        conv2d(g, x, k, Some(b), geo)
    });
    check(r, "conv2d kernel", &ks, |sd| signed(&ks, sd), |g, k, sd| {
        let x = g.constant(signed(&xs, sd + 1));
        conv2d(g, x, k, None, geo)
    });
    check(r, "conv2d bias", &[4], |sd| signed(&[4], sd), |g, b, sd| {
        let x = g.constant(signed(&xs, sd + 1));
        let k = g.constant(signed(&ks, sd + 2));
        conv2d(g, x, k, Some(b), ConvGeometry::new(1, 0))
    });
}

fn bn(g: &mut Graph, x: Var, gamma: Var, beta: Var, mode: Mode) -> Result<Var> {
    let c = g.value(x).shape()[1];
    let mut running = RunningStats::new(c);
    running.mean = vec![0.1; c];
    running.var = vec![0.7; c];
    Ok(batch_norm(g, x, gamma, beta, &running, BatchNormConfig::default(), mode)?.0)
}

pub fn batch_norm_train_and_eval(r: &mut Results) {
    let xs = [3, 2, 3, 3];
    let params = |g: &mut Graph, sd: u64| (g.constant(random(&[2], sd + 1, 0.5, 1.5)), g.constant(signed(&[2], sd + 2)));
    for (mode, tag) in [(Mode::Train, "train"), (Mode::Eval, "eval")] {
        check(r, &format!("batch norm {tag} input"), &xs, |sd| signed(&xs, sd), |g, x, sd| {
            let (ga, be) = params(g, sd);
            bn(g, x, ga, be, mode)
        });
        check(r, &format!("batch norm {tag} gamma"), &[2], |sd| random(&[2], sd, 0.5, 1.5), |g, ga, sd| {
            let x = g.constant(signed(&xs, sd + 3));
            let be = g.constant(signed(&[2], sd + 2));
            bn(g, x, ga, be, mode)
        });
        check(r, &format!("batch norm {tag} beta"), &[2], |sd| signed(&[2], sd), |g, be, sd| {
            let x = g.constant(signed(&xs, sd + 3));
            let ga = g.constant(random(&[2], sd + 1, 0.5, 1.5));
            bn(g, x, ga, be, mode)
        });
    }
}

pub fn activations_and_pooling(r: &mut Results) {
    let xs = [2, 2, 4, 4];
    check(r, "relu", &xs, |sd| signed(&xs, sd), |g, x, _| relu(g, x));
    check(r, "max pool 2/2", &xs, |sd| signed(&xs, sd), |g, x, _| max_pool2d(g, x, 2, 2, 0));
    check(r, "max pool 3/2/1", &xs, |sd| signed(&xs, sd), |g, x, _| max_pool2d(g, x, 3, 2, 1));
    check(r, "avg pool", &xs, |sd| signed(&xs, sd), |g, x, _| avg_pool2d(g, x, 2));
    check(r, "global avg pool", &xs, |sd| signed(&xs, sd), |g, x, _| global_avg_pool(g, x));
    check(r, "flatten", &xs, |sd| signed(&xs, sd), |g, x, _| flatten(g, x));
}

pub fn linear_softmax_nll(r: &mut Results) {
    check(r, "linear input", &[3, 5], |sd| signed(&[3, 5], sd), |g, x, sd| {
        let w = g.constant(signed(&[5, 4], sd + 1));
        let b = g.constant(signed(&[4], sd + 2));
        linear(g, x, w, b)
    });
    check(r, "linear weight", &[5, 4], |sd| signed(&[5, 4], sd), |g, w, sd| {
        let x = g.constant(signed(&[3, 5], sd + 1));
        let b = g.constant(signed(&[4], sd + 2));
        linear(g, x, w, b)
    });
    check(r, "linear bias", &[4], |sd| signed(&[4], sd), |g, b, sd| {
        let x = g.constant(signed(&[3, 5], sd + 1));
        let w = g.constant(signed(&[5, 4], sd + 2));
        linear(g, x, w, b)
    });
    check(r, "log_softmax", &[3, 4], |sd| random(&[3, 4], sd, -3.0, 3.0), |g, x, _| log_softmax(g, x));
    check(r, "nll of log_softmax", &[4, 4], |sd| random(&[4, 4], sd, -3.0, 3.0), |g, x, sd| {
        let lp = log_softmax(g, x)?;
        let targets: Vec<usize> = (0..4).map(|i| (i + sd as usize) % 4).collect();
        nll_loss(g, lp, &targets)
    });
}

fn block(g: &mut Graph, x: Var, cin: usize, cout: usize, stride: usize, sd: u64) -> Result<Var> {
    let running = RunningStats::new(cout);
    let k1 = g.constant(signed(&[cout, cin, 3, 3], sd + 1));
    let k2 = g.constant(signed(&[cout, cout, 3, 3], sd + 2));
    let mut bnh = |off: u64| BnHandles {
        gamma: g.constant(random(&[cout], sd + off, 0.5, 1.5)),
        beta: g.constant(signed(&[cout], sd + off + 1)),
        running: &running,
    };
    let (bn1, bn2, bn3) = (bnh(3), bnh(5), bnh(7));
    let downsample = (stride > 1 || cin != cout).then(|| (g.constant(signed(&[cout, cin, 1, 1], sd + 9)), bn3));
    let handles = BasicBlockHandles { conv1: k1, bn1, conv2: k2, bn2, downsample, stride };
    Ok(residual_block(g, x, &handles, BatchNormConfig::default(), Mode::Train)?.output)
}

pub fn residual_blocks(r: &mut Results) {
    let xs = [2, 2, 4, 4];
    check(r, "residual identity shortcut", &xs, |sd| signed(&xs, sd), |g, x, sd| block(g, x, 2, 2, 1, sd));
    check(r, "residual projection shortcut", &xs, |sd| signed(&xs, sd), |g, x, sd| block(g, x, 2, 3, 2, sd));
}

pub fn all(r: &mut Results) {
    elementwise(r);
    matmul(r);
    convolution(r);
    batch_norm_train_and_eval(r);
    activations_and_pooling(r);
    linear_softmax_nll(r);
    residual_blocks(r);
}
