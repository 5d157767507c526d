//! Independent oracles shared by the property and acceptance suites.
//! Nothing here calls into the code under test except to read or perturb
//! parameters.

#![allow(dead_code)]

use intentbot::mlp::{Layer, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Network with every weight and bias drawn from U(-1, 1).
pub fn random_network(rng: &mut ChaCha8Rng, dims: &[usize]) -> Network {
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            fan_in: w[0],
            fan_out: w[1],
            weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            biases: (0..w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    Network::from_layers(layers).unwrap()
}

pub fn random_topology(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let depth = rng.gen_range(2..=4);
    let mut dims: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=6)).collect();
    dims.push(rng.gen_range(2..=5));
    dims
}

pub fn random_batch(rng: &mut ChaCha8Rng, input: usize, classes: usize) -> Vec<(Vec<f64>, usize)> {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| ((0..input).map(|_| rng.gen_range(-2.0..2.0)).collect(), rng.gen_range(0..classes)))
        .collect()
}

/// Mean cross-entropy computed from scratch: ReLU hidden layers, softmax output.
pub fn naive_loss(net: &Network, batch: &[(Vec<f64>, usize)]) -> f64 {
    let layers = net.layers();
    let mut total = 0.0;
    for (x, y) in batch {
        let mut a = x.clone();
        for (li, layer) in layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = layer.biases[o] + (0..layer.fan_in).map(|i| layer.weights[o * layer.fan_in + i] * a[i]).sum::<f64>();
            }
            if li + 1 < layers.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = a.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        total += log_sum - a[*y];
    }
    total / batch.len() as f64
}

pub fn as_refs(batch: &[(Vec<f64>, usize)]) -> Vec<(&[f64], usize)> {
    batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect()
}

/// Weights first, then biases.
fn param_mut(net: &mut Network, layer: usize, p: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights.len();
    if p < nw {
        &mut l.weights[p]
    } else {
        &mut l.biases[p - nw]
    }
}

/// Max relative error of analytic gradients against central differences.
pub fn gradient_check(net: &Network, batch: &[(Vec<f64>, usize)], eps: f64) -> f64 {
    let (grads, _) = net.gradients(&as_refs(batch)).unwrap();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for li in 0..net.layers().len() {
        let nw = net.layers()[li].weights.len();
        let nb = net.layers()[li].biases.len();
        for p in 0..nw + nb {
            let analytic =
                if p < nw { grads.layers[li].weights[p] } else { grads.layers[li].biases[p - nw] };
            let orig = *param_mut(&mut probe, li, p);
            *param_mut(&mut probe, li, p) = orig + eps;
            let plus = naive_loss(&probe, batch);
            *param_mut(&mut probe, li, p) = orig - eps;
            let minus = naive_loss(&probe, batch);
            *param_mut(&mut probe, li, p) = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Index of the most similar row, earliest on ties.
pub fn brute_force_best(rows: &[Vec<f64>], q: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, r) in rows.iter().enumerate() {
        let s = naive_cosine(r, q);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

/// Macro precision, recall and F1 by direct TP/FP/FN counting over
/// predictions; `None` is a rejection.
pub fn naive_macro(truth: &[usize], predicted: &[Option<usize>], classes: usize) -> (f64, f64, f64) {
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (t, p) in truth.iter().zip(predicted) {
            match (*t == c, *p == Some(c)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        p_sum += p;
        r_sum += r;
        f_sum += f;
    }
    let k = classes as f64;
    (p_sum / k, r_sum / k, f_sum / k)
}
