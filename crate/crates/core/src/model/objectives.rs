//! Differentiable objectives over the logistic parameterization. Losses and
//! gradients are exposed as plain functions of the parameter block so they
//! can be checked against finite differences independently of the trainer.

use super::reference::{ReferenceModelParams, PROBABILITY_FLOOR};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax mixed with the uniform distribution just enough to guarantee every
/// entry >= PROBABILITY_FLOOR while still summing to one. Keeps entropy and
/// KL terms finite for arbitrarily peaked logits.
pub fn softmax_with_floor(logits: &[f64]) -> Vec<f64> {
    let n = logits.len() as f64;
    let eps = n * PROBABILITY_FLOOR;
    softmax(logits)
        .into_iter()
        .map(|p| (1.0 - eps) * p + eps / n)
        .collect()
}

/// KL(p || q) in nats. Both arguments must be strictly positive wherever p
/// has mass; floored distributions always qualify.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(pi, qi)| if *pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum()
}

fn logits(params: &ReferenceModelParams, x: &[f64]) -> Vec<f64> {
    let dim = params.feature_dim;
    (0..params.label_cardinality)
        .map(|row| {
            let w = &params.weights[row * dim..(row + 1) * dim];
            w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() / params.temperature
        })
        .collect()
}

pub(crate) fn distribution(params: &ReferenceModelParams, x: &[f64]) -> Vec<f64> {
    softmax_with_floor(&logits(params, x))
}

fn expected_label(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(y, p)| y as f64 * p).sum()
}

// --- generative cross-entropy: mean over records of -ln Pr(y | q, d) ---

pub fn generative_loss(params: &ReferenceModelParams, examples: &[(Vec<f64>, usize)]) -> f64 {
    let mut total = 0.0;
    for (x, y) in examples {
        let probs = distribution(params, x);
        total -= probs[*y].ln();
    }
    total / examples.len() as f64
}

pub fn generative_grad(params: &ReferenceModelParams, examples: &[(Vec<f64>, usize)]) -> Vec<f64> {
    let dim = params.feature_dim;
    let mut grad = vec![0.0; params.weights.len()];
    let scale = 1.0 / (examples.len() as f64 * params.temperature);
    for (x, y) in examples {
        let probs = softmax(&logits(params, x));
        for (row, p) in probs.iter().enumerate() {
            let residual = p - if row == *y { 1.0 } else { 0.0 };
            for (j, xj) in x.iter().enumerate() {
                grad[row * dim + j] += residual * xj * scale;
            }
        }
    }
    grad
}

// --- pairwise preference: mean over triples of -ln sigmoid(f(b) - f(a)) ---
// f is the unnormalized expected label; gradients flow through the softmax.

pub fn pairwise_loss(params: &ReferenceModelParams, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut sum = 0.0;
    for (x_less, x_more) in pairs {
        let s = expected_label(&distribution(params, x_more))
            - expected_label(&distribution(params, x_less));
        // -ln sigmoid(s) = softplus(-s)
        sum += softplus(-s);
    }
    sum / pairs.len() as f64
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// d f / d W for one feature vector, where f = sum_y y * softmax_y(Wx / T):
/// d f / d z_k = p_k (k - f), d z_k / d W_kj = x_j / T.
fn expected_label_grad(params: &ReferenceModelParams, x: &[f64], out: &mut [f64], scale: f64) {
    let dim = params.feature_dim;
    let probs = softmax(&logits(params, x));
    let f = expected_label(&probs);
    for (row, p) in probs.iter().enumerate() {
        let coeff = p * (row as f64 - f) * scale / params.temperature;
        for (j, xj) in x.iter().enumerate() {
            out[row * dim + j] += coeff * xj;
        }
    }
}

pub fn pairwise_grad(params: &ReferenceModelParams, pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut grad = vec![0.0; params.weights.len()];
    let n = pairs.len() as f64;
    for (x_less, x_more) in pairs {
        let s = expected_label(&distribution(params, x_more))
            - expected_label(&distribution(params, x_less));
        let coeff = (sigmoid(s) - 1.0) / n; // d softplus(-s) / d s
        expected_label_grad(params, x_more, &mut grad, coeff);
        expected_label_grad(params, x_less, &mut grad, -coeff);
    }
    grad
}

// --- distillation: mean KL(teacher || student) over pairs ---

pub fn distill_loss(params: &ReferenceModelParams, examples: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut total = 0.0;
    for (x, teacher) in examples {
        let student = distribution(params, x);
        total += kl_divergence(teacher, &student);
    }
    total / examples.len() as f64
}

pub fn distill_grad(params: &ReferenceModelParams, examples: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let dim = params.feature_dim;
    let mut grad = vec![0.0; params.weights.len()];
    let scale = 1.0 / (examples.len() as f64 * params.temperature);
    for (x, teacher) in examples {
        let student = softmax(&logits(params, x));
        for row in 0..params.label_cardinality {
            let residual = student[row] - teacher[row];
            for (j, xj) in x.iter().enumerate() {
                grad[row * dim + j] += residual * xj * scale;
            }
        }
    }
    grad
}
