use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassifierError, LabelledItem, Layout, TensionModelParams};
use crate::embed::EmbeddingVector;
use crate::hashing::derive_seed;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from this seed.
    Train(u64),
    Eval,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// -[w*y*ln(sigmoid(z)) + (1-y)*ln(1-sigmoid(z))] in softplus form.
pub fn weighted_bce_loss(logit: f64, label: u8, pos_weight: f64) -> f64 {
    if label == 1 {
        pos_weight * softplus(-logit)
    } else {
        softplus(logit)
    }
}

fn loss_grad(logit: f64, label: u8, pos_weight: f64) -> f64 {
    let s = sigmoid(logit);
    if label == 1 {
        pos_weight * (s - 1.0)
    } else {
        s
    }
}

struct BlockCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: f64,
    mask: Vec<f64>,
}

struct ForwardCache {
    blocks: Vec<BlockCache>,
    last: Vec<f64>,
}

/// Per-unit multipliers: 0 for dropped units, 1/(1-p) for kept ones.
fn dropout_mask(rng: &mut Option<ChaCha8Rng>, p: f64, n: usize) -> Vec<f64> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect()
        }
        _ => vec![1.0; n],
    }
}

fn run(params: &TensionModelParams, x: &[f64], mode: Mode) -> (f64, ForwardCache) {
    let layout: Layout = params.layout();
    let v = &params.values;
    let h = layout.hidden;
    let mut rng = match mode {
        Mode::Train(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };
    let mut current = x.to_vec();
    let mut caches = Vec::with_capacity(layout.blocks.len());
    for b in &layout.blocks {
        let mut pre = vec![0.0; h];
        for (i, out) in pre.iter_mut().enumerate() {
            let row = &v[b.weight + i * b.input..b.weight + (i + 1) * b.input];
            *out = v[b.bias + i] + row.iter().zip(&current).map(|(w, a)| w * a).sum::<f64>();
        }
        let relu: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mean = relu.iter().sum::<f64>() / h as f64;
        let var = relu.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / h as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let xhat: Vec<f64> = relu.iter().map(|r| (r - mean) * inv_std).collect();
        let mask = dropout_mask(&mut rng, params.config.dropout_p, h);
        let out: Vec<f64> = (0..h)
            .map(|i| (v[b.gain + i] * xhat[i] + v[b.beta + i]) * mask[i])
            .collect();
        caches.push(BlockCache {
            input: std::mem::replace(&mut current, out),
            pre,
            xhat,
            inv_std,
            mask,
        });
    }
    let w = &v[layout.final_weight..layout.final_bias];
    let logit = v[layout.final_bias] + w.iter().zip(&current).map(|(w, a)| w * a).sum::<f64>();
    (
        logit,
        ForwardCache {
            blocks: caches,
            last: current,
        },
    )
}

fn check_dim(params: &TensionModelParams, found: usize) -> Result<(), ClassifierError> {
    let expected = params.config.input_dim;
    if found != expected {
        return Err(ClassifierError::Dimension { expected, found });
    }
    Ok(())
}

pub fn forward(
    params: &TensionModelParams,
    x: &EmbeddingVector,
    mode: Mode,
) -> Result<f64, ClassifierError> {
    check_dim(params, x.dimension())?;
    Ok(run(params, x.values(), mode).0)
}

/// Dropout seed of the `index`-th item in a batch run under `mode`.
fn item_mode(mode: Mode, index: usize) -> Mode {
    match mode {
        Mode::Train(seed) => Mode::Train(derive_seed(seed, index as u64)),
        Mode::Eval => Mode::Eval,
    }
}

/// Mean weighted loss over `batch`, with the same per-item dropout masks
/// that [`backward`] uses.
pub fn batch_loss(
    params: &TensionModelParams,
    batch: &[LabelledItem],
    mode: Mode,
) -> Result<f64, ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, item) in batch.iter().enumerate() {
        let z = forward(params, &item.embedding, item_mode(mode, i))?;
        total += weighted_bce_loss(z, item.label, params.config.pos_weight);
    }
    Ok(total / batch.len() as f64)
}

fn accumulate(
    params: &TensionModelParams,
    layout: &Layout,
    x: &[f64],
    label: u8,
    mode: Mode,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let v = &params.values;
    let h = layout.hidden;
    let (logit, cache) = run(params, x, mode);
    let g = loss_grad(logit, label, params.config.pos_weight) * scale;
    for (j, a) in cache.last.iter().enumerate() {
        grad[layout.final_weight + j] += g * a;
    }
    grad[layout.final_bias] += g;
    let mut upstream: Vec<f64> = v[layout.final_weight..layout.final_bias]
        .iter()
        .map(|w| g * w)
        .collect();
    for (b, c) in layout.blocks.iter().zip(&cache.blocks).rev() {
        let dy: Vec<f64> = upstream.iter().zip(&c.mask).map(|(u, m)| u * m).collect();
        let mut dxhat = vec![0.0; h];
        for i in 0..h {
            grad[b.gain + i] += dy[i] * c.xhat[i];
            grad[b.beta + i] += dy[i];
            dxhat[i] = dy[i] * v[b.gain + i];
        }
        let sum_dxhat: f64 = dxhat.iter().sum();
        let sum_dxhat_xhat: f64 = dxhat.iter().zip(&c.xhat).map(|(d, x)| d * x).sum();
        let hf = h as f64;
        let mut dprev = vec![0.0; b.input];
        for i in 0..h {
            let dr = c.inv_std / hf * (hf * dxhat[i] - sum_dxhat - c.xhat[i] * sum_dxhat_xhat);
            let dz = if c.pre[i] > 0.0 { dr } else { 0.0 };
            if dz == 0.0 {
                continue;
            }
            grad[b.bias + i] += dz;
            let row = b.weight + i * b.input;
            for (j, a) in c.input.iter().enumerate() {
                grad[row + j] += dz * a;
                dprev[j] += dz * v[row + j];
            }
        }
        upstream = dprev;
    }
    weighted_bce_loss(logit, label, params.config.pos_weight)
}

/// Exact gradient of [`batch_loss`] with respect to every parameter, in the
/// layout of `params.values`.
pub fn backward(
    params: &TensionModelParams,
    batch: &[LabelledItem],
    mode: Mode,
) -> Result<Vec<f64>, ClassifierError> {
    Ok(backward_with_loss(params, batch, mode)?.0)
}

pub(crate) fn backward_with_loss(
    params: &TensionModelParams,
    batch: &[LabelledItem],
    mode: Mode,
) -> Result<(Vec<f64>, f64), ClassifierError> {
    if batch.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let layout = params.layout();
    let mut grad = vec![0.0; layout.total];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (i, item) in batch.iter().enumerate() {
        check_dim(params, item.embedding.dimension())?;
        loss += accumulate(
            params,
            &layout,
            item.embedding.values(),
            item.label,
            item_mode(mode, i),
            scale,
            &mut grad,
        );
    }
    Ok((grad, loss * scale))
}
