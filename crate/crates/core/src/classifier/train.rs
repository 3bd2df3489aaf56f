use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::backward_with_loss;
use super::{
    forward, ClassifierError, HeadConfig, LabelledDataset, LabelledItem, Mode, TensionModelParams,
};
use crate::embed::EmbeddingVector;
use crate::hashing::derive_seed;

pub const BATCH_SIZE: usize = 32;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl Metrics {
    /// Zero denominators give 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Metrics {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch's items.
    pub train_loss: f64,
    /// Eval-mode metrics on the whole training set after the epoch.
    pub train_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: TensionModelParams,
    pub history: Vec<EpochRecord>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn predict_proba(
    params: &TensionModelParams,
    x: &EmbeddingVector,
) -> Result<f64, ClassifierError> {
    Ok(sigmoid(forward(params, x, Mode::Eval)?))
}

/// Positive iff sigmoid(logit) >= threshold.
pub fn evaluate(
    params: &TensionModelParams,
    dataset: &LabelledDataset,
    threshold: f64,
) -> Result<Metrics, ClassifierError> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for item in dataset.items() {
        let positive = predict_proba(params, &item.embedding)? >= threshold;
        match (positive, item.label == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Xavier-uniform weights, zero biases, unit layer-norm gains.
fn initialize(config: &HeadConfig) -> Result<TensionModelParams, ClassifierError> {
    let mut params = TensionModelParams::zeros(config.clone())?;
    let layout = params.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
    let h = layout.hidden;
    for b in &layout.blocks {
        let bound = (6.0 / (b.input + h) as f64).sqrt();
        for w in &mut params.values[b.weight..b.weight + h * b.input] {
            *w = rng.random_range(-bound..bound);
        }
    }
    let bound = (6.0 / (layout.final_in + 1) as f64).sqrt();
    for w in &mut params.values[layout.final_weight..layout.final_bias] {
        *w = rng.random_range(-bound..bound);
    }
    Ok(params)
}

/// Mini-batch AdamW with decoupled weight decay on every parameter.
/// `init` continues from earlier parameters (e.g. a pre-fine-tuning stage).
pub fn train(
    dataset: &LabelledDataset,
    config: &HeadConfig,
    init: Option<&TensionModelParams>,
) -> Result<TrainOutcome, ClassifierError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut params = match init {
        Some(p) => TensionModelParams::from_values(config.clone(), p.values.clone())?,
        None => initialize(config)?,
    };
    let n_params = params.values.len();
    let mut m = vec![0.0; n_params];
    let mut v = vec![0.0; n_params];
    let mut step = 0u64;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let dropout_root = derive_seed(config.seed, 2);
    let items = dataset.items();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_no, chunk) in order.chunks(BATCH_SIZE).enumerate() {
            let batch: Vec<LabelledItem> = chunk.iter().map(|&i| items[i].clone()).collect();
            step += 1;
            let mode = Mode::Train(derive_seed(dropout_root, step));
            let (grad, loss) = backward_with_loss(&params, &batch, mode)?;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFinite {
                    epoch,
                    step: batch_no + 1,
                });
            }
            loss_sum += loss * batch.len() as f64;
            let lr = config.learning_rate;
            let c1 = 1.0 - BETA1.powi(step as i32);
            let c2 = 1.0 - BETA2.powi(step as i32);
            for (k, g) in grad.iter().enumerate() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                let p = &mut params.values[k];
                *p -= lr * config.weight_decay * *p;
                *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / items.len() as f64,
            train_metrics: evaluate(&params, dataset, config.threshold)?,
        });
    }
    Ok(TrainOutcome { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_arithmetic() {
        let m = Metrics::from_counts(2, 1, 1, 6);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.8);
        let none = Metrics::from_counts(0, 0, 3, 5);
        assert_eq!((none.precision, none.recall), (0.0, 0.0));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let mut c = HeadConfig::new(3);
        c.hidden_dim = 4;
        c.epochs = 0;
        let data = LabelledDataset::new(vec![LabelledItem::new(
            EmbeddingVector::new(vec![1.0, 0.0, 0.0], "p"),
            1,
        )])
        .unwrap();
        let out = train(&data, &c, None).unwrap();
        assert_eq!(out.params, initialize(&c).unwrap());
        assert!(out.history.is_empty());
    }
}
