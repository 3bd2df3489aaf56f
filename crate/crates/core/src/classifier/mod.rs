//! The tension classification head over frozen paragraph embeddings.
//!
//! Architecture: `N` blocks of Linear -> ReLU -> LayerNorm -> Dropout, then a
//! final Linear layer producing one logit. All parameters live in a single
//! flat vector so optimizers and gradient checks can treat them uniformly.

mod checkpoint;
mod data;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::{
    dataset_from_index, load_labelled_csv, split_dataset, undersample, ItemMeta, LabelledDataset,
    LabelledItem, UndersampleStrategy, DEFAULT_DROP_INTRO,
};
pub use model::{backward, batch_loss, forward, weighted_bce_loss, Mode, LAYER_NORM_EPS};
pub use train::{evaluate, predict_proba, train, EpochRecord, Metrics, TrainOutcome, BATCH_SIZE};

use crate::codec::CodecError;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("invalid head configuration: {0}")]
    Config(String),
    #[error("input dimension {found} does not match the head's {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("parameter vector has {found} values, configuration needs {expected}")]
    Shape { expected: usize, found: usize },
    #[error("label {0} is not 0 or 1")]
    Label(u8),
    #[error("dataset mixes providers `{0}` and `{1}`")]
    MixedProviders(String, String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class {0} is empty, cannot stratify")]
    EmptyClass(u8),
    #[error("split ratio {0} outside (0, 1)")]
    Ratio(f64),
    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("labelled CSV line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub input_dim: usize,
    pub blocks: usize,
    pub hidden_dim: usize,
    pub dropout_p: f64,
    pub pos_weight: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl HeadConfig {
    pub const DEFAULT_HIDDEN_DIM: usize = 256;
    pub const DEFAULT_EPOCHS: usize = 10;

    pub fn new(input_dim: usize) -> Self {
        HeadConfig {
            input_dim,
            blocks: 1,
            hidden_dim: Self::DEFAULT_HIDDEN_DIM,
            dropout_p: 0.4,
            pos_weight: 2.0,
            learning_rate: 0.0005,
            weight_decay: 0.0001,
            epochs: Self::DEFAULT_EPOCHS,
            seed: 0,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let fail = |m: &str| Err(ClassifierError::Config(m.to_owned()));
        if self.input_dim == 0 {
            return fail("input_dim must be positive");
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return fail("dropout_p must be in [0, 1)");
        }
        if !(self.pos_weight > 0.0 && self.pos_weight.is_finite()) {
            return fail("pos_weight must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be non-negative");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail("threshold must be in (0, 1)");
        }
        Ok(())
    }

    /// Width of the vector entering the final linear layer.
    pub fn final_in(&self) -> usize {
        if self.blocks == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn block_in(&self, block: usize) -> usize {
        if block == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden_dim;
        (0..self.blocks)
            .map(|l| h * self.block_in(l) + 3 * h)
            .sum::<usize>()
            + self.final_in()
            + 1
    }
}

/// Offsets of one block's tensors inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub input: usize,
    pub weight: usize,
    pub bias: usize,
    pub gain: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub blocks: Vec<BlockLayout>,
    pub final_in: usize,
    pub final_weight: usize,
    pub final_bias: usize,
    pub total: usize,
}

impl Layout {
    pub fn of(config: &HeadConfig) -> Layout {
        let h = config.hidden_dim;
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(config.blocks);
        for l in 0..config.blocks {
            let input = config.block_in(l);
            let weight = offset;
            let bias = weight + h * input;
            let gain = bias + h;
            let beta = gain + h;
            offset = beta + h;
            blocks.push(BlockLayout {
                input,
                weight,
                bias,
                gain,
                beta,
            });
        }
        let final_in = config.final_in();
        Layout {
            hidden: h,
            blocks,
            final_in,
            final_weight: offset,
            final_bias: offset + final_in,
            total: offset + final_in + 1,
        }
    }
}

/// Head parameters. Block `l` stores a row-major `hidden x in` weight
/// matrix, its bias, then the layer-norm gain and bias; the final layer's
/// weights and scalar bias come last.
#[derive(Debug, Clone, PartialEq)]
pub struct TensionModelParams {
    pub config: HeadConfig,
    pub values: Vec<f64>,
}

impl TensionModelParams {
    /// All weights and biases zero, layer-norm gains one.
    pub fn zeros(config: HeadConfig) -> Result<Self, ClassifierError> {
        config.validate()?;
        let layout = Layout::of(&config);
        let mut values = vec![0.0; layout.total];
        for b in &layout.blocks {
            values[b.gain..b.gain + layout.hidden].fill(1.0);
        }
        Ok(TensionModelParams { config, values })
    }

    pub fn from_values(config: HeadConfig, values: Vec<f64>) -> Result<Self, ClassifierError> {
        config.validate()?;
        let expected = config.parameter_count();
        if values.len() != expected {
            return Err(ClassifierError::Shape {
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::Config("non-finite parameter".into()));
        }
        Ok(TensionModelParams { config, values })
    }

    pub fn layout(&self) -> Layout {
        Layout::of(&self.config)
    }

    pub fn final_weights(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.final_weight..l.final_bias]
    }

    pub fn final_weights_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.values[l.final_weight..l.final_bias]
    }

    pub fn final_bias_mut(&mut self) -> &mut f64 {
        let l = self.layout();
        &mut self.values[l.final_bias]
    }

    /// Indices of every linear-layer bias (block biases and the final bias).
    pub fn linear_bias_indices(&self) -> Vec<usize> {
        let l = self.layout();
        let mut out: Vec<usize> = l
            .blocks
            .iter()
            .flat_map(|b| b.bias..b.bias + l.hidden)
            .collect();
        out.push(l.final_bias);
        out
    }
}
