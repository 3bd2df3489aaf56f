use std::path::Path;

use super::{ClassifierError, HeadConfig, TensionModelParams};
use crate::codec::{Reader, Writer};

const MAGIC: &[u8; 8] = b"TNCKPT01";
const VERSION: u32 = 1;

impl TensionModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = Writer::new(MAGIC, VERSION);
        w.u64(c.input_dim as u64)
            .u64(c.blocks as u64)
            .u64(c.hidden_dim as u64)
            .f64(c.dropout_p)
            .f64(c.pos_weight)
            .f64(c.learning_rate)
            .f64(c.weight_decay)
            .u64(c.epochs as u64)
            .u64(c.seed)
            .f64(c.threshold)
            .f64s(&self.values);
        w.finish()
    }

    pub fn from_bytes(what: &str, data: &[u8]) -> Result<Self, ClassifierError> {
        let mut r = Reader::open(what, data, MAGIC, VERSION)?;
        let config = HeadConfig {
            input_dim: r.u64()? as usize,
            blocks: r.u64()? as usize,
            hidden_dim: r.u64()? as usize,
            dropout_p: r.f64()?,
            pos_weight: r.f64()?,
            learning_rate: r.f64()?,
            weight_decay: r.f64()?,
            epochs: r.u64()? as usize,
            seed: r.u64()?,
            threshold: r.f64()?,
        };
        let values = r.f64s()?;
        r.finish()?;
        TensionModelParams::from_values(config, values)
    }
}

pub fn save_checkpoint(params: &TensionModelParams, path: &Path) -> Result<(), ClassifierError> {
    std::fs::write(path, params.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TensionModelParams, ClassifierError> {
    let data = std::fs::read(path)?;
    TensionModelParams::from_bytes(&path.display().to_string(), &data)
}
