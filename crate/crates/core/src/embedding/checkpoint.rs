//! JSON tensor dump of autoencoder parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::autoencoder::{AutoencoderParams, AutoencoderWeights, BLOCK_NAMES};
use super::EmbeddingError;

pub const CHECKPOINT_FORMAT: &str = "factorscope-autoencoder";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden: usize,
    pub seed: u64,
    pub trained: bool,
    pub loss_history: Vec<f64>,
    pub tensors: Vec<Tensor>,
}

impl From<&AutoencoderParams> for Checkpoint {
    fn from(p: &AutoencoderParams) -> Self {
        let shapes = p.weights.shapes();
        let tensors = BLOCK_NAMES
            .iter()
            .zip(shapes)
            .zip(p.weights.blocks())
            .map(|((name, shape), data)| Tensor { name: name.to_string(), shape, data: data.to_vec() })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input_dim: p.input_dim(),
            hidden: p.hidden(),
            seed: p.seed,
            trained: p.trained,
            loss_history: p.loss_history.clone(),
            tensors,
        }
    }
}

impl TryFrom<Checkpoint> for AutoencoderParams {
    type Error = EmbeddingError;

    fn try_from(c: Checkpoint) -> Result<Self, EmbeddingError> {
        let bad = |m: String| EmbeddingError::Checkpoint(m);
        if c.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unknown format {:?}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", c.version)));
        }
        let mut w = AutoencoderWeights::zeros(c.input_dim, c.hidden);
        let expected = w.shapes();
        if c.tensors.len() != BLOCK_NAMES.len() {
            return Err(bad(format!("expected {} tensors, found {}", BLOCK_NAMES.len(), c.tensors.len())));
        }
        for (k, (t, block)) in c.tensors.iter().zip(w.blocks_mut()).enumerate() {
            if t.name != BLOCK_NAMES[k] || t.shape != expected[k] || t.data.len() != block.len() {
                return Err(bad(format!(
                    "tensor {} has shape {:?}, expected {} with shape {:?}",
                    t.name, t.shape, BLOCK_NAMES[k], expected[k]
                )));
            }
            block.copy_from_slice(&t.data);
        }
        if !w.all_finite() {
            return Err(bad("non-finite weight".into()));
        }
        Ok(AutoencoderParams { weights: w, trained: c.trained, loss_history: c.loss_history, seed: c.seed })
    }
}

pub fn checkpoint_to_json(p: &AutoencoderParams) -> String {
    serde_json::to_string_pretty(&Checkpoint::from(p)).expect("checkpoint serializes")
}

pub fn checkpoint_from_json(text: &str) -> Result<AutoencoderParams, EmbeddingError> {
    let c: Checkpoint = serde_json::from_str(text).map_err(|e| EmbeddingError::Checkpoint(e.to_string()))?;
    c.try_into()
}

pub fn save_checkpoint(path: &Path, p: &AutoencoderParams) -> Result<(), EmbeddingError> {
    std::fs::write(path, checkpoint_to_json(p) + "\n").map_err(|e| EmbeddingError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AutoencoderParams, EmbeddingError> {
    let text = std::fs::read_to_string(path).map_err(|e| EmbeddingError::io(path, e))?;
    checkpoint_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut p = AutoencoderParams::init(39, 50, 7);
        p.trained = true;
        p.loss_history = vec![0.5, 0.25, 0.1 + 0.2];
        let text = checkpoint_to_json(&p);
        let back = checkpoint_from_json(&text).unwrap();
        assert_eq!(back, p);
        assert_eq!(checkpoint_to_json(&back), text);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = AutoencoderParams::init(4, 3, 7);
        let mut c = Checkpoint::from(&p);
        c.tensors[1].shape = vec![3, 12];
        assert!(matches!(AutoencoderParams::try_from(c), Err(EmbeddingError::Checkpoint(_))));
        let mut c = Checkpoint::from(&p);
        c.version = 9;
        assert!(AutoencoderParams::try_from(c).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let p = AutoencoderParams::init(5, 2, 1);
        save_checkpoint(&path, &p).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
        assert!(load_checkpoint(&dir.path().join("missing.json")).is_err());
    }
}
