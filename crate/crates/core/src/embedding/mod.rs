//! Reduces variable-length portfolio histories to 2-D coordinates.
//!
//! Sequences of daily 39-dimensional records are clipped to a period, padded
//! and masked ([`make_batches`]), compressed to latent vectors by a recurrent
//! autoencoder ([`train_autoencoder`], [`encode`]) and laid out in the plane
//! with exact t-SNE ([`project_tsne`]). [`embed_pipeline`] chains the steps
//! behind a cache.

mod autoencoder;
mod batch;
mod checkpoint;
mod tsne;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use autoencoder::{
    batch_loss, batch_loss_grad, dataset_loss, encode, encode_batches, encode_sequence, train_autoencoder,
    train_autoencoder_with, AutoencoderParams, AutoencoderWeights, EpochReport, Latents, TrainConfig, BLOCK_NAMES,
    LATENT_DIM,
};
pub use batch::{make_batches, BatchSet, ExcludedSequence, SequenceBatch, SequenceSource, DEFAULT_BATCH_SIZE};
pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint, Checkpoint, Tensor, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use tsne::{conditional_probabilities, project_tsne, ConditionalP, TsneConfig, TsneOutput, MIN_POINTS};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("portfolio {0} has no derived records")]
    NotDerived(String),

    #[error("no sequence overlaps days {start}..={end} by at least 20 days")]
    EmptySelection { start: usize, end: usize },

    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),

    #[error("records have {actual} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch} with learning rate {lr} (loss {loss})")]
    Divergence { epoch: usize, lr: f64, loss: f64 },

    #[error("training cancelled after epoch {epoch}")]
    Cancelled { epoch: usize },

    #[error("model is untrained")]
    Untrained,

    #[error("perplexity {perplexity} needs more than {points} points (at least 3·perplexity + 1)")]
    PerplexityTooLarge { perplexity: f64, points: usize },

    #[error("t-SNE needs at least 5 points, got {0}")]
    TooFewPoints(usize),

    #[error("degenerate t-SNE input: {0}")]
    DegenerateInput(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl EmbeddingError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        EmbeddingError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Everything that shapes an embedding besides the data and the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub batch_size: usize,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub seed: u64,
    /// Train a fresh model on the period instead of re-encoding with the
    /// model trained on the full history.
    pub retrain: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = TsneConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            hidden: t.hidden,
            batch_size: DEFAULT_BATCH_SIZE,
            perplexity: s.perplexity,
            tsne_iterations: s.iterations,
            seed: t.seed,
            retrain: false,
        }
    }
}

impl EmbedConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, lr: self.lr, seed: self.seed, hidden: self.hidden }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig { perplexity: self.perplexity, iterations: self.tsne_iterations, seed: self.seed, ..TsneConfig::default() }
    }

    fn model_key(&self) -> String {
        format!("{}|{}|{}|{}|{}", self.epochs, self.lr, self.hidden, self.batch_size, self.seed)
    }

    fn key(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// One point of `embedding.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub portfolio_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    /// Trainable sequences first, then encode-only ones.
    pub ids: Vec<String>,
    /// True for encode-only sequences such as benchmark indices.
    pub frozen: Vec<bool>,
    pub latents: Vec<Vec<f64>>,
    pub coords: Vec<[f64; 2]>,
    pub tsne_kl: f64,
    pub seed: u64,
    /// Inclusive panel day indices.
    pub period: (usize, usize),
    pub excluded: Vec<ExcludedSequence>,
    /// Training curve of the model that produced the latents.
    pub loss_history: Vec<f64>,
}

impl EmbeddingResult {
    pub fn points(&self) -> Vec<EmbeddingPoint> {
        self.ids
            .iter()
            .zip(&self.coords)
            .map(|(id, c)| EmbeddingPoint { portfolio_id: id.clone(), x: c[0], y: c[1] })
            .collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }
}

/// SHA-256 over ids, anchors and record bits; identifies a dataset in cache keys.
pub fn fingerprint(sources: &[SequenceSource<'_>]) -> String {
    let mut h = Sha256::new();
    for s in sources {
        h.update(s.id.as_bytes());
        h.update([0]);
        h.update((s.start as u64).to_le_bytes());
        h.update((s.records.nrows() as u64).to_le_bytes());
        h.update((s.records.ncols() as u64).to_le_bytes());
        for v in s.records.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

type Slot<T> = Arc<Mutex<Option<Arc<T>>>>;

/// Trained models and finished embeddings, shared between callers.
///
/// A slot stays locked while its value is computed, so concurrent requests
/// for one key wait for a single computation.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    models: Mutex<HashMap<String, Slot<AutoencoderParams>>>,
    results: Mutex<HashMap<String, Slot<EmbeddingResult>>>,
    pretrained: Mutex<Option<Arc<AutoencoderParams>>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uses `params` for every non-retraining request.
    pub fn with_pretrained(params: AutoencoderParams) -> Self {
        let cache = Self::default();
        *cache.pretrained.lock().expect("cache lock") = Some(Arc::new(params));
        cache
    }

    pub fn pretrained(&self) -> Option<Arc<AutoencoderParams>> {
        self.pretrained.lock().expect("cache lock").clone()
    }

    pub fn cached_result(&self, key: &str) -> Option<Arc<EmbeddingResult>> {
        let slot = self.results.lock().expect("cache lock").get(key).cloned()?;
        let value = slot.try_lock().ok()?.clone();
        value
    }

    pub fn result_count(&self) -> usize {
        self.results
            .lock()
            .expect("cache lock")
            .values()
            .filter(|s| s.try_lock().map(|v| v.is_some()).unwrap_or(false))
            .count()
    }

    fn slot<T>(map: &Mutex<HashMap<String, Slot<T>>>, key: &str) -> Slot<T> {
        map.lock().expect("cache lock").entry(key.to_string()).or_default().clone()
    }

    fn get_or_compute<T>(
        map: &Mutex<HashMap<String, Slot<T>>>,
        key: &str,
        compute: impl FnOnce() -> Result<T, EmbeddingError>,
    ) -> Result<(Arc<T>, bool), EmbeddingError> {
        let slot = Self::slot(map, key);
        let mut guard = slot.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(v) = guard.as_ref() {
            return Ok((v.clone(), true));
        }
        let v = Arc::new(compute()?);
        *guard = Some(v.clone());
        Ok((v, false))
    }
}

/// Inputs to [`embed_pipeline`].
#[derive(Debug, Clone, Copy)]
pub struct EmbedInputs<'a> {
    /// Sequences the model trains on and that are embedded.
    pub sources: &'a [SequenceSource<'a>],
    /// Sequences that are encoded with the frozen model but never trained on.
    pub frozen: &'a [SequenceSource<'a>],
    /// Inclusive day-index range the global model is trained over.
    pub full_range: (usize, usize),
    /// Dataset identity, from [`fingerprint`].
    pub fingerprint: &'a str,
}

/// Cache key of an embedding request.
pub fn result_key(fingerprint: &str, period: (usize, usize), cfg: &EmbedConfig) -> String {
    format!("{fingerprint}|{}..{}|{}", period.0, period.1, cfg.key())
}

/// Batches, model, latents and layout for the sequences active in `period`.
///
/// Returns the result and whether it came from the cache. `observer` sees
/// training progress when a model has to be trained.
pub fn embed_pipeline(
    inputs: EmbedInputs<'_>,
    period: (usize, usize),
    cfg: &EmbedConfig,
    cache: &EmbeddingCache,
    observer: &mut dyn FnMut(EpochReport) -> bool,
) -> Result<(Arc<EmbeddingResult>, bool), EmbeddingError> {
    let key = result_key(inputs.fingerprint, period, cfg);
    EmbeddingCache::get_or_compute(&cache.results, &key, || compute_embedding(inputs, period, cfg, cache, observer))
}

fn model_for(
    inputs: EmbedInputs<'_>,
    period: (usize, usize),
    cfg: &EmbedConfig,
    cache: &EmbeddingCache,
    period_batches: &BatchSet,
    observer: &mut dyn FnMut(EpochReport) -> bool,
) -> Result<Arc<AutoencoderParams>, EmbeddingError> {
    if cfg.retrain {
        let key = format!("{}|{}..{}|{}", inputs.fingerprint, period.0, period.1, cfg.model_key());
        return EmbeddingCache::get_or_compute(&cache.models, &key, || {
            train_autoencoder_with(&period_batches.batches, &cfg.train_config(), observer)
        })
        .map(|r| r.0);
    }
    global_model(inputs, cfg, cache, observer).map(|r| r.0)
}

/// The model trained on the full history, or the cache's pretrained one.
///
/// The flag reports whether no training was needed.
pub fn global_model(
    inputs: EmbedInputs<'_>,
    cfg: &EmbedConfig,
    cache: &EmbeddingCache,
    observer: &mut dyn FnMut(EpochReport) -> bool,
) -> Result<(Arc<AutoencoderParams>, bool), EmbeddingError> {
    if let Some(p) = cache.pretrained() {
        return Ok((p, true));
    }
    let key = format!("{}|global|{}", inputs.fingerprint, cfg.model_key());
    EmbeddingCache::get_or_compute(&cache.models, &key, || {
        let all = make_batches(inputs.sources, inputs.full_range, cfg.batch_size)?;
        train_autoencoder_with(&all.batches, &cfg.train_config(), observer)
    })
}

fn compute_embedding(
    inputs: EmbedInputs<'_>,
    period: (usize, usize),
    cfg: &EmbedConfig,
    cache: &EmbeddingCache,
    observer: &mut dyn FnMut(EpochReport) -> bool,
) -> Result<EmbeddingResult, EmbeddingError> {
    let set = make_batches(inputs.sources, period, cfg.batch_size)?;
    let params = model_for(inputs, period, cfg, cache, &set, observer)?;
    let main = encode(&set, &params)?;
    let mut excluded = set.excluded.clone();
    let mut ids = main.ids.clone();
    let mut frozen = vec![false; ids.len()];
    let mut h = main.h;
    if !inputs.frozen.is_empty() {
        match make_batches(inputs.frozen, period, cfg.batch_size) {
            Ok(extra_set) => {
                let extra = encode(&extra_set, &params)?;
                ids.extend(extra.ids);
                frozen.resize(ids.len(), true);
                h = concatenate(Axis(0), &[h.view(), extra.h.view()]).expect("latent widths agree");
                excluded.extend(extra_set.excluded);
            }
            Err(EmbeddingError::EmptySelection { .. }) => {
                excluded.extend(inputs.frozen.iter().map(|s| ExcludedSequence { id: s.id.to_string(), overlap: 0 }));
            }
            Err(e) => return Err(e),
        }
    }
    let layout = project_tsne(h.view(), &cfg.tsne_config())?;
    Ok(EmbeddingResult {
        ids,
        frozen,
        latents: rows(&h),
        coords: layout.coords.outer_iter().map(|r| [r[0], r[1]]).collect(),
        tsne_kl: layout.kl,
        seed: cfg.seed,
        period,
        excluded,
        loss_history: params.loss_history.clone(),
    })
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}
