use ndarray::{s, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use super::EmbeddingError;
use crate::catalog::RECORD_DIM;
use crate::portfolio::{PortfolioSeries, MAX_SPAN, MIN_SPAN};

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// A daily record sequence anchored on the panel calendar.
#[derive(Debug, Clone, Copy)]
pub struct SequenceSource<'a> {
    pub id: &'a str,
    /// Panel day index of the first row.
    pub start: usize,
    pub records: ArrayView2<'a, f64>,
}

impl<'a> SequenceSource<'a> {
    pub fn from_portfolio(p: &'a PortfolioSeries) -> Result<Self, EmbeddingError> {
        let records = p.records().ok_or_else(|| EmbeddingError::NotDerived(p.id.clone()))?;
        Ok(Self { id: &p.id, start: p.start, records: records.view() })
    }

    pub fn from_portfolios(ps: &'a [PortfolioSeries]) -> Result<Vec<Self>, EmbeddingError> {
        ps.iter().map(Self::from_portfolio).collect()
    }

    fn end(&self) -> usize {
        self.start + self.records.nrows() - 1
    }

    /// Row range inside `[lo, hi]`, keeping the most recent `MAX_SPAN` days.
    fn clip(&self, lo: usize, hi: usize) -> Option<(usize, usize)> {
        let a = self.start.max(lo);
        let b = self.end().min(hi);
        if self.records.nrows() == 0 || a > b {
            return None;
        }
        let a = a.max((b + 1).saturating_sub(MAX_SPAN));
        Some((a - self.start, b - self.start))
    }
}

/// Zero-padded, masked group of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    /// `[b, t, d]`, zero where `mask[[b, t]]` is false.
    pub data: Array3<f64>,
    pub mask: Array2<bool>,
    pub lengths: Vec<usize>,
    /// Position of each row in the caller's source list.
    pub source_index: Vec<usize>,
    pub ids: Vec<String>,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.data.dim().1
    }

    /// The valid part of row `b`.
    pub fn sequence(&self, b: usize) -> ArrayView2<'_, f64> {
        self.data.slice(s![b, ..self.lengths[b], ..])
    }

    /// Builds a batch from explicit sequences, padding to `max_len`.
    pub fn from_sequences(seqs: &[ArrayView2<'_, f64>], max_len: usize) -> Self {
        let dim = seqs.first().map_or(RECORD_DIM, |s| s.ncols());
        let mut data = Array3::zeros((seqs.len(), max_len, dim));
        let mut mask = Array2::from_elem((seqs.len(), max_len), false);
        let mut lengths = Vec::with_capacity(seqs.len());
        for (b, seq) in seqs.iter().enumerate() {
            let len = seq.nrows();
            assert!(len <= max_len, "sequence of {len} rows exceeds padding {max_len}");
            data.slice_mut(s![b, ..len, ..]).assign(seq);
            mask.slice_mut(s![b, ..len]).fill(true);
            lengths.push(len);
        }
        Self {
            data,
            mask,
            lengths,
            source_index: (0..seqs.len()).collect(),
            ids: (0..seqs.len()).map(|b| b.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedSequence {
    pub id: String,
    /// Days shared with the period.
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSet {
    pub batches: Vec<SequenceBatch>,
    pub excluded: Vec<ExcludedSequence>,
    pub period: (usize, usize),
}

impl BatchSet {
    pub fn n_sequences(&self) -> usize {
        self.batches.iter().map(SequenceBatch::len).sum()
    }

    pub fn total_steps(&self) -> usize {
        self.batches.iter().flat_map(|b| b.lengths.iter()).sum()
    }
}

/// Clips sources to the inclusive day-index period and groups them by length.
///
/// Sources overlapping the period by fewer than 20 days are left out and
/// listed in `excluded`.
pub fn make_batches(
    sources: &[SequenceSource<'_>],
    period: (usize, usize),
    batch_size: usize,
) -> Result<BatchSet, EmbeddingError> {
    if batch_size == 0 {
        return Err(EmbeddingError::InvalidConfig("batch size must be positive".into()));
    }
    let (lo, hi) = period;
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        match src.clip(lo, hi) {
            Some((a, b)) if b - a + 1 >= MIN_SPAN => kept.push((b - a + 1, i, a)),
            Some((a, b)) => excluded.push(ExcludedSequence { id: src.id.to_string(), overlap: b - a + 1 }),
            None => excluded.push(ExcludedSequence { id: src.id.to_string(), overlap: 0 }),
        }
    }
    if kept.is_empty() {
        return Err(EmbeddingError::EmptySelection { start: lo, end: hi });
    }
    kept.sort_unstable();
    let batches = kept
        .chunks(batch_size)
        .map(|chunk| {
            let max_len = chunk.iter().map(|c| c.0).max().unwrap_or(0);
            let views: Vec<_> = chunk
                .iter()
                .map(|&(len, i, a)| sources[i].records.slice(s![a..a + len, ..]))
                .collect();
            let mut batch = SequenceBatch::from_sequences(&views, max_len);
            batch.source_index = chunk.iter().map(|c| c.1).collect();
            batch.ids = chunk.iter().map(|c| sources[c.1].id.to_string()).collect();
            batch
        })
        .collect();
    Ok(BatchSet { batches, excluded, period })
}
