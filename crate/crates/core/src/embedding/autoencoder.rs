//! Sequence autoencoder built from two gated recurrent cells.
//!
//! The encoder reads a masked sequence and its final hidden state is the
//! latent vector. The decoder starts from that state with a zero cell state,
//! receives no inputs, and a linear readout maps each of its hidden states
//! back to a record. Gate blocks are stacked in the order input, forget,
//! candidate, output.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayView3, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{BatchSet, SequenceBatch};
use super::EmbeddingError;

pub const LATENT_DIM: usize = 50;

/// Rows per parallel work unit; fixed so results ignore the thread count.
const CHUNK_ROWS: usize = 16;

/// Epoch loss above this multiple of the untrained loss counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, lr: 1e-3, seed: 7, hidden: LATENT_DIM }
    }
}

/// All trainable tensors; gradients share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderWeights {
    /// `4H × D`
    pub enc_wx: Array2<f64>,
    /// `4H × H`
    pub enc_wh: Array2<f64>,
    pub enc_b: Array1<f64>,
    /// `4H × H`
    pub dec_wh: Array2<f64>,
    pub dec_b: Array1<f64>,
    /// `D × H`
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub const BLOCK_NAMES: [&str; 7] = ["enc_wx", "enc_wh", "enc_b", "dec_wh", "dec_b", "out_w", "out_b"];

impl AutoencoderWeights {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let g = 4 * hidden;
        Self {
            enc_wx: Array2::zeros((g, input_dim)),
            enc_wh: Array2::zeros((g, hidden)),
            enc_b: Array1::zeros(g),
            dec_wh: Array2::zeros((g, hidden)),
            dec_b: Array1::zeros(g),
            out_w: Array2::zeros((input_dim, hidden)),
            out_b: Array1::zeros(input_dim),
        }
    }

    pub fn hidden(&self) -> usize {
        self.enc_wh.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.enc_wx.ncols()
    }

    pub fn shapes(&self) -> [Vec<usize>; 7] {
        [
            self.enc_wx.shape().to_vec(),
            self.enc_wh.shape().to_vec(),
            self.enc_b.shape().to_vec(),
            self.dec_wh.shape().to_vec(),
            self.dec_b.shape().to_vec(),
            self.out_w.shape().to_vec(),
            self.out_b.shape().to_vec(),
        ]
    }

    pub fn blocks(&self) -> [&[f64]; 7] {
        fn slice(a: Option<&[f64]>) -> &[f64] {
            a.expect("weights are contiguous")
        }
        [
            slice(self.enc_wx.as_slice()),
            slice(self.enc_wh.as_slice()),
            slice(self.enc_b.as_slice()),
            slice(self.dec_wh.as_slice()),
            slice(self.dec_b.as_slice()),
            slice(self.out_w.as_slice()),
            slice(self.out_b.as_slice()),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.enc_wx.as_slice_mut().expect("contiguous"),
            self.enc_wh.as_slice_mut().expect("contiguous"),
            self.enc_b.as_slice_mut().expect("contiguous"),
            self.dec_wh.as_slice_mut().expect("contiguous"),
            self.dec_b.as_slice_mut().expect("contiguous"),
            self.out_w.as_slice_mut().expect("contiguous"),
            self.out_b.as_slice_mut().expect("contiguous"),
        ]
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub weights: AutoencoderWeights,
    pub trained: bool,
    /// Mean squared reconstruction error per valid element, one per epoch.
    pub loss_history: Vec<f64>,
    pub seed: u64,
}

impl AutoencoderParams {
    /// Untrained weights: uniform in `±1/√H`, zero biases except a forget bias of 1.
    pub fn init(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (hidden as f64).sqrt();
        let mut w = AutoencoderWeights::zeros(input_dim, hidden);
        for a in [&mut w.enc_wx, &mut w.enc_wh, &mut w.dec_wh, &mut w.out_w] {
            a.mapv_inplace(|_| rng.random_range(-k..k));
        }
        w.enc_b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        w.dec_b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Self { weights: w, trained: false, loss_history: Vec::new(), seed }
    }

    pub fn hidden(&self) -> usize {
        self.weights.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.input_dim()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Gates {
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
}

fn activate(a: &Array2<f64>, hidden: usize) -> Gates {
    let block = |k: usize| a.slice(s![.., k * hidden..(k + 1) * hidden]);
    Gates {
        i: block(0).mapv(sigmoid),
        f: block(1).mapv(sigmoid),
        g: block(2).mapv(f64::tanh),
        o: block(3).mapv(sigmoid),
    }
}

struct Step {
    x: Option<Array2<f64>>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    gates: Gates,
    tanh_c: Array2<f64>,
    active: Vec<bool>,
}

/// Gate pre-activations `x·Wxᵀ + h·Whᵀ + b`.
fn preactivation(x: Option<&Array2<f64>>, wx: &Array2<f64>, h: &Array2<f64>, wh: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut a = h.dot(&wh.t());
    if let Some(x) = x {
        general_mat_mul(1.0, x, &wx.t(), 1.0, &mut a);
    }
    a += b;
    a
}

/// Inputs of step `t`, with rows past their length zeroed.
fn step_input(data: ArrayView3<'_, f64>, lengths: &[usize], t: usize) -> (Array2<f64>, Vec<bool>) {
    let mut x = data.index_axis(Axis(1), t).to_owned();
    let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
    for (b, &on) in active.iter().enumerate() {
        if !on {
            x.row_mut(b).fill(0.0);
        }
    }
    (x, active)
}

fn cell_update(gates: &Gates, c_prev: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let c = &gates.f * c_prev + &gates.i * &gates.g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &gates.o * &tanh_c;
    (c, tanh_c, h)
}

/// Copies `prev` into rows of `next` that are past their length.
fn freeze_inactive(next: &mut Array2<f64>, prev: &Array2<f64>, active: &[bool]) {
    for (b, &on) in active.iter().enumerate() {
        if !on {
            next.row_mut(b).assign(&prev.row(b));
        }
    }
}

fn encode_rows(w: &AutoencoderWeights, data: ArrayView3<'_, f64>, lengths: &[usize]) -> Array2<f64> {
    let hidden = w.hidden();
    let rows = lengths.len();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    let mut h = Array2::zeros((rows, hidden));
    let mut c = Array2::zeros((rows, hidden));
    for t in 0..steps {
        let (x, active) = step_input(data, lengths, t);
        let a = preactivation(Some(&x), &w.enc_wx, &h, &w.enc_wh, &w.enc_b);
        let gates = activate(&a, hidden);
        let (mut c_new, _, mut h_new) = cell_update(&gates, &c);
        freeze_inactive(&mut c_new, &c, &active);
        freeze_inactive(&mut h_new, &h, &active);
        h = h_new;
        c = c_new;
    }
    h
}

/// Squared error sum and gradient scaled by `scale`, for one chunk of rows.
fn chunk_loss_grad(
    w: &AutoencoderWeights,
    data: ArrayView3<'_, f64>,
    lengths: &[usize],
    scale: f64,
    want_grad: bool,
) -> (f64, Option<AutoencoderWeights>) {
    let hidden = w.hidden();
    let rows = lengths.len();
    let steps = lengths.iter().copied().max().unwrap_or(0);

    // encoder
    let mut enc = Vec::with_capacity(if want_grad { steps } else { 0 });
    let mut h = Array2::zeros((rows, hidden));
    let mut c = Array2::zeros((rows, hidden));
    for t in 0..steps {
        let (x, active) = step_input(data, lengths, t);
        let a = preactivation(Some(&x), &w.enc_wx, &h, &w.enc_wh, &w.enc_b);
        let gates = activate(&a, hidden);
        let (mut c_new, tanh_c, mut h_new) = cell_update(&gates, &c);
        freeze_inactive(&mut c_new, &c, &active);
        freeze_inactive(&mut h_new, &h, &active);
        let h_prev = std::mem::replace(&mut h, h_new);
        let c_prev = std::mem::replace(&mut c, c_new);
        if want_grad {
            enc.push(Step { x: Some(x), h_prev, c_prev, gates, tanh_c, active });
        }
    }

    // decoder
    let mut dec = Vec::with_capacity(if want_grad { steps } else { 0 });
    let mut errors = Vec::with_capacity(if want_grad { steps } else { 0 });
    let mut c = Array2::<f64>::zeros((rows, hidden));
    let mut sq = 0.0;
    for t in 0..steps {
        let a = preactivation(None, &w.enc_wx, &h, &w.dec_wh, &w.dec_b);
        let gates = activate(&a, hidden);
        let (c_new, tanh_c, h_new) = cell_update(&gates, &c);
        let mut err = h_new.dot(&w.out_w.t()) + &w.out_b;
        let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
        for (b, &on) in active.iter().enumerate() {
            if on {
                let mut row = err.row_mut(b);
                row -= &data.slice(s![b, t, ..]);
                sq += row.iter().map(|e| e * e).sum::<f64>();
            } else {
                err.row_mut(b).fill(0.0);
            }
        }
        let h_prev = std::mem::replace(&mut h, h_new);
        let c_prev = std::mem::replace(&mut c, c_new);
        if want_grad {
            dec.push(Step { x: None, h_prev, c_prev, gates, tanh_c, active });
            errors.push(err);
        }
    }
    if !want_grad {
        return (sq, None);
    }

    let mut g = AutoencoderWeights::zeros(w.input_dim(), hidden);
    let mut dh = Array2::<f64>::zeros((rows, hidden));
    let mut dc = Array2::<f64>::zeros((rows, hidden));
    for (step, err) in dec.iter().zip(&errors).rev() {
        let dy = err * (2.0 * scale);
        // h after this step is the next step's h_prev; recover it from the gates
        let h_out = &step.gates.o * &step.tanh_c;
        general_mat_mul(1.0, &dy.t(), &h_out, 1.0, &mut g.out_w);
        g.out_b += &dy.sum_axis(Axis(0));
        general_mat_mul(1.0, &dy, &w.out_w, 1.0, &mut dh);
        let da = cell_backward(step, &dh, &mut dc);
        general_mat_mul(1.0, &da.t(), &step.h_prev, 1.0, &mut g.dec_wh);
        g.dec_b += &da.sum_axis(Axis(0));
        dh = da.dot(&w.dec_wh);
        dc = &dc * &step.gates.f;
    }
    // dh is now the gradient at the latent; the decoder's initial cell state is constant
    let mut dc = Array2::<f64>::zeros((rows, hidden));
    for step in enc.iter().rev() {
        let dc_in = dc.clone();
        let mut da = cell_backward(step, &dh, &mut dc);
        for (b, &on) in step.active.iter().enumerate() {
            if !on {
                da.row_mut(b).fill(0.0);
            }
        }
        let x = step.x.as_ref().expect("encoder steps keep inputs");
        general_mat_mul(1.0, &da.t(), x, 1.0, &mut g.enc_wx);
        general_mat_mul(1.0, &da.t(), &step.h_prev, 1.0, &mut g.enc_wh);
        g.enc_b += &da.sum_axis(Axis(0));
        let mut dh_prev = da.dot(&w.enc_wh);
        let mut dc_prev = &dc * &step.gates.f;
        freeze_inactive(&mut dh_prev, &dh, &step.active);
        freeze_inactive(&mut dc_prev, &dc_in, &step.active);
        dh = dh_prev;
        dc = dc_prev;
    }
    (sq, Some(g))
}

/// Gate pre-activation gradients; adds the hidden-path term into `dc`.
fn cell_backward(step: &Step, dh: &Array2<f64>, dc: &mut Array2<f64>) -> Array2<f64> {
    let Gates { i, f, g, o } = &step.gates;
    let hidden = i.ncols();
    Zip::from(&mut *dc)
        .and(dh)
        .and(o)
        .and(&step.tanh_c)
        .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));
    let mut da = Array2::zeros((i.nrows(), 4 * hidden));
    Zip::from(da.slice_mut(s![.., 0..hidden]))
        .and(&*dc)
        .and(i)
        .and(g)
        .for_each(|d, &dc, &i, &g| *d = dc * g * i * (1.0 - i));
    Zip::from(da.slice_mut(s![.., hidden..2 * hidden]))
        .and(&*dc)
        .and(f)
        .and(&step.c_prev)
        .for_each(|d, &dc, &f, &cp| *d = dc * cp * f * (1.0 - f));
    Zip::from(da.slice_mut(s![.., 2 * hidden..3 * hidden]))
        .and(&*dc)
        .and(i)
        .and(g)
        .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
    Zip::from(da.slice_mut(s![.., 3 * hidden..]))
        .and(dh)
        .and(o)
        .and(&step.tanh_c)
        .for_each(|d, &dh, &o, &tc| *d = dh * tc * o * (1.0 - o));
    da
}

fn chunk_bounds(rows: usize) -> Vec<(usize, usize)> {
    (0..rows).step_by(CHUNK_ROWS).map(|a| (a, (a + CHUNK_ROWS).min(rows))).collect()
}

fn batch_elements(batch: &SequenceBatch) -> f64 {
    (batch.lengths.iter().sum::<usize>() * batch.data.dim().2) as f64
}

fn check_dim(w: &AutoencoderWeights, batch: &SequenceBatch) -> Result<(), EmbeddingError> {
    let d = batch.data.dim().2;
    if d != w.input_dim() {
        return Err(EmbeddingError::DimensionMismatch { expected: w.input_dim(), actual: d });
    }
    Ok(())
}

/// Sum of squared errors over valid steps, and the gradient of `sse · scale`.
fn batch_sse_grad(w: &AutoencoderWeights, batch: &SequenceBatch, scale: f64, want_grad: bool) -> (f64, Option<AutoencoderWeights>) {
    let parts: Vec<_> = chunk_bounds(batch.len())
        .into_par_iter()
        .map(|(a, b)| chunk_loss_grad(w, batch.data.slice(s![a..b, .., ..]), &batch.lengths[a..b], scale, want_grad))
        .collect();
    let mut sse = 0.0;
    let mut grad: Option<AutoencoderWeights> = None;
    for (s, g) in parts {
        sse += s;
        match (&mut grad, g) {
            (Some(acc), Some(g)) => acc.add_assign(&g),
            (None, Some(g)) => grad = Some(g),
            _ => {}
        }
    }
    (sse, grad)
}

/// Mean squared error per valid element of one batch.
pub fn batch_loss(params: &AutoencoderParams, batch: &SequenceBatch) -> Result<f64, EmbeddingError> {
    check_dim(&params.weights, batch)?;
    let (sse, _) = batch_sse_grad(&params.weights, batch, 1.0, false);
    Ok(sse / batch_elements(batch))
}

/// [`batch_loss`] together with its gradient with respect to every weight.
pub fn batch_loss_grad(
    params: &AutoencoderParams,
    batch: &SequenceBatch,
) -> Result<(f64, AutoencoderWeights), EmbeddingError> {
    check_dim(&params.weights, batch)?;
    let n = batch_elements(batch);
    let (sse, grad) = batch_sse_grad(&params.weights, batch, 1.0 / n, true);
    Ok((sse / n, grad.expect("gradient requested")))
}

/// Mean squared error per valid element across a batch set.
pub fn dataset_loss(params: &AutoencoderParams, batches: &[SequenceBatch]) -> Result<f64, EmbeddingError> {
    let mut sse = 0.0;
    let mut n = 0.0;
    for batch in batches {
        check_dim(&params.weights, batch)?;
        sse += batch_sse_grad(&params.weights, batch, 1.0, false).0;
        n += batch_elements(batch);
    }
    Ok(sse / n)
}

struct Adam {
    m: AutoencoderWeights,
    v: AutoencoderWeights,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(w: &AutoencoderWeights) -> Self {
        let z = AutoencoderWeights::zeros(w.input_dim(), w.hidden());
        Self { m: z.clone(), v: z, t: 0 }
    }

    fn step(&mut self, w: &mut AutoencoderWeights, g: &AutoencoderWeights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in w.blocks_mut().into_iter().zip(g.blocks()).zip(self.m.blocks_mut()).zip(self.v.blocks_mut()) {
            for k in 0..p.len() {
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * g[k];
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Progress notice passed to the training observer after every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub epochs: usize,
    pub loss: f64,
}

/// Trains from freshly initialized weights; see [`train_autoencoder_with`].
pub fn train_autoencoder(batches: &[SequenceBatch], cfg: &TrainConfig) -> Result<AutoencoderParams, EmbeddingError> {
    train_autoencoder_with(batches, cfg, &mut |_| true)
}

/// Minimizes reconstruction error with Adam, one update per batch.
///
/// Batch order is reshuffled each epoch from the seed. `observer` sees every
/// epoch and stops training by returning `false`.
pub fn train_autoencoder_with(
    batches: &[SequenceBatch],
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(EpochReport) -> bool,
) -> Result<AutoencoderParams, EmbeddingError> {
    if batches.is_empty() || batches.iter().all(SequenceBatch::is_empty) {
        return Err(EmbeddingError::InvalidConfig("no training batches".into()));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(EmbeddingError::InvalidConfig(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if cfg.epochs == 0 || cfg.hidden == 0 {
        return Err(EmbeddingError::InvalidConfig("epochs and hidden size must be positive".into()));
    }
    let dim = batches[0].data.dim().2;
    let mut params = AutoencoderParams::init(dim, cfg.hidden, cfg.seed);
    let initial = dataset_loss(&params, batches)?;
    let mut adam = Adam::new(&params.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..batches.len()).filter(|&b| !batches[b].is_empty()).collect();
    let total: f64 = order.iter().map(|&b| batch_elements(&batches[b])).sum();

    for epoch in 1..=cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut sse = 0.0;
        for &b in &order {
            let batch = &batches[b];
            let n = batch_elements(batch);
            let (s, grad) = batch_sse_grad(&params.weights, batch, 1.0 / n, true);
            let grad = grad.expect("gradient requested");
            if !s.is_finite() || !grad.all_finite() {
                return Err(EmbeddingError::Divergence { epoch, lr: cfg.lr, loss: s / n });
            }
            adam.step(&mut params.weights, &grad, cfg.lr);
            sse += s;
        }
        let loss = sse / total;
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE) {
            return Err(EmbeddingError::Divergence { epoch, lr: cfg.lr, loss });
        }
        params.loss_history.push(loss);
        if !observer(EpochReport { epoch, epochs: cfg.epochs, loss }) {
            return Err(EmbeddingError::Cancelled { epoch });
        }
    }
    if !params.weights.all_finite() {
        return Err(EmbeddingError::Divergence { epoch: cfg.epochs, lr: cfg.lr, loss: f64::NAN });
    }
    params.trained = true;
    Ok(params)
}

/// Latent vectors in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct Latents {
    pub source_index: Vec<usize>,
    pub ids: Vec<String>,
    /// One row per sequence.
    pub h: Array2<f64>,
}

/// Final encoder hidden state of every sequence in the set.
pub fn encode(set: &BatchSet, params: &AutoencoderParams) -> Result<Latents, EmbeddingError> {
    encode_batches(&set.batches, params)
}

pub fn encode_batches(batches: &[SequenceBatch], params: &AutoencoderParams) -> Result<Latents, EmbeddingError> {
    if !params.trained {
        return Err(EmbeddingError::Untrained);
    }
    let w = &params.weights;
    let mut rows: Vec<(usize, String, Array1<f64>)> = Vec::new();
    for batch in batches {
        check_dim(w, batch)?;
        let parts: Vec<Array2<f64>> = chunk_bounds(batch.len())
            .into_par_iter()
            .map(|(a, b)| encode_rows(w, batch.data.slice(s![a..b, .., ..]), &batch.lengths[a..b]))
            .collect();
        let mut r = 0;
        for h in parts {
            for row in h.outer_iter() {
                rows.push((batch.source_index[r], batch.ids[r].clone(), row.to_owned()));
                r += 1;
            }
        }
    }
    rows.sort_by_key(|r| r.0);
    let mut h = Array2::zeros((rows.len(), w.hidden()));
    for (i, r) in rows.iter().enumerate() {
        h.row_mut(i).assign(&r.2);
    }
    Ok(Latents {
        source_index: rows.iter().map(|r| r.0).collect(),
        ids: rows.into_iter().map(|r| r.1).collect(),
        h,
    })
}

/// Encodes one unpadded sequence.
pub fn encode_sequence(seq: ArrayView2<'_, f64>, params: &AutoencoderParams) -> Result<Array1<f64>, EmbeddingError> {
    let batch = SequenceBatch::from_sequences(&[seq], seq.nrows());
    Ok(encode_batches(&[batch], params)?.h.row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(rows: usize, len: usize, dim: usize, seed: u64) -> SequenceBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Array2<f64>> = (0..rows)
            .map(|r| Array2::from_shape_fn((len - r % 3, dim), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let views: Vec<_> = seqs.iter().map(|s| s.view()).collect();
        SequenceBatch::from_sequences(&views, len)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let batch = toy_batch(3, 5, 3, 1);
        let mut params = AutoencoderParams::init(3, 2, 11);
        let (_, grad) = batch_loss_grad(&params, &batch).unwrap();
        let h = 1e-5;
        for block in 0..7 {
            let n = params.weights.blocks()[block].len();
            for k in 0..n {
                let orig = params.weights.blocks()[block][k];
                params.weights.blocks_mut()[block][k] = orig + h;
                let up = batch_loss(&params, &batch).unwrap();
                params.weights.blocks_mut()[block][k] = orig - h;
                let down = batch_loss(&params, &batch).unwrap();
                params.weights.blocks_mut()[block][k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grad.blocks()[block][k];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-7);
                assert!(rel < 1e-4, "{} [{k}]: analytic {analytic} numeric {numeric}", BLOCK_NAMES[block]);
            }
        }
    }

    #[test]
    fn padding_is_invisible() {
        let batch = toy_batch(4, 30, 5, 2);
        let mut params = AutoencoderParams::init(5, 6, 3);
        params.trained = true;
        let mut noisy = batch.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for b in 0..noisy.len() {
            let len = noisy.lengths[b];
            noisy.data.slice_mut(s![b, len.., ..]).mapv_inplace(|_| rng.random_range(-50.0..50.0));
        }
        let a = encode_batches(&[batch.clone()], &params).unwrap();
        let b = encode_batches(&[noisy.clone()], &params).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(batch_loss(&params, &batch).unwrap(), batch_loss(&params, &noisy).unwrap());
        let (_, ga) = batch_loss_grad(&params, &batch).unwrap();
        let (_, gb) = batch_loss_grad(&params, &noisy).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn learns_a_constant_sequence() {
        let seq = Array2::from_elem((20, 4), 0.3);
        let views = vec![seq.view(); 8];
        let batch = SequenceBatch::from_sequences(&views, 20);
        let cfg = TrainConfig { epochs: 300, lr: 1e-2, seed: 1, hidden: 8 };
        let params = train_autoencoder(&[batch], &cfg).unwrap();
        assert!(params.trained);
        assert_eq!(params.loss_history.len(), 300);
        assert!(*params.loss_history.last().unwrap() < 1e-3, "{:?}", params.loss_history.last());
    }

    #[test]
    fn same_seed_same_weights() {
        let batch = toy_batch(5, 20, 4, 4);
        let cfg = TrainConfig { epochs: 5, lr: 1e-3, seed: 7, hidden: 6 };
        let a = train_autoencoder(&[batch.clone()], &cfg).unwrap();
        let b = train_autoencoder(&[batch], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let batch = toy_batch(5, 20, 4, 4);
        let cfg = TrainConfig { epochs: 50, lr: 1e6, seed: 7, hidden: 6 };
        match train_autoencoder(&[batch], &cfg) {
            Err(EmbeddingError::Divergence { lr, .. }) => assert_eq!(lr, 1e6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn observer_can_cancel() {
        let batch = toy_batch(5, 20, 4, 4);
        let cfg = TrainConfig { epochs: 10, lr: 1e-3, seed: 7, hidden: 6 };
        let err = train_autoencoder_with(&[batch], &cfg, &mut |r| r.epoch < 3).unwrap_err();
        assert_eq!(err, EmbeddingError::Cancelled { epoch: 3 });
    }

    #[test]
    fn untrained_params_refuse_to_encode() {
        let batch = toy_batch(2, 20, 4, 4);
        let params = AutoencoderParams::init(4, 3, 0);
        assert_eq!(encode_batches(&[batch], &params).unwrap_err(), EmbeddingError::Untrained);
    }

    #[test]
    fn latents_keep_source_order() {
        let batch = toy_batch(20, 25, 4, 5);
        let mut params = AutoencoderParams::init(4, 3, 0);
        params.trained = true;
        let mut shuffled = batch.clone();
        shuffled.source_index = (0..20).rev().collect();
        let a = encode_batches(&[batch.clone()], &params).unwrap();
        let b = encode_batches(&[shuffled], &params).unwrap();
        for i in 0..20 {
            assert_eq!(a.h.row(i), b.h.row(19 - i));
        }
        let single = encode_sequence(batch.sequence(7), &params).unwrap();
        assert!((&single - &a.h.row(7)).iter().all(|d| d.abs() < 1e-12));
    }
}
