//! Convolutional text classifier trained against soft labels with a
//! KL-divergence loss. Filters of window sizes two, three, and four slide
//! over the segment's embedding matrix; max-pooled features feed a softmax
//! output layer. Everything (forward, backward, Adam) is implemented here.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenId};
use crate::embedding::EmbeddingTable;
use crate::pseudo_label::LabelDistribution;
use crate::{Error, Result};

/// Filter window sizes, fixed by the architecture.
pub const WINDOWS: [usize; 3] = [2, 3, 4];

/// Minimum number of matrix columns so the widest filter always fits.
pub const MIN_COLUMNS: usize = 4;

const PROB_FLOOR: f64 = 1e-12;

/// A segment's embedding matrix: one d-length column per token, zero-padded
/// on the right up to [`MIN_COLUMNS`].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMatrix {
    dim: usize,
    cols: usize,
    token_count: usize,
    data: Vec<f64>, // column-major: data[col * dim + row]
}

impl SegmentMatrix {
    pub fn from_tokens(tokens: &[TokenId], table: &EmbeddingTable) -> SegmentMatrix {
        let dim = table.dim();
        let cols = tokens.len().max(MIN_COLUMNS);
        let mut data = vec![0.0; cols * dim];
        for (c, &t) in tokens.iter().enumerate() {
            data[c * dim..(c + 1) * dim].copy_from_slice(table.vector(t));
        }
        SegmentMatrix {
            dim,
            cols,
            token_count: tokens.len(),
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    /// Zeroes one column in place, the UNK substitution used by ablation.
    pub fn zero_column(&mut self, col: usize) {
        let dim = self.dim;
        self.data[col * dim..(col + 1) * dim].fill(0.0);
    }

    /// Extends the matrix with additional zero columns (test support for the
    /// padding-invariance property).
    pub fn with_extra_padding(&self, extra: usize) -> SegmentMatrix {
        let mut m = self.clone();
        m.cols += extra;
        m.data.resize(m.cols * m.dim, 0.0);
        m
    }
}

/// Training settings for one classifier fit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    #[serde(default = "train_defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "train_defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "train_defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "train_defaults::dropout")]
    pub dropout: f64,
    #[serde(default = "train_defaults::filters_per_window")]
    pub filters_per_window: usize,
    #[serde(default = "train_defaults::seed")]
    pub seed: u64,
    #[serde(default)]
    pub fine_tune_embeddings: bool,
}

mod train_defaults {
    pub fn epochs() -> usize {
        5
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn dropout() -> f64 {
        0.5
    }
    pub fn filters_per_window() -> usize {
        32
    }
    pub fn seed() -> u64 {
        1
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: train_defaults::epochs(),
            batch_size: train_defaults::batch_size(),
            learning_rate: train_defaults::learning_rate(),
            dropout: train_defaults::dropout(),
            filters_per_window: train_defaults::filters_per_window(),
            seed: train_defaults::seed(),
            fine_tune_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation("dropout must be in [0, 1)"));
        }
        if self.filters_per_window == 0 {
            return Err(Error::validation("need at least one filter per window"));
        }
        Ok(())
    }
}

/// Flat parameter layout: per window, weights then bias; then the output
/// layer weights and bias. Keeping one contiguous buffer makes the Adam step
/// and finite-difference checks plain loops over indices.
#[derive(Debug, Clone, Copy)]
struct Layout {
    filters: usize,
    dim: usize,
    classes: usize,
}

impl Layout {
    fn bank_weights(&self, bank: usize) -> usize {
        let mut off = 0;
        for w in &WINDOWS[..bank] {
            off += self.filters * w * self.dim + self.filters;
        }
        off
    }

    fn bank_bias(&self, bank: usize) -> usize {
        self.bank_weights(bank) + self.filters * WINDOWS[bank] * self.dim
    }

    fn out_weights(&self) -> usize {
        self.bank_weights(WINDOWS.len())
    }

    fn out_bias(&self) -> usize {
        self.out_weights() + self.feature_count() * self.classes
    }

    fn total(&self) -> usize {
        self.out_bias() + self.classes
    }

    fn feature_count(&self) -> usize {
        WINDOWS.len() * self.filters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    dim: usize,
    class_count: usize,
    filters_per_window: usize,
    dropout: f64,
    params: Vec<f64>,
    /// Present only when the model fine-tuned its own copy of the embeddings.
    tuned_table: Option<EmbeddingTable>,
}

impl ClassifierModel {
    /// Fresh model with Glorot-style uniform filter init and zero biases.
    pub fn new(
        dim: usize,
        class_count: usize,
        filters_per_window: usize,
        dropout: f64,
        seed: u64,
    ) -> ClassifierModel {
        let layout = Layout {
            filters: filters_per_window,
            dim,
            classes: class_count,
        };
        let mut params = vec![0.0; layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (bank, &window) in WINDOWS.iter().enumerate() {
            let limit = (6.0 / (window * dim + 1) as f64).sqrt();
            let off = layout.bank_weights(bank);
            for p in &mut params[off..off + filters_per_window * window * dim] {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * limit;
            }
        }
        let limit = (6.0 / (layout.feature_count() + class_count) as f64).sqrt();
        let off = layout.out_weights();
        for p in &mut params[off..off + layout.feature_count() * class_count] {
            *p = (rng.random::<f64>() * 2.0 - 1.0) * limit;
        }
        ClassifierModel {
            dim,
            class_count,
            filters_per_window,
            dropout,
            params,
            tuned_table: None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> Layout {
        Layout {
            filters: self.filters_per_window,
            dim: self.dim,
            classes: self.class_count,
        }
    }

    /// Table the model should be applied with: its own fine-tuned copy when
    /// present, otherwise the caller's.
    pub fn effective_table<'a>(&'a self, external: &'a EmbeddingTable) -> &'a EmbeddingTable {
        self.tuned_table.as_ref().unwrap_or(external)
    }

    pub fn tuned_table(&self) -> Option<&EmbeddingTable> {
        self.tuned_table.as_ref()
    }

    /// Directly sets all parameters (test support). Length must match.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    /// One forward pass. `train_mode` applies inverted dropout using `rng`;
    /// inference passes `false` and no rng.
    pub fn forward(
        &self,
        matrix: &SegmentMatrix,
        train_mode: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<LabelDistribution> {
        let mask = if train_mode && self.dropout > 0.0 {
            let rng = rng.ok_or_else(|| {
                Error::validation("train-mode forward with dropout requires an RNG")
            })?;
            Some(self.sample_dropout(rng))
        } else {
            None
        };
        Ok(self.forward_state(matrix, mask.as_deref())?.probs)
    }

    fn sample_dropout(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let keep = 1.0 - self.dropout;
        (0..self.layout().feature_count())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn forward_state(
        &self,
        matrix: &SegmentMatrix,
        dropout_scale: Option<&[f64]>,
    ) -> Result<ForwardState> {
        if matrix.dim != self.dim {
            return Err(Error::validation(format!(
                "matrix dim {} does not match model dim {}",
                matrix.dim, self.dim
            )));
        }
        if matrix.cols < MIN_COLUMNS {
            return Err(Error::validation("segment matrix is missing required padding"));
        }
        let layout = self.layout();
        let f_count = self.filters_per_window;
        let mut pooled = vec![0.0; layout.feature_count()];
        let mut best_pos = vec![0usize; layout.feature_count()];
        let mut active = vec![false; layout.feature_count()];

        for (bank, &window) in WINDOWS.iter().enumerate() {
            let w_off = layout.bank_weights(bank);
            let b_off = layout.bank_bias(bank);
            let positions = matrix.cols - window + 1;
            for f in 0..f_count {
                let filter = &self.params[w_off + f * window * self.dim
                    ..w_off + (f + 1) * window * self.dim];
                let bias = self.params[b_off + f];
                let mut best = 0.0f64; // ReLU floor: max-pool output is never negative
                let mut best_t = 0usize;
                let mut best_active = false;
                for t in 0..positions {
                    let mut acc = bias;
                    for k in 0..window {
                        let col = matrix.column(t + k);
                        let wk = &filter[k * self.dim..(k + 1) * self.dim];
                        for r in 0..self.dim {
                            acc += wk[r] * col[r];
                        }
                    }
                    if acc > best {
                        best = acc;
                        best_t = t;
                        best_active = true;
                    }
                }
                let idx = bank * f_count + f;
                pooled[idx] = best;
                best_pos[idx] = best_t;
                active[idx] = best_active;
            }
        }

        let h: Vec<f64> = match dropout_scale {
            Some(scale) => pooled.iter().zip(scale).map(|(p, s)| p * s).collect(),
            None => pooled.clone(),
        };

        let out_w = &self.params[layout.out_weights()..layout.out_bias()];
        let out_b = &self.params[layout.out_bias()..];
        let mut logits = out_b.to_vec();
        for (f, &hf) in h.iter().enumerate() {
            if hf != 0.0 {
                for c in 0..self.class_count {
                    logits[c] += out_w[f * self.class_count + c] * hf;
                }
            }
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite logits {logits:?} (pooled features {pooled:?})"
            )));
        }

        Ok(ForwardState {
            best_pos,
            active,
            h,
            probs: LabelDistribution::from_logits(&logits),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        matrix: &SegmentMatrix,
        state: &ForwardState,
        target: &LabelDistribution,
        scale: f64,
        dropout_scale: Option<&[f64]>,
        grads: &mut [f64],
        mut input_grad: Option<&mut Vec<f64>>,
    ) {
        let layout = self.layout();
        let f_count = self.filters_per_window;
        let out_w = &self.params[layout.out_weights()..layout.out_bias()];

        // d(loss)/d(logit_c) for softmax + KL against a soft target.
        let dlogits: Vec<f64> = state
            .probs
            .iter()
            .zip(target.iter())
            .map(|(&p, &q)| (p - q) * scale)
            .collect();

        for (c, &dl) in dlogits.iter().enumerate() {
            grads[layout.out_bias() + c] += dl;
        }
        let mut dh = vec![0.0; layout.feature_count()];
        for (f, &hf) in state.h.iter().enumerate() {
            for (c, &dl) in dlogits.iter().enumerate() {
                grads[layout.out_weights() + f * self.class_count + c] += hf * dl;
                dh[f] += out_w[f * self.class_count + c] * dl;
            }
        }
        if let Some(scale_vec) = dropout_scale {
            for (g, s) in dh.iter_mut().zip(scale_vec) {
                *g *= s;
            }
        }

        for (bank, &window) in WINDOWS.iter().enumerate() {
            let w_off = layout.bank_weights(bank);
            let b_off = layout.bank_bias(bank);
            for f in 0..f_count {
                let idx = bank * f_count + f;
                if !state.active[idx] || dh[idx] == 0.0 {
                    continue;
                }
                let g = dh[idx];
                let t = state.best_pos[idx];
                grads[b_off + f] += g;
                let filter_base = w_off + f * window * self.dim;
                for k in 0..window {
                    let col = matrix.column(t + k);
                    let w_base = filter_base + k * self.dim;
                    for r in 0..self.dim {
                        grads[w_base + r] += g * col[r];
                    }
                }
                if let Some(dx) = input_grad.as_deref_mut() {
                    for k in 0..window {
                        let dx_base = (t + k) * self.dim;
                        let w_base = filter_base + k * self.dim;
                        for r in 0..self.dim {
                            dx[dx_base + r] += g * self.params[w_base + r];
                        }
                    }
                }
            }
        }
    }
}

struct ForwardState {
    best_pos: Vec<usize>,
    active: Vec<bool>,
    h: Vec<f64>,
    probs: LabelDistribution,
}

/// KL divergence between a target distribution `q` and a prediction `p`,
/// with `p` floored at 1e-12 before the log and 0 log 0 taken as 0.
pub fn kl_loss(q: &LabelDistribution, p: &LabelDistribution) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::validation(format!(
            "distribution length mismatch: {} vs {}",
            q.len(),
            p.len()
        )));
    }
    Ok(q.iter()
        .zip(p.iter())
        .map(|(&qj, &pj)| {
            if qj > 0.0 {
                qj * (qj.ln() - pj.max(PROB_FLOOR).ln())
            } else {
                0.0
            }
        })
        .sum())
}

/// Trains the model with mini-batch Adam on the mean KL loss against soft
/// targets. Empty segments are excluded. Returns the per-epoch mean loss
/// trace (one entry per epoch). Deterministic given the config seed.
pub fn train(
    model: &mut ClassifierModel,
    corpus: &Corpus,
    table: &EmbeddingTable,
    targets: &[LabelDistribution],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if targets.len() != corpus.len() {
        return Err(Error::validation(format!(
            "{} targets for {} segments",
            targets.len(),
            corpus.len()
        )));
    }
    if let Some(bad) = targets.iter().find(|t| t.len() != model.class_count) {
        return Err(Error::validation(format!(
            "target width {} does not match model class count {}",
            bad.len(),
            model.class_count
        )));
    }

    if config.fine_tune_embeddings && model.tuned_table.is_none() {
        model.tuned_table = Some(table.clone());
    }

    let trainable: Vec<usize> = corpus
        .segments
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.id)
        .collect();
    if trainable.is_empty() {
        return Err(Error::validation("no non-empty segments to train on"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_params = model.param_count();
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut adam_t = 0u64;
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

    let mut order = trainable;
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = vec![0.0; n_params];
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;

            for &seg_id in batch {
                let seg = &corpus.segments[seg_id];
                let active_table = model.effective_table(table);
                let matrix = SegmentMatrix::from_tokens(&seg.tokens, active_table);
                let mask = if model.dropout > 0.0 {
                    Some(model.sample_dropout(&mut rng))
                } else {
                    None
                };
                let state = model.forward_state(&matrix, mask.as_deref())?;
                batch_loss += kl_loss(&targets[seg_id], &state.probs)?;

                let mut input_grad = if config.fine_tune_embeddings {
                    Some(vec![0.0; matrix.cols * matrix.dim])
                } else {
                    None
                };
                model.backward(
                    &matrix,
                    &state,
                    &targets[seg_id],
                    scale,
                    mask.as_deref(),
                    &mut grads,
                    input_grad.as_mut(),
                );
                if let Some(dx) = input_grad {
                    // Plain SGD into the model's private embedding copy.
                    let tuned = model.tuned_table.as_mut().expect("fine-tune table present");
                    for (c, &tok) in seg.tokens.iter().enumerate() {
                        let v = tuned.vector_mut(tok);
                        for r in 0..v.len() {
                            v[r] -= config.learning_rate * dx[c * v.len() + r];
                        }
                    }
                }
            }

            let mean_batch = batch_loss / batch.len() as f64;
            if !mean_batch.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!("loss diverged to {mean_batch}"),
                });
            }
            epoch_loss += batch_loss;

            adam_t += 1;
            let bc1 = 1.0 - beta1.powi(adam_t as i32);
            let bc2 = 1.0 - beta2.powi(adam_t as i32);
            for i in 0..n_params {
                let g = grads[i];
                adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * g;
                adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * g * g;
                let m_hat = adam_m[i] / bc1;
                let v_hat = adam_v[i] / bc2;
                model.params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }

        trace.push(epoch_loss / order.len() as f64);
    }

    Ok(trace)
}

/// Fisher-Yates with the caller's RNG, so training stays reproducible.
fn shuffle(items: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Inference over every segment, dropout off. Empty segments go through as
/// all-padding matrices.
pub fn predict(
    model: &ClassifierModel,
    corpus: &Corpus,
    table: &EmbeddingTable,
) -> Result<Vec<LabelDistribution>> {
    let active_table = model.effective_table(table);
    corpus
        .segments
        .iter()
        .map(|seg| {
            let matrix = SegmentMatrix::from_tokens(&seg.tokens, active_table);
            model.forward(&matrix, false, None)
        })
        .collect()
}

fn batch_loss_mean(
    model: &ClassifierModel,
    batch: &[(SegmentMatrix, LabelDistribution)],
) -> Result<f64> {
    let mut total = 0.0;
    for (matrix, target) in batch {
        let state = model.forward_state(matrix, None)?;
        total += kl_loss(target, &state.probs)?;
    }
    Ok(total / batch.len() as f64)
}

fn analytic_gradients(
    model: &ClassifierModel,
    batch: &[(SegmentMatrix, LabelDistribution)],
) -> Result<Vec<f64>> {
    let mut grads = vec![0.0; model.param_count()];
    let scale = 1.0 / batch.len() as f64;
    for (matrix, target) in batch {
        let state = model.forward_state(matrix, None)?;
        model.backward(matrix, &state, target, scale, None, &mut grads, None);
    }
    Ok(grads)
}

/// Compares analytic gradients of the mean KL loss against central finite
/// differences (h = 1e-4) and returns the worst relative error over all
/// parameters. Intended for small models (hundreds of parameters).
pub fn gradient_check(
    model: &ClassifierModel,
    batch: &[(SegmentMatrix, LabelDistribution)],
) -> Result<f64> {
    gradient_check_inner(model, batch, None)
}

/// Same check with the analytic gradient deliberately sign-flipped at one
/// parameter index — a mutation the check must flag loudly.
pub fn gradient_check_mutated(
    model: &ClassifierModel,
    batch: &[(SegmentMatrix, LabelDistribution)],
    flip_index: usize,
) -> Result<f64> {
    gradient_check_inner(model, batch, Some(flip_index))
}

fn gradient_check_inner(
    model: &ClassifierModel,
    batch: &[(SegmentMatrix, LabelDistribution)],
    flip_index: Option<usize>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("gradient check needs at least one sample"));
    }
    let mut analytic = analytic_gradients(model, batch)?;
    if let Some(i) = flip_index {
        analytic[i] = -analytic[i];
    }

    let h = 1e-4;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &exact) in analytic.iter().enumerate() {
        let original = probe.params[i];
        probe.params[i] = original + h;
        let plus = batch_loss_mean(&probe, batch)?;
        probe.params[i] = original - h;
        let minus = batch_loss_mean(&probe, batch)?;
        probe.params[i] = original;

        let numeric = (plus - minus) / (2.0 * h);
        let denom = (exact.abs() + numeric.abs()).max(1e-8);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}

/// Serialized model checkpoint. Self-describing: architecture shape, all
/// parameters, class names, and the vocabulary/embedding fingerprint the
/// model was trained against.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub dim: usize,
    pub class_count: usize,
    pub filters_per_window: usize,
    pub windows: Vec<usize>,
    pub dropout: f64,
    pub banks: Vec<CheckpointBank>,
    pub out_weights: Vec<f64>,
    pub out_bias: Vec<f64>,
    pub class_names: Vec<String>,
    pub fingerprint: String,
    pub train_config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned_embeddings: Option<TunedEmbeddings>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointBank {
    pub window: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TunedEmbeddings {
    pub dim: usize,
    pub data: Vec<f64>,
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &ClassifierModel,
    class_names: &[String],
    fingerprint: u64,
    train_config: Option<&TrainConfig>,
) -> Result<()> {
    let path = path.as_ref();
    if class_names.len() != model.class_count {
        return Err(Error::validation(format!(
            "{} class names for {} classes",
            class_names.len(),
            model.class_count
        )));
    }
    let layout = model.layout();
    let banks = WINDOWS
        .iter()
        .enumerate()
        .map(|(bank, &window)| CheckpointBank {
            window,
            weights: model.params
                [layout.bank_weights(bank)..layout.bank_bias(bank)]
                .to_vec(),
            bias: model.params
                [layout.bank_bias(bank)..layout.bank_bias(bank) + model.filters_per_window]
                .to_vec(),
        })
        .collect();
    let checkpoint = Checkpoint {
        schema_version: 1,
        dim: model.dim,
        class_count: model.class_count,
        filters_per_window: model.filters_per_window,
        windows: WINDOWS.to_vec(),
        dropout: model.dropout,
        banks,
        out_weights: model.params[layout.out_weights()..layout.out_bias()].to_vec(),
        out_bias: model.params[layout.out_bias()..].to_vec(),
        class_names: class_names.to_vec(),
        fingerprint: format!("{fingerprint:016x}"),
        train_config: train_config.cloned(),
        tuned_embeddings: model.tuned_table.as_ref().map(|t| TunedEmbeddings {
            dim: t.dim(),
            data: t.rows().flatten().copied().collect(),
        }),
    };
    let json = serde_json::to_string(&checkpoint)
        .map_err(|e| Error::validation(format!("checkpoint serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, verifying it was trained against the same vocabulary
/// and embeddings the caller is about to apply it to.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected_fingerprint: u64,
) -> Result<(ClassifierModel, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    if cp.windows != WINDOWS.to_vec() {
        return Err(Error::validation(format!(
            "unsupported filter windows {:?}",
            cp.windows
        )));
    }
    let expected = format!("{expected_fingerprint:016x}");
    if cp.fingerprint != expected {
        return Err(Error::validation(format!(
            "checkpoint fingerprint {} does not match current vocabulary/embeddings {expected}",
            cp.fingerprint
        )));
    }

    let layout = Layout {
        filters: cp.filters_per_window,
        dim: cp.dim,
        classes: cp.class_count,
    };
    let mut params = vec![0.0; layout.total()];
    if cp.banks.len() != WINDOWS.len() {
        return Err(Error::validation("checkpoint must contain three filter banks"));
    }
    for (bank, cb) in cp.banks.iter().enumerate() {
        let expected_w = cp.filters_per_window * cb.window * cp.dim;
        if cb.weights.len() != expected_w || cb.bias.len() != cp.filters_per_window {
            return Err(Error::validation(format!(
                "bank {bank} has inconsistent shapes"
            )));
        }
        params[layout.bank_weights(bank)..layout.bank_bias(bank)]
            .copy_from_slice(&cb.weights);
        params[layout.bank_bias(bank)..layout.bank_bias(bank) + cp.filters_per_window]
            .copy_from_slice(&cb.bias);
    }
    if cp.out_weights.len() != layout.feature_count() * cp.class_count
        || cp.out_bias.len() != cp.class_count
        || cp.class_names.len() != cp.class_count
    {
        return Err(Error::validation("checkpoint output layer has inconsistent shapes"));
    }
    params[layout.out_weights()..layout.out_bias()].copy_from_slice(&cp.out_weights);
    params[layout.out_bias()..].copy_from_slice(&cp.out_bias);

    let tuned_table = match cp.tuned_embeddings {
        Some(t) => {
            if t.dim == 0 || t.data.len() % t.dim != 0 {
                return Err(Error::validation("tuned embedding block has inconsistent shape"));
            }
            let rows = t.data.len() / t.dim;
            let mut table = EmbeddingTable::zeros(rows, t.dim);
            for (i, chunk) in t.data.chunks(t.dim).enumerate() {
                table
                    .vector_mut(TokenId(i as u32))
                    .copy_from_slice(chunk);
            }
            Some(table)
        }
        None => None,
    };

    Ok((
        ClassifierModel {
            dim: cp.dim,
            class_count: cp.class_count,
            filters_per_window: cp.filters_per_window,
            dropout: cp.dropout,
            params,
            tuned_table,
        },
        cp.class_names,
    ))
}
