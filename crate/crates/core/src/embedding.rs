//! Word embeddings: plain-text vector file loading, deterministic fallbacks,
//! and a from-scratch skip-gram-with-negative-sampling trainer.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TokenId, Vocabulary};
use crate::{Error, Result};

/// Dense per-token vectors, row-indexed by [`TokenId`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vectors (rows).
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, id: TokenId) -> &[f64] {
        let i = id.index() * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn vector_mut(&mut self, id: TokenId) -> &mut [f64] {
        let i = id.index() * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    /// Copy with every row scaled to unit length; zero rows stay zero.
    pub fn normalized(&self) -> EmbeddingTable {
        let mut out = self.clone();
        for row in out.data.chunks_mut(out.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }

    /// Checks the table covers `vocab` with finite vectors and a zero UNK row.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.len() != vocab.len() {
            return Err(Error::validation(format!(
                "embedding table has {} rows but vocabulary has {} tokens",
                self.len(),
                vocab.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding table contains non-finite values".into()));
        }
        if self.vector(vocab.unk()).iter().any(|&v| v != 0.0) {
            return Err(Error::validation("UNK embedding must be all zeros"));
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// FNV-1a, used for stable per-token hashes and table fingerprints.
fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= b as u64;
        state = state.wrapping_mul(0x100000001b3);
    }
    state
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;

/// Stable fingerprint over a vocabulary and its embedding table. Checkpoints
/// record it so a model is never applied against mismatched inputs.
pub fn fingerprint(vocab: &Vocabulary, table: &EmbeddingTable) -> u64 {
    let mut h = FNV_OFFSET;
    h = fnv1a(&(table.dim() as u64).to_le_bytes(), h);
    h = fnv1a(&(vocab.len() as u64).to_le_bytes(), h);
    for (id, token) in vocab.iter() {
        h = fnv1a(token.as_bytes(), h);
        for &v in table.vector(id) {
            h = fnv1a(&v.to_bits().to_le_bytes(), h);
        }
    }
    h
}

/// Deterministic fallback vector for a token absent from an embedding file:
/// uniform(-0.5/d, 0.5/d) seeded by the token string alone, so the same token
/// gets the same vector on every run.
fn fallback_vector(token: &str, dim: usize) -> Vec<f64> {
    let seed = fnv1a(token.as_bytes(), FNV_OFFSET);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect()
}

/// Loads a plain-text vector file (`count dim` header, then one
/// `token v1 .. v_dim` line each). Vocabulary tokens missing from the file
/// get deterministic fallback vectors; UNK is forced to zeros.
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty embedding file"))?;
    let mut parts = header.split_whitespace();
    let declared_count: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "header must be `count dim`"))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "header must be `count dim`"))?;
    if dim == 0 || parts.next().is_some() {
        return Err(Error::parse(path, 1, "header must be `count dim`"));
    }

    let mut table = EmbeddingTable::zeros(vocab.len(), dim);
    let mut found = vec![false; vocab.len()];
    found[vocab.unk().index()] = true;

    let mut data_lines = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        data_lines += 1;
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| Error::parse(path, lineno, "missing token"))?;
        let mut values = Vec::with_capacity(dim);
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad float `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("non-finite value `{f}`")));
            }
            values.push(v);
        }
        if values.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if let Some(id) = vocab.id(token) {
            if id != vocab.unk() {
                table.vector_mut(id).copy_from_slice(&values);
                found[id.index()] = true;
            }
        }
    }

    if data_lines != declared_count {
        return Err(Error::validation(format!(
            "embedding file declares {declared_count} vectors but contains {data_lines}"
        )));
    }

    for (id, token) in vocab.iter() {
        if !found[id.index()] {
            let v = fallback_vector(token, dim);
            table.vector_mut(id).copy_from_slice(&v);
        }
    }

    Ok(table)
}

/// Writes the table in the same plain-text format `load_embeddings` reads.
pub fn save_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    table: &EmbeddingTable,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", vocab.len(), table.dim()));
    for (id, token) in vocab.iter() {
        out.push_str(token);
        for v in table.vector(id) {
            out.push(' ');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Skip-gram-with-negative-sampling training settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmbeddingConfig {
    #[serde(default = "embed_defaults::dim")]
    pub dim: usize,
    #[serde(default = "embed_defaults::window")]
    pub window: usize,
    #[serde(default = "embed_defaults::negatives")]
    pub negatives: usize,
    #[serde(default = "embed_defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "embed_defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "embed_defaults::seed")]
    pub seed: u64,
}

mod embed_defaults {
    pub fn dim() -> usize {
        200
    }
    pub fn window() -> usize {
        5
    }
    pub fn negatives() -> usize {
        5
    }
    pub fn epochs() -> usize {
        5
    }
    pub fn learning_rate() -> f64 {
        0.025
    }
    pub fn seed() -> u64 {
        1
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: embed_defaults::dim(),
            window: embed_defaults::window(),
            negatives: embed_defaults::negatives(),
            epochs: embed_defaults::epochs(),
            learning_rate: embed_defaults::learning_rate(),
            seed: embed_defaults::seed(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains skip-gram embeddings with negative sampling on the corpus.
/// Single-threaded and fully deterministic given the config seed.
pub fn train_embeddings(corpus: &Corpus, config: &EmbeddingConfig) -> Result<EmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::validation("cannot train embeddings on an empty corpus"));
    }
    if config.dim == 0 || config.window == 0 || config.epochs == 0 {
        return Err(Error::validation("embedding dim, window, and epochs must be positive"));
    }
    let vocab = &corpus.vocabulary;
    let total_tokens: usize = corpus.segments.iter().map(|s| s.tokens.len()).sum();
    if total_tokens <= config.window {
        return Err(Error::validation(format!(
            "corpus has {total_tokens} tokens, smaller than context window {}",
            config.window
        )));
    }
    if !corpus.segments.iter().any(|s| s.tokens.len() >= 2) {
        return Err(Error::validation("no segment long enough to form a context pair"));
    }

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Input vectors start small and random; context vectors start at zero.
    let mut input = EmbeddingTable::zeros(vocab.len(), dim);
    let mut context = vec![0.0f64; vocab.len() * dim];
    for id in 1..vocab.len() {
        for v in input.vector_mut(TokenId(id as u32)) {
            *v = (rng.random::<f64>() - 0.5) / dim as f64;
        }
    }

    // Unigram^0.75 cumulative distribution for negative sampling.
    let mut counts = vec![0u64; vocab.len()];
    for seg in &corpus.segments {
        for &t in &seg.tokens {
            counts[t.index()] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(vocab.len());
    let mut acc = 0.0f64;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::validation("corpus has no in-vocabulary tokens"));
    }
    let sample_negative = |r: f64| -> usize {
        let target = r * acc;
        cumulative.partition_point(|&c| c <= target).min(vocab.len() - 1)
    };

    let min_lr = config.learning_rate * 1e-4;
    let total_positions = (total_tokens * config.epochs).max(1);
    let mut processed = 0usize;

    for _epoch in 0..config.epochs {
        for seg in &corpus.segments {
            let n = seg.tokens.len();
            for center_pos in 0..n {
                let lr = (config.learning_rate
                    * (1.0 - processed as f64 / total_positions as f64))
                    .max(min_lr);
                processed += 1;

                let reach = rng.random_range(1..=config.window);
                let lo = center_pos.saturating_sub(reach);
                let hi = (center_pos + reach + 1).min(n);
                let center = seg.tokens[center_pos].index();

                for ctx_pos in lo..hi {
                    if ctx_pos == center_pos {
                        continue;
                    }
                    let positive = seg.tokens[ctx_pos].index();

                    let mut center_grad = vec![0.0f64; dim];
                    let center_vec = input.vector(TokenId(center as u32)).to_vec();

                    // Positive pair plus sampled negatives, standard SGNS updates.
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (positive, 1.0)
                        } else {
                            let cand = sample_negative(rng.random::<f64>());
                            if cand == positive {
                                continue;
                            }
                            (cand, 0.0)
                        };
                        let ctx = &mut context[target * dim..(target + 1) * dim];
                        let score = sigmoid(dot(&center_vec, ctx));
                        let g = (label - score) * lr;
                        for i in 0..dim {
                            center_grad[i] += g * ctx[i];
                            ctx[i] += g * center_vec[i];
                        }
                    }

                    let cv = input.vector_mut(TokenId(center as u32));
                    for i in 0..dim {
                        cv[i] += center_grad[i];
                    }
                }
            }
        }
    }

    for v in input.vector_mut(vocab.unk()) {
        *v = 0.0;
    }
    input.validate(vocab)?;
    Ok(input)
}
