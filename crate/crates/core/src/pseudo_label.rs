//! Pseudo label generation: seed-word aspect embeddings, similarity-based
//! attention over segment tokens, and softmax label assignment.

use std::collections::HashMap;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{Corpus, TextSegment, TokenId, Vocabulary};
use crate::embedding::{dot, EmbeddingTable};
use crate::{Error, Result};

/// A probability vector over aspects (K or K+1 entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    /// Wraps a probability vector, checking non-negativity and unit sum.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::validation("empty label distribution"));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::validation("label distribution entries must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "label distribution sums to {sum}, expected 1"
            )));
        }
        Ok(LabelDistribution(probs))
    }

    pub fn uniform(k: usize) -> Self {
        LabelDistribution(vec![1.0 / k as f64; k])
    }

    /// Max-stabilized softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        LabelDistribution(exps.into_iter().map(|e| e / sum).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl Deref for LabelDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-aspect ordered seed word lists, versioned by refinement iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSets {
    pub aspects: Vec<String>,
    pub seeds: Vec<Vec<TokenId>>,
    pub iteration: u32,
}

impl SeedSets {
    /// Builds seed sets from (aspect name, seed tokens) pairs, resolving
    /// tokens against the vocabulary. Unknown seeds are dropped and reported
    /// as warnings; duplicates within or across aspects are rejected.
    pub fn resolve(
        pairs: &[(String, Vec<String>)],
        vocab: &Vocabulary,
    ) -> Result<(SeedSets, Vec<String>)> {
        if pairs.len() < 2 {
            return Err(Error::validation("at least 2 aspects are required"));
        }
        let mut warnings = Vec::new();
        let mut owner: HashMap<TokenId, usize> = HashMap::new();
        let mut aspects = Vec::with_capacity(pairs.len());
        let mut seeds = Vec::with_capacity(pairs.len());

        for (aspect_idx, (name, words)) in pairs.iter().enumerate() {
            if aspects.contains(name) {
                return Err(Error::validation(format!("duplicate aspect name `{name}`")));
            }
            let mut resolved: Vec<TokenId> = Vec::new();
            for word in words {
                let Some(id) = vocab.id(word) else {
                    warnings.push(format!(
                        "seed `{word}` for aspect `{name}` is not in the vocabulary; dropped"
                    ));
                    continue;
                };
                if id == vocab.unk() {
                    return Err(Error::validation(format!(
                        "seed `{word}` is the reserved UNK token"
                    )));
                }
                if resolved.contains(&id) {
                    return Err(Error::validation(format!(
                        "duplicate seed `{word}` in aspect `{name}`"
                    )));
                }
                if let Some(&other) = owner.get(&id) {
                    return Err(Error::validation(format!(
                        "seed `{word}` appears in both `{}` and `{name}`",
                        pairs[other].0
                    )));
                }
                owner.insert(id, aspect_idx);
                resolved.push(id);
            }
            if resolved.is_empty() {
                return Err(Error::validation(format!(
                    "aspect `{name}` has no in-vocabulary seeds"
                )));
            }
            aspects.push(name.clone());
            seeds.push(resolved);
        }

        Ok((SeedSets { aspects, seeds, iteration: 0 }, warnings))
    }

    /// Loads a JSON object mapping aspect name to seed word list. Key order
    /// in the file defines the aspect index order.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<(SeedSets, Vec<String>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(Error::validation("seed file must be a JSON object"));
        };
        let mut pairs = Vec::with_capacity(map.len());
        for (name, words) in map {
            let Value::Array(items) = words else {
                return Err(Error::validation(format!(
                    "aspect `{name}` must map to an array of seed words"
                )));
            };
            let mut list = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => list.push(s),
                    other => {
                        return Err(Error::validation(format!(
                            "aspect `{name}` contains a non-string seed: {other}"
                        )))
                    }
                }
            }
            pairs.push((name, list));
        }
        SeedSets::resolve(&pairs, vocab)
    }

    pub fn k(&self) -> usize {
        self.aspects.len()
    }

    /// Seed words as strings, for manifests and history records.
    pub fn words(&self, vocab: &Vocabulary) -> Vec<(String, Vec<String>)> {
        self.aspects
            .iter()
            .zip(&self.seeds)
            .map(|(name, ids)| {
                (
                    name.clone(),
                    ids.iter().map(|&id| vocab.token(id).to_string()).collect(),
                )
            })
            .collect()
    }
}

/// Mean seed vectors, one per aspect.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectEmbeddings {
    vectors: Vec<Vec<f64>>,
}

impl AspectEmbeddings {
    pub fn compute(seeds: &SeedSets, table: &EmbeddingTable) -> Result<AspectEmbeddings> {
        let vectors = seeds
            .seeds
            .iter()
            .map(|ids| aspect_embedding(ids, table))
            .collect::<Result<Vec<_>>>()?;
        Ok(AspectEmbeddings { vectors })
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector(&self, aspect: usize) -> &[f64] {
        &self.vectors[aspect]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(Vec::as_slice)
    }
}

/// Arithmetic mean of the seed word vectors.
pub fn aspect_embedding(seeds: &[TokenId], table: &EmbeddingTable) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(Error::validation("aspect has an empty seed list"));
    }
    let mut mean = vec![0.0; table.dim()];
    for &id in seeds {
        for (m, v) in mean.iter_mut().zip(table.vector(id)) {
            *m += v;
        }
    }
    let n = seeds.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Attention weight of a token: its maximum dot-product similarity over all
/// aspect embeddings, clamped below at zero so weighted means stay convex.
pub fn attention_weight(token: TokenId, aspects: &AspectEmbeddings, table: &EmbeddingTable) -> f64 {
    let e = table.vector(token);
    aspects
        .iter()
        .map(|a| dot(a, e))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

/// Attention-weighted mean of the segment's token vectors. Falls back to
/// the plain mean when every weight is zero. Returns `None` for segments
/// with no in-vocabulary tokens.
pub fn segment_representation(
    segment: &TextSegment,
    aspects: &AspectEmbeddings,
    table: &EmbeddingTable,
) -> Option<Vec<f64>> {
    if segment.is_empty() {
        return None;
    }
    let weights: Vec<f64> = segment
        .tokens
        .iter()
        .map(|&t| attention_weight(t, aspects, table))
        .collect();
    let total: f64 = weights.iter().sum();

    let mut rep = vec![0.0; table.dim()];
    if total > 0.0 {
        for (&t, &w) in segment.tokens.iter().zip(&weights) {
            for (r, v) in rep.iter_mut().zip(table.vector(t)) {
                *r += w * v;
            }
        }
        rep.iter_mut().for_each(|r| *r /= total);
    } else {
        for &t in &segment.tokens {
            for (r, v) in rep.iter_mut().zip(table.vector(t)) {
                *r += v;
            }
        }
        let n = segment.tokens.len() as f64;
        rep.iter_mut().for_each(|r| *r /= n);
    }
    Some(rep)
}

/// Softmax over the dot products between the segment representation and each
/// aspect embedding.
pub fn pseudo_labels(z: &[f64], aspects: &AspectEmbeddings) -> LabelDistribution {
    let logits: Vec<f64> = aspects.iter().map(|a| dot(a, z)).collect();
    LabelDistribution::from_logits(&logits)
}

/// K-aspect pseudo labels for every segment; empty segments get uniform.
pub fn generate_all(
    corpus: &Corpus,
    seeds: &SeedSets,
    table: &EmbeddingTable,
) -> Result<Vec<LabelDistribution>> {
    let aspects = AspectEmbeddings::compute(seeds, table)?;
    Ok(corpus
        .segments
        .iter()
        .map(|seg| match segment_representation(seg, &aspects, table) {
            Some(z) => pseudo_labels(&z, &aspects),
            None => LabelDistribution::uniform(seeds.k()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_from(vectors: &[(&str, Vec<f64>)], corpus: &Corpus) -> EmbeddingTable {
        let dim = vectors[0].1.len();
        let mut t = EmbeddingTable::zeros(corpus.vocabulary.len(), dim);
        for (tok, v) in vectors {
            let id = corpus.vocabulary.id(tok).unwrap();
            t.vector_mut(id).copy_from_slice(v);
        }
        t
    }

    fn two_aspect_fixture() -> (Corpus, EmbeddingTable, SeedSets) {
        let corpus = Corpus::from_lines(["fx fy sx sy fx fy sx sy"], 1).unwrap();
        let table = table_from(
            &[
                ("fx", vec![1.0, 0.0]),
                ("fy", vec![0.0, 1.0]),
                ("sx", vec![0.5, 0.5]),
                ("sy", vec![-1.0, 0.0]),
            ],
            &corpus,
        );
        let (seeds, warn) = SeedSets::resolve(
            &[
                ("food".into(), vec!["fx".into(), "fy".into()]),
                ("service".into(), vec!["sx".into(), "sy".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        assert!(warn.is_empty());
        (corpus, table, seeds)
    }

    #[test]
    fn aspect_embedding_is_the_seed_mean() {
        let (corpus, table, seeds) = two_aspect_fixture();
        let a = aspect_embedding(&seeds.seeds[0], &table).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
        let single = aspect_embedding(&seeds.seeds[0][..1], &table).unwrap();
        assert_eq!(single, table.vector(corpus.vocabulary.id("fx").unwrap()));
    }

    #[test]
    fn aspect_embedding_matches_brute_force_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let corpus = Corpus::from_lines(["t0 t1 t2 t3 t4 t0 t1 t2 t3 t4"], 1).unwrap();
        let dim = 7;
        let mut table = EmbeddingTable::zeros(corpus.vocabulary.len(), dim);
        let ids: Vec<TokenId> = (0..5)
            .map(|i| corpus.vocabulary.id(&format!("t{i}")).unwrap())
            .collect();
        for &id in &ids {
            for v in table.vector_mut(id) {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
        }
        let mean = aspect_embedding(&ids, &table).unwrap();
        for (c, &m) in mean.iter().enumerate() {
            let mut sum = 0.0;
            for &id in &ids {
                sum += table.vector(id)[c];
            }
            assert!((m - sum / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_seed_list_is_an_error() {
        let (_, table, _) = two_aspect_fixture();
        assert!(aspect_embedding(&[], &table).is_err());
    }

    #[test]
    fn attention_weight_takes_the_max_similarity() {
        let corpus = Corpus::from_lines(["w w a1 a1 a2 a2"], 1).unwrap();
        let table = table_from(
            &[
                ("w", vec![1.0, 0.0]),
                ("a1", vec![1.0, 0.0]),
                ("a2", vec![0.0, 1.0]),
            ],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("one".into(), vec!["a1".into()]),
                ("two".into(), vec!["a2".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        let w = corpus.vocabulary.id("w").unwrap();
        // dot with a1 = 1, dot with a2 = 0, max = 1.
        assert!((attention_weight(w, &aspects, &table) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_weight_clamps_negatives_to_zero() {
        let corpus = Corpus::from_lines(["w w a1 a1 a2 a2"], 1).unwrap();
        let table = table_from(
            &[
                ("w", vec![-1.0, 0.0]),
                ("a1", vec![1.0, 0.0]),
                ("a2", vec![0.0, -0.5]),
            ],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("one".into(), vec!["a1".into()]),
                ("two".into(), vec!["a2".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        let w = corpus.vocabulary.id("w").unwrap();
        // Raw similarities are -1 and 0; the max is 0 and stays 0 after clamping.
        assert_eq!(attention_weight(w, &aspects, &table), 0.0);

        // A token orthogonal to every aspect also gets weight 0.
        let orth = table_from(
            &[
                ("w", vec![0.0, 0.0]),
                ("a1", vec![1.0, 0.0]),
                ("a2", vec![0.0, 1.0]),
            ],
            &corpus,
        );
        assert_eq!(attention_weight(w, &aspects, &orth), 0.0);
    }

    #[test]
    fn segment_representation_is_the_weighted_mean() {
        // Weights 1 and 0.5 over vectors (1,0) and (0.5,0.5):
        // ((1*1 + 0.5*0.5)/1.5, (0.5*0.5)/1.5) = (0.8333.., 0.1666..).
        let corpus = Corpus::from_lines(["p q p q a b a b"], 1).unwrap();
        let table = table_from(
            &[
                ("p", vec![1.0, 0.0]),
                ("q", vec![0.5, 0.5]),
                ("a", vec![1.0, 0.0]),
                ("b", vec![0.0, 0.5]),
            ],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("one".into(), vec!["a".into()]),
                ("two".into(), vec!["b".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        // beta(p) = max(1, 0) = 1; beta(q) = max(0.5, 0.25) = 0.5.
        let seg = TextSegment {
            id: 0,
            tokens: vec![
                corpus.vocabulary.id("p").unwrap(),
                corpus.vocabulary.id("q").unwrap(),
            ],
            raw: "p q".into(),
        };
        let z = segment_representation(&seg, &aspects, &table).unwrap();
        assert!((z[0] - 1.25 / 1.5).abs() < 1e-12);
        assert!((z[1] - 0.25 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_token_segment_is_that_tokens_vector() {
        let (corpus, table, seeds) = two_aspect_fixture();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        let fx = corpus.vocabulary.id("fx").unwrap();
        let seg = TextSegment { id: 0, tokens: vec![fx], raw: "fx".into() };
        let z = segment_representation(&seg, &aspects, &table).unwrap();
        assert_eq!(z, table.vector(fx));
    }

    #[test]
    fn all_zero_weights_fall_back_to_plain_mean() {
        let corpus = Corpus::from_lines(["n1 n2 a1 a2 n1 n2 a1 a2"], 1).unwrap();
        let table = table_from(
            &[
                ("n1", vec![-1.0, 0.0]),
                ("n2", vec![0.0, -1.0]),
                ("a1", vec![1.0, 0.0]),
                ("a2", vec![0.0, 1.0]),
            ],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("one".into(), vec!["a1".into()]),
                ("two".into(), vec!["a2".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        let seg = TextSegment {
            id: 0,
            tokens: vec![
                corpus.vocabulary.id("n1").unwrap(),
                corpus.vocabulary.id("n2").unwrap(),
            ],
            raw: "n1 n2".into(),
        };
        let z = segment_representation(&seg, &aspects, &table).unwrap();
        assert_eq!(z, vec![-0.5, -0.5]);
    }

    #[test]
    fn pseudo_labels_match_hand_softmax() {
        let aspects = AspectEmbeddings {
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let labels = pseudo_labels(&[0.8333, 0.1667], &aspects);
        // softmax(0.8333, 0.1667) = (0.6607.., 0.3392..).
        assert!((labels[0] - 0.661).abs() < 1e-3);
        assert!((labels[1] - 0.339).abs() < 1e-3);
    }

    #[test]
    fn equal_logits_give_uniform() {
        let d = LabelDistribution::from_logits(&[2.5, 2.5, 2.5]);
        for &p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_three_gap_gives_quarter_three_quarters() {
        let l = 4.2;
        let d = LabelDistribution::from_logits(&[l, l + 3.0f64.ln()]);
        assert!((d[0] - 0.25).abs() < 1e-12);
        assert!((d[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn generate_all_covers_every_segment() {
        let (corpus, table, seeds) = two_aspect_fixture();
        let labels = generate_all(&corpus, &seeds, &table).unwrap();
        assert_eq!(labels.len(), corpus.len());
        for d in &labels {
            let sum: f64 = d.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_word_segment_gets_its_own_aspect() {
        // Well-separated orthogonal embeddings: a segment consisting of one
        // seed word of the first aspect must argmax to it.
        let corpus = Corpus::from_lines(["fa fa sb sb", "fa sb"], 1).unwrap();
        let table = table_from(
            &[("fa", vec![2.0, 0.0]), ("sb", vec![0.0, 2.0])],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("food".into(), vec!["fa".into()]),
                ("service".into(), vec!["sb".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let aspects = AspectEmbeddings::compute(&seeds, &table).unwrap();
        let seg = TextSegment {
            id: 0,
            tokens: vec![corpus.vocabulary.id("fa").unwrap()],
            raw: "fa".into(),
        };
        let z = segment_representation(&seg, &aspects, &table).unwrap();
        assert_eq!(pseudo_labels(&z, &aspects).argmax(), 0);
    }

    #[test]
    fn empty_segment_gets_uniform_labels() {
        // "solo" appears once and falls below min_count=2, emptying segment 1.
        let corpus = Corpus::from_lines(["fa fa sb sb", "solo", "fa sb"], 2).unwrap();
        assert!(corpus.segments[1].is_empty());
        let table = table_from(
            &[("fa", vec![1.0, 0.0]), ("sb", vec![0.0, 1.0])],
            &corpus,
        );
        let (seeds, _) = SeedSets::resolve(
            &[
                ("food".into(), vec!["fa".into()]),
                ("service".into(), vec!["sb".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        let labels = generate_all(&corpus, &seeds, &table).unwrap();
        assert_eq!(labels[1].probs(), &[0.5, 0.5]);
    }

    #[test]
    fn unknown_seed_is_dropped_with_warning() {
        let corpus = Corpus::from_lines(["fa fa sb sb"], 1).unwrap();
        let (seeds, warnings) = SeedSets::resolve(
            &[
                ("food".into(), vec!["fa".into(), "ghost".into()]),
                ("service".into(), vec!["sb".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap();
        assert_eq!(seeds.seeds[0].len(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("ghost"));
    }

    #[test]
    fn cross_aspect_duplicate_seed_is_rejected() {
        let corpus = Corpus::from_lines(["fa fa sb sb"], 1).unwrap();
        let err = SeedSets::resolve(
            &[
                ("food".into(), vec!["fa".into()]),
                ("service".into(), vec!["fa".into()]),
            ],
            &corpus.vocabulary,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn seed_file_key_order_defines_aspect_order() {
        let corpus = Corpus::from_lines(["zz zz aa aa"], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("seeds.json");
        std::fs::write(&p, r#"{"zeta": ["zz"], "alpha": ["aa"]}"#).unwrap();
        let (seeds, _) = SeedSets::load(&p, &corpus.vocabulary).unwrap();
        assert_eq!(seeds.aspects, vec!["zeta".to_string(), "alpha".to_string()]);
    }

    proptest! {
        #[test]
        fn softmax_output_is_a_distribution(logits in prop::collection::vec(-30.0f64..30.0, 2..8)) {
            let d = LabelDistribution::from_logits(&logits);
            let sum: f64 = d.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(d.iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn softmax_argmax_matches_logit_argmax(logits in prop::collection::vec(-10.0f64..10.0, 2..6)) {
            let d = LabelDistribution::from_logits(&logits);
            let mut best = 0;
            for (i, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = i;
                }
            }
            prop_assert_eq!(d.argmax(), best);
        }

        #[test]
        fn permuting_aspects_permutes_labels(
            z in prop::collection::vec(-2.0f64..2.0, 3),
            swap in any::<bool>(),
        ) {
            let mut t = EmbeddingTable::zeros(3, 3);
            t.vector_mut(TokenId(1)).copy_from_slice(&[1.0, 0.2, -0.3]);
            t.vector_mut(TokenId(2)).copy_from_slice(&[-0.4, 0.9, 0.1]);
            let forward = AspectEmbeddings { vectors: vec![
                t.vector(TokenId(1)).to_vec(),
                t.vector(TokenId(2)).to_vec(),
            ]};
            let reversed = AspectEmbeddings { vectors: vec![
                t.vector(TokenId(2)).to_vec(),
                t.vector(TokenId(1)).to_vec(),
            ]};
            let a = pseudo_labels(&z, &forward);
            let b = pseudo_labels(&z, &reversed);
            if swap {
                prop_assert!((a[0] - b[1]).abs() < 1e-12);
                prop_assert!((a[1] - b[0]).abs() < 1e-12);
            } else {
                prop_assert!((a[0] + a[1] - 1.0).abs() < 1e-9);
            }
        }
    }
}
