//! Seed refinement: UNK-ablation candidate pools, indicative/distinctive
//! ranking, noisy-word filtering through the misc aspect, and convergence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{kl_loss, ClassifierModel, SegmentMatrix};
use crate::corpus::{Corpus, TokenId, Vocabulary};
use crate::embedding::EmbeddingTable;
use crate::pseudo_label::SeedSets;
use crate::{Error, Result};

/// Tokens whose removal measurably shifts some prediction, with the largest
/// KL shift observed for each.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    shifts: BTreeMap<TokenId, f64>,
}

impl CandidatePool {
    pub fn contains(&self, token: TokenId) -> bool {
        self.shifts.contains_key(&token)
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    pub fn max_shift(&self, token: TokenId) -> Option<f64> {
        self.shifts.get(&token).copied()
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.shifts.keys().copied()
    }

    /// Gate bypass: every token that occurs in the corpus is a candidate.
    /// Shifts are recorded as 0 since nothing is probed.
    pub fn all_corpus_tokens(corpus: &Corpus) -> CandidatePool {
        let mut shifts = BTreeMap::new();
        for seg in &corpus.segments {
            for &t in &seg.tokens {
                shifts.entry(t).or_insert(0.0);
            }
        }
        CandidatePool { shifts }
    }
}

/// Builds the candidate pool by replacing, per segment, every distinct token
/// with UNK (a zero vector) and measuring the KL divergence from the original
/// prediction to the ablated one. A token qualifies once any segment shifts
/// by more than `threshold`.
///
/// `probe_limit` caps how many segments are probed (seeded sample) for large
/// corpora; `None` probes everything.
pub fn candidate_pool(
    model: &ClassifierModel,
    corpus: &Corpus,
    table: &EmbeddingTable,
    threshold: f64,
    probe_limit: Option<usize>,
    seed: u64,
) -> Result<CandidatePool> {
    let active_table = model.effective_table(table);

    let mut segment_ids: Vec<usize> = corpus
        .segments
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.id)
        .collect();
    if let Some(limit) = probe_limit {
        if limit < segment_ids.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..segment_ids.len()).rev() {
                let j = rng.random_range(0..=i);
                segment_ids.swap(i, j);
            }
            segment_ids.truncate(limit);
            segment_ids.sort_unstable();
        }
    }

    let mut shifts: BTreeMap<TokenId, f64> = BTreeMap::new();
    for &seg_id in &segment_ids {
        let seg = &corpus.segments[seg_id];
        let matrix = SegmentMatrix::from_tokens(&seg.tokens, active_table);
        let baseline = model.forward(&matrix, false, None)?;

        let distinct: BTreeSet<TokenId> = seg.tokens.iter().copied().collect();
        for token in distinct {
            let mut ablated = matrix.clone();
            for (col, &t) in seg.tokens.iter().enumerate() {
                if t == token {
                    ablated.zero_column(col);
                }
            }
            let probs = model.forward(&ablated, false, None)?;
            let shift = kl_loss(&baseline, &probs)?;
            if shift > threshold {
                let entry = shifts.entry(token).or_insert(0.0);
                if shift > *entry {
                    *entry = shift;
                }
            }
        }
    }
    Ok(CandidatePool { shifts })
}

/// Segment-level aspect/word frequencies derived from hard predictions.
/// The last class index is the misc aspect.
#[derive(Debug, Clone)]
pub struct AspectFrequencyTable {
    /// Segments predicted per class, length K+1.
    f_aspect: Vec<usize>,
    /// Distinct-token segment counts per class.
    f_word: Vec<HashMap<TokenId, usize>>,
}

impl AspectFrequencyTable {
    pub fn class_count(&self) -> usize {
        self.f_aspect.len()
    }

    pub fn misc_index(&self) -> usize {
        self.f_aspect.len() - 1
    }

    pub fn aspect_total(&self, aspect: usize) -> usize {
        self.f_aspect[aspect]
    }

    pub fn word_count(&self, aspect: usize, token: TokenId) -> usize {
        self.f_word[aspect].get(&token).copied().unwrap_or(0)
    }
}

/// Tabulates f_{A_j} and f_{A_j,w} from per-segment argmax labels. A segment
/// contributes at most once per distinct word (document-frequency counting).
pub fn aspect_frequencies(
    predictions: &[usize],
    corpus: &Corpus,
    class_count: usize,
) -> Result<AspectFrequencyTable> {
    if predictions.len() != corpus.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} segments",
            predictions.len(),
            corpus.len()
        )));
    }
    let mut f_aspect = vec![0usize; class_count];
    let mut f_word: Vec<HashMap<TokenId, usize>> = vec![HashMap::new(); class_count];
    for (seg, &label) in corpus.segments.iter().zip(predictions) {
        if label >= class_count {
            return Err(Error::validation(format!(
                "label {label} out of range for {class_count} classes"
            )));
        }
        f_aspect[label] += 1;
        let distinct: BTreeSet<TokenId> = seg.tokens.iter().copied().collect();
        for t in distinct {
            *f_word[label].entry(t).or_insert(0) += 1;
        }
    }
    Ok(AspectFrequencyTable { f_aspect, f_word })
}

/// Fraction of an aspect's segments containing the word; 0 when the aspect
/// received no segments.
pub fn indicative(table: &AspectFrequencyTable, aspect: usize, token: TokenId) -> f64 {
    let total = table.aspect_total(aspect);
    if total == 0 {
        0.0
    } else {
        table.word_count(aspect, token) as f64 / total as f64
    }
}

/// Ratio of the word's count in this aspect to its largest count in any other
/// aspect, denominator floored at 1. For pre-defined aspects, `include_misc`
/// controls whether the misc class competes in the denominator; the misc
/// aspect itself is always scored against the pre-defined aspects only.
pub fn distinctive(
    table: &AspectFrequencyTable,
    aspect: usize,
    token: TokenId,
    include_misc: bool,
) -> f64 {
    let misc = table.misc_index();
    let mut max_other = 0usize;
    for k in 0..table.class_count() {
        if k == aspect || (k == misc && aspect != misc && !include_misc) {
            continue;
        }
        max_other = max_other.max(table.word_count(k, token));
    }
    table.word_count(aspect, token) as f64 / max_other.max(1) as f64
}

/// A ranked seed candidate for one aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub token: TokenId,
    pub indicative: f64,
    pub distinctive: f64,
    /// Geometric mean of the two scores.
    pub aggregate: f64,
    /// f_{A_j,w}, used as the first tie-break.
    pub frequency: usize,
}

/// Ranks pool candidates for one aspect by the geometric mean of indicative
/// and distinctive, keeping only candidates with both scores positive.
/// Ties break by higher in-aspect frequency, then lexicographic token order.
/// The result is truncated to `max_seeds`.
pub fn rank_candidates(
    table: &AspectFrequencyTable,
    pool: &CandidatePool,
    aspect: usize,
    max_seeds: usize,
    vocab: &Vocabulary,
    include_misc: bool,
) -> Vec<ScoredCandidate> {
    let mut scored: Vec<ScoredCandidate> = pool
        .tokens()
        .filter_map(|token| {
            let ind = indicative(table, aspect, token);
            let dis = distinctive(table, aspect, token, include_misc);
            if ind > 0.0 && dis > 0.0 {
                Some(ScoredCandidate {
                    token,
                    indicative: ind,
                    distinctive: dis,
                    aggregate: (ind * dis).sqrt(),
                    frequency: table.word_count(aspect, token),
                })
            } else {
                None
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.aggregate
            .partial_cmp(&a.aggregate)
            .expect("aggregate scores are finite")
            .then_with(|| b.frequency.cmp(&a.frequency))
            .then_with(|| vocab.token(a.token).cmp(vocab.token(b.token)))
    });
    scored.truncate(max_seeds);
    scored
}

/// Top words ranked under the misc aspect: general or ambiguous words that
/// must never become seeds of a pre-defined aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyPool {
    pub tokens: Vec<TokenId>,
}

impl NoisyPool {
    pub fn empty() -> NoisyPool {
        NoisyPool { tokens: Vec::new() }
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.tokens.contains(&token)
    }

    pub fn words(&self, vocab: &Vocabulary) -> Vec<String> {
        self.tokens.iter().map(|&t| vocab.token(t).to_string()).collect()
    }
}

/// Applies the same ranking heuristic to the misc aspect and keeps the top M.
pub fn noisy_pool(
    table: &AspectFrequencyTable,
    pool: &CandidatePool,
    m: usize,
    vocab: &Vocabulary,
) -> NoisyPool {
    let ranked = rank_candidates(table, pool, table.misc_index(), m, vocab, false);
    NoisyPool {
        tokens: ranked.into_iter().map(|c| c.token).collect(),
    }
}

/// Replaces each aspect's seeds with its ranked candidates, dropping noisy
/// tokens, truncating to `max_seeds`, and enforcing cross-aspect
/// disjointness (a contested token goes to the aspect where its aggregate is
/// highest; ties go to the lower aspect index). Aspects left with nothing
/// keep their previous seeds.
///
/// Returns the updated sets, the noisy pool as emitted (trimmed if a
/// fallback forced a carried seed to survive), and any warnings.
pub fn update_seeds(
    previous: &SeedSets,
    ranked: &[Vec<ScoredCandidate>],
    noisy: &NoisyPool,
    max_seeds: usize,
) -> Result<(SeedSets, NoisyPool, Vec<String>)> {
    if ranked.len() != previous.k() {
        return Err(Error::validation(format!(
            "{} ranked lists for {} aspects",
            ranked.len(),
            previous.k()
        )));
    }
    let mut warnings = Vec::new();

    // Noisy-word exclusion, then the cap.
    let mut kept: Vec<Vec<&ScoredCandidate>> = ranked
        .iter()
        .map(|list| {
            list.iter()
                .filter(|c| !noisy.contains(c.token))
                .take(max_seeds)
                .collect()
        })
        .collect();

    // Contested tokens stay only where their aggregate is highest.
    let mut best_owner: HashMap<TokenId, (usize, f64)> = HashMap::new();
    for (aspect, list) in kept.iter().enumerate() {
        for c in list {
            match best_owner.get(&c.token) {
                Some(&(_, score)) if score >= c.aggregate => {}
                _ => {
                    best_owner.insert(c.token, (aspect, c.aggregate));
                }
            }
        }
    }
    for (aspect, list) in kept.iter_mut().enumerate() {
        list.retain(|c| best_owner[&c.token].0 == aspect);
    }

    let mut seeds: Vec<Vec<TokenId>> = kept
        .iter()
        .map(|list| list.iter().map(|c| c.token).collect())
        .collect();

    // Aspects that end up empty carry their previous seeds forward. Carried
    // tokens are pulled out of the other aspects' fresh lists and out of the
    // emitted noisy pool so the disjointness guarantees still hold.
    let mut emitted_noisy = noisy.clone();
    for j in 0..seeds.len() {
        if seeds[j].is_empty() {
            warnings.push(format!(
                "aspect `{}` has no usable candidates; keeping its previous seeds",
                previous.aspects[j]
            ));
            seeds[j] = previous.seeds[j].clone();
            let carried: HashSet<TokenId> = seeds[j].iter().copied().collect();
            for (other, list) in seeds.iter_mut().enumerate() {
                if other != j {
                    list.retain(|t| !carried.contains(t));
                }
            }
            emitted_noisy.tokens.retain(|t| !carried.contains(t));
        }
    }
    // Removing carried tokens could have emptied another aspect; restore
    // those from their previous seeds as well (minus already-claimed tokens).
    let claimed: HashSet<TokenId> = seeds.iter().flatten().copied().collect();
    for (j, slot) in seeds.iter_mut().enumerate() {
        if slot.is_empty() {
            warnings.push(format!(
                "aspect `{}` lost all candidates to other aspects; keeping previous seeds",
                previous.aspects[j]
            ));
            *slot = previous.seeds[j]
                .iter()
                .copied()
                .filter(|t| !claimed.contains(t))
                .collect();
            emitted_noisy.tokens.retain(|t| !slot.contains(t));
        }
        if slot.is_empty() {
            return Err(Error::validation(format!(
                "aspect `{}` cannot retain any seeds",
                previous.aspects[j]
            )));
        }
    }

    Ok((
        SeedSets {
            aspects: previous.aspects.clone(),
            seeds,
            iteration: previous.iteration + 1,
        },
        emitted_noisy,
        warnings,
    ))
}

/// True when every aspect's seed set is identical as an unordered set.
pub fn converged(old: &SeedSets, new: &SeedSets) -> Result<bool> {
    if old.aspects != new.aspects {
        return Err(Error::validation("seed sets describe different aspect lists"));
    }
    Ok(old.seeds.iter().zip(&new.seeds).all(|(a, b)| {
        let sa: BTreeSet<TokenId> = a.iter().copied().collect();
        let sb: BTreeSet<TokenId> = b.iter().copied().collect();
        sa == sb
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, TrainConfig};
    use crate::pseudo_label::LabelDistribution;

    fn counting_fixture() -> (Corpus, Vec<usize>) {
        // 10 segments predicted class 0, 4 predicted class 1, 2 misc.
        let mut lines = Vec::new();
        for i in 0..10 {
            // "shared" appears in 3 of the class-0 segments; one of those
            // repeats it twice to exercise distinct counting.
            if i == 0 {
                lines.push("alpha shared shared beta".to_string());
            } else if i < 3 {
                lines.push("alpha shared beta".to_string());
            } else {
                lines.push("alpha beta".to_string());
            }
        }
        for _ in 0..4 {
            lines.push("gamma delta".to_string());
        }
        lines.push("noise gamma".to_string());
        lines.push("noise alpha".to_string());
        let corpus = Corpus::from_lines(lines.iter().map(String::as_str), 1).unwrap();
        let mut labels = vec![0usize; 10];
        labels.extend([1, 1, 1, 1, 2, 2]);
        (corpus, labels)
    }

    #[test]
    fn frequencies_count_segments_not_occurrences() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let shared = corpus.vocabulary.id("shared").unwrap();
        assert_eq!(table.aspect_total(0), 10);
        // "shared" appears in 3 class-0 segments (twice in one of them).
        assert_eq!(table.word_count(0, shared), 3);
        assert_eq!(table.word_count(1, shared), 0);
    }

    #[test]
    fn word_counts_never_exceed_aspect_totals() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        for aspect in 0..table.class_count() {
            for (_, tok) in corpus.vocabulary.iter() {
                if let Some(id) = corpus.vocabulary.id(tok) {
                    assert!(table.word_count(aspect, id) <= table.aspect_total(aspect));
                }
            }
        }
    }

    #[test]
    fn indicative_is_a_ratio_with_zero_denominator_guard() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let shared = corpus.vocabulary.id("shared").unwrap();
        let alpha = corpus.vocabulary.id("alpha").unwrap();
        assert!((indicative(&table, 0, shared) - 0.3).abs() < 1e-12);
        assert!((indicative(&table, 0, alpha) - 1.0).abs() < 1e-12);
        assert_eq!(indicative(&table, 1, shared), 0.0);

        // An aspect with no segments scores 0 everywhere.
        let empty = aspect_frequencies(&labels, &corpus, 4).unwrap();
        assert_eq!(indicative(&empty, 3, shared), 0.0);
    }

    #[test]
    fn distinctive_takes_max_over_others_with_floored_denominator() {
        let corpus = Corpus::from_lines(["w x", "w x", "w x", "w y", "w y", "y z"], 1).unwrap();
        let labels = vec![0, 0, 0, 1, 1, 2];
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let w = corpus.vocabulary.id("w").unwrap();
        // counts: aspect0=3, aspect1=2, misc=0 -> max of others is 2.
        assert!((distinctive(&table, 0, w, true) - 3.0 / 2.0).abs() < 1e-12);
        // Word only in aspect 0: denominator floors at 1.
        let x = corpus.vocabulary.id("x").unwrap();
        assert!((distinctive(&table, 0, x, true) - 3.0).abs() < 1e-12);
        // Absent word scores 0.
        let z = corpus.vocabulary.id("z").unwrap();
        assert_eq!(distinctive(&table, 0, z, true), 0.0);
    }

    #[test]
    fn misc_competes_in_the_denominator_unless_excluded() {
        let corpus = Corpus::from_lines(["w a", "w a", "w b", "w b", "w b"], 1).unwrap();
        // aspect0 gets 2 segments with w, misc (last of 2 classes) gets 3.
        let labels = vec![0, 0, 1, 1, 1];
        let table = aspect_frequencies(&labels, &corpus, 2).unwrap();
        let w = corpus.vocabulary.id("w").unwrap();
        assert!((distinctive(&table, 0, w, true) - 2.0 / 3.0).abs() < 1e-12);
        // Excluding misc, no other pre-defined aspect has w: floor kicks in.
        assert!((distinctive(&table, 0, w, false) - 2.0).abs() < 1e-12);
        // Scoring the misc aspect itself competes against pre-defined only.
        assert!((distinctive(&table, 1, w, true) - 3.0 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_orders_by_geometric_mean_with_tie_breaks() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let pool = CandidatePool::all_corpus_tokens(&corpus);
        let ranked = rank_candidates(&table, &pool, 0, 10, &corpus.vocabulary, true);

        let alpha = corpus.vocabulary.id("alpha").unwrap();
        let beta = corpus.vocabulary.id("beta").unwrap();
        let shared = corpus.vocabulary.id("shared").unwrap();
        let find = |t: TokenId| ranked.iter().position(|c| c.token == t).unwrap();

        // beta: indicative 1.0, only in aspect 0 -> distinctive 10/1 = 10.
        let b = &ranked[find(beta)];
        assert!((b.aggregate - 10.0f64.sqrt()).abs() < 1e-12);
        // alpha: indicative 1.0 but one misc segment -> distinctive 10/1.
        let a = &ranked[find(alpha)];
        assert!((a.aggregate - 10.0f64.sqrt()).abs() < 1e-12);
        // Aggregate and frequency tie: "alpha" < "beta" lexicographically.
        assert!(find(alpha) < find(beta));

        let s = &ranked[find(shared)];
        assert!((s.indicative - 0.3).abs() < 1e-12);
        assert!((s.distinctive - 3.0).abs() < 1e-12);
        assert!((s.aggregate - 0.9f64.sqrt()).abs() < 1e-12);
        assert!(find(shared) > find(beta));
    }

    #[test]
    fn ranking_truncates_and_requires_positive_scores() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let pool = CandidatePool::all_corpus_tokens(&corpus);
        let ranked = rank_candidates(&table, &pool, 0, 2, &corpus.vocabulary, true);
        assert_eq!(ranked.len(), 2);
        // gamma never occurs in aspect-0 segments: excluded everywhere.
        let gamma = corpus.vocabulary.id("gamma").unwrap();
        assert!(ranked.iter().all(|c| c.token != gamma));
    }

    #[test]
    fn noisy_pool_ranks_under_misc() {
        let (corpus, labels) = counting_fixture();
        let table = aspect_frequencies(&labels, &corpus, 3).unwrap();
        let pool = CandidatePool::all_corpus_tokens(&corpus);
        let noisy = noisy_pool(&table, &pool, 50, &corpus.vocabulary);
        let noise = corpus.vocabulary.id("noise").unwrap();
        // "noise" appears in both misc segments and nowhere else: top rank.
        assert_eq!(noisy.tokens.first(), Some(&noise));

        // M = 0 disables filtering entirely.
        let none = noisy_pool(&table, &pool, 0, &corpus.vocabulary);
        assert!(none.tokens.is_empty());

        // beta never occurs in a misc segment: excluded.
        let beta = corpus.vocabulary.id("beta").unwrap();
        assert!(!noisy.contains(beta));
    }

    fn seeds_for(corpus: &Corpus, lists: &[(&str, &[&str])]) -> SeedSets {
        let pairs: Vec<(String, Vec<String>)> = lists
            .iter()
            .map(|(n, s)| (n.to_string(), s.iter().map(|w| w.to_string()).collect()))
            .collect();
        SeedSets::resolve(&pairs, &corpus.vocabulary).unwrap().0
    }

    fn candidate(corpus: &Corpus, word: &str, aggregate: f64, frequency: usize) -> ScoredCandidate {
        ScoredCandidate {
            token: corpus.vocabulary.id(word).unwrap(),
            indicative: aggregate,
            distinctive: aggregate,
            aggregate,
            frequency,
        }
    }

    #[test]
    fn update_drops_noisy_tokens_everywhere() {
        let corpus = Corpus::from_lines(["a b c d e f a b c d e f"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["d"])]);
        let ranked = vec![
            vec![candidate(&corpus, "a", 0.9, 5), candidate(&corpus, "b", 0.5, 3)],
            vec![candidate(&corpus, "d", 0.8, 4), candidate(&corpus, "b", 0.4, 2)],
        ];
        let noisy = NoisyPool {
            tokens: vec![corpus.vocabulary.id("b").unwrap()],
        };
        let (next, emitted, warnings) = update_seeds(&prev, &ranked, &noisy, 10).unwrap();
        assert!(warnings.is_empty());
        let b = corpus.vocabulary.id("b").unwrap();
        assert!(next.seeds.iter().all(|s| !s.contains(&b)));
        assert_eq!(next.iteration, 1);
        assert!(emitted.contains(b));
    }

    #[test]
    fn contested_token_goes_to_the_higher_aggregate() {
        let corpus = Corpus::from_lines(["a b c d a b c d"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["c"])]);
        let ranked = vec![
            vec![candidate(&corpus, "b", 0.6, 5), candidate(&corpus, "a", 0.5, 5)],
            vec![candidate(&corpus, "b", 0.9, 7), candidate(&corpus, "c", 0.5, 5)],
        ];
        let (next, _, _) = update_seeds(&prev, &ranked, &NoisyPool::empty(), 10).unwrap();
        let b = corpus.vocabulary.id("b").unwrap();
        assert!(!next.seeds[0].contains(&b));
        assert!(next.seeds[1].contains(&b));
    }

    #[test]
    fn contested_tie_goes_to_the_lower_aspect_index() {
        let corpus = Corpus::from_lines(["a b c d a b c d"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["c"])]);
        let ranked = vec![
            vec![candidate(&corpus, "b", 0.7, 5), candidate(&corpus, "a", 0.5, 5)],
            vec![candidate(&corpus, "b", 0.7, 5), candidate(&corpus, "c", 0.5, 5)],
        ];
        let (next, _, _) = update_seeds(&prev, &ranked, &NoisyPool::empty(), 10).unwrap();
        let b = corpus.vocabulary.id("b").unwrap();
        assert!(next.seeds[0].contains(&b));
        assert!(!next.seeds[1].contains(&b));
    }

    #[test]
    fn empty_update_keeps_previous_seeds_with_warning() {
        let corpus = Corpus::from_lines(["a b c d a b c d"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["c"])]);
        let ranked = vec![vec![candidate(&corpus, "b", 0.7, 5)], vec![]];
        let (next, _, warnings) = update_seeds(&prev, &ranked, &NoisyPool::empty(), 10).unwrap();
        assert_eq!(next.seeds[1], prev.seeds[1]);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("two"));
    }

    #[test]
    fn fallback_preserves_disjointness_from_noisy_pool() {
        let corpus = Corpus::from_lines(["a b c d a b c d"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["c"])]);
        let c_id = corpus.vocabulary.id("c").unwrap();
        // Aspect two has no candidates and its previous seed is "noisy":
        // the carried seed wins and the emitted pool shrinks.
        let ranked = vec![vec![candidate(&corpus, "b", 0.7, 5)], vec![]];
        let noisy = NoisyPool { tokens: vec![c_id] };
        let (next, emitted, _) = update_seeds(&prev, &ranked, &noisy, 10).unwrap();
        assert!(next.seeds[1].contains(&c_id));
        assert!(!emitted.contains(c_id));
    }

    #[test]
    fn truncation_caps_each_aspect() {
        let corpus = Corpus::from_lines(["a b c d e a b c d e"], 1).unwrap();
        let prev = seeds_for(&corpus, &[("one", &["a"]), ("two", &["e"])]);
        let ranked = vec![
            vec![
                candidate(&corpus, "a", 0.9, 5),
                candidate(&corpus, "b", 0.8, 4),
                candidate(&corpus, "c", 0.7, 3),
            ],
            vec![candidate(&corpus, "e", 0.9, 5)],
        ];
        let (next, _, _) = update_seeds(&prev, &ranked, &NoisyPool::empty(), 2).unwrap();
        assert_eq!(next.seeds[0].len(), 2);
    }

    #[test]
    fn convergence_is_order_insensitive() {
        let corpus = Corpus::from_lines(["a b c d a b c d"], 1).unwrap();
        let x = seeds_for(&corpus, &[("one", &["a", "b"]), ("two", &["c"])]);
        let mut y = x.clone();
        y.seeds[0].reverse();
        y.iteration = 1;
        assert!(converged(&x, &y).unwrap());

        let mut z = x.clone();
        z.seeds[1] = vec![corpus.vocabulary.id("d").unwrap()];
        assert!(!converged(&x, &z).unwrap());

        let mut w = x.clone();
        w.aspects[0] = "renamed".into();
        assert!(converged(&x, &w).is_err());
    }

    fn ablation_fixture() -> (Corpus, EmbeddingTable, ClassifierModel) {
        let mut lines = Vec::new();
        for _ in 0..25 {
            // One pivotal token per segment; the rest are zero vectors, so
            // ablating the pivot must shift the prediction hard while
            // ablating any filler cannot move it at all.
            lines.push("hot zilch pad qux");
            lines.push("chair zilch pad qux");
        }
        let corpus = Corpus::from_lines(lines, 1).unwrap();
        let mut table = EmbeddingTable::zeros(corpus.vocabulary.len(), 4);
        let vectors = [
            ("hot", [1.0, 0.1, 0.0, 0.2]),
            ("chair", [0.0, 1.0, 0.2, 0.0]),
        ];
        for (tok, v) in vectors {
            table
                .vector_mut(corpus.vocabulary.id(tok).unwrap())
                .copy_from_slice(&v);
        }
        let targets: Vec<LabelDistribution> = corpus
            .segments
            .iter()
            .map(|s| {
                if s.raw.starts_with("hot") {
                    LabelDistribution::new(vec![0.95, 0.05]).unwrap()
                } else {
                    LabelDistribution::new(vec![0.05, 0.95]).unwrap()
                }
            })
            .collect();
        let config = TrainConfig {
            epochs: 25,
            batch_size: 10,
            learning_rate: 0.01,
            dropout: 0.0,
            filters_per_window: 4,
            seed: 12,
            ..Default::default()
        };
        let mut model = ClassifierModel::new(4, 2, 4, 0.0, 12);
        train(&mut model, &corpus, &table, &targets, &config).unwrap();
        (corpus, table, model)
    }

    #[test]
    fn prediction_flip_clears_the_default_threshold() {
        // A token that moves a prediction from (0.9, 0.1) to (0.5, 0.5)
        // shifts it by 0.9 ln(0.9/0.5) + 0.1 ln(0.1/0.5) = 0.368, well over
        // the 0.05 gate.
        let before = LabelDistribution::new(vec![0.9, 0.1]).unwrap();
        let after = LabelDistribution::new(vec![0.5, 0.5]).unwrap();
        let shift = kl_loss(&before, &after).unwrap();
        assert!((shift - 0.3680).abs() < 1e-3);
        assert!(shift > 0.05);
    }

    #[test]
    fn zero_influence_token_is_excluded_from_the_pool() {
        let (corpus, table, model) = ablation_fixture();
        let pool = candidate_pool(&model, &corpus, &table, 0.05, None, 0).unwrap();
        let zilch = corpus.vocabulary.id("zilch").unwrap();
        assert!(!pool.contains(zilch), "zero-vector token cannot shift predictions");
    }

    #[test]
    fn pool_membership_matches_an_independent_kl_probe() {
        let (corpus, table, model) = ablation_fixture();
        let threshold = 0.05;
        let pool = candidate_pool(&model, &corpus, &table, threshold, None, 0).unwrap();

        // Independent oracle: redo every (segment, token) probe by swapping
        // the token id for UNK and rebuilding the matrix from scratch.
        let mut expected: BTreeMap<TokenId, f64> = BTreeMap::new();
        for seg in &corpus.segments {
            let baseline = model
                .forward(&SegmentMatrix::from_tokens(&seg.tokens, &table), false, None)
                .unwrap();
            let distinct: BTreeSet<TokenId> = seg.tokens.iter().copied().collect();
            for token in distinct {
                let swapped: Vec<TokenId> = seg
                    .tokens
                    .iter()
                    .map(|&t| if t == token { corpus.vocabulary.unk() } else { t })
                    .collect();
                let probs = model
                    .forward(&SegmentMatrix::from_tokens(&swapped, &table), false, None)
                    .unwrap();
                let shift = kl_loss(&baseline, &probs).unwrap();
                if shift > threshold {
                    let e = expected.entry(token).or_insert(0.0);
                    if shift > *e {
                        *e = shift;
                    }
                }
            }
        }
        assert!(!expected.is_empty(), "fixture should produce influential tokens");
        assert_eq!(pool.shifts, expected);
    }

    #[test]
    fn probe_limit_subsamples_deterministically() {
        let (corpus, table, model) = ablation_fixture();
        let a = candidate_pool(&model, &corpus, &table, 0.05, Some(10), 3).unwrap();
        let b = candidate_pool(&model, &corpus, &table, 0.05, Some(10), 3).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= CandidatePool::all_corpus_tokens(&corpus).len());
    }
}
