//! Synthetic benchmark generation: planted aspect vocabularies with shared
//! background words and a misc population, plus gold labels and seed words.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::MISC_LABEL;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticConfig {
    /// Number of pre-defined aspects K.
    pub aspect_count: usize,
    pub segments_per_aspect: usize,
    /// Fraction of the final corpus that is misc, in [0, 1).
    pub misc_fraction: f64,
    pub signature_words_per_aspect: usize,
    pub background_words: usize,
    /// Signature size of each of the two out-of-scope topics that misc
    /// segments draw from.
    pub out_of_scope_words: usize,
    pub seeds_per_aspect: usize,
    pub min_segment_len: usize,
    pub max_segment_len: usize,
    /// Probability that a sampled token comes from the aspect signature
    /// rather than the background pool.
    pub signature_density: f64,
    /// Zipf exponent for within-pool word frequencies; 0 is uniform.
    pub zipf_exponent: f64,
    /// Sample seed words from the rare half of each signature, mimicking
    /// plausible-but-infrequent expert picks that refinement can improve on.
    pub seeds_from_rare_half: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            aspect_count: 3,
            segments_per_aspect: 200,
            misc_fraction: 0.25,
            signature_words_per_aspect: 15,
            background_words: 40,
            out_of_scope_words: 12,
            seeds_per_aspect: 5,
            min_segment_len: 5,
            max_segment_len: 14,
            signature_density: 0.3,
            zipf_exponent: 1.1,
            seeds_from_rare_half: true,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub aspect_names: Vec<String>,
    pub lines: Vec<String>,
    /// Gold label per line: an aspect name or "misc".
    pub labels: Vec<String>,
    pub seeds: Vec<(String, Vec<String>)>,
    /// Signature vocabulary per aspect (test oracle support).
    pub signatures: Vec<Vec<String>>,
}

/// Generates a corpus with K disjoint signature vocabularies over a shared
/// background, misc segments drawn from background and out-of-scope topics,
/// gold labels, and per-aspect seed words sampled from the signatures.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    if config.aspect_count < 2 {
        return Err(Error::validation("need at least 2 aspects"));
    }
    if config.seeds_per_aspect > config.signature_words_per_aspect {
        return Err(Error::validation(format!(
            "cannot sample {} seeds from a {}-word signature",
            config.seeds_per_aspect, config.signature_words_per_aspect
        )));
    }
    if !(0.0..1.0).contains(&config.misc_fraction) {
        return Err(Error::validation("misc fraction must be in [0, 1)"));
    }
    if config.min_segment_len < 2 || config.max_segment_len < config.min_segment_len {
        return Err(Error::validation("segment length bounds are invalid"));
    }
    if config.background_words == 0 || config.out_of_scope_words == 0 {
        return Err(Error::validation("background and out-of-scope pools must be non-empty"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.aspect_count;

    let aspect_names: Vec<String> = (0..k).map(|j| format!("aspect{j}")).collect();
    let signatures: Vec<Vec<String>> = (0..k)
        .map(|j| {
            (0..config.signature_words_per_aspect)
                .map(|t| format!("sig{j}_{t}"))
                .collect()
        })
        .collect();
    let background: Vec<String> = (0..config.background_words)
        .map(|t| format!("bg_{t}"))
        .collect();
    let ghosts: Vec<Vec<String>> = (0..2)
        .map(|g| {
            (0..config.out_of_scope_words)
                .map(|t| format!("oos{g}_{t}"))
                .collect()
        })
        .collect();

    // Zipf-weighted draw: pool index i has weight 1/(i+1)^s, so low indices
    // are frequent words and the tail is rare.
    let zipf_cumulative = |n: usize| -> Vec<f64> {
        let mut acc = 0.0;
        (0..n)
            .map(|i| {
                acc += 1.0 / ((i + 1) as f64).powf(config.zipf_exponent);
                acc
            })
            .collect()
    };
    let pick = |pool: &[String], cum: &[f64], rng: &mut ChaCha8Rng| -> String {
        let total = *cum.last().expect("non-empty pool");
        let target = rng.random::<f64>() * total;
        let idx = cum.partition_point(|&c| c <= target).min(pool.len() - 1);
        pool[idx].clone()
    };
    let sig_cum = zipf_cumulative(config.signature_words_per_aspect);
    let bg_cum = zipf_cumulative(config.background_words);
    let oos_cum = zipf_cumulative(config.out_of_scope_words);

    let mut lines = Vec::new();
    let mut labels = Vec::new();

    for j in 0..k {
        for _ in 0..config.segments_per_aspect {
            let len = rng.random_range(config.min_segment_len..=config.max_segment_len);
            let mut words = Vec::with_capacity(len);
            // The first two positions are always signature words so every
            // aspect segment is recognizable by construction.
            words.push(pick(&signatures[j], &sig_cum, &mut rng));
            words.push(pick(&signatures[j], &sig_cum, &mut rng));
            for _ in 2..len {
                if rng.random::<f64>() < config.signature_density {
                    words.push(pick(&signatures[j], &sig_cum, &mut rng));
                } else {
                    words.push(pick(&background, &bg_cum, &mut rng));
                }
            }
            lines.push(words.join(" "));
            labels.push(aspect_names[j].clone());
        }
    }

    // misc_count / (aspect_total + misc_count) = misc_fraction.
    let aspect_total = k * config.segments_per_aspect;
    let misc_count = ((aspect_total as f64 * config.misc_fraction)
        / (1.0 - config.misc_fraction))
        .round() as usize;
    for i in 0..misc_count {
        let len = rng.random_range(config.min_segment_len..=config.max_segment_len);
        let mut words = Vec::with_capacity(len);
        if i % 2 == 0 {
            // Out-of-scope topic segment.
            let ghost = &ghosts[(i / 2) % ghosts.len()];
            words.push(pick(ghost, &oos_cum, &mut rng));
            words.push(pick(ghost, &oos_cum, &mut rng));
            for _ in 2..len {
                if rng.random::<f64>() < config.signature_density {
                    words.push(pick(ghost, &oos_cum, &mut rng));
                } else {
                    words.push(pick(&background, &bg_cum, &mut rng));
                }
            }
        } else {
            // Aspect-free chatter: background words only.
            for _ in 0..len {
                words.push(pick(&background, &bg_cum, &mut rng));
            }
        }
        lines.push(words.join(" "));
        labels.push(MISC_LABEL.to_string());
    }

    // Shuffle segments and labels together.
    let mut order: Vec<usize> = (0..lines.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let lines: Vec<String> = order.iter().map(|&i| lines[i].clone()).collect();
    let labels: Vec<String> = order.iter().map(|&i| labels[i].clone()).collect();

    // Seeds: sample without replacement from each signature. When the rare
    // half is requested, seeds come from the infrequent half only, mimicking
    // plausible-but-infrequent expert picks that refinement can improve on.
    let mut seeds = Vec::with_capacity(k);
    for j in 0..k {
        let mut pool = signatures[j].clone();
        if config.seeds_from_rare_half {
            let half = pool.len() / 2;
            if pool.len() - half >= config.seeds_per_aspect {
                pool.drain(..half);
            }
        }
        let mut chosen = Vec::with_capacity(config.seeds_per_aspect);
        for _ in 0..config.seeds_per_aspect {
            let idx = rng.random_range(0..pool.len());
            chosen.push(pool.swap_remove(idx));
        }
        seeds.push((aspect_names[j].clone(), chosen));
    }

    Ok(SyntheticData {
        aspect_names,
        lines,
        labels,
        seeds,
        signatures,
    })
}

/// Files produced by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub train_corpus: std::path::PathBuf,
    pub test_gold: std::path::PathBuf,
    pub all_gold: std::path::PathBuf,
    pub seeds: std::path::PathBuf,
}

/// Writes the benchmark under `dir`: a training corpus (held-out lines
/// removed), a held-out gold file, a full gold file, and the seed JSON.
/// Every `holdout_every`-th segment goes to the held-out split.
pub fn write_synthetic(
    dir: impl AsRef<Path>,
    data: &SyntheticData,
    holdout_every: usize,
) -> Result<SyntheticFiles> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut train = String::new();
    let mut test_gold = String::new();
    let mut all_gold = String::new();
    for (i, (line, label)) in data.lines.iter().zip(&data.labels).enumerate() {
        all_gold.push_str(&format!("{label}\t{line}\n"));
        if holdout_every > 0 && i % holdout_every == holdout_every - 1 {
            test_gold.push_str(&format!("{label}\t{line}\n"));
        } else {
            train.push_str(line);
            train.push('\n');
        }
    }

    let train_corpus = dir.join("train.txt");
    let test_gold_path = dir.join("test_gold.tsv");
    let all_gold_path = dir.join("gold.tsv");
    let seeds_path = dir.join("seeds.json");

    fs::write(&train_corpus, train).map_err(|e| Error::io(&train_corpus, e))?;
    fs::write(&test_gold_path, test_gold).map_err(|e| Error::io(&test_gold_path, e))?;
    fs::write(&all_gold_path, all_gold).map_err(|e| Error::io(&all_gold_path, e))?;

    let mut seed_map = serde_json::Map::new();
    for (name, words) in &data.seeds {
        seed_map.insert(
            name.clone(),
            serde_json::Value::Array(
                words
                    .iter()
                    .map(|w| serde_json::Value::String(w.clone()))
                    .collect(),
            ),
        );
    }
    let seed_json = serde_json::to_string_pretty(&serde_json::Value::Object(seed_map))
        .expect("seed map serializes");
    fs::write(&seeds_path, seed_json).map_err(|e| Error::io(&seeds_path, e))?;

    Ok(SyntheticFiles {
        train_corpus,
        test_gold: test_gold_path,
        all_gold: all_gold_path,
        seeds: seeds_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{macro_metrics, ConfusionMatrix};
    use std::collections::HashMap;

    #[test]
    fn histogram_matches_the_requested_shape() {
        let config = SyntheticConfig::default();
        let data = generate_synthetic(&config).unwrap();
        assert_eq!(data.lines.len(), 800, "600 aspect segments + 200 misc");
        let mut hist: HashMap<&str, usize> = HashMap::new();
        for l in &data.labels {
            *hist.entry(l.as_str()).or_insert(0) += 1;
        }
        assert_eq!(hist["aspect0"], 200);
        assert_eq!(hist["aspect1"], 200);
        assert_eq!(hist["aspect2"], 200);
        assert_eq!(hist[MISC_LABEL], 200);
    }

    #[test]
    fn seeds_come_from_their_own_signatures() {
        let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
        for (j, (name, words)) in data.seeds.iter().enumerate() {
            assert_eq!(name, &data.aspect_names[j]);
            assert_eq!(words.len(), 5);
            for w in words {
                assert!(data.signatures[j].contains(w));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SyntheticConfig::default();
        let a = generate_synthetic(&config).unwrap();
        let b = generate_synthetic(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_seed_count_is_rejected() {
        let config = SyntheticConfig {
            seeds_per_aspect: 20,
            signature_words_per_aspect: 15,
            ..Default::default()
        };
        assert!(generate_synthetic(&config).is_err());

        let empty_pool = SyntheticConfig {
            background_words: 0,
            ..Default::default()
        };
        assert!(generate_synthetic(&empty_pool).is_err());
    }

    #[test]
    fn string_match_oracle_achieves_high_macro_f1() {
        // A trivial classifier that knows the planted signatures should be
        // nearly perfect; this proves the corpus is learnable.
        let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let k = data.aspect_names.len();
        let mut class_names = data.aspect_names.clone();
        class_names.push(MISC_LABEL.to_string());

        let gold: Vec<usize> = data
            .labels
            .iter()
            .map(|l| class_names.iter().position(|c| c == l).unwrap())
            .collect();
        let pred: Vec<usize> = data
            .lines
            .iter()
            .map(|line| {
                let mut counts = vec![0usize; k];
                for word in line.split_whitespace() {
                    for (j, sig) in data.signatures.iter().enumerate() {
                        if sig.iter().any(|s| s == word) {
                            counts[j] += 1;
                        }
                    }
                }
                let best = (0..k).max_by_key(|&j| counts[j]).unwrap();
                if counts[best] == 0 {
                    k
                } else {
                    best
                }
            })
            .collect();

        let cm = ConfusionMatrix::from_pairs(&gold, &pred, class_names).unwrap();
        let report = macro_metrics(&cm).unwrap();
        assert!(
            report.macro_f1 >= 0.95,
            "oracle macro-F1 {} should be near-perfect",
            report.macro_f1
        );
    }

    #[test]
    fn written_files_split_cleanly() {
        let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_synthetic(dir.path(), &data, 5).unwrap();
        let train = std::fs::read_to_string(&files.train_corpus).unwrap();
        let test = std::fs::read_to_string(&files.test_gold).unwrap();
        assert_eq!(train.lines().count(), 640);
        assert_eq!(test.lines().count(), 160);
        for line in test.lines() {
            assert!(line.contains('\t'));
        }
    }
}
