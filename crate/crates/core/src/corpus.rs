//! Corpus ingestion: tokenization, vocabulary construction, segment storage.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved vocabulary literal for the ablation placeholder token. The
/// tokenizer can never emit it (angle brackets are split off as punctuation),
/// so it stays distinct from every corpus token.
pub const UNK_TOKEN: &str = "<unk>";

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijective token/id map with a reserved UNK entry at id 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-appearance order, keeping
    /// only tokens that occur at least `min_count` times.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        for tok in tokens {
            let entry = counts.entry(tok).or_insert(0);
            if *entry == 0 {
                order.push(tok);
            }
            *entry += 1;
        }

        let mut vocab = Vocabulary {
            token_to_id: HashMap::new(),
            id_to_token: vec![UNK_TOKEN.to_string()],
        };
        vocab.token_to_id.insert(UNK_TOKEN.to_string(), TokenId(0));
        for tok in order {
            if counts[tok] >= min_count {
                let id = TokenId(vocab.id_to_token.len() as u32);
                vocab.token_to_id.insert(tok.to_string(), id);
                vocab.id_to_token.push(tok.to_string());
            }
        }
        vocab
    }

    pub fn unk(&self) -> TokenId {
        TokenId(0)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.id_to_token[id.index()]
    }

    /// Total number of entries, including UNK.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.len() <= 1
    }

    /// Iterates over all entries in id order, UNK first.
    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (TokenId(i as u32), t.as_str()))
    }
}

/// One tokenized input line.
///
/// `tokens` may be empty when every token fell below the vocabulary frequency
/// cutoff; such segments are kept (ids stay dense) but are skipped by
/// classifier training and receive uniform pseudo labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSegment {
    pub id: usize,
    pub tokens: Vec<TokenId>,
    pub raw: String,
}

impl TextSegment {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub segments: Vec<TextSegment>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    /// Builds a corpus from lines of raw text. Lines that tokenize to nothing
    /// are dropped; remaining segments get dense ids in input order.
    pub fn from_lines<S: AsRef<str>>(lines: impl IntoIterator<Item = S>, min_count: usize) -> Result<Corpus> {
        let tokenized: Vec<(Vec<String>, String)> = lines
            .into_iter()
            .filter_map(|line| {
                let toks = tokenize(line.as_ref());
                if toks.is_empty() {
                    None
                } else {
                    Some((toks, line.as_ref().to_string()))
                }
            })
            .collect();

        let vocabulary = Vocabulary::build(
            tokenized.iter().flat_map(|(toks, _)| toks.iter().map(String::as_str)),
            min_count,
        );

        let segments: Vec<TextSegment> = tokenized
            .into_iter()
            .enumerate()
            .map(|(id, (toks, raw))| TextSegment {
                id,
                tokens: toks.iter().filter_map(|t| vocabulary.id(t)).collect(),
                raw,
            })
            .collect();

        if !segments.iter().any(|s| !s.is_empty()) {
            return Err(Error::validation(
                "corpus has no non-empty segments after preprocessing",
            ));
        }

        Ok(Corpus { segments, vocabulary })
    }

    /// Loads a corpus from a UTF-8 file with one segment per line.
    pub fn load(path: impl AsRef<Path>, min_count: usize) -> Result<Corpus> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Corpus::from_lines(text.lines(), min_count)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Re-tokenizes external text against this corpus's vocabulary.
    /// Out-of-vocabulary tokens are dropped, mirroring corpus construction.
    pub fn encode_line(&self, line: &str) -> Vec<TokenId> {
        tokenize(line)
            .iter()
            .filter_map(|t| self.vocabulary.id(t))
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits a raw line into lowercased tokens.
///
/// Rules: whitespace-split; `*` and `#` stripped; runs of punctuation
/// collapse to a single one-character token; `_` counts as a word character
/// so pre-joined phrases survive intact. An apostrophe between two word
/// characters stays inside the token, so contractions are not split.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in raw.to_lowercase().split_whitespace() {
        let chars: Vec<char> = chunk.chars().filter(|&c| c != '*' && c != '#').collect();
        let mut i = 0;
        while i < chars.len() {
            let interior_apostrophe = |j: usize| {
                chars[j] == '\''
                    && j > 0
                    && is_word_char(chars[j - 1])
                    && j + 1 < chars.len()
                    && is_word_char(chars[j + 1])
            };
            if is_word_char(chars[i]) {
                let start = i;
                while i < chars.len() && (is_word_char(chars[i]) || interior_apostrophe(i)) {
                    i += 1;
                }
                out.push(chars[start..i].iter().collect());
            } else {
                let punct = chars[i];
                while i < chars.len() && !is_word_char(chars[i]) && !interior_apostrophe(i) {
                    i += 1;
                }
                out.push(punct.to_string());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_phrase_and_punctuation() {
        assert_eq!(tokenize("Great battery_life!!"), vec!["great", "battery_life", "!"]);
    }

    #[test]
    fn tokenize_empty_input() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn tokenize_strips_special_characters() {
        // "**" strips to nothing, "#rocks" strips to "rocks".
        assert_eq!(tokenize("The ** food #rocks"), vec!["the", "food", "rocks"]);
    }

    #[test]
    fn tokenize_keeps_contractions_whole() {
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
        assert_eq!(tokenize("'quoted'"), vec!["'", "quoted", "'"]);
    }

    #[test]
    fn tokenize_collapses_punctuation_runs() {
        assert_eq!(tokenize("what?!?"), vec!["what", "?"]);
    }

    #[test]
    fn tokenizer_never_emits_unk_literal() {
        assert_eq!(tokenize("<unk>"), vec!["<", "unk", ">"]);
    }

    #[test]
    fn corpus_ids_are_dense_and_ordered() {
        let c = Corpus::from_lines(["a b a b", "b a", "a b"], 1).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.segments.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn blank_lines_are_excluded_and_ids_stay_dense() {
        let c = Corpus::from_lines(["a b a", "", "b a b"], 1).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.segments[1].id, 1);
        assert_eq!(c.segments[1].raw, "b a b");
    }

    #[test]
    fn min_count_drops_rare_tokens() {
        // "rare" occurs once: with min_count=2 it must be absent from the
        // vocabulary and from every segment.
        let lines = ["common rare common", "common common"];
        let mut brute: HashMap<&str, usize> = HashMap::new();
        for l in &lines {
            for t in l.split_whitespace() {
                *brute.entry(t).or_insert(0) += 1;
            }
        }
        assert_eq!(brute["rare"], 1);

        let c = Corpus::from_lines(lines, 2).unwrap();
        assert!(c.vocabulary.id("rare").is_none());
        assert!(c.vocabulary.id("common").is_some());
        let common = c.vocabulary.id("common").unwrap();
        assert_eq!(c.segments[0].tokens, vec![common, common]);
    }

    #[test]
    fn segment_emptied_by_min_count_is_kept_and_flagged() {
        let c = Corpus::from_lines(["a a", "b", "a a"], 2).unwrap();
        assert_eq!(c.len(), 3);
        assert!(c.segments[1].is_empty());
        assert!(!c.segments[0].is_empty());
    }

    #[test]
    fn all_segments_empty_is_an_error() {
        let err = Corpus::from_lines(["x", "y"], 2).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn vocabulary_round_trips_ids() {
        let c = Corpus::from_lines(["one two three one two three"], 1).unwrap();
        for (id, tok) in c.vocabulary.iter() {
            assert_eq!(c.vocabulary.id(tok), Some(id));
        }
        assert_eq!(c.vocabulary.token(c.vocabulary.unk()), UNK_TOKEN);
    }

    #[test]
    fn load_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        std::fs::write(&path, "the food rocks\ngreat service\n").unwrap();
        let a = Corpus::load(&path, 1).unwrap();
        let b = Corpus::load(&path, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = Corpus::load("/nonexistent/corpus.txt", 1).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(raw in "\\PC{0,60}") {
            let once = tokenize(&raw);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_contain_no_whitespace_or_stripped_chars(raw in "\\PC{0,60}") {
            for tok in tokenize(&raw) {
                prop_assert!(!tok.is_empty());
                prop_assert!(!tok.contains(char::is_whitespace));
                prop_assert!(!tok.contains('*') && !tok.contains('#'));
            }
        }
    }
}
