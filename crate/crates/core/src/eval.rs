//! Evaluation: per-class and macro precision/recall/F1 over K+1 classes,
//! plus the cosine-similarity baseline used for relative-ordering checks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{cosine, EmbeddingTable};
use crate::misc::{estimate_gamma, misc_probability, normalized_entropy};
use crate::pseudo_label::{aspect_embedding, LabelDistribution, SeedSets};
use crate::{Error, Result};

/// Reserved gold-label string for the induced aspect.
pub const MISC_LABEL: &str = "misc";

/// Gold-vs-predicted counts; rows are gold classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> ConfusionMatrix {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_pairs(gold: &[usize], predicted: &[usize], labels: Vec<String>) -> Result<ConfusionMatrix> {
        if gold.len() != predicted.len() {
            return Err(Error::validation(format!(
                "{} gold labels vs {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(labels);
        for (&g, &p) in gold.iter().zip(predicted) {
            cm.record(g, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, gold: usize, predicted: usize) -> Result<()> {
        let n = self.labels.len();
        if gold >= n || predicted >= n {
            return Err(Error::validation(format!(
                "class index out of range: gold {gold}, predicted {predicted}, {n} classes"
            )));
        }
        self.counts[gold][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub predicted_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Macro scores with the misc class excluded from the average, when a
    /// class labeled "misc" is present.
    pub macro_precision_without_misc: Option<f64>,
    pub macro_recall_without_misc: Option<f64>,
    pub macro_f1_without_misc: Option<f64>,
}

impl MetricReport {
    /// Aligned plain-text table for terminal output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .per_class
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        out.push_str(&format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>6}\n",
            "class", "precision", "recall", "f1", "gold"
        ));
        for c in &self.per_class {
            out.push_str(&format!(
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}\n",
                c.label, c.precision, c.recall, c.f1, c.gold_count
            ));
        }
        out.push_str(&format!(
            "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}\n",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        ));
        if let (Some(p), Some(r), Some(f)) = (
            self.macro_precision_without_misc,
            self.macro_recall_without_misc,
            self.macro_f1_without_misc,
        ) {
            out.push_str(&format!(
                "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}\n",
                "macro-no-misc", p, r, f
            ));
        }
        out
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Per-class precision/recall/F1 with 0-denominator conventions (all -> 0),
/// and unweighted macro averages. Classes with zero gold and zero predicted
/// count are left out of the macro averages.
pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    if cm.total() == 0 {
        return Err(Error::validation("confusion matrix is empty"));
    }
    let n = cm.labels.len();
    let mut per_class = Vec::with_capacity(n);
    for c in 0..n {
        let tp = cm.counts[c][c];
        let gold: usize = cm.counts[c].iter().sum();
        let predicted: usize = (0..n).map(|g| cm.counts[g][c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            label: cm.labels[c].clone(),
            precision,
            recall,
            f1,
            gold_count: gold,
            predicted_count: predicted,
        });
    }

    let included: Vec<&ClassMetrics> = per_class
        .iter()
        .filter(|c| c.gold_count > 0 || c.predicted_count > 0)
        .collect();
    let macro_precision = mean(&included.iter().map(|c| c.precision).collect::<Vec<_>>());
    let macro_recall = mean(&included.iter().map(|c| c.recall).collect::<Vec<_>>());
    let macro_f1 = mean(&included.iter().map(|c| c.f1).collect::<Vec<_>>());

    let has_misc = per_class.iter().any(|c| c.label == MISC_LABEL);
    let (mp, mr, mf) = if has_misc {
        let no_misc: Vec<&&ClassMetrics> =
            included.iter().filter(|c| c.label != MISC_LABEL).collect();
        (
            Some(mean(&no_misc.iter().map(|c| c.precision).collect::<Vec<_>>())),
            Some(mean(&no_misc.iter().map(|c| c.recall).collect::<Vec<_>>())),
            Some(mean(&no_misc.iter().map(|c| c.f1).collect::<Vec<_>>())),
        )
    } else {
        (None, None, None)
    };

    Ok(MetricReport {
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        macro_precision_without_misc: mp,
        macro_recall_without_misc: mr,
        macro_f1_without_misc: mf,
    })
}

/// Cosine-similarity baseline over K+1 classes. Each segment's unweighted
/// mean token vector is compared against each aspect's mean seed vector;
/// the entropy rule applied to the softmax of the cosine scores decides how
/// much mass the misc class gets. Returns hard labels (index K = misc).
pub fn cossim_baseline(
    corpus: &Corpus,
    seeds: &SeedSets,
    table: &EmbeddingTable,
    gamma_quantile: f64,
) -> Result<Vec<usize>> {
    let k = seeds.k();
    let centroids: Vec<Vec<f64>> = seeds
        .seeds
        .iter()
        .map(|ids| aspect_embedding(ids, table))
        .collect::<Result<Vec<_>>>()?;

    // Pass 1: cosine softmax per scorable segment.
    let mut soft: Vec<Option<LabelDistribution>> = Vec::with_capacity(corpus.len());
    for seg in &corpus.segments {
        if seg.is_empty() {
            soft.push(None);
            continue;
        }
        let mut mean = vec![0.0; table.dim()];
        for &t in &seg.tokens {
            for (m, v) in mean.iter_mut().zip(table.vector(t)) {
                *m += v;
            }
        }
        let n = seg.tokens.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        if mean.iter().all(|&v| v == 0.0) {
            soft.push(None);
            continue;
        }
        let scores: Vec<f64> = centroids.iter().map(|c| cosine(&mean, c)).collect();
        soft.push(Some(LabelDistribution::from_logits(&scores)));
    }

    // Pass 2: entropy threshold over the scorable population.
    let h_values: Vec<f64> = soft
        .iter()
        .flatten()
        .map(normalized_entropy)
        .collect::<Result<Vec<_>>>()?;
    if h_values.is_empty() {
        return Ok(vec![k; corpus.len()]);
    }
    let gamma = estimate_gamma(&h_values, gamma_quantile)?.min(1.0 - 1e-9);

    soft.iter()
        .map(|maybe| match maybe {
            None => Ok(k),
            Some(dist) => {
                let h = normalized_entropy(dist)?;
                let p_misc = misc_probability(h, gamma)?;
                let mut augmented: Vec<f64> = dist.iter().map(|&p| (1.0 - p_misc) * p).collect();
                augmented.push(p_misc);
                let mut best = 0;
                for (i, &p) in augmented.iter().enumerate() {
                    if p > augmented[best] {
                        best = i;
                    }
                }
                Ok(best)
            }
        })
        .collect()
}

/// One gold-labeled evaluation line: label string and raw segment text.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSet {
    pub labels: Vec<String>,
    pub texts: Vec<String>,
}

/// Loads a gold file: one `label<TAB>text` per line. Labels must be aspect
/// names or the literal "misc".
pub fn load_gold(path: impl AsRef<Path>, aspect_names: &[String]) -> Result<GoldSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut texts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, idx + 1, "expected `label<TAB>text`"))?;
        if label != MISC_LABEL && !aspect_names.iter().any(|a| a == label) {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("unknown label `{label}`"),
            ));
        }
        labels.push(label.to_string());
        texts.push(body.to_string());
    }
    if labels.is_empty() {
        return Err(Error::validation("gold file contains no labeled lines"));
    }
    Ok(GoldSet { labels, texts })
}

/// Maps a gold label string to its class index (aspects in order, misc last).
pub fn label_index(label: &str, aspect_names: &[String]) -> Result<usize> {
    if label == MISC_LABEL {
        return Ok(aspect_names.len());
    }
    aspect_names
        .iter()
        .position(|a| a == label)
        .ok_or_else(|| Error::validation(format!("unknown label `{label}`")))
}
