//! Pipeline orchestration: embeddings, pseudo labels, K-aspect training,
//! misc augmentation, (K+1)-aspect training, and seed refinement, looping
//! until the seed sets converge or the iteration cap is reached.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, ClassifierModel, TrainConfig};
use crate::corpus::Corpus;
use crate::embedding::{self, EmbeddingConfig, EmbeddingTable};
use crate::eval::{self, GoldSet, MetricReport, MISC_LABEL};
use crate::misc::{augment_labels, MiscScores};
use crate::pseudo_label::{self, LabelDistribution, SeedSets};
use crate::seed_update::{self, CandidatePool, NoisyPool};
use crate::{Error, Result};

/// Ablation modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// The complete iterative loop.
    Full,
    /// One pass, no seed refinement afterwards.
    NoIter,
    /// The ablation gate is bypassed: every corpus token is a candidate.
    NoTuning,
    /// Noisy-pool filtering of the new seed sets is skipped.
    NoFilter,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "full" => Ok(Mode::Full),
            "no_iter" => Ok(Mode::NoIter),
            "no_tuning" => Ok(Mode::NoTuning),
            "no_filter" => Ok(Mode::NoFilter),
            other => Err(Error::validation(format!(
                "unknown mode `{other}` (expected full, no_iter, no_tuning, no_filter)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Mode::Full => "full",
            Mode::NoIter => "no_iter",
            Mode::NoTuning => "no_tuning",
            Mode::NoFilter => "no_filter",
        };
        write!(f, "{name}")
    }
}

/// Where token vectors come from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Plain-text vector file.
    Load(PathBuf),
    /// Train on the unlabeled corpus.
    Train(EmbeddingConfig),
}

/// Everything one run needs. Serialized verbatim into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub seeds: PathBuf,
    #[serde(default = "defaults::embeddings")]
    pub embeddings: EmbeddingSource,
    /// Optional gold file (`label<TAB>text`) scored every iteration.
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "defaults::mode")]
    pub mode: Mode,
    #[serde(default = "defaults::gamma_quantile")]
    pub gamma_quantile: f64,
    #[serde(default = "defaults::kl_threshold")]
    pub kl_threshold: f64,
    #[serde(default = "defaults::max_seeds")]
    pub max_seeds: usize,
    #[serde(default = "defaults::noisy_pool_size")]
    pub noisy_pool_size: usize,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::min_count")]
    pub min_count: usize,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default = "defaults::threads")]
    pub threads: usize,
    /// Length-normalize embeddings before pseudo-label generation.
    #[serde(default)]
    pub normalize_embeddings: bool,
    /// Let the misc class compete in the distinctive denominator.
    #[serde(default = "defaults::yes")]
    pub distinctive_includes_misc: bool,
    /// Cap on segments probed during ablation; None probes all.
    #[serde(default)]
    pub probe_limit: Option<usize>,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default = "defaults::out_dir")]
    pub out_dir: PathBuf,
    /// Where each knob's value came from (`flag`, `config`, or `default`),
    /// recorded by the CLI and echoed in the manifest.
    #[serde(default)]
    pub sources: std::collections::BTreeMap<String, String>,
}

mod defaults {
    use super::*;

    pub fn embeddings() -> EmbeddingSource {
        EmbeddingSource::Train(EmbeddingConfig::default())
    }
    pub fn mode() -> Mode {
        Mode::Full
    }
    pub fn gamma_quantile() -> f64 {
        0.75
    }
    pub fn kl_threshold() -> f64 {
        0.05
    }
    pub fn max_seeds() -> usize {
        10
    }
    pub fn noisy_pool_size() -> usize {
        50
    }
    pub fn max_iters() -> usize {
        10
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn min_count() -> usize {
        2
    }
    pub fn threads() -> usize {
        1
    }
    pub fn yes() -> bool {
        true
    }
    pub fn out_dir() -> PathBuf {
        PathBuf::from("out")
    }
}

impl RunConfig {
    pub fn defaults(corpus: PathBuf, seeds: PathBuf, out_dir: PathBuf) -> RunConfig {
        RunConfig {
            corpus,
            seeds,
            embeddings: defaults::embeddings(),
            test: None,
            mode: Mode::Full,
            gamma_quantile: defaults::gamma_quantile(),
            kl_threshold: defaults::kl_threshold(),
            max_seeds: defaults::max_seeds(),
            noisy_pool_size: defaults::noisy_pool_size(),
            max_iters: defaults::max_iters(),
            seed: defaults::seed(),
            min_count: defaults::min_count(),
            deterministic: true,
            threads: 1,
            normalize_embeddings: false,
            distinctive_includes_misc: true,
            probe_limit: None,
            classifier: TrainConfig::default(),
            out_dir,
            sources: Default::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.gamma_quantile && self.gamma_quantile < 1.0) {
            return Err(Error::validation("gamma quantile must lie in (0, 1)"));
        }
        if self.kl_threshold < 0.0 {
            return Err(Error::validation("KL threshold must be non-negative"));
        }
        if self.max_seeds == 0 {
            return Err(Error::validation("max seeds must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max iterations must be >= 1"));
        }
        self.classifier.validate()
    }
}

/// One seed-history entry; entry 0 is the user-provided seeds verbatim.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedHistoryEntry {
    pub iteration: u32,
    pub seeds: Vec<(String, Vec<String>)>,
    pub noisy_pool: Vec<String>,
}

/// Everything recorded about one loop iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub stages: Vec<String>,
    pub gamma: f64,
    pub k_loss_trace: Vec<f64>,
    pub k1_loss_trace: Vec<f64>,
    pub candidate_pool_size: Option<usize>,
    pub converged: bool,
    pub metrics: Option<MetricReport>,
}

/// Deterministic run summary written to `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: RunConfig,
    pub aspects: Vec<String>,
    pub warnings: Vec<String>,
    pub seed_history: Vec<SeedHistoryEntry>,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

/// Mutable loop state; one `run_iteration` call advances it by one step.
pub struct PipelineState {
    pub iteration: u32,
    pub seeds: SeedSets,
    pub model: Option<ClassifierModel>,
    pub gamma: Option<f64>,
    pub seed_history: Vec<SeedHistoryEntry>,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PipelineState {
    pub fn new(seeds: SeedSets, corpus: &Corpus) -> PipelineState {
        let entry = SeedHistoryEntry {
            iteration: 0,
            seeds: seeds.words(&corpus.vocabulary),
            noisy_pool: Vec::new(),
        };
        PipelineState {
            iteration: 0,
            seeds,
            model: None,
            gamma: None,
            seed_history: vec![entry],
            records: Vec::new(),
            converged: false,
            warnings: Vec::new(),
        }
    }
}

/// Immutable inputs shared by every iteration.
pub struct PipelineContext {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
    /// Table used for pseudo-label generation (normalized copy when the
    /// config asks for it, otherwise identical to `table`).
    pub label_table: EmbeddingTable,
    pub test: Option<GoldSet>,
    pub config: RunConfig,
}

impl PipelineContext {
    /// Loads corpus, seeds, embeddings, and the optional test set.
    pub fn prepare(config: RunConfig) -> Result<(PipelineContext, PipelineState)> {
        config.validate()?;
        let corpus = Corpus::load(&config.corpus, config.min_count)?;
        let (seeds, seed_warnings) = SeedSets::load(&config.seeds, &corpus.vocabulary)?;

        let table = match &config.embeddings {
            EmbeddingSource::Load(path) => embedding::load_embeddings(path, &corpus.vocabulary)?,
            EmbeddingSource::Train(cfg) => embedding::train_embeddings(&corpus, cfg)?,
        };
        table.validate(&corpus.vocabulary)?;

        let label_table = if config.normalize_embeddings {
            table.normalized()
        } else {
            table.clone()
        };

        let test = match &config.test {
            Some(path) => Some(eval::load_gold(path, &seeds.aspects)?),
            None => None,
        };

        let mut state = PipelineState::new(seeds, &corpus);
        state.warnings.extend(seed_warnings);
        let ctx = PipelineContext {
            corpus,
            table,
            label_table,
            test,
            config,
        };
        Ok((ctx, state))
    }

    fn class_names(&self, seeds: &SeedSets) -> Vec<String> {
        let mut names = seeds.aspects.clone();
        names.push(MISC_LABEL.to_string());
        names
    }
}

/// Mixes the run seed with per-stage salts so each model gets its own
/// deterministic RNG stream.
fn derive_seed(base: u64, iteration: u32, salt: u64) -> u64 {
    base.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add((iteration as u64) << 8)
        .wrapping_add(salt)
}

/// Artifacts of one iteration that the runner persists.
pub struct IterationArtifacts {
    pub misc_scores: MiscScores,
    pub augmented: Vec<LabelDistribution>,
    pub predictions_k1: Vec<LabelDistribution>,
}

/// Executes one loop iteration, pushing a record onto the state. Returns the
/// per-iteration artifacts for persistence.
pub fn run_iteration(
    state: &mut PipelineState,
    ctx: &PipelineContext,
) -> Result<IterationArtifacts> {
    let config = &ctx.config;
    let iteration = state.iteration + 1;
    let k = state.seeds.k();
    let mut stages: Vec<String> = Vec::new();

    // Aspect embeddings and K-aspect pseudo labels.
    stages.push("aspect_embeddings".into());
    stages.push("pseudo_labels".into());
    let pseudo = pseudo_label::generate_all(&ctx.corpus, &state.seeds, &ctx.label_table)?;

    // K-aspect classifier.
    stages.push("train_k_classifier".into());
    let mut k_model = ClassifierModel::new(
        ctx.table.dim(),
        k,
        config.classifier.filters_per_window,
        config.classifier.dropout,
        derive_seed(config.seed, iteration, 1),
    );
    let k_train = TrainConfig {
        seed: derive_seed(config.seed, iteration, 2),
        ..config.classifier.clone()
    };
    let k_loss_trace = classifier::train(&mut k_model, &ctx.corpus, &ctx.table, &pseudo, &k_train)?;

    stages.push("predict_k".into());
    let k_predictions = classifier::predict(&k_model, &ctx.corpus, &ctx.table)?;

    // Entropy, gamma, misc likelihood, augmented labels.
    stages.push("entropy_gamma_misc".into());
    let misc_scores = MiscScores::compute(&k_predictions, config.gamma_quantile)?;
    stages.push("augment_labels".into());
    let augmented: Vec<LabelDistribution> = k_predictions
        .iter()
        .zip(&misc_scores.p_misc)
        .map(|(p, &m)| augment_labels(p, m))
        .collect();

    // (K+1)-aspect classifier, fresh start.
    stages.push("train_k1_classifier".into());
    let mut k1_model = ClassifierModel::new(
        ctx.table.dim(),
        k + 1,
        config.classifier.filters_per_window,
        config.classifier.dropout,
        derive_seed(config.seed, iteration, 3),
    );
    let k1_train = TrainConfig {
        seed: derive_seed(config.seed, iteration, 4),
        ..config.classifier.clone()
    };
    let k1_loss_trace =
        classifier::train(&mut k1_model, &ctx.corpus, &ctx.table, &augmented, &k1_train)?;

    stages.push("predict_k1".into());
    let predictions_k1 = classifier::predict(&k1_model, &ctx.corpus, &ctx.table)?;

    // Metrics on the held-out gold set, when provided.
    let metrics = match &ctx.test {
        Some(gold) => {
            stages.push("evaluate".into());
            Some(evaluate_predictions(
                &k1_model,
                &ctx.corpus,
                &ctx.table,
                &ctx.class_names(&state.seeds),
                gold,
            )?)
        }
        None => None,
    };

    // Seed refinement (skipped entirely in no_iter mode).
    let (candidate_pool_size, converged_now) = if config.mode == Mode::NoIter {
        stages.push("seed_update:skipped".into());
        (None, false)
    } else {
        let pool = if config.mode == Mode::NoTuning {
            stages.push("candidate_pool:bypass_kl_gate".into());
            CandidatePool::all_corpus_tokens(&ctx.corpus)
        } else {
            stages.push("candidate_pool".into());
            seed_update::candidate_pool(
                &k_model,
                &ctx.corpus,
                &ctx.table,
                config.kl_threshold,
                config.probe_limit,
                derive_seed(config.seed, iteration, 5),
            )?
        };

        stages.push("aspect_frequencies".into());
        let argmax: Vec<usize> = predictions_k1.iter().map(|d| d.argmax()).collect();
        let freq = seed_update::aspect_frequencies(&argmax, &ctx.corpus, k + 1)?;

        stages.push("rank_candidates".into());
        let ranked: Vec<Vec<seed_update::ScoredCandidate>> = (0..k)
            .map(|aspect| {
                seed_update::rank_candidates(
                    &freq,
                    &pool,
                    aspect,
                    config.max_seeds,
                    &ctx.corpus.vocabulary,
                    config.distinctive_includes_misc,
                )
            })
            .collect();

        let noisy = if config.mode == Mode::NoFilter {
            stages.push("noisy_pool:skipped".into());
            NoisyPool::empty()
        } else {
            stages.push("noisy_pool".into());
            seed_update::noisy_pool(
                &freq,
                &pool,
                config.noisy_pool_size,
                &ctx.corpus.vocabulary,
            )
        };

        stages.push("update_seeds".into());
        let (new_seeds, emitted_noisy, update_warnings) =
            seed_update::update_seeds(&state.seeds, &ranked, &noisy, config.max_seeds)?;
        state.warnings.extend(update_warnings);

        let done = seed_update::converged(&state.seeds, &new_seeds)?;
        state.seed_history.push(SeedHistoryEntry {
            iteration,
            seeds: new_seeds.words(&ctx.corpus.vocabulary),
            noisy_pool: emitted_noisy.words(&ctx.corpus.vocabulary),
        });
        state.seeds = new_seeds;
        (Some(pool.len()), done)
    };

    state.records.push(IterationRecord {
        iteration,
        stages,
        gamma: misc_scores.gamma,
        k_loss_trace,
        k1_loss_trace,
        candidate_pool_size,
        converged: converged_now,
        metrics,
    });
    state.iteration = iteration;
    state.gamma = Some(misc_scores.gamma);
    state.model = Some(k1_model);
    state.converged = converged_now;

    Ok(IterationArtifacts {
        misc_scores,
        augmented,
        predictions_k1,
    })
}

/// Scores a trained (K+1)-aspect model on a gold set: each line is encoded
/// with the training vocabulary, predicted, and compared to its label.
pub fn evaluate_predictions(
    model: &ClassifierModel,
    corpus: &Corpus,
    table: &EmbeddingTable,
    class_names: &[String],
    gold: &GoldSet,
) -> Result<MetricReport> {
    let aspects = &class_names[..class_names.len() - 1];
    let aspect_names: Vec<String> = aspects.to_vec();
    let active_table = model.effective_table(table);

    let mut cm = eval::ConfusionMatrix::new(class_names.to_vec());
    for (label, text) in gold.labels.iter().zip(&gold.texts) {
        let tokens = corpus.encode_line(text);
        let matrix = classifier::SegmentMatrix::from_tokens(&tokens, active_table);
        let probs = model.forward(&matrix, false, None)?;
        let predicted = probs.argmax();
        let gold_idx = eval::label_index(label, &aspect_names)?;
        cm.record(gold_idx, predicted)?;
    }
    eval::macro_metrics(&cm)
}

/// Complete run outcome: the final model plus everything the manifest needs.
pub struct RunOutcome {
    pub manifest: Manifest,
    pub model: ClassifierModel,
    pub class_names: Vec<String>,
    pub predictions: Vec<LabelDistribution>,
}

/// Runs the full loop per the config, writing artifacts under
/// `config.out_dir`:
///
/// - `manifest.json` — config echo, per-iteration gamma, seed history,
///   loss traces, metrics; byte-identical across reruns of the same config
/// - `predictions.tsv` — final per-segment distributions
/// - `seed_history.json`
/// - `iter_N/entropy.csv`, `iter_N/labels.tsv`, `iter_N/checkpoint.json`
pub fn run(config: RunConfig) -> Result<RunOutcome> {
    let out_dir = config.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let (ctx, mut state) = PipelineContext::prepare(config)?;
    let fingerprint = embedding::fingerprint(&ctx.corpus.vocabulary, &ctx.table);

    let mut final_predictions = Vec::new();
    for _ in 0..ctx.config.max_iters {
        let artifacts = run_iteration(&mut state, &ctx)?;
        write_iteration_artifacts(&out_dir, &state, &ctx, &artifacts, fingerprint)?;
        final_predictions = artifacts.predictions_k1;
        if ctx.config.mode == Mode::NoIter || state.converged {
            break;
        }
    }

    let class_names = ctx.class_names(&state.seeds);
    let model = state.model.take().expect("at least one iteration ran");

    let manifest = Manifest {
        schema_version: 1,
        config: ctx.config.clone(),
        aspects: state.seeds.aspects.clone(),
        warnings: state.warnings.clone(),
        seed_history: state.seed_history.clone(),
        iterations: state.records.clone(),
        converged: state.converged,
    };

    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::validation(format!("manifest serialization failed: {e}")))?;
    let manifest_path = out_dir.join("manifest.json");
    fs::write(&manifest_path, manifest_json).map_err(|e| Error::io(&manifest_path, e))?;

    let history_path = out_dir.join("seed_history.json");
    let history_json = serde_json::to_string_pretty(&manifest.seed_history)
        .map_err(|e| Error::validation(format!("history serialization failed: {e}")))?;
    fs::write(&history_path, history_json).map_err(|e| Error::io(&history_path, e))?;

    let pred_path = out_dir.join("predictions.tsv");
    fs::write(
        &pred_path,
        render_predictions(&final_predictions, &class_names),
    )
    .map_err(|e| Error::io(&pred_path, e))?;

    Ok(RunOutcome {
        manifest,
        model,
        class_names,
        predictions: final_predictions,
    })
}

/// TSV rows of (segment id, predicted aspect name, per-class probabilities).
pub fn render_predictions(predictions: &[LabelDistribution], class_names: &[String]) -> String {
    let mut out = String::from("segment_id\tpredicted\t");
    out.push_str(&class_names.join("\t"));
    out.push('\n');
    for (i, dist) in predictions.iter().enumerate() {
        out.push_str(&format!("{i}\t{}", class_names[dist.argmax()]));
        for p in dist.iter() {
            out.push_str(&format!("\t{p}"));
        }
        out.push('\n');
    }
    out
}

fn write_iteration_artifacts(
    out_dir: &Path,
    state: &PipelineState,
    ctx: &PipelineContext,
    artifacts: &IterationArtifacts,
    fingerprint: u64,
) -> Result<()> {
    let iter_dir = out_dir.join(format!("iter_{}", state.iteration));
    fs::create_dir_all(&iter_dir).map_err(|e| Error::io(&iter_dir, e))?;

    let entropy_path = iter_dir.join("entropy.csv");
    fs::write(&entropy_path, artifacts.misc_scores.to_csv())
        .map_err(|e| Error::io(&entropy_path, e))?;

    // Augmented (K+1) pseudo labels used as supervision this iteration.
    let class_names = ctx.class_names(&state.seeds);
    let labels_path = iter_dir.join("labels.tsv");
    fs::write(
        &labels_path,
        render_predictions(&artifacts.augmented, &class_names),
    )
    .map_err(|e| Error::io(&labels_path, e))?;

    if let Some(model) = &state.model {
        let checkpoint_path = iter_dir.join("checkpoint.json");
        classifier::save_checkpoint(
            &checkpoint_path,
            model,
            &class_names,
            fingerprint,
            Some(&ctx.config.classifier),
        )?;
    }
    Ok(())
}
