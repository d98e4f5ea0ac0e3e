//! Command-line surface for the seed-driven aspect classification pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use aspect_core::classifier::{load_checkpoint, SegmentMatrix};
use aspect_core::corpus::Corpus;
use aspect_core::embedding::{
    fingerprint, load_embeddings, save_embeddings, train_embeddings, EmbeddingConfig,
};
use aspect_core::eval::{self, load_gold, macro_metrics, ConfusionMatrix};
use aspect_core::pipeline::{self, EmbeddingSource, Mode, RunConfig, SeedHistoryEntry};
use aspect_core::synth::{generate_synthetic, write_synthetic, SyntheticConfig};

#[derive(Parser)]
#[command(
    name = "aspect",
    version,
    about = "Seed-driven aspect classification over text segments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train word embeddings on an unlabeled corpus and save them.
    Embed(EmbedArgs),
    /// Execute the full pipeline from a config file.
    Run(RunArgs),
    /// Apply a saved checkpoint to text segments.
    Predict(PredictArgs),
    /// Score a prediction file against gold labels.
    Eval(EvalArgs),
    /// Write a synthetic benchmark (corpus, gold labels, seeds).
    Synth(SynthArgs),
    /// Pretty-print a seed history file.
    Seeds(SeedsArgs),
}

#[derive(Args)]
struct EmbedArgs {
    /// Corpus file, one segment per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Output vector file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    learning_rate: f64,
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file with a `schema_version` field.
    #[arg(long)]
    config: PathBuf,
    /// full, no_iter, no_tuning, or no_filter.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    gamma_quantile: Option<f64>,
    #[arg(long)]
    kl_threshold: Option<f64>,
    #[arg(long)]
    max_seeds: Option<usize>,
    #[arg(long)]
    noisy_pool_size: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Classifier training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Embedding dimension (trained embeddings only).
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Force the single-threaded deterministic numeric path.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model checkpoint produced by `run`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// The corpus the model was trained against (defines the vocabulary).
    #[arg(long)]
    corpus: PathBuf,
    /// Embedding vector file matching the checkpoint fingerprint.
    #[arg(long)]
    embeddings: PathBuf,
    /// Lines to classify; defaults to the corpus itself.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction TSV written by `run` or `predict`.
    #[arg(long)]
    pred: PathBuf,
    /// Gold TSV: `label<TAB>text` per line, aligned with the predictions.
    #[arg(long)]
    gold: PathBuf,
    /// Emit the report as JSON instead of the aligned table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of pre-defined aspects.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    segments_per_aspect: usize,
    #[arg(long, default_value_t = 0.25)]
    misc_fraction: f64,
    #[arg(long, default_value_t = 5)]
    seeds_per_aspect: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Every n-th segment goes to the held-out gold split; 0 disables.
    #[arg(long, default_value_t = 5)]
    holdout_every: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SeedsArgs {
    /// seed_history.json written by `run`.
    #[arg(long)]
    history: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Embed(args) => cmd_embed(args),
        Command::Run(args) => cmd_run(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Seeds(args) => cmd_seeds(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_embed(args: EmbedArgs) -> Result<()> {
    let corpus = Corpus::load(&args.corpus, args.min_count)?;
    let config = EmbeddingConfig {
        dim: args.dim,
        window: args.window,
        negatives: args.negatives,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let table = train_embeddings(&corpus, &config)?;
    save_embeddings(&args.out, &corpus.vocabulary, &table)?;
    println!(
        "trained {} vectors of dimension {} -> {}",
        table.len(),
        table.dim(),
        args.out.display()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let raw = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&raw).with_context(|| "config is not valid JSON")?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(1) => {}
        Some(other) => bail!("unsupported config schema_version {other}"),
        None => bail!("config is missing the schema_version field"),
    }
    let mut config: RunConfig =
        serde_json::from_value(value.clone()).with_context(|| "invalid config contents")?;

    // Paths in the config file resolve relative to the file itself.
    if let Some(base) = args.config.parent() {
        config.corpus = resolve(base, &config.corpus);
        config.seeds = resolve(base, &config.seeds);
        config.test = config.test.as_ref().map(|p| resolve(base, p));
        if let EmbeddingSource::Load(p) = &config.embeddings {
            config.embeddings = EmbeddingSource::Load(resolve(base, p));
        }
        config.out_dir = resolve(base, &config.out_dir);
    }

    // Flags override the config file; every knob records where its resolved
    // value came from.
    let mut sources = BTreeMap::new();
    {
        let mut note = |key: &str, from_flag: bool| {
            let source = if from_flag {
                "flag"
            } else if value.get(key).is_some() {
                "config"
            } else {
                "default"
            };
            sources.insert(key.to_string(), source.to_string());
        };
        note("mode", args.mode.is_some());
        note("gamma_quantile", args.gamma_quantile.is_some());
        note("kl_threshold", args.kl_threshold.is_some());
        note("max_seeds", args.max_seeds.is_some());
        note("noisy_pool_size", args.noisy_pool_size.is_some());
        note("max_iters", args.max_iters.is_some());
        note("epochs", args.epochs.is_some());
        note("dim", args.dim.is_some());
        note("seed", args.seed.is_some());
        note("deterministic", args.deterministic);
        note("threads", args.threads.is_some());
        note("out_dir", args.out_dir.is_some());
    }

    if let Some(mode) = &args.mode {
        config.mode = Mode::from_str(mode)?;
    }
    if let Some(v) = args.gamma_quantile {
        config.gamma_quantile = v;
    }
    if let Some(v) = args.kl_threshold {
        config.kl_threshold = v;
    }
    if let Some(v) = args.max_seeds {
        config.max_seeds = v;
    }
    if let Some(v) = args.noisy_pool_size {
        config.noisy_pool_size = v;
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = args.epochs {
        config.classifier.epochs = v;
    }
    if let Some(v) = args.dim {
        match &mut config.embeddings {
            EmbeddingSource::Train(cfg) => cfg.dim = v,
            EmbeddingSource::Load(_) => {
                bail!("--dim applies only when embeddings are trained, not loaded")
            }
        }
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if args.deterministic {
        config.deterministic = true;
        config.threads = 1;
    }
    if let Some(v) = args.threads {
        config.threads = if config.deterministic { 1 } else { v };
    }
    if let Some(v) = &args.out_dir {
        config.out_dir = v.clone();
    }
    config.sources = sources;

    let outcome = pipeline::run(config)?;
    for warning in &outcome.manifest.warnings {
        eprintln!("warning: {warning}");
    }
    let iterations = outcome.manifest.iterations.len();
    if outcome.manifest.converged {
        println!("seed sets converged after {iterations} iteration(s)");
    } else {
        println!("stopped after {iterations} iteration(s)");
    }
    if let Some(record) = outcome.manifest.iterations.last() {
        println!("gamma = {:.4}", record.gamma);
        if let Some(metrics) = &record.metrics {
            print!("{}", metrics.render_table());
        }
    }
    println!(
        "manifest: {}",
        outcome.manifest.config.out_dir.join("manifest.json").display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let corpus = Corpus::load(&args.corpus, args.min_count)?;
    let table = load_embeddings(&args.embeddings, &corpus.vocabulary)?;
    let fp = fingerprint(&corpus.vocabulary, &table);
    let (model, class_names) = load_checkpoint(&args.checkpoint, fp)?;

    let predictions = match &args.input {
        None => aspect_core::classifier::predict(&model, &corpus, &table)?,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let active = model.effective_table(&table);
            text.lines()
                .map(|line| {
                    let tokens = corpus.encode_line(line);
                    let matrix = SegmentMatrix::from_tokens(&tokens, active);
                    model.forward(&matrix, false, None)
                })
                .collect::<aspect_core::Result<Vec<_>>>()?
        }
    };

    std::fs::create_dir_all(&args.out_dir)?;
    let out_path = args.out_dir.join("predictions.tsv");
    std::fs::write(
        &out_path,
        pipeline::render_predictions(&predictions, &class_names),
    )?;
    println!("{} predictions -> {}", predictions.len(), out_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pred_text = std::fs::read_to_string(&args.pred)
        .with_context(|| format!("cannot read {}", args.pred.display()))?;
    let mut lines = pred_text.lines();
    let header = lines.next().context("prediction file is empty")?;
    let class_names: Vec<String> = header
        .split('\t')
        .skip(2)
        .map(|s| s.to_string())
        .collect();
    if class_names.len() < 2 {
        bail!("prediction header must list the class names");
    }
    let predicted: Vec<usize> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let name = line
                .split('\t')
                .nth(1)
                .context("prediction row is missing the class column")?;
            class_names
                .iter()
                .position(|c| c == name)
                .with_context(|| format!("predicted class `{name}` not in header"))
        })
        .collect::<Result<Vec<_>>>()?;

    let aspect_names: Vec<String> = class_names
        .iter()
        .filter(|c| c.as_str() != eval::MISC_LABEL)
        .cloned()
        .collect();
    let gold_set = load_gold(&args.gold, &aspect_names)?;
    if gold_set.labels.len() != predicted.len() {
        bail!(
            "{} gold lines vs {} predictions",
            gold_set.labels.len(),
            predicted.len()
        );
    }
    let gold: Vec<usize> = gold_set
        .labels
        .iter()
        .map(|l| eval::label_index(l, &aspect_names))
        .collect::<aspect_core::Result<Vec<_>>>()?;

    let cm = ConfusionMatrix::from_pairs(&gold, &predicted, class_names)?;
    let report = macro_metrics(&cm)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        aspect_count: args.k,
        segments_per_aspect: args.segments_per_aspect,
        misc_fraction: args.misc_fraction,
        seeds_per_aspect: args.seeds_per_aspect,
        seed: args.seed,
        ..Default::default()
    };
    let data = generate_synthetic(&config)?;
    let files = write_synthetic(&args.out_dir, &data, args.holdout_every)?;
    println!(
        "{} segments ({} aspects + misc) -> {}",
        data.lines.len(),
        args.k,
        args.out_dir.display()
    );
    println!("corpus: {}", files.train_corpus.display());
    println!("gold:   {}", files.all_gold.display());
    println!("seeds:  {}", files.seeds.display());
    Ok(())
}

fn cmd_seeds(args: SeedsArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.history)
        .with_context(|| format!("cannot read {}", args.history.display()))?;
    let history: Vec<SeedHistoryEntry> =
        serde_json::from_str(&text).with_context(|| "malformed seed history")?;
    for entry in &history {
        println!("iteration {}", entry.iteration);
        for (aspect, words) in &entry.seeds {
            println!("  {aspect}: {}", words.join(", "));
        }
        if !entry.noisy_pool.is_empty() {
            println!("  [noisy pool]: {}", entry.noisy_pool.join(", "));
        }
    }
    Ok(())
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
