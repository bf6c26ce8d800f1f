//! `simnews`: train, evaluate and analyze the similarity-aware news
//! classifier from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error (missing or
//! malformed files, empty splits, model/vocabulary mismatches), 1 runtime
//! failure — including a failed gradient check, which makes `gradcheck`
//! usable as a CI gate.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use simnews_core::data::{
    generate_synthetic, kfold_split, load_corpus, save_corpus, temporal_split, Corpus, SynthSpec,
};
use simnews_core::error::Error as CoreError;
use simnews_core::eval::{
    evaluate_model, run_ablation, run_experiment, sweep_alpha_beta, write_reports_csv,
    write_reports_json, write_trace_csv, MetricsReport, SweepMode,
};
use simnews_core::model::{fit, load_model, save_model};
use simnews_core::train::{gradient_check_suite, TrainConfig, Variant, CHECK_WEIGHT_GRID};

#[derive(Parser)]
#[command(
    name = "simnews",
    version,
    about = "Fake-news classifier over news text and image captions, \
             fused through a cross-modal similarity score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it plus a per-epoch loss trace
    Train(TrainArgs),
    /// Score a corpus with a saved model and report metrics
    Evaluate(CommonOpts),
    /// Check analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Train one model per alpha/beta cell and tabulate test metrics
    Sweep(SweepArgs),
    /// Train every model variant on the same split and tabulate test metrics
    Ablation(CommonOpts),
    /// Generate a synthetic corpus with a planted text/caption mismatch
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct CommonOpts {
    /// JSON config file with keys matching the long flag names; flags
    /// override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON-lines corpus
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pretrained embeddings, one "token v1 .. vk" line per word
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Model file (output of train, input of evaluate) [default: model.json]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output path for reports/traces
    #[arg(long)]
    out: Option<PathBuf>,
    /// full, no-text, no-caption, no-similarity or similarity-only
    #[arg(long)]
    variant: Option<Variant>,
    /// Weight of the prediction loss [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the similarity loss [default: 0.5]
    #[arg(long)]
    beta: Option<f64>,
    /// Learning rate [default: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated convolution window sizes [default: 3,4]
    #[arg(long)]
    windows: Option<String>,
    /// Word-embedding dimension k [default: 32]
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Representation dimension d [default: 32]
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Seed for all randomness in the run
    #[arg(long)]
    seed: Option<u64>,
    /// Reshuffle the corpus each epoch (seeded) [default: true]
    #[arg(long)]
    shuffle: Option<bool>,
    /// Stop early once |change in mean epoch loss| falls below this
    #[arg(long)]
    early_stop: Option<f64>,
    /// Temporal split fraction; the earliest part trains, the newest part
    /// evaluates. 1.0 disables the split [default: 0.8]
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Run k-fold cross-validation inside the training split before the
    /// final fit
    #[arg(long)]
    kfold: Option<usize>,
    /// Sweep grid step [default: 0.2]
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Model/example pairs per variant and weight combination [default: 1]
    #[arg(long)]
    samples: Option<usize>,
    /// Maximum accepted relative error [default: 1e-4]
    #[arg(long)]
    tolerance: Option<f64>,
    /// Central-difference step [default: 1e-5]
    #[arg(long)]
    fd_step: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Sweep the full alpha x beta grid instead of the paired beta = 1 -
    /// alpha axis
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonOpts,
    /// Number of articles (even) [default: 400]
    #[arg(long)]
    size: Option<usize>,
    /// Probability that a fake article's caption comes from the wrong topic
    /// pool [default: 1.0]
    #[arg(long)]
    mismatch: Option<f64>,
    /// Synthetic vocabulary size (split into two topic pools) [default: 60]
    #[arg(long)]
    vocab_size: Option<usize>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        match e {
            CoreError::InvalidParameter(_) => CliError::Config(message),
            CoreError::Io(_)
            | CoreError::MalformedRecord { .. }
            | CoreError::MalformedEmbeddingFile { .. }
            | CoreError::DuplicateId(_)
            | CoreError::MissingTimestamp(_)
            | CoreError::TooFewExamples { .. }
            | CoreError::EmptyCorpus
            | CoreError::EmptyInput
            | CoreError::LengthMismatch { .. }
            | CoreError::CorruptModelFile(_)
            | CoreError::VocabularyMismatch { .. } => CliError::Data(message),
            CoreError::DimensionMismatch { .. }
            | CoreError::ZeroVector
            | CoreError::EmptyMap
            | CoreError::SequenceTooShort { .. } => CliError::Runtime(message),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Config-file support and flag resolution
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum WindowsSpec {
    List(Vec<usize>),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
struct FileConfig {
    corpus: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    variant: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    lr: Option<f64>,
    epochs: Option<usize>,
    windows: Option<WindowsSpec>,
    embed_dim: Option<usize>,
    latent_dim: Option<usize>,
    seed: Option<u64>,
    shuffle: Option<bool>,
    early_stop: Option<f64>,
    train_fraction: Option<f64>,
    kfold: Option<usize>,
    step: Option<f64>,
    samples: Option<usize>,
    tolerance: Option<f64>,
    fd_step: Option<f64>,
    full: Option<bool>,
    size: Option<usize>,
    mismatch: Option<f64>,
    vocab_size: Option<usize>,
}

fn parse_windows(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("bad window size {p:?} in --windows")))
        })
        .collect()
}

/// Resolved option sources: command line first, config file second, built-in
/// defaults last.
struct Ctx {
    opts: CommonOpts,
    file: FileConfig,
}

impl Ctx {
    fn new(opts: CommonOpts) -> CliResult<Self> {
        let file = match &opts.config {
            None => FileConfig::default(),
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|e| {
                    CliError::Config(format!("cannot read config file {}: {e}", path.display()))
                })?;
                serde_json::from_slice(&bytes).map_err(|e| {
                    CliError::Config(format!("bad config file {}: {e}", path.display()))
                })?
            }
        };
        Ok(Ctx { opts, file })
    }

    fn train_config(&self, default_dims: (usize, usize)) -> CliResult<TrainConfig> {
        let variant = match (self.opts.variant, &self.file.variant) {
            (Some(v), _) => v,
            (None, Some(s)) => s.parse().map_err(CliError::Config)?,
            (None, None) => Variant::Full,
        };
        let windows = match (&self.opts.windows, &self.file.windows) {
            (Some(text), _) => parse_windows(text)?,
            (None, Some(WindowsSpec::Text(text))) => parse_windows(text)?,
            (None, Some(WindowsSpec::List(list))) => list.clone(),
            (None, None) => vec![3, 4],
        };
        let config = TrainConfig {
            alpha: self.opts.alpha.or(self.file.alpha).unwrap_or(0.5),
            beta: self.opts.beta.or(self.file.beta).unwrap_or(0.5),
            learning_rate: self.opts.lr.or(self.file.lr).unwrap_or(1e-4),
            windows,
            embed_dim: self
                .opts
                .embed_dim
                .or(self.file.embed_dim)
                .unwrap_or(default_dims.0),
            latent_dim: self
                .opts
                .latent_dim
                .or(self.file.latent_dim)
                .unwrap_or(default_dims.1),
            epochs: self.opts.epochs.or(self.file.epochs).unwrap_or(100),
            seed: self.opts.seed.or(self.file.seed).unwrap_or(42),
            variant,
            shuffle: self.opts.shuffle.or(self.file.shuffle).unwrap_or(true),
            early_stop_delta: self.opts.early_stop.or(self.file.early_stop),
            ..TrainConfig::default()
        };
        config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    fn corpus_path(&self) -> CliResult<PathBuf> {
        self.opts
            .corpus
            .clone()
            .or_else(|| self.file.corpus.clone())
            .ok_or_else(|| CliError::Config("--corpus is required".into()))
    }

    fn embeddings_path(&self) -> Option<PathBuf> {
        self.opts
            .embeddings
            .clone()
            .or_else(|| self.file.embeddings.clone())
    }

    fn model_path(&self) -> PathBuf {
        self.opts
            .model
            .clone()
            .or_else(|| self.file.model.clone())
            .unwrap_or_else(|| PathBuf::from("model.json"))
    }

    fn out_path(&self, default: &str) -> PathBuf {
        self.opts
            .out
            .clone()
            .or_else(|| self.file.out.clone())
            .unwrap_or_else(|| PathBuf::from(default))
    }

    fn train_fraction(&self) -> CliResult<f64> {
        let fraction = self
            .opts
            .train_fraction
            .or(self.file.train_fraction)
            .unwrap_or(0.8);
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CliError::Config(format!(
                "--train-fraction must be in (0, 1], got {fraction}"
            )));
        }
        Ok(fraction)
    }

    fn kfold(&self) -> Option<usize> {
        self.opts.kfold.or(self.file.kfold)
    }

    fn step(&self) -> f64 {
        self.opts.step.or(self.file.step).unwrap_or(0.2)
    }

    fn seed_default(&self, default: u64) -> u64 {
        self.opts.seed.or(self.file.seed).unwrap_or(default)
    }
}

/// `metrics` or `metrics.json` or `metrics.csv` -> (metrics.json, metrics.csv)
fn report_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    (stem.with_extension("json"), stem.with_extension("csv"))
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(suffix);
    path.with_file_name(name)
}

fn split_for_training(corpus: &Corpus, fraction: f64) -> CliResult<Corpus> {
    if fraction < 1.0 {
        Ok(temporal_split(corpus, fraction)?.0)
    } else {
        Ok(corpus.clone())
    }
}

fn split_for_evaluation(corpus: &Corpus, fraction: f64) -> CliResult<Corpus> {
    if fraction < 1.0 {
        Ok(temporal_split(corpus, fraction)?.1)
    } else {
        Ok(corpus.clone())
    }
}

fn split_both(corpus: &Corpus, fraction: f64, command: &str) -> CliResult<(Corpus, Corpus)> {
    if fraction >= 1.0 {
        return Err(CliError::Config(format!(
            "{command} needs a held-out test split; set --train-fraction below 1"
        )));
    }
    Ok(temporal_split(corpus, fraction)?)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn print_metrics(report: &MetricsReport) {
    println!(
        "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
        report.accuracy, report.precision, report.recall, report.f1
    );
    if report.skipped > 0 {
        println!("note: {} articles skipped (no caption)", report.skipped);
    }
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let ctx = Ctx::new(args.common)?;
    let config = ctx.train_config((32, 32))?;
    let corpus = load_corpus(&ctx.corpus_path()?)?;
    let fraction = ctx.train_fraction()?;
    let train_part = split_for_training(&corpus, fraction)?;

    let trace_path = ctx.out_path("training_trace.csv");
    if let Some(k) = ctx.kfold() {
        let folds = kfold_split(&train_part, k, config.seed)?;
        let mut fold_reports = Vec::with_capacity(folds.len());
        for (i, (fold_train, fold_val)) in folds.iter().enumerate() {
            let experiment =
                run_experiment(fold_train, fold_val, &config, ctx.embeddings_path().as_deref())?;
            println!(
                "fold {}/{k}: accuracy {:.4} f1 {:.4}",
                i + 1,
                experiment.report.accuracy,
                experiment.report.f1
            );
            fold_reports.push(experiment.report);
        }
        let folds_path = sibling_with_suffix(&trace_path, ".folds.csv");
        write_reports_csv(&fold_reports, &folds_path)?;
        println!("cross-validation metrics -> {}", folds_path.display());
    }

    let outcome = fit(&train_part, &config, ctx.embeddings_path().as_deref())?;
    let model_path = ctx.model_path();
    save_model(&outcome.model, &model_path)?;
    write_trace_csv(&outcome.trace, &trace_path)?;
    println!(
        "trained {} ({} articles, {} skipped) for {} epochs, final mean loss {:.6}",
        config.variant,
        train_part.len() - outcome.skipped,
        outcome.skipped,
        outcome.trace.len(),
        outcome.trace.last().copied().unwrap_or(f64::NAN)
    );
    println!("model -> {}", model_path.display());
    println!("trace -> {}", trace_path.display());
    Ok(())
}

fn cmd_evaluate(common: CommonOpts) -> CliResult<()> {
    let ctx = Ctx::new(common)?;
    let model = load_model(&ctx.model_path())?;
    let corpus = load_corpus(&ctx.corpus_path()?)?;
    let eval_part = split_for_evaluation(&corpus, ctx.train_fraction()?)?;
    let report = evaluate_model(&model, &eval_part.articles)?;

    let (json_path, csv_path) = report_paths(&ctx.out_path("metrics"));
    write_reports_json(std::slice::from_ref(&report), &json_path)?;
    write_reports_csv(std::slice::from_ref(&report), &csv_path)?;
    print_metrics(&report);
    println!("reports -> {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let GradcheckArgs {
        common,
        samples,
        tolerance,
        fd_step,
    } = args;
    let ctx = Ctx::new(common)?;
    let samples = samples.or(ctx.file.samples).unwrap_or(1);
    if samples == 0 {
        return Err(CliError::Config("--samples must be at least 1".into()));
    }
    let tolerance = tolerance.or(ctx.file.tolerance).unwrap_or(1e-4);
    if tolerance < 0.0 {
        return Err(CliError::Config("--tolerance must be non-negative".into()));
    }
    let fd_step = fd_step.or(ctx.file.fd_step).unwrap_or(1e-5);
    if fd_step <= 0.0 {
        return Err(CliError::Config("--fd-step must be positive".into()));
    }

    // Small dimensions by default: the check perturbs every parameter twice.
    let config = ctx.train_config((8, 6))?;
    let variants: Vec<Variant> = match config.variant {
        v if ctx.opts.variant.is_some() || ctx.file.variant.is_some() => vec![v],
        _ => Variant::ABLATION_ORDER.to_vec(),
    };
    let explicit_weights = ctx.opts.alpha.or(ctx.file.alpha).is_some()
        || ctx.opts.beta.or(ctx.file.beta).is_some();
    let pairs: Vec<(f64, f64)> = if explicit_weights {
        vec![(config.alpha, config.beta)]
    } else {
        CHECK_WEIGHT_GRID
            .iter()
            .flat_map(|&a| CHECK_WEIGHT_GRID.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a + b > 0.0)
            .collect()
    };

    let combos = gradient_check_suite(&config, &variants, &pairs, samples, fd_step, tolerance)?;

    // Roll the per-combo reports up by parameter group.
    let mut rollup: BTreeMap<String, (usize, usize, usize, f64)> = BTreeMap::new();
    for combo in &combos {
        for group in &combo.report.groups {
            let entry = rollup.entry(group.name.clone()).or_insert((0, 0, 0, 0.0));
            entry.0 += group.checked;
            entry.1 += group.skipped;
            entry.2 += group.failures;
            entry.3 = entry.3.max(group.max_rel_err);
        }
    }
    for (name, (checked, skipped, failures, max_err)) in &rollup {
        println!(
            "group {name:<22} max_rel_err {max_err:.3e}  checked {checked:<6} skipped {skipped:<5} failures {failures}"
        );
    }
    let pairs_run: usize = combos.len() * samples;
    let failures: usize = combos.iter().map(|c| c.report.total_failures()).sum();
    println!(
        "gradient check: {} combos x {samples} example(s) = {pairs_run} model/example pairs, step {fd_step:e}, tolerance {tolerance:e}",
        combos.len()
    );
    if failures == 0 {
        println!("gradient check: PASS");
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: {failures} entries at or above tolerance"
        )))
    }
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let full = args.full;
    let ctx = Ctx::new(args.common)?;
    let config = ctx.train_config((32, 32))?;
    let corpus = load_corpus(&ctx.corpus_path()?)?;
    let (train_part, test_part) = split_both(&corpus, ctx.train_fraction()?, "sweep")?;
    let mode = if full || ctx.file.full.unwrap_or(false) {
        SweepMode::FullGrid
    } else {
        SweepMode::Paired
    };
    let reports = sweep_alpha_beta(
        &train_part,
        &test_part,
        &config,
        ctx.step(),
        mode,
        ctx.embeddings_path().as_deref(),
    )?;
    let (json_path, csv_path) = report_paths(&ctx.out_path("sweep.csv"));
    write_reports_csv(&reports, &csv_path)?;
    write_reports_json(&reports, &json_path)?;
    println!(
        "swept {} cells -> {} and {}",
        reports.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn cmd_ablation(common: CommonOpts) -> CliResult<()> {
    let ctx = Ctx::new(common)?;
    let config = ctx.train_config((32, 32))?;
    let corpus = load_corpus(&ctx.corpus_path()?)?;
    let (train_part, test_part) = split_both(&corpus, ctx.train_fraction()?, "ablation")?;
    let reports = run_ablation(
        &train_part,
        &test_part,
        &config,
        ctx.embeddings_path().as_deref(),
    )?;
    for report in &reports {
        println!(
            "{:<16} accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}",
            report.variant, report.accuracy, report.precision, report.recall, report.f1
        );
    }
    let (json_path, csv_path) = report_paths(&ctx.out_path("ablation.csv"));
    write_reports_csv(&reports, &csv_path)?;
    write_reports_json(&reports, &json_path)?;
    println!("reports -> {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let size = args.size;
    let mismatch = args.mismatch;
    let vocab_size = args.vocab_size;
    let ctx = Ctx::new(args.common)?;
    let spec = SynthSpec {
        size: size.or(ctx.file.size).unwrap_or(400),
        vocab_size: vocab_size.or(ctx.file.vocab_size).unwrap_or(60),
        mismatch: mismatch.or(ctx.file.mismatch).unwrap_or(1.0),
        seed: ctx.seed_default(1),
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec)?;
    let out = ctx.out_path("synthetic.jsonl");
    save_corpus(&corpus, &out)?;
    println!(
        "wrote {} articles (mismatch {}, seed {}) -> {}",
        corpus.len(),
        spec.mismatch,
        spec.seed,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(common) => cmd_evaluate(common),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Ablation(common) => cmd_ablation(common),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
