//! Classification metrics, the variant ablation table, and the alpha/beta
//! sweep. Fake is the positive class. Ablation and sweep cells are
//! independent experiments (same seed, same split), so they run through
//! [`crate::exec`] and may fan out over threads.

use std::path::Path;

use serde::Serialize;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{fit, predict, TrainedModel};
use crate::train::{TrainConfig, Variant};

/// Flags for metrics whose denominator was zero; the metric itself is
/// reported as 0 in that case.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MetricFlags {
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub variant: String,
    pub alpha: f64,
    pub beta: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub flags: MetricFlags,
    /// Articles the model could not score (no caption while the similarity
    /// pathway was active).
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
}

impl MetricsReport {
    fn attach(mut self, config: &TrainConfig, skipped: usize) -> Self {
        self.variant = config.variant.name().to_string();
        self.alpha = config.alpha;
        self.beta = config.beta;
        self.skipped = skipped;
        self.config = Some(config.clone());
        self
    }
}

/// Confusion counts and the derived metrics for fake-vs-true decisions.
pub fn compute_metrics(decisions: &[bool], labels: &[crate::data::Label]) -> Result<MetricsReport> {
    if decisions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: decisions.len(),
            right: labels.len(),
        });
    }
    if decisions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&predicted_fake, &label) in decisions.iter().zip(labels) {
        match (predicted_fake, label.is_fake()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let m = decisions.len() as f64;
    let mut flags = MetricFlags::default();
    let accuracy = (tp + tn) as f64 / m;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        flags.precision_undefined = true;
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        flags.recall_undefined = true;
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.f1_undefined = true;
        0.0
    };
    Ok(MetricsReport {
        variant: String::new(),
        alpha: 0.0,
        beta: 0.0,
        accuracy,
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
        flags,
        skipped: 0,
        config: None,
    })
}

pub struct Experiment {
    pub model: TrainedModel,
    pub trace: Vec<f64>,
    pub report: MetricsReport,
}

/// Score articles with a trained model and tabulate the metrics.
pub fn evaluate_model(
    model: &TrainedModel,
    articles: &[crate::data::NewsArticle],
) -> Result<MetricsReport> {
    let (predictions, skipped) = predict(model, articles)?;
    let decisions: Vec<bool> = predictions.iter().map(|p| p.fake).collect();
    let labels: Vec<crate::data::Label> = predictions.iter().map(|p| p.label).collect();
    Ok(compute_metrics(&decisions, &labels)?.attach(&model.state.config, skipped))
}

/// Train on `train_corpus`, evaluate on `test_corpus`.
pub fn run_experiment(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    config: &TrainConfig,
    embeddings: Option<&Path>,
) -> Result<Experiment> {
    let outcome = fit(train_corpus, config, embeddings)?;
    let report = evaluate_model(&outcome.model, &test_corpus.articles)?;
    Ok(Experiment {
        model: outcome.model,
        trace: outcome.trace,
        report,
    })
}

/// Train every variant from the same seed on the same split. Rows come back
/// in the ablation-table order of [`Variant::ABLATION_ORDER`].
pub fn run_ablation(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    base: &TrainConfig,
    embeddings: Option<&Path>,
) -> Result<Vec<MetricsReport>> {
    let variants = Variant::ABLATION_ORDER;
    exec::map_slice(&variants, |&variant| {
        let config = TrainConfig {
            variant,
            ..base.clone()
        };
        run_experiment(train_corpus, test_corpus, &config, embeddings).map(|e| e.report)
    })
    .into_iter()
    .collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SweepMode {
    /// beta = 1 - alpha; the weights are a ratio, so one axis covers them.
    Paired,
    /// Full Cartesian grid, minus the invalid (0, 0) cell.
    FullGrid,
}

/// Grid cells for a given step, e.g. step 0.5 gives alpha in {0, 0.5, 1}.
pub fn sweep_cells(step: f64, mode: SweepMode) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sweep step must be in (0, 1], got {step}"
        )));
    }
    let divisions = (1.0 / step).round().max(1.0) as usize;
    let values: Vec<f64> = (0..=divisions)
        .map(|i| i as f64 / divisions as f64)
        .collect();
    let cells = match mode {
        SweepMode::Paired => values.iter().map(|&a| (a, 1.0 - a)).collect(),
        SweepMode::FullGrid => values
            .iter()
            .flat_map(|&a| values.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a + b > 0.0)
            .collect(),
    };
    Ok(cells)
}

/// One trained model per grid cell, all from the same seed and split.
pub fn sweep_alpha_beta(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    base: &TrainConfig,
    step: f64,
    mode: SweepMode,
    embeddings: Option<&Path>,
) -> Result<Vec<MetricsReport>> {
    let cells = sweep_cells(step, mode)?;
    exec::map_slice(&cells, |&(alpha, beta)| {
        let config = TrainConfig {
            alpha,
            beta,
            ..base.clone()
        };
        run_experiment(train_corpus, test_corpus, &config, embeddings).map(|e| e.report)
    })
    .into_iter()
    .collect()
}

/// CSV rows: variant, alpha, beta, accuracy, precision, recall, f1, tp, fp,
/// tn, fn.
pub fn write_reports_csv(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer
        .write_record([
            "variant",
            "alpha",
            "beta",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "tp",
            "fp",
            "tn",
            "fn",
        ])
        .map_err(csv_error)?;
    for r in reports {
        writer
            .write_record([
                r.variant.clone(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.accuracy.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.tp.to_string(),
                r.fp.to_string(),
                r.tn.to_string(),
                r.fn_.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_reports_json(reports: &[MetricsReport], path: &Path) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(reports).map_err(std::io::Error::other)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Training-trace CSV: epoch, mean_loss.
pub fn write_trace_csv(trace: &[f64], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer
        .write_record(["epoch", "mean_loss"])
        .map_err(csv_error)?;
    for (epoch, loss) in trace.iter().enumerate() {
        writer
            .write_record([(epoch + 1).to_string(), loss.to_string()])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
