//! Error metrics and the parameter-sweep harness.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::Error;
use crate::model::HyperParams;
use crate::predictor::{predict_batch, PredictConfig, Prediction};
use crate::trainer::{train, TrainConfig};
use crate::Result;

/// Summary metrics over one prediction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub pearson: f64,
    pub inverted_pairs: u64,
    pub n: usize,
}

/// Mean absolute error.
pub fn mae(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let total: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| (t - p).abs())
        .sum();
    Ok(total / truth.len() as f64)
}

/// Sample Pearson correlation. Constant inputs make it undefined and are
/// reported as an error, never silently zero.
pub fn pearson(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let n = truth.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 pairs, got {n}"
        )));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mt, mp) = (mean(truth), mean(pred));
    let mut cov = 0.0;
    let mut var_t = 0.0;
    let mut var_p = 0.0;
    for (t, p) in truth.iter().zip(pred) {
        cov += (t - mt) * (p - mp);
        var_t += (t - mt) * (t - mt);
        var_p += (p - mp) * (p - mp);
    }
    if var_t == 0.0 || var_p == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "constant input has no correlation".into(),
        ));
    }
    Ok(cov / (var_t.sqrt() * var_p.sqrt()))
}

/// Number of strictly inverted pairs: unordered pairs where the true
/// ratings and the predictions order in opposite directions. Ties on
/// either side never count. The double loop is the definition.
pub fn inverted_pairs(truth: &[f64], pred: &[f64]) -> Result<u64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let mut count = 0u64;
    for i in 0..truth.len() {
        for j in (i + 1)..truth.len() {
            if (truth[i] - truth[j]) * (pred[i] - pred[j]) < 0.0 {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// All three metrics at once.
pub fn metric_report(truth: &[f64], pred: &[f64]) -> Result<MetricReport> {
    Ok(MetricReport {
        mae: mae(truth, pred)?,
        pearson: pearson(truth, pred)?,
        inverted_pairs: inverted_pairs(truth, pred)?,
        n: truth.len(),
    })
}

/// Metrics computed from a prediction run.
pub fn report_from_predictions(predictions: &[Prediction]) -> Result<MetricReport> {
    let truth: Vec<f64> = predictions.iter().map(|p| p.true_rating).collect();
    let pred: Vec<f64> = predictions.iter().map(|p| p.predicted_rating).collect();
    metric_report(&truth, &pred)
}

/// Baseline predicting one constant for every review.
pub fn constant_predictions(value: f64, n: usize) -> Vec<f64> {
    vec![value; n]
}

/// Mean training rating, the global-mean baseline value.
pub fn train_mean_rating(train: &Corpus) -> f64 {
    let n = train.reviews.len();
    if n == 0 {
        return 0.0;
    }
    train.reviews.iter().map(|r| r.rating).sum::<f64>() / n as f64
}

/// One grid point of the (mu, sigma2) sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu: f64,
    pub sigma2: f64,
}

/// Result row for one grid point; failures are recorded, not fatal.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Marks the recommended default setting (mu = 3.5, sigma2 = 0.08).
    pub recommended_default: bool,
    pub outcome: std::result::Result<MetricReport, String>,
}

/// Trains and evaluates one model per grid point with a shared seed and
/// returns a plot-ready table.
pub fn sweep_parameters(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    grid: &[SweepPoint],
    base_hyper: HyperParams,
    train_config: &TrainConfig,
    predict_config: &PredictConfig,
) -> Vec<SweepRow> {
    grid.iter()
        .map(|&point| {
            let hyper = HyperParams {
                mu: point.mu,
                sigma2: point.sigma2,
                ..base_hyper
            };
            let outcome = run_point(train_corpus, test_corpus, hyper, train_config, predict_config)
                .map_err(|e| e.to_string());
            SweepRow {
                point,
                recommended_default: point.mu == 3.5 && point.sigma2 == 0.08,
                outcome,
            }
        })
        .collect()
}

fn run_point(
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    hyper: HyperParams,
    train_config: &TrainConfig,
    predict_config: &PredictConfig,
) -> Result<MetricReport> {
    let model = train(train_corpus, hyper, train_config)?;
    let predictions = predict_batch(&model, test_corpus, predict_config)?;
    report_from_predictions(&predictions)
}

/// Writes a single metric report as a one-row TSV table.
pub fn write_metric_report(path: impl AsRef<Path>, report: &MetricReport) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "n\tmae\tpearson\tinverted_pairs").map_err(|e| Error::io(path, e))?;
    writeln!(
        out,
        "{}\t{:.6}\t{:.6}\t{}",
        report.n, report.mae, report.pearson, report.inverted_pairs
    )
    .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the sweep table as TSV, one row per grid point.
pub fn write_sweep_table(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "mu\tsigma2\trecommended_default\tn\tmae\tpearson\tinverted_pairs\terror"
    )
    .map_err(|e| Error::io(path, e))?;
    for row in rows {
        match &row.outcome {
            Ok(report) => writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t",
                row.point.mu,
                row.point.sigma2,
                row.recommended_default,
                report.n,
                report.mae,
                report.pearson,
                report.inverted_pairs
            )
            .map_err(|e| Error::io(path, e))?,
            Err(message) => writeln!(
                out,
                "{}\t{}\t{}\t\t\t\t\t{}",
                row.point.mu, row.point.sigma2, row.recommended_default, message
            )
            .map_err(|e| Error::io(path, e))?,
        }
    }
    Ok(())
}
