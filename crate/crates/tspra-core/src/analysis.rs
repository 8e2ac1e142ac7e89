//! Post-hoc analyses over a trained model: per-word polarity, per-aspect
//! preference and sentiment, critical-aspect detection and top-word
//! listings. All functions are pure reads of the model tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Error;
use crate::model::{Preference, Sentiment, TrainedModel};
use crate::Result;

/// Scalar polarity of word `w`: positive-minus-negative sentiment mass
/// summed over topics, normalized by the total non-neutral mass. Words
/// with no non-neutral mass score 0.
pub fn word_polarity(model: &TrainedModel, w: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for row in &model.pi {
        let pos = row[w][Sentiment::Positive.index()];
        let neg = row[w][Sentiment::Negative.index()];
        num += pos - neg;
        den += pos + neg;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-word polarity values, indexed by word id.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityTable {
    values: Vec<f64>,
}

impl PolarityTable {
    pub fn compute(model: &TrainedModel) -> Self {
        PolarityTable {
            values: (0..model.num_words())
                .map(|w| word_polarity(model, w))
                .collect(),
        }
    }

    pub fn get(&self, w: usize) -> f64 {
        self.values[w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Mean strong-preference probability of aspect `k` over all authors.
pub fn aspect_preference(model: &TrainedModel, k: usize) -> f64 {
    let row = &model.psi[k];
    let total: f64 = row
        .iter()
        .map(|cell| cell[Preference::Strong.index()])
        .sum();
    total / row.len() as f64
}

/// Aggregate sentiment of aspect `k` over the vocabulary, normalized
/// positive-minus-negative mass; 0 when the aspect carries no non-neutral
/// mass.
pub fn aspect_sentiment(model: &TrainedModel, k: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for cell in &model.pi[k] {
        let pos = cell[Sentiment::Positive.index()];
        let neg = cell[Sentiment::Negative.index()];
        num += pos - neg;
        den += pos + neg;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Whether an aspect is critical: preference at least `pref_floor` and
/// sentiment non-positive or preference/sentiment above `ratio_threshold`.
/// Non-positive sentiment is critical outright, which also covers the
/// division-by-zero case of the ratio rule.
pub fn is_critical(preference: f64, sentiment: f64, pref_floor: f64, ratio_threshold: f64) -> bool {
    preference >= pref_floor && (sentiment <= 0.0 || preference / sentiment > ratio_threshold)
}

/// One aspect's analysis row.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectSummary {
    pub topic: usize,
    pub preference: f64,
    pub sentiment: f64,
    pub critical: bool,
    pub top_words: Vec<(String, f64)>,
}

/// The `n` heaviest words of topic `k` by phi weight, descending, ties
/// broken by word id.
pub fn top_words(model: &TrainedModel, k: usize, n: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..model.num_words()).collect();
    order.sort_by(|&a, &b| {
        model.phi[k][b]
            .partial_cmp(&model.phi[k][a])
            .expect("finite phi")
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(n)
        .map(|w| (model.vocabulary.word(w).to_string(), model.phi[k][w]))
        .collect()
}

/// Summaries for every topic with the critical flag applied, sorted by
/// preference descending (ties by topic id).
pub fn critical_aspects(
    model: &TrainedModel,
    pref_floor: f64,
    ratio_threshold: f64,
    top_n: usize,
) -> Vec<AspectSummary> {
    let mut summaries: Vec<AspectSummary> = (0..model.num_topics())
        .map(|k| {
            let preference = aspect_preference(model, k);
            let sentiment = aspect_sentiment(model, k);
            AspectSummary {
                topic: k,
                preference,
                sentiment,
                critical: is_critical(preference, sentiment, pref_floor, ratio_threshold),
                top_words: top_words(model, k, top_n),
            }
        })
        .collect();
    summaries.sort_by(|a, b| {
        b.preference
            .partial_cmp(&a.preference)
            .expect("finite preference")
            .then(a.topic.cmp(&b.topic))
    });
    summaries
}

/// The `n` most positive and `n` most negative words by polarity, ties
/// broken by word id.
pub fn polarity_extremes(
    model: &TrainedModel,
    n: usize,
) -> (Vec<(String, f64)>, Vec<(String, f64)>) {
    let table = PolarityTable::compute(model);
    let mut order: Vec<usize> = (0..model.num_words()).collect();
    order.sort_by(|&a, &b| {
        table.get(b)
            .partial_cmp(&table.get(a))
            .expect("finite polarity")
            .then(a.cmp(&b))
    });
    let positive: Vec<(String, f64)> = order
        .iter()
        .take(n)
        .map(|&w| (model.vocabulary.word(w).to_string(), table.get(w)))
        .collect();
    let mut neg_order: Vec<usize> = (0..model.num_words()).collect();
    neg_order.sort_by(|&a, &b| {
        table.get(a)
            .partial_cmp(&table.get(b))
            .expect("finite polarity")
            .then(a.cmp(&b))
    });
    let negative: Vec<(String, f64)> = neg_order
        .iter()
        .take(n)
        .map(|&w| (model.vocabulary.word(w).to_string(), table.get(w)))
        .collect();
    (positive, negative)
}

/// Histogram of polarity values over fixed bins spanning [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl PolarityHistogram {
    pub fn compute(table: &PolarityTable, num_bins: usize) -> Self {
        let num_bins = num_bins.max(1);
        let width = 2.0 / num_bins as f64;
        let bin_edges: Vec<f64> = (0..=num_bins).map(|i| -1.0 + i as f64 * width).collect();
        let mut counts = vec![0usize; num_bins];
        for &value in table.values() {
            let bin = (((value + 1.0) / width) as usize).min(num_bins - 1);
            counts[bin] += 1;
        }
        PolarityHistogram { bin_edges, counts }
    }
}

/// Analysis settings: critical-aspect thresholds, listing and histogram
/// sizes.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisParams {
    pub pref_floor: f64,
    pub ratio_threshold: f64,
    pub top_n: usize,
    pub histogram_bins: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            pref_floor: 0.3,
            ratio_threshold: 2.0,
            top_n: 20,
            histogram_bins: 40,
        }
    }
}

/// Full analysis output: the polarity table and histogram, per-aspect
/// summaries and polarity extremes.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub polarity: PolarityTable,
    pub histogram: PolarityHistogram,
    pub aspects: Vec<AspectSummary>,
    pub top_positive: Vec<(String, f64)>,
    pub top_negative: Vec<(String, f64)>,
}

/// Runs every analysis over the model.
pub fn analyze(model: &TrainedModel, params: &AnalysisParams) -> AnalysisReport {
    let polarity = PolarityTable::compute(model);
    let histogram = PolarityHistogram::compute(&polarity, params.histogram_bins);
    let aspects = critical_aspects(model, params.pref_floor, params.ratio_threshold, params.top_n);
    let (top_positive, top_negative) = polarity_extremes(model, params.top_n);
    AnalysisReport {
        polarity,
        histogram,
        aspects,
        top_positive,
        top_negative,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

impl AnalysisReport {
    /// Writes the report as TSV files under `dir`: `polarity.tsv`,
    /// `aspects.tsv`, `top_words.tsv`, `polarity_extremes.tsv` and
    /// `polarity_histogram.tsv`.
    pub fn write_to_dir(&self, model: &TrainedModel, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let path = dir.join("polarity.tsv");
        let mut out = create(&path)?;
        writeln!(out, "word\tpolarity").map_err(|e| Error::io(&path, e))?;
        for (w, &value) in self.polarity.values().iter().enumerate() {
            writeln!(out, "{}\t{:.6}", model.vocabulary.word(w), value)
                .map_err(|e| Error::io(&path, e))?;
        }

        let path = dir.join("aspects.tsv");
        let mut out = create(&path)?;
        writeln!(out, "topic\tpreference\tsentiment\tcritical").map_err(|e| Error::io(&path, e))?;
        for aspect in &self.aspects {
            writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{}",
                aspect.topic, aspect.preference, aspect.sentiment, aspect.critical
            )
            .map_err(|e| Error::io(&path, e))?;
        }

        let path = dir.join("top_words.tsv");
        let mut out = create(&path)?;
        writeln!(out, "topic\trank\tword\tweight").map_err(|e| Error::io(&path, e))?;
        for aspect in &self.aspects {
            for (rank, (word, weight)) in aspect.top_words.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{:.6}", aspect.topic, rank + 1, word, weight)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }

        let path = dir.join("polarity_extremes.tsv");
        let mut out = create(&path)?;
        writeln!(out, "direction\trank\tword\tpolarity").map_err(|e| Error::io(&path, e))?;
        for (direction, list) in [("positive", &self.top_positive), ("negative", &self.top_negative)]
        {
            for (rank, (word, value)) in list.iter().enumerate() {
                writeln!(out, "{}\t{}\t{}\t{:.6}", direction, rank + 1, word, value)
                    .map_err(|e| Error::io(&path, e))?;
            }
        }

        let path = dir.join("polarity_histogram.tsv");
        let mut out = create(&path)?;
        writeln!(out, "bin_lo\tbin_hi\tcount").map_err(|e| Error::io(&path, e))?;
        for (i, &count) in self.histogram.counts.iter().enumerate() {
            writeln!(
                out,
                "{:.6}\t{:.6}\t{}",
                self.histogram.bin_edges[i],
                self.histogram.bin_edges[i + 1],
                count
            )
            .map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
