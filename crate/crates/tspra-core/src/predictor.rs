//! Held-out rating prediction.
//!
//! Each review is sampled with its own local table structure while the
//! trained tables (phi, pi, psi, topic popularity) stay frozen. The review
//! rating is unobserved and integrates out of every conditional, so the
//! samplers here carry no Gaussian factor and no dependence on the noise
//! variance; the prediction is the review mean of the sampled cells.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Review};
use crate::error::Error;
use crate::model::{
    review_mean, word_rating, Preference, Sentiment, TrainedModel, NUM_PREFERENCES, NUM_SENTIMENTS,
};
use crate::sampling::{normalize_log_weights, sample_probs};
use crate::trainer::all_cells;
use crate::Result;

/// Prediction schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PredictConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Average the review mean over post-burn-in sweeps instead of taking
    /// the final sweep.
    pub average_over_sweeps: bool,
    /// Keep the per-sweep review-mean trace for diagnostics.
    pub keep_trace: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            sweeps: 200,
            burn_in: 100,
            seed: 0,
            average_over_sweeps: true,
            keep_trace: false,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.burn_in >= self.sweeps {
            return Err(Error::InvalidParameter(format!(
                "prediction needs sweeps > burn_in >= 0, got sweeps={} burn_in={}",
                self.sweeps, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Predicted rating for one review.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub review_id: String,
    pub true_rating: f64,
    pub predicted_rating: f64,
    /// Every token fell outside the model vocabulary.
    pub oov: bool,
    #[serde(skip)]
    pub trace: Option<Vec<f64>>,
}

/// Topic served by a local table: a trained topic or a fresh one with
/// uniform word/sentiment/preference likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LocalTopic {
    Trained(usize),
    Fresh,
}

struct FrozenView<'a> {
    model: &'a TrainedModel,
    /// Author in the model index space, if known.
    author: Option<usize>,
}

impl FrozenView<'_> {
    fn phi(&self, topic: LocalTopic, w: usize) -> f64 {
        match topic {
            LocalTopic::Trained(k) => self.model.phi[k][w],
            LocalTopic::Fresh => 1.0 / self.model.num_words() as f64,
        }
    }

    fn pi(&self, topic: LocalTopic, w: usize, s: Sentiment) -> f64 {
        match topic {
            LocalTopic::Trained(k) => self.model.pi[k][w][s.index()],
            LocalTopic::Fresh => 1.0 / NUM_SENTIMENTS as f64,
        }
    }

    fn psi(&self, topic: LocalTopic, u: Preference) -> f64 {
        match (topic, self.author) {
            (LocalTopic::Trained(k), Some(x)) => self.model.psi[k][x][u.index()],
            _ => 1.0 / NUM_PREFERENCES as f64,
        }
    }
}

/// Per-review sampler state over the frozen model.
struct DocSampler<'a> {
    view: FrozenView<'a>,
    tokens: Vec<usize>,
    table_of_word: Vec<usize>,
    topic_of_table: Vec<LocalTopic>,
    occupancy: Vec<u32>,
    sentiment: Vec<Sentiment>,
    preference: Vec<Preference>,
    rating: Vec<f64>,
    mu: f64,
    alpha: f64,
    gamma: f64,
}

impl<'a> DocSampler<'a> {
    fn new(model: &'a TrainedModel, tokens: Vec<usize>, author: Option<usize>) -> Self {
        let n = tokens.len();
        let mu = model.hyper.mu;
        DocSampler {
            view: FrozenView { model, author },
            tokens,
            table_of_word: vec![usize::MAX; n],
            topic_of_table: Vec::new(),
            occupancy: Vec::new(),
            sentiment: vec![Sentiment::Neutral; n],
            preference: vec![Preference::Weak; n],
            rating: vec![mu; n],
            mu,
            alpha: model.hyper.alpha,
            gamma: model.hyper.gamma,
        }
    }

    /// Table candidates for a detached word: occupancy times the frozen
    /// word likelihood, plus the frozen franchise mixture for a new table.
    fn table_log_weights(&self, w: usize) -> (Vec<f64>, Vec<f64>) {
        let model = self.view.model;
        let mut topic_log_weights: Vec<f64> = (0..model.num_topics())
            .map(|k| (model.table_counts[k] as f64).ln() + model.phi[k][w].ln())
            .collect();
        topic_log_weights.push(self.gamma.ln() - (model.num_words() as f64).ln());
        let new_table = self.alpha.ln() + crate::sampling::log_sum_exp(&topic_log_weights)
            - (model.total_tables as f64 + self.gamma).ln();

        let mut table_log_weights: Vec<f64> = (0..self.occupancy.len())
            .map(|t| {
                (self.occupancy[t] as f64).ln() + self.view.phi(self.topic_of_table[t], w).ln()
            })
            .collect();
        table_log_weights.push(new_table);
        (table_log_weights, topic_log_weights)
    }

    fn detach_word(&mut self, i: usize) {
        let t = self.table_of_word[i];
        self.table_of_word[i] = usize::MAX;
        self.occupancy[t] -= 1;
        if self.occupancy[t] == 0 {
            let last = self.occupancy.len() - 1;
            if t != last {
                self.occupancy[t] = self.occupancy[last];
                self.topic_of_table[t] = self.topic_of_table[last];
                for seat in self.table_of_word.iter_mut() {
                    if *seat == last {
                        *seat = t;
                    }
                }
            }
            self.occupancy.pop();
            self.topic_of_table.pop();
        }
    }

    fn seat_word<R: Rng>(&mut self, i: usize, rng: &mut R) {
        let w = self.tokens[i];
        let (table_lw, topic_lw) = self.table_log_weights(w);
        let probs = normalize_log_weights(&table_lw);
        let idx = sample_probs(&probs, rng);
        let t = if idx + 1 < table_lw.len() {
            idx
        } else {
            let topic_probs = normalize_log_weights(&topic_lw);
            let topic_idx = sample_probs(&topic_probs, rng);
            let topic = if topic_idx < self.view.model.num_topics() {
                LocalTopic::Trained(topic_idx)
            } else {
                LocalTopic::Fresh
            };
            self.topic_of_table.push(topic);
            self.occupancy.push(0);
            self.occupancy.len() - 1
        };
        self.table_of_word[i] = t;
        self.occupancy[t] += 1;
    }

    /// Topic candidates for one table block under frozen parameters; the
    /// block's words keep their current cells.
    fn resample_table_topic<R: Rng>(&mut self, t: usize, rng: &mut R) {
        let model = self.view.model;
        let positions: Vec<usize> = (0..self.tokens.len())
            .filter(|&i| self.table_of_word[i] == t)
            .collect();
        let mut log_weights: Vec<f64> = Vec::with_capacity(model.num_topics() + 1);
        for k in 0..model.num_topics() {
            let topic = LocalTopic::Trained(k);
            let mut lw = (model.table_counts[k] as f64).ln();
            for &i in &positions {
                let w = self.tokens[i];
                lw += (self.view.phi(topic, w)
                    * self.view.psi(topic, self.preference[i])
                    * self.view.pi(topic, w, self.sentiment[i]))
                .ln();
            }
            log_weights.push(lw);
        }
        let block = positions.len() as f64;
        log_weights.push(
            self.gamma.ln()
                - block * (model.num_words() as f64).ln()
                - (NUM_PREFERENCES as f64).ln()
                - block * (NUM_SENTIMENTS as f64).ln(),
        );
        let probs = normalize_log_weights(&log_weights);
        let idx = sample_probs(&probs, rng);
        self.topic_of_table[t] = if idx < model.num_topics() {
            LocalTopic::Trained(idx)
        } else {
            LocalTopic::Fresh
        };
    }

    /// With the rating integrated out, the six-cell conditional reduces to
    /// the frozen preference and sentiment probabilities.
    fn resample_cell<R: Rng>(&mut self, i: usize, rng: &mut R) {
        let topic = self.topic_of_table[self.table_of_word[i]];
        let w = self.tokens[i];
        let mut probs = [0.0; NUM_PREFERENCES * NUM_SENTIMENTS];
        for (idx, (u, s)) in all_cells().into_iter().enumerate() {
            probs[idx] = self.view.psi(topic, u) * self.view.pi(topic, w, s);
        }
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let idx = sample_probs(&probs, rng);
        let (u, s) = all_cells()[idx];
        self.preference[i] = u;
        self.sentiment[i] = s;
        self.rating[i] = word_rating(u, s, self.mu);
    }

    fn init<R: Rng>(&mut self, rng: &mut R) {
        for i in 0..self.tokens.len() {
            self.seat_word(i, rng);
            let u = Preference::from_index(rng.gen_range(0..NUM_PREFERENCES));
            let s = Sentiment::from_index(rng.gen_range(0..NUM_SENTIMENTS));
            self.preference[i] = u;
            self.sentiment[i] = s;
            self.rating[i] = word_rating(u, s, self.mu);
        }
    }

    fn sweep<R: Rng>(&mut self, rng: &mut R) {
        for i in 0..self.tokens.len() {
            self.detach_word(i);
            self.seat_word(i, rng);
        }
        for t in 0..self.topic_of_table.len() {
            self.resample_table_topic(t, rng);
        }
        for i in 0..self.tokens.len() {
            self.resample_cell(i, rng);
        }
    }

    fn review_mean(&self) -> f64 {
        review_mean(&self.rating, &self.sentiment, self.mu)
    }

    #[cfg(test)]
    fn cells(&self) -> Vec<(Preference, Sentiment)> {
        self.preference
            .iter()
            .copied()
            .zip(self.sentiment.iter().copied())
            .collect()
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in s.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// RNG stream for a review: seeded by the run seed, stream keyed by the
/// review identity so batch results are independent of review order.
fn review_rng(seed: u64, review_id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(review_id));
    rng
}

/// Maps a review's tokens into the model vocabulary, dropping
/// out-of-vocabulary tokens. Identity when vocabularies coincide.
fn map_tokens(model: &TrainedModel, corpus_vocab: &crate::corpus::Vocabulary, review: &Review) -> Vec<usize> {
    if model.vocabulary == *corpus_vocab {
        return review.tokens.clone();
    }
    review
        .tokens
        .iter()
        .filter_map(|&t| model.vocabulary.id(corpus_vocab.word(t)))
        .collect()
}

fn predict_mapped(
    model: &TrainedModel,
    review: &Review,
    tokens: Vec<usize>,
    config: &PredictConfig,
) -> Prediction {
    let mu = model.hyper.mu;
    if tokens.is_empty() {
        return Prediction {
            review_id: review.review_id.clone(),
            true_rating: review.rating,
            predicted_rating: mu,
            oov: true,
            trace: None,
        };
    }
    let author = (review.author_index < model.num_authors).then_some(review.author_index);
    let mut rng = review_rng(config.seed, &review.review_id);
    let mut sampler = DocSampler::new(model, tokens, author);
    sampler.init(&mut rng);

    let mut trace = Vec::with_capacity(config.sweeps - config.burn_in);
    for sweep_idx in 1..=config.sweeps {
        sampler.sweep(&mut rng);
        if sweep_idx > config.burn_in {
            trace.push(sampler.review_mean());
        }
    }
    let raw = if config.average_over_sweeps {
        trace.iter().sum::<f64>() / trace.len() as f64
    } else {
        *trace.last().expect("at least one post-burn-in sweep")
    };
    Prediction {
        review_id: review.review_id.clone(),
        true_rating: review.rating,
        predicted_rating: raw.clamp(1.0, 5.0),
        oov: false,
        trace: config.keep_trace.then_some(trace),
    }
}

/// Predicts one review's rating. The review's tokens are assumed to be
/// ids in the model vocabulary.
pub fn predict(model: &TrainedModel, review: &Review, config: &PredictConfig) -> Result<Prediction> {
    config.validate()?;
    let tokens: Vec<usize> = review
        .tokens
        .iter()
        .copied()
        .filter(|&t| t < model.num_words())
        .collect();
    Ok(predict_mapped(model, review, tokens, config))
}

/// Predicts every review of a corpus. Per-review RNG streams are keyed by
/// review identity, so results do not depend on review order.
pub fn predict_batch(
    model: &TrainedModel,
    corpus: &Corpus,
    config: &PredictConfig,
) -> Result<Vec<Prediction>> {
    config.validate()?;
    Ok(corpus
        .reviews
        .iter()
        .map(|review| {
            let tokens = map_tokens(model, &corpus.vocabulary, review);
            predict_mapped(model, review, tokens, config)
        })
        .collect())
}

/// Writes predictions as CSV: `review_id,true_rating,predicted_rating,oov`.
pub fn save_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    for p in predictions {
        writer
            .serialize(p)
            .map_err(|e| Error::format("predictions", path, e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a predictions CSV back.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for record in reader.deserialize() {
        let p: Prediction =
            record.map_err(|e| Error::format("predictions", path, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}
