//! Synthetic corpora drawn from the model's own generative process, with
//! the ground-truth tables and assignments kept for recovery tests.
//!
//! Topics can be planted (fixed tables) or sampled from the priors. With
//! planted topics the franchise-level DP is truncated to a fixed pool:
//! new tables pick topic k with weight `m_k + gamma / K`, so `gamma` still
//! controls how quickly unused pool topics are visited.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Review, SplitCorpus, Vocabulary};
use crate::error::Error;
use crate::model::{
    review_mean, word_rating, Assignments, HyperParams, ModelState, Preference, Sentiment,
    NUM_PREFERENCES, NUM_SENTIMENTS,
};
use crate::sampling::sample_probs;
use crate::Result;

/// Ground-truth probability tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTables {
    /// K x V topic-word distributions.
    pub phi: Vec<Vec<f64>>,
    /// K x V x S sentiment distributions.
    pub pi: Vec<Vec<[f64; NUM_SENTIMENTS]>>,
    /// K x X x U preference distributions.
    pub psi: Vec<Vec<[f64; NUM_PREFERENCES]>>,
}

impl PlantedTables {
    /// Average strong-preference probability of aspect `k` over authors.
    pub fn preference_level(&self, k: usize) -> f64 {
        let total: f64 = self.psi[k]
            .iter()
            .map(|cell| cell[Preference::Strong.index()])
            .sum();
        total / self.psi[k].len() as f64
    }

    /// Normalized positive-minus-negative sentiment mass of aspect `k`
    /// over the vocabulary.
    pub fn sentiment_level(&self, k: usize) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for cell in &self.pi[k] {
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
}

/// Specification of a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_topics: usize,
    pub num_words: usize,
    pub num_authors: usize,
    pub num_reviews: usize,
    pub doc_length_mean: f64,
    pub doc_length_min: usize,
    pub hyper: HyperParams,
    /// Fixed ground-truth tables; sampled from the priors when absent.
    pub planted: Option<PlantedTables>,
    /// Per-author share of reviews tagged as held-out test data.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            num_topics: 3,
            num_words: 50,
            num_authors: 10,
            num_reviews: 300,
            doc_length_mean: 40.0,
            doc_length_min: 5,
            hyper: HyperParams::default(),
            planted: None,
            holdout_fraction: 0.0,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.num_topics == 0 {
            return Err(Error::InvalidParameter("num_topics must be >= 1".into()));
        }
        if self.num_words < 2 {
            return Err(Error::InvalidParameter("num_words must be >= 2".into()));
        }
        if self.num_authors == 0 || self.num_reviews == 0 {
            return Err(Error::InvalidParameter(
                "num_authors and num_reviews must be >= 1".into(),
            ));
        }
        if self.doc_length_min == 0 || self.doc_length_mean <= 0.0 {
            return Err(Error::InvalidParameter(
                "doc lengths must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidParameter(format!(
                "holdout_fraction must be in [0,1), got {}",
                self.holdout_fraction
            )));
        }
        if let Some(tables) = &self.planted {
            let (k, v, x) = (self.num_topics, self.num_words, self.num_authors);
            if tables.phi.len() != k
                || tables.pi.len() != k
                || tables.psi.len() != k
                || tables.phi.iter().any(|row| row.len() != v)
                || tables.pi.iter().any(|row| row.len() != v)
                || tables.psi.iter().any(|row| row.len() != x)
            {
                return Err(Error::InvalidParameter(
                    "planted table dimensions do not match the spec".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self)
            .map_err(|e| Error::format("generator spec", path, e.to_string()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let spec: GenSpec = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::format("generator spec", path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything the generator knows that a trained model must rediscover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tables: PlantedTables,
    pub table_of_word: Vec<Vec<usize>>,
    pub topic_of_table: Vec<Vec<usize>>,
    pub sentiment: Vec<Vec<Sentiment>>,
    pub preference: Vec<Vec<Preference>>,
    pub word_rating: Vec<Vec<f64>>,
    /// Per-review mean of non-neutral word ratings.
    pub review_mean: Vec<f64>,
    /// Ratings before clamping to [1,5].
    pub rating_pre_clamp: Vec<f64>,
}

/// A generated corpus with its ground truth and train/test tagging.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: GroundTruth,
    /// Reviews tagged as held-out test data.
    pub test_mask: Vec<bool>,
    /// Hyperparameters the corpus was generated with.
    pub hyper: HyperParams,
}

impl SyntheticCorpus {
    /// Train/test view honoring the generation-time holdout tagging.
    pub fn split(&self) -> SplitCorpus {
        let pick = |want_test: bool| Corpus {
            vocabulary: self.corpus.vocabulary.clone(),
            reviews: self
                .corpus
                .reviews
                .iter()
                .zip(&self.test_mask)
                .filter(|(_, &is_test)| is_test == want_test)
                .map(|(r, _)| r.clone())
                .collect(),
            num_authors: self.corpus.num_authors,
            num_products: self.corpus.num_products,
        };
        SplitCorpus::new(pick(false), pick(true))
    }

    /// Recount-style verification that the generated assignments satisfy
    /// the count-table invariants.
    pub fn verify_truth(&self) -> Result<()> {
        let assign = Assignments {
            table_of_word: self.truth.table_of_word.clone(),
            topic_of_table: self.truth.topic_of_table.clone(),
            sentiment: self.truth.sentiment.clone(),
            preference: self.truth.preference.clone(),
            word_rating: self.truth.word_rating.clone(),
        };
        let state = ModelState::from_assignments(self.corpus.clone(), self.hyper, assign, 0)?;
        state.verify()
    }

    pub fn save_truth(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, &self.truth)
            .map_err(|e| Error::format("ground truth", path, e.to_string()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn sample_simplex<R: Rng>(rng: &mut R, concentration: f64, len: usize) -> Vec<f64> {
    let dist = rand_distr::Dirichlet::new_with_size(concentration, len)
        .expect("valid Dirichlet parameters");
    dist.sample(rng)
}

fn materialize_tables(spec: &GenSpec, rng: &mut ChaCha8Rng) -> PlantedTables {
    if let Some(tables) = &spec.planted {
        return tables.clone();
    }
    let hyper = &spec.hyper;
    let mut phi = Vec::with_capacity(spec.num_topics);
    let mut pi = Vec::with_capacity(spec.num_topics);
    let mut psi = Vec::with_capacity(spec.num_topics);
    for _ in 0..spec.num_topics {
        phi.push(sample_simplex(rng, hyper.beta, spec.num_words));
        let mut pi_row = Vec::with_capacity(spec.num_words);
        for _ in 0..spec.num_words {
            let cell = sample_simplex(rng, hyper.lambda, NUM_SENTIMENTS);
            pi_row.push([cell[0], cell[1], cell[2]]);
        }
        pi.push(pi_row);
        let mut psi_row = Vec::with_capacity(spec.num_authors);
        for _ in 0..spec.num_authors {
            let cell = sample_simplex(rng, hyper.eta, NUM_PREFERENCES);
            psi_row.push([cell[0], cell[1]]);
        }
        psi.push(psi_row);
    }
    PlantedTables { phi, pi, psi }
}

/// Samples a corpus from the generative process with the given spec.
pub fn generate(spec: &GenSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tables = materialize_tables(spec, &mut rng);
    let hyper = &spec.hyper;

    let width = spec.num_words.to_string().len();
    let vocabulary = Vocabulary::from_words(
        (0..spec.num_words)
            .map(|w| format!("w{w:0width$}"))
            .collect(),
    );

    let poisson = Poisson::new(spec.doc_length_mean)
        .map_err(|_| Error::InvalidParameter("bad doc_length_mean".into()))?;
    let noise = Normal::new(0.0, hyper.sigma2.sqrt())
        .map_err(|_| Error::InvalidParameter("bad sigma2".into()))?;

    // Franchise-level table counts over the fixed topic pool.
    let mut pool_tables = vec![0u64; spec.num_topics];
    let mut pool_total = 0u64;

    let mut reviews = Vec::with_capacity(spec.num_reviews);
    let mut truth = GroundTruth {
        tables: tables.clone(),
        table_of_word: Vec::with_capacity(spec.num_reviews),
        topic_of_table: Vec::with_capacity(spec.num_reviews),
        sentiment: Vec::with_capacity(spec.num_reviews),
        preference: Vec::with_capacity(spec.num_reviews),
        word_rating: Vec::with_capacity(spec.num_reviews),
        review_mean: Vec::with_capacity(spec.num_reviews),
        rating_pre_clamp: Vec::with_capacity(spec.num_reviews),
    };

    for d in 0..spec.num_reviews {
        let author = d % spec.num_authors;
        let length = (poisson.sample(&mut rng) as usize).max(spec.doc_length_min);

        let mut table_topics: Vec<usize> = Vec::new();
        let mut occupancy: Vec<f64> = Vec::new();
        let mut table_of_word = Vec::with_capacity(length);
        let mut tokens = Vec::with_capacity(length);
        let mut sentiments = Vec::with_capacity(length);
        let mut preferences = Vec::with_capacity(length);
        let mut ratings = Vec::with_capacity(length);

        for _ in 0..length {
            // Review-level CRP over tables.
            let mut weights = occupancy.clone();
            weights.push(hyper.alpha);
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            let t = sample_probs(&weights, &mut rng);
            if t == table_topics.len() {
                // New table: truncated franchise draw over the pool.
                let mut topic_weights: Vec<f64> = pool_tables
                    .iter()
                    .map(|&m| m as f64 + hyper.gamma / spec.num_topics as f64)
                    .collect();
                let topic_total = pool_total as f64 + hyper.gamma;
                for w in &mut topic_weights {
                    *w /= topic_total;
                }
                let k = sample_probs(&topic_weights, &mut rng);
                pool_tables[k] += 1;
                pool_total += 1;
                table_topics.push(k);
                occupancy.push(0.0);
            }
            occupancy[t] += 1.0;
            table_of_word.push(t);

            let k = table_topics[t];
            let w = sample_probs(&tables.phi[k], &mut rng);
            tokens.push(w);
            let s = Sentiment::from_index(sample_probs(&tables.pi[k][w], &mut rng));
            let u = Preference::from_index(sample_probs(&tables.psi[k][author], &mut rng));
            sentiments.push(s);
            preferences.push(u);
            ratings.push(word_rating(u, s, hyper.mu));
        }

        let mean = review_mean(&ratings, &sentiments, hyper.mu);
        let pre_clamp = mean + noise.sample(&mut rng);
        let rating = pre_clamp.clamp(1.0, 5.0);

        reviews.push(Review {
            review_id: format!("synth-{d:06}"),
            author_index: author,
            rating,
            tokens,
        });
        truth.table_of_word.push(table_of_word);
        truth.topic_of_table.push(table_topics);
        truth.sentiment.push(sentiments);
        truth.preference.push(preferences);
        truth.word_rating.push(ratings);
        truth.review_mean.push(mean);
        truth.rating_pre_clamp.push(pre_clamp);
    }

    // Per-author holdout tagging: the earliest reviews train, the rest
    // test.
    let mut test_mask = vec![false; spec.num_reviews];
    if spec.holdout_fraction > 0.0 {
        for author in 0..spec.num_authors {
            let owned: Vec<usize> = (0..spec.num_reviews)
                .filter(|d| d % spec.num_authors == author)
                .collect();
            let train_n =
                ((1.0 - spec.holdout_fraction) * owned.len() as f64).ceil() as usize;
            for &d in owned.iter().skip(train_n) {
                test_mask[d] = true;
            }
        }
    }

    Ok(SyntheticCorpus {
        corpus: Corpus {
            vocabulary,
            reviews,
            num_authors: spec.num_authors,
            num_products: 1,
        },
        truth,
        test_mask,
        hyper: spec.hyper,
    })
}

/// Non-neutral sentiment mass used for planted aspect profiles.
const PLANT_NON_NEUTRAL_MASS: f64 = 0.7;

/// Returns a spec whose planted tables give aspect `k` the requested
/// preference and sentiment levels, exactly under the aspect-level
/// formulas: every author gets strong-preference probability
/// `preference_level`, every word the sentiment profile implied by
/// `sentiment_level`.
pub fn plant_critical_aspect(
    spec: &GenSpec,
    aspect: usize,
    preference_level: f64,
    sentiment_level: f64,
) -> Result<GenSpec> {
    spec.validate()?;
    if aspect >= spec.num_topics {
        return Err(Error::InvalidParameter(format!(
            "aspect {aspect} outside the {}-topic pool",
            spec.num_topics
        )));
    }
    if !(0.0..=1.0).contains(&preference_level) {
        return Err(Error::InfeasiblePlant(format!(
            "preference level {preference_level} outside [0,1]"
        )));
    }
    if !(-1.0..=1.0).contains(&sentiment_level) {
        return Err(Error::InfeasiblePlant(format!(
            "sentiment level {sentiment_level} outside [-1,1]"
        )));
    }

    let mut out = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tables = materialize_tables(spec, &mut rng);

    for cell in &mut tables.psi[aspect] {
        cell[Preference::Weak.index()] = 1.0 - preference_level;
        cell[Preference::Strong.index()] = preference_level;
    }
    let positive = PLANT_NON_NEUTRAL_MASS * (1.0 + sentiment_level) / 2.0;
    let negative = PLANT_NON_NEUTRAL_MASS * (1.0 - sentiment_level) / 2.0;
    for cell in &mut tables.pi[aspect] {
        cell[Sentiment::Negative.index()] = negative;
        cell[Sentiment::Neutral.index()] = 1.0 - PLANT_NON_NEUTRAL_MASS;
        cell[Sentiment::Positive.index()] = positive;
    }

    debug_assert!((tables.preference_level(aspect) - preference_level).abs() < 0.02);
    debug_assert!((tables.sentiment_level(aspect) - sentiment_level).abs() < 0.02);
    out.planted = Some(tables);
    Ok(out)
}
