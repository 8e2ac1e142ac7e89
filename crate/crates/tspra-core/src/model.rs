//! Model core: hyperparameters, latent assignments, Chinese Restaurant
//! Franchise count tables, the preference/sentiment rating rule and point
//! estimation of the probability tables.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::Error;
use crate::Result;

/// Number of sentiment polarities: negative, neutral, positive.
pub const NUM_SENTIMENTS: usize = 3;
/// Number of preference strengths: weak, strong.
pub const NUM_PREFERENCES: usize = 2;

/// Word sentiment polarity. Stored order is (negative, neutral, positive)
/// = (0, 1, 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

impl Sentiment {
    pub const ALL: [Sentiment; NUM_SENTIMENTS] =
        [Sentiment::Negative, Sentiment::Neutral, Sentiment::Positive];

    pub fn index(self) -> usize {
        match self {
            Sentiment::Negative => 0,
            Sentiment::Neutral => 1,
            Sentiment::Positive => 2,
        }
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    /// The signed polarity value: -1, 0 or +1.
    pub fn value(self) -> i8 {
        match self {
            Sentiment::Negative => -1,
            Sentiment::Neutral => 0,
            Sentiment::Positive => 1,
        }
    }

    pub fn is_neutral(self) -> bool {
        matches!(self, Sentiment::Neutral)
    }
}

/// User preference strength for an aspect. Stored order is (weak, strong)
/// = (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preference {
    Weak,
    Strong,
}

impl Preference {
    pub const ALL: [Preference; NUM_PREFERENCES] = [Preference::Weak, Preference::Strong];

    pub fn index(self) -> usize {
        match self {
            Preference::Weak => 0,
            Preference::Strong => 1,
        }
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    pub fn is_strong(self) -> bool {
        matches!(self, Preference::Strong)
    }
}

/// Model hyperparameters. `gamma` and `alpha` are the franchise- and
/// review-level DP concentrations; `beta`, `eta` and `lambda` the Dirichlet
/// smoothing of topics, preferences and sentiments; `mu` the neutral rating
/// and `sigma2` the rating noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub sigma2: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma: 1.5,
            alpha: 1.0,
            beta: 0.5,
            eta: 0.5,
            lambda: 0.5,
            mu: 3.5,
            sigma2: 0.08,
        }
    }
}

impl HyperParams {
    /// Number of sentiment polarities; fixed.
    pub const S: usize = NUM_SENTIMENTS;
    /// Number of preference strengths; fixed.
    pub const U: usize = NUM_PREFERENCES;

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("sigma2", self.sigma2),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(1.0..=5.0).contains(&self.mu) {
            return Err(Error::InvalidParameter(format!(
                "mu must be in [1,5], got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// The association rule mapping a word's (preference, sentiment) to its
/// implied rating:
///
/// - strong + negative -> 1
/// - weak + negative -> (1 + mu) / 2
/// - strong + positive -> 5
/// - weak + positive -> (5 + mu) / 2
/// - neutral -> mu, regardless of preference
pub fn word_rating(preference: Preference, sentiment: Sentiment, mu: f64) -> f64 {
    match (sentiment, preference) {
        (Sentiment::Neutral, _) => mu,
        (Sentiment::Positive, Preference::Strong) => 5.0,
        (Sentiment::Positive, Preference::Weak) => (5.0 + mu) / 2.0,
        (Sentiment::Negative, Preference::Strong) => 1.0,
        (Sentiment::Negative, Preference::Weak) => (1.0 + mu) / 2.0,
    }
}

/// Mean of the non-neutral word ratings; `mu` when every word is neutral.
pub fn review_mean(word_ratings: &[f64], sentiments: &[Sentiment], mu: f64) -> f64 {
    debug_assert_eq!(word_ratings.len(), sentiments.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for (rating, sentiment) in word_ratings.iter().zip(sentiments) {
        if !sentiment.is_neutral() {
            sum += rating;
            count += 1;
        }
    }
    if count == 0 {
        mu
    } else {
        sum / count as f64
    }
}

/// Log of the unnormalized Gaussian rating factor, `-(r - rbar)^2 / (2
/// sigma2)`.
pub fn rating_log_likelihood(rating: f64, review_mean: f64, sigma2: f64) -> f64 {
    let d = rating - review_mean;
    -(d * d) / (2.0 * sigma2)
}

/// Running mean of a review's non-neutral word ratings with one word
/// removed, supporting cheap evaluation of candidate (preference,
/// sentiment) cells for that word.
#[derive(Debug, Clone, Copy)]
pub struct ReviewMeanDelta {
    sum_others: f64,
    count_others: usize,
    mu: f64,
}

impl ReviewMeanDelta {
    /// Builds the running mean over every word except position `exclude`.
    pub fn excluding(
        word_ratings: &[f64],
        sentiments: &[Sentiment],
        exclude: usize,
        mu: f64,
    ) -> Self {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, (rating, sentiment)) in word_ratings.iter().zip(sentiments).enumerate() {
            if i != exclude && !sentiment.is_neutral() {
                sum += rating;
                count += 1;
            }
        }
        ReviewMeanDelta {
            sum_others: sum,
            count_others: count,
            mu,
        }
    }

    /// Review mean when the excluded word takes the given candidate cell.
    pub fn mean_with(&self, preference: Preference, sentiment: Sentiment) -> f64 {
        if sentiment.is_neutral() {
            if self.count_others == 0 {
                self.mu
            } else {
                self.sum_others / self.count_others as f64
            }
        } else {
            let r = word_rating(preference, sentiment, self.mu);
            (self.sum_others + r) / (self.count_others + 1) as f64
        }
    }
}

/// Per-word and per-table latent assignments.
///
/// `table_of_word[d][i]` is a dense per-review table index,
/// `topic_of_table[d][t]` a stable topic handle. A word's topic is its
/// table's topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignments {
    pub table_of_word: Vec<Vec<usize>>,
    pub topic_of_table: Vec<Vec<usize>>,
    pub sentiment: Vec<Vec<Sentiment>>,
    pub preference: Vec<Vec<Preference>>,
    /// Cached rating implied by (preference, sentiment) via the
    /// association rule.
    pub word_rating: Vec<Vec<f64>>,
}

impl Assignments {
    pub fn topic_of_word(&self, doc: usize, pos: usize) -> usize {
        self.topic_of_table[doc][self.table_of_word[doc][pos]]
    }

    /// Review mean of document `doc` under the current assignments.
    pub fn review_mean(&self, doc: usize, mu: f64) -> f64 {
        review_mean(&self.word_rating[doc], &self.sentiment[doc], mu)
    }
}

/// CRF count tables: the collapsed representation of the global and
/// per-review topic measures.
///
/// Topic handles are stable; freed handles are recycled through a free
/// list and dead slots keep all-zero counts. Per-review table indices are
/// kept dense by the trainer.
#[derive(Debug, Clone)]
pub struct CountTables {
    /// Words at table t of review d.
    pub n_dt: Vec<Vec<u32>>,
    /// Tables serving topic k, indexed by topic handle.
    pub m_k: Vec<u32>,
    /// Total occupied tables.
    pub m_total: u32,
    /// Words of type w assigned topic k.
    pub l_kw: Vec<Vec<u32>>,
    /// Row sums of `l_kw`.
    pub l_k_total: Vec<u32>,
    /// Topic-word-sentiment counts.
    pub l_kws: Vec<Vec<[u32; NUM_SENTIMENTS]>>,
    /// Topic-author-preference counts.
    pub c_kxu: Vec<Vec<[u32; NUM_PREFERENCES]>>,
    /// Number of live topics.
    pub num_topics: usize,
    free_topics: Vec<usize>,
    num_words: usize,
    num_authors: usize,
}

impl PartialEq for CountTables {
    /// Count equality; free-list order is an allocation detail.
    fn eq(&self, other: &Self) -> bool {
        self.n_dt == other.n_dt
            && self.m_k == other.m_k
            && self.m_total == other.m_total
            && self.l_kw == other.l_kw
            && self.l_k_total == other.l_k_total
            && self.l_kws == other.l_kws
            && self.c_kxu == other.c_kxu
            && self.num_topics == other.num_topics
    }
}

impl CountTables {
    pub fn new(num_docs: usize, num_words: usize, num_authors: usize) -> Self {
        CountTables {
            n_dt: vec![Vec::new(); num_docs],
            m_k: Vec::new(),
            m_total: 0,
            l_kw: Vec::new(),
            l_k_total: Vec::new(),
            l_kws: Vec::new(),
            c_kxu: Vec::new(),
            num_topics: 0,
            free_topics: Vec::new(),
            num_words,
            num_authors,
        }
    }

    pub fn topic_capacity(&self) -> usize {
        self.m_k.len()
    }

    pub fn is_topic_live(&self, k: usize) -> bool {
        k < self.m_k.len() && self.m_k[k] > 0
    }

    /// Live topic handles in increasing order.
    pub fn live_topics(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m_k.len()).filter(|&k| self.m_k[k] > 0)
    }

    /// Takes a free slot or grows the tables by one topic. The new slot
    /// starts with zero counts and zero tables; the caller registers
    /// tables via `add_table`.
    pub fn alloc_topic(&mut self) -> usize {
        self.num_topics += 1;
        if let Some(k) = self.free_topics.pop() {
            k
        } else {
            self.m_k.push(0);
            self.l_kw.push(vec![0; self.num_words]);
            self.l_k_total.push(0);
            self.l_kws.push(vec![[0; NUM_SENTIMENTS]; self.num_words]);
            self.c_kxu.push(vec![[0; NUM_PREFERENCES]; self.num_authors]);
            self.m_k.len() - 1
        }
    }

    fn free_topic(&mut self, k: usize) {
        debug_assert_eq!(self.m_k[k], 0);
        debug_assert_eq!(self.l_k_total[k], 0);
        self.num_topics -= 1;
        self.free_topics.push(k);
    }

    /// Registers one more table serving topic `k`.
    pub fn add_table(&mut self, k: usize) {
        self.m_k[k] += 1;
        self.m_total += 1;
    }

    /// Unregisters a table serving topic `k`, freeing the topic when it
    /// becomes orphaned.
    pub fn remove_table(&mut self, k: usize) {
        debug_assert!(self.m_k[k] > 0);
        self.m_k[k] -= 1;
        self.m_total -= 1;
        if self.m_k[k] == 0 {
            self.free_topic(k);
        }
    }

    /// Adds one word observation (type, author, sentiment, preference)
    /// under topic `k`.
    pub fn add_word(
        &mut self,
        k: usize,
        word: usize,
        author: usize,
        sentiment: Sentiment,
        preference: Preference,
    ) {
        self.l_kw[k][word] += 1;
        self.l_k_total[k] += 1;
        self.l_kws[k][word][sentiment.index()] += 1;
        self.c_kxu[k][author][preference.index()] += 1;
    }

    /// Removes one word observation from topic `k`.
    pub fn remove_word(
        &mut self,
        k: usize,
        word: usize,
        author: usize,
        sentiment: Sentiment,
        preference: Preference,
    ) {
        debug_assert!(self.l_kw[k][word] > 0);
        self.l_kw[k][word] -= 1;
        self.l_k_total[k] -= 1;
        self.l_kws[k][word][sentiment.index()] -= 1;
        self.c_kxu[k][author][preference.index()] -= 1;
    }

    /// Smoothed topic-word ratio `(l_kw + beta) / (l_k. + V beta)`.
    pub fn phi_term(&self, k: usize, word: usize, beta: f64) -> f64 {
        (self.l_kw[k][word] as f64 + beta)
            / (self.l_k_total[k] as f64 + self.num_words as f64 * beta)
    }

    /// Smoothed sentiment ratio `(l_kws + lambda) / (l_kw. + S lambda)`.
    /// The group size is taken from the sentiment cells so the ratio stays
    /// a proper predictive while a word is decremented.
    pub fn pi_term(&self, k: usize, word: usize, sentiment: Sentiment, lambda: f64) -> f64 {
        let cells = &self.l_kws[k][word];
        let total: u32 = cells.iter().sum();
        (cells[sentiment.index()] as f64 + lambda)
            / (total as f64 + NUM_SENTIMENTS as f64 * lambda)
    }

    /// Smoothed preference ratio `(c_kxu + eta) / (c_kx. + U eta)`.
    pub fn psi_term(&self, k: usize, author: usize, preference: Preference, eta: f64) -> f64 {
        let cells = &self.c_kxu[k][author];
        let total: u32 = cells.iter().sum();
        (cells[preference.index()] as f64 + eta)
            / (total as f64 + NUM_PREFERENCES as f64 * eta)
    }
}

/// Rebuilds count tables from scratch out of the assignments.
///
/// The returned tables use the same topic handles as the assignments, with
/// at least `topic_capacity` slots so the result is comparable with
/// incrementally maintained tables.
pub fn recount_with_capacity(
    assign: &Assignments,
    corpus: &Corpus,
    topic_capacity: usize,
) -> Result<CountTables> {
    if assign.table_of_word.len() != corpus.reviews.len()
        || assign.topic_of_table.len() != corpus.reviews.len()
    {
        return Err(Error::InconsistentState(
            "assignments do not cover the corpus".into(),
        ));
    }
    let mut counts = CountTables::new(
        corpus.reviews.len(),
        corpus.num_words(),
        corpus.num_authors,
    );
    let max_handle = assign
        .topic_of_table
        .iter()
        .flat_map(|topics| topics.iter().copied())
        .max();
    let slots = topic_capacity.max(max_handle.map_or(0, |m| m + 1));
    for _ in 0..slots {
        counts.alloc_topic();
    }
    counts.num_topics = 0;
    counts.free_topics.clear();

    for (d, review) in corpus.reviews.iter().enumerate() {
        let num_tables = assign.topic_of_table[d].len();
        counts.n_dt[d] = vec![0; num_tables];
        for (i, &w) in review.tokens.iter().enumerate() {
            let t = *assign
                .table_of_word
                .get(d)
                .and_then(|doc| doc.get(i))
                .ok_or_else(|| {
                    Error::InconsistentState(format!("missing table assignment for word ({d},{i})"))
                })?;
            if t >= num_tables {
                return Err(Error::InconsistentState(format!(
                    "word ({d},{i}) references dangling table {t}"
                )));
            }
            let k = assign.topic_of_table[d][t];
            if k >= slots {
                return Err(Error::InconsistentState(format!(
                    "table ({d},{t}) references dangling topic {k}"
                )));
            }
            counts.n_dt[d][t] += 1;
            counts.add_word(
                k,
                w,
                review.author_index,
                assign.sentiment[d][i],
                assign.preference[d][i],
            );
        }
        for (t, &k) in assign.topic_of_table[d].iter().enumerate() {
            if counts.n_dt[d][t] == 0 {
                return Err(Error::InconsistentState(format!(
                    "table ({d},{t}) has no words"
                )));
            }
            counts.m_k[k] += 1;
            counts.m_total += 1;
        }
    }
    counts.num_topics = counts.m_k.iter().filter(|&&m| m > 0).count();
    for k in (0..counts.m_k.len()).rev() {
        if counts.m_k[k] == 0 {
            counts.free_topics.push(k);
        }
    }
    Ok(counts)
}

/// Rebuilds count tables sized to exactly fit the assignments.
pub fn recount(assign: &Assignments, corpus: &Corpus) -> Result<CountTables> {
    recount_with_capacity(assign, corpus, 0)
}

/// Full sampler state for one chain.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub corpus: Corpus,
    pub hyper: HyperParams,
    pub assign: Assignments,
    pub counts: CountTables,
    pub rng: ChaCha8Rng,
}

impl ModelState {
    /// Builds a consistent state from explicit assignments by recounting.
    /// Useful for oracle tests and diagnostics.
    pub fn from_assignments(
        corpus: Corpus,
        hyper: HyperParams,
        assign: Assignments,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        let counts = recount(&assign, &corpus)?;
        Ok(ModelState {
            corpus,
            hyper,
            assign,
            counts,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Verifies that the incrementally maintained counts equal a fresh
    /// recount, that marginal sums agree, and that cached word ratings
    /// match the association rule.
    pub fn verify(&self) -> Result<()> {
        let fresh = recount_with_capacity(&self.assign, &self.corpus, self.counts.topic_capacity())?;
        if fresh != self.counts {
            return Err(Error::InconsistentState(
                "incremental counts differ from recount".into(),
            ));
        }
        let c = &self.counts;
        for k in 0..c.topic_capacity() {
            let row: u32 = c.l_kw[k].iter().sum();
            if row != c.l_k_total[k] {
                return Err(Error::InconsistentState(format!(
                    "l_k_total mismatch for topic {k}"
                )));
            }
            for w in 0..self.corpus.num_words() {
                let s_sum: u32 = c.l_kws[k][w].iter().sum();
                if s_sum != c.l_kw[k][w] {
                    return Err(Error::InconsistentState(format!(
                        "sentiment cells do not sum to l_kw for topic {k}, word {w}"
                    )));
                }
            }
        }
        let m_sum: u32 = c.m_k.iter().sum();
        if m_sum != c.m_total {
            return Err(Error::InconsistentState("m_k do not sum to m_total".into()));
        }
        for (d, review) in self.corpus.reviews.iter().enumerate() {
            let words: u32 = c.n_dt[d].iter().sum();
            if words as usize != review.tokens.len() {
                return Err(Error::InconsistentState(format!(
                    "n_dt does not sum to the length of review {d}"
                )));
            }
            for (i, (&r, (&s, &u))) in self.assign.word_rating[d]
                .iter()
                .zip(self.assign.sentiment[d].iter().zip(&self.assign.preference[d]))
                .enumerate()
            {
                if r != word_rating(u, s, self.hyper.mu) {
                    return Err(Error::InconsistentState(format!(
                        "cached rating for word ({d},{i}) violates the association rule"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Components of the joint log score under the current state: word,
    /// sentiment and preference terms use the smoothed point estimates;
    /// the rating term is the Gaussian factor.
    pub fn log_score(&self) -> LogScore {
        let mut score = LogScore::default();
        let hyper = &self.hyper;
        for (d, review) in self.corpus.reviews.iter().enumerate() {
            for (i, &w) in review.tokens.iter().enumerate() {
                let k = self.assign.topic_of_word(d, i);
                score.word += self.counts.phi_term(k, w, hyper.beta).ln();
                score.sentiment += self
                    .counts
                    .pi_term(k, w, self.assign.sentiment[d][i], hyper.lambda)
                    .ln();
                score.preference += self
                    .counts
                    .psi_term(k, review.author_index, self.assign.preference[d][i], hyper.eta)
                    .ln();
            }
            let mean = self.assign.review_mean(d, hyper.mu);
            score.rating += rating_log_likelihood(review.rating, mean, hyper.sigma2);
        }
        score
    }
}

/// Joint log-score components reported in training progress logs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogScore {
    pub word: f64,
    pub sentiment: f64,
    pub preference: f64,
    pub rating: f64,
}

impl LogScore {
    pub fn total(&self) -> f64 {
        self.word + self.sentiment + self.preference + self.rating
    }
}

/// Point estimates of the probability tables plus frozen topic popularity.
/// Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub hyper: HyperParams,
    pub vocabulary: Vocabulary,
    pub num_authors: usize,
    /// Topic-word probabilities, K x V; rows sum to 1.
    pub phi: Vec<Vec<f64>>,
    /// Topic-word sentiment probabilities, K x V x S; cells sum to 1 per
    /// (topic, word).
    pub pi: Vec<Vec<[f64; NUM_SENTIMENTS]>>,
    /// Topic-author preference probabilities, K x X x U; cells sum to 1
    /// per (topic, author).
    pub psi: Vec<Vec<[f64; NUM_PREFERENCES]>>,
    /// Frozen table counts per (dense) topic.
    pub table_counts: Vec<u32>,
    /// Frozen total table count.
    pub total_tables: u32,
}

impl TrainedModel {
    pub fn num_topics(&self) -> usize {
        self.phi.len()
    }

    pub fn num_words(&self) -> usize {
        self.vocabulary.len()
    }
}

/// Estimates the probability tables from the current counts:
/// `phi = (l_kw + beta) / (l_k. + V beta)`,
/// `pi = (l_kws + lambda) / (l_kw. + S lambda)`,
/// `psi = (c_kxu + eta) / (c_kx. + U eta)`.
///
/// Topic handles are relabeled densely in increasing handle order.
pub fn estimate_parameters(state: &ModelState) -> TrainedModel {
    let hyper = state.hyper;
    let counts = &state.counts;
    let num_words = state.corpus.num_words();
    let num_authors = state.corpus.num_authors;

    let live: Vec<usize> = counts.live_topics().collect();
    let mut phi = Vec::with_capacity(live.len());
    let mut pi = Vec::with_capacity(live.len());
    let mut psi = Vec::with_capacity(live.len());
    let mut table_counts = Vec::with_capacity(live.len());
    for &k in &live {
        let mut phi_row = Vec::with_capacity(num_words);
        let mut pi_row = Vec::with_capacity(num_words);
        for w in 0..num_words {
            phi_row.push(counts.phi_term(k, w, hyper.beta));
            let mut cell = [0.0; NUM_SENTIMENTS];
            for s in Sentiment::ALL {
                cell[s.index()] = counts.pi_term(k, w, s, hyper.lambda);
            }
            pi_row.push(cell);
        }
        let mut psi_row = Vec::with_capacity(num_authors);
        for x in 0..num_authors {
            let mut cell = [0.0; NUM_PREFERENCES];
            for u in Preference::ALL {
                cell[u.index()] = counts.psi_term(k, x, u, hyper.eta);
            }
            psi_row.push(cell);
        }
        phi.push(phi_row);
        pi.push(pi_row);
        psi.push(psi_row);
        table_counts.push(counts.m_k[k]);
    }

    TrainedModel {
        hyper,
        vocabulary: state.corpus.vocabulary.clone(),
        num_authors,
        phi,
        pi,
        psi,
        table_counts,
        total_tables: counts.m_total,
    }
}

const MODEL_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    num_sentiments: usize,
    num_preferences: usize,
    sweep: Option<u64>,
    hyper: HyperParams,
    vocabulary: Vec<String>,
    num_authors: usize,
    phi: Vec<Vec<f64>>,
    pi: Vec<Vec<[f64; NUM_SENTIMENTS]>>,
    psi: Vec<Vec<[f64; NUM_PREFERENCES]>>,
    table_counts: Vec<u32>,
    total_tables: u32,
}

impl TrainedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.save_with_sweep(path, None)
    }

    /// Saves the model, optionally tagging the sweep it was taken at
    /// (used by checkpoints).
    pub fn save_with_sweep(&self, path: impl AsRef<Path>, sweep: Option<u64>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            num_sentiments: NUM_SENTIMENTS,
            num_preferences: NUM_PREFERENCES,
            sweep,
            hyper: self.hyper,
            vocabulary: self.vocabulary.words().to_vec(),
            num_authors: self.num_authors,
            phi: self.phi.clone(),
            pi: self.pi.clone(),
            psi: self.psi.clone(),
            table_counts: self.table_counts.clone(),
            total_tables: self.total_tables,
        };
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(out);
        serde_json::to_writer(&mut writer, &file)
            .map_err(|e| Error::format("model", path, e.to_string()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: ModelFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::format("model", path, e.to_string()))?;
        if parsed.version != MODEL_FILE_VERSION {
            return Err(Error::Version {
                what: "model",
                found: parsed.version,
                expected: MODEL_FILE_VERSION,
            });
        }
        if parsed.num_sentiments != NUM_SENTIMENTS || parsed.num_preferences != NUM_PREFERENCES {
            return Err(Error::format(
                "model",
                path,
                format!(
                    "unsupported dimensions S={}, U={}",
                    parsed.num_sentiments, parsed.num_preferences
                ),
            ));
        }
        Ok(TrainedModel {
            hyper: parsed.hyper,
            vocabulary: Vocabulary::from_words(parsed.vocabulary),
            num_authors: parsed.num_authors,
            phi: parsed.phi,
            pi: parsed.pi,
            psi: parsed.psi,
            table_counts: parsed.table_counts,
            total_tables: parsed.total_tables,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Review;
    use proptest::prelude::*;

    const MU: f64 = 3.5;

    #[test]
    fn word_rating_association_rule() {
        assert_eq!(word_rating(Preference::Strong, Sentiment::Positive, MU), 5.0);
        assert_eq!(word_rating(Preference::Weak, Sentiment::Negative, MU), 2.25);
        assert_eq!(word_rating(Preference::Weak, Sentiment::Neutral, MU), 3.5);
        assert_eq!(word_rating(Preference::Strong, Sentiment::Neutral, MU), 3.5);
        assert_eq!(word_rating(Preference::Strong, Sentiment::Negative, MU), 1.0);
        assert_eq!(word_rating(Preference::Weak, Sentiment::Positive, MU), 4.25);
    }

    proptest! {
        #[test]
        fn word_rating_monotone_in_mu(mu in 1.0f64..=5.0) {
            let strong_pos = word_rating(Preference::Strong, Sentiment::Positive, mu);
            let weak_pos = word_rating(Preference::Weak, Sentiment::Positive, mu);
            let neutral = word_rating(Preference::Weak, Sentiment::Neutral, mu);
            let weak_neg = word_rating(Preference::Weak, Sentiment::Negative, mu);
            let strong_neg = word_rating(Preference::Strong, Sentiment::Negative, mu);
            prop_assert!(strong_pos >= weak_pos);
            prop_assert!(weak_pos >= neutral);
            prop_assert!(neutral >= weak_neg);
            prop_assert!(weak_neg >= strong_neg);
            if mu > 1.0 && mu < 5.0 {
                prop_assert!(strong_pos > weak_pos);
                prop_assert!(weak_pos > neutral);
                prop_assert!(neutral > weak_neg);
                prop_assert!(weak_neg > strong_neg);
            }
        }

        #[test]
        fn neutral_rating_ignores_preference(mu in 1.0f64..=5.0) {
            prop_assert_eq!(
                word_rating(Preference::Weak, Sentiment::Neutral, mu),
                word_rating(Preference::Strong, Sentiment::Neutral, mu)
            );
        }
    }

    #[test]
    fn review_mean_excludes_neutral_words() {
        let ratings = [5.0, 3.5, 1.0];
        let sentiments = [Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative];
        assert_eq!(review_mean(&ratings, &sentiments, MU), 3.0);
    }

    #[test]
    fn review_mean_singleton() {
        assert_eq!(review_mean(&[5.0], &[Sentiment::Positive], MU), 5.0);
    }

    #[test]
    fn review_mean_all_neutral_falls_back_to_mu() {
        let sentiments = [Sentiment::Neutral, Sentiment::Neutral];
        assert_eq!(review_mean(&[3.5, 3.5], &sentiments, MU), MU);
    }

    #[test]
    fn rating_log_likelihood_values() {
        assert_eq!(rating_log_likelihood(4.0, 4.0, 0.08), 0.0);
        assert!((rating_log_likelihood(4.0, 3.6, 0.08) - (-1.0)).abs() < 1e-12);
        let single = rating_log_likelihood(4.0, 3.8, 0.08);
        let double = rating_log_likelihood(4.0, 3.6, 0.08);
        assert!((double / single - 4.0).abs() < 1e-12);
    }

    #[test]
    fn review_mean_delta_matches_full_recompute() {
        let ratings = [5.0, 3.5, 2.25, 1.0];
        let sentiments = [
            Sentiment::Positive,
            Sentiment::Neutral,
            Sentiment::Negative,
            Sentiment::Negative,
        ];
        for i in 0..4 {
            let delta = ReviewMeanDelta::excluding(&ratings, &sentiments, i, MU);
            for u in Preference::ALL {
                for s in Sentiment::ALL {
                    let mut r2 = ratings;
                    let mut s2 = sentiments;
                    r2[i] = word_rating(u, s, MU);
                    s2[i] = s;
                    let expect = review_mean(&r2, &s2, MU);
                    assert!((delta.mean_with(u, s) - expect).abs() < 1e-12);
                }
            }
        }
    }

    fn single_word_corpus() -> Corpus {
        Corpus {
            vocabulary: Vocabulary::from_words(vec!["battery".into(), "screen".into()]),
            reviews: vec![Review {
                review_id: "r0".into(),
                author_index: 0,
                rating: 5.0,
                tokens: vec![0],
            }],
            num_authors: 1,
            num_products: 1,
        }
    }

    #[test]
    fn recount_unit_tally() {
        let corpus = single_word_corpus();
        let assign = Assignments {
            table_of_word: vec![vec![0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Positive]],
            preference: vec![vec![Preference::Strong]],
            word_rating: vec![vec![5.0]],
        };
        let counts = recount(&assign, &corpus).unwrap();
        assert_eq!(counts.n_dt[0], vec![1]);
        assert_eq!(counts.m_k, vec![1]);
        assert_eq!(counts.m_total, 1);
        assert_eq!(counts.l_kw[0][0], 1);
        assert_eq!(counts.l_kws[0][0][Sentiment::Positive.index()], 1);
        assert_eq!(counts.c_kxu[0][0][Preference::Strong.index()], 1);
        assert_eq!(counts.num_topics, 1);
    }

    #[test]
    fn recount_empty_corpus() {
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec![]),
            reviews: vec![],
            num_authors: 0,
            num_products: 0,
        };
        let assign = Assignments {
            table_of_word: vec![],
            topic_of_table: vec![],
            sentiment: vec![],
            preference: vec![],
            word_rating: vec![],
        };
        let counts = recount(&assign, &corpus).unwrap();
        assert_eq!(counts.num_topics, 0);
        assert_eq!(counts.m_total, 0);
    }

    #[test]
    fn recount_rejects_dangling_references() {
        let corpus = single_word_corpus();
        let assign = Assignments {
            table_of_word: vec![vec![3]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Neutral]],
            preference: vec![vec![Preference::Weak]],
            word_rating: vec![vec![3.5]],
        };
        assert!(matches!(
            recount(&assign, &corpus),
            Err(Error::InconsistentState(_))
        ));
    }

    #[test]
    fn estimate_uniform_under_symmetric_prior() {
        // One topic serving one table of one word; phi over V=2 is not
        // uniform, but pi/psi cells with zero counts are.
        let corpus = single_word_corpus();
        let assign = Assignments {
            table_of_word: vec![vec![0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Neutral]],
            preference: vec![vec![Preference::Weak]],
            word_rating: vec![vec![3.5]],
        };
        let state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 0).unwrap();
        let model = estimate_parameters(&state);
        // Word "screen" has zero count: phi = beta / (1 + V beta).
        assert!((model.phi[0][1] - 0.5 / 2.0).abs() < 1e-12);
        // Unseen (topic, word) pair: uniform over S.
        let pi = model.pi[0][1];
        for s in 0..NUM_SENTIMENTS {
            assert!((pi[s] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_direct_substitution() {
        // l_kws = (+1: 3, 0: 1, -1: 0), lambda = 0.5 -> (0.5, 1.5, 3.5)/5.5
        // in storage order (negative, neutral, positive).
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into()]),
            reviews: vec![Review {
                review_id: "r0".into(),
                author_index: 0,
                rating: 5.0,
                tokens: vec![0, 0, 0, 0],
            }],
            num_authors: 1,
            num_products: 1,
        };
        let assign = Assignments {
            table_of_word: vec![vec![0, 0, 0, 0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![
                Sentiment::Positive,
                Sentiment::Positive,
                Sentiment::Positive,
                Sentiment::Neutral,
            ]],
            preference: vec![vec![Preference::Strong; 4]],
            word_rating: vec![vec![5.0, 5.0, 5.0, 3.5]],
        };
        let state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 0).unwrap();
        let model = estimate_parameters(&state);
        let pi = model.pi[0][0];
        assert!((pi[Sentiment::Negative.index()] - 0.5 / 5.5).abs() < 1e-12);
        assert!((pi[Sentiment::Neutral.index()] - 1.5 / 5.5).abs() < 1e-12);
        assert!((pi[Sentiment::Positive.index()] - 3.5 / 5.5).abs() < 1e-12);
    }

    #[test]
    fn estimate_rows_sum_to_one() {
        let corpus = single_word_corpus();
        let assign = Assignments {
            table_of_word: vec![vec![0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Positive]],
            preference: vec![vec![Preference::Strong]],
            word_rating: vec![vec![5.0]],
        };
        let state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 0).unwrap();
        let model = estimate_parameters(&state);
        for row in &model.phi {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        for row in &model.pi {
            for cell in row {
                let sum: f64 = cell.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        for row in &model.psi {
            for cell in row {
                let sum: f64 = cell.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let corpus = single_word_corpus();
        let assign = Assignments {
            table_of_word: vec![vec![0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Positive]],
            preference: vec![vec![Preference::Strong]],
            word_rating: vec![vec![5.0]],
        };
        let state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 0).unwrap();
        let model = estimate_parameters(&state);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = TrainedModel::load(&path).unwrap();
        assert_eq!(loaded.phi, model.phi);
        assert_eq!(loaded.pi, model.pi);
        assert_eq!(loaded.psi, model.psi);
        assert_eq!(loaded.hyper, model.hyper);
        assert_eq!(loaded.table_counts, model.table_counts);
    }

    #[test]
    fn hyper_validation() {
        let mut bad = HyperParams::default();
        bad.sigma2 = 0.0;
        assert!(bad.validate().is_err());
        let mut bad_mu = HyperParams::default();
        bad_mu.mu = 0.5;
        assert!(bad_mu.validate().is_err());
        assert!(HyperParams::default().validate().is_ok());
    }
}
