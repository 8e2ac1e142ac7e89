//! Collapsed Gibbs training over the Chinese Restaurant Franchise.
//!
//! One sweep visits every review three times: re-seat each word at a table
//! (marginalizing the word's own preference/sentiment over all six cells),
//! re-draw each table's topic (conditioned on the current cells, where the
//! rating factor cancels), and re-draw each word's joint
//! (sentiment, preference) cell.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::Error;
use crate::model::{
    rating_log_likelihood, word_rating, Assignments, CountTables, HyperParams, ModelState,
    Preference, ReviewMeanDelta, Sentiment, NUM_PREFERENCES, NUM_SENTIMENTS,
};
use crate::sampling::{log_sum_exp, normalize_log_weights, sample_probs};
use crate::Result;

pub(crate) const NUM_CELLS: usize = NUM_PREFERENCES * NUM_SENTIMENTS;

/// All (preference, sentiment) cells in storage order.
pub fn all_cells() -> [(Preference, Sentiment); NUM_CELLS] {
    let mut cells = [(Preference::Weak, Sentiment::Negative); NUM_CELLS];
    for u in Preference::ALL {
        for s in Sentiment::ALL {
            cells[u.index() * NUM_SENTIMENTS + s.index()] = (u, s);
        }
    }
    cells
}

/// Training schedule.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Observer/checkpoint interval in sweeps; 0 disables.
    pub checkpoint_every: usize,
    /// Run a full recount check after every sweep.
    pub debug_invariants: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sweeps: 1000,
            burn_in: 500,
            seed: 0,
            checkpoint_every: 100,
            debug_invariants: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps > 0 && self.burn_in >= self.sweeps {
            return Err(Error::InvalidParameter(format!(
                "burn_in ({}) must be below sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        if self.sweeps == 0 && self.burn_in > 0 {
            return Err(Error::InvalidParameter(
                "burn_in must be 0 when sweeps is 0".into(),
            ));
        }
        Ok(())
    }
}

/// Initializes a chain: words are seated sequentially by the table
/// conditional given all previously initialized words, sentiment and
/// preference start uniformly at random, and word ratings follow the
/// association rule.
pub fn init_state(corpus: &Corpus, hyper: HyperParams, seed: u64) -> Result<ModelState> {
    hyper.validate()?;
    if corpus.reviews.is_empty() {
        return Err(Error::EmptyCorpus("cannot train on an empty corpus".into()));
    }
    let num_docs = corpus.reviews.len();
    let assign = Assignments {
        table_of_word: corpus
            .reviews
            .iter()
            .map(|r| vec![usize::MAX; r.tokens.len()])
            .collect(),
        topic_of_table: vec![Vec::new(); num_docs],
        sentiment: corpus
            .reviews
            .iter()
            .map(|r| vec![Sentiment::Neutral; r.tokens.len()])
            .collect(),
        preference: corpus
            .reviews
            .iter()
            .map(|r| vec![Preference::Weak; r.tokens.len()])
            .collect(),
        word_rating: corpus
            .reviews
            .iter()
            .map(|r| vec![hyper.mu; r.tokens.len()])
            .collect(),
    };
    let counts = CountTables::new(num_docs, corpus.num_words(), corpus.num_authors);
    let mut state = ModelState {
        corpus: corpus.clone(),
        hyper,
        assign,
        counts,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    for d in 0..num_docs {
        for i in 0..state.corpus.reviews[d].tokens.len() {
            let proposal = propose_table(&state, d, i);
            let choice = sample_table_choice(&proposal, &mut state.rng);
            let u = Preference::from_index(state.rng.gen_range(0..NUM_PREFERENCES));
            let s = Sentiment::from_index(state.rng.gen_range(0..NUM_SENTIMENTS));
            state.assign.sentiment[d][i] = s;
            state.assign.preference[d][i] = u;
            state.assign.word_rating[d][i] = word_rating(u, s, state.hyper.mu);
            seat_word(&mut state, d, i, choice);
        }
    }
    Ok(state)
}

/// Where a re-seated word lands: an existing table, or a new table serving
/// an existing or a fresh topic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableChoice {
    Existing(usize),
    NewTable(TopicChoice),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicChoice {
    Existing(usize),
    Fresh,
}

/// Candidate weights for re-seating one detached word.
///
/// `table_log_weights` has one entry per existing table of the review plus
/// a final entry for opening a new table; `topic_log_weights` mixes the
/// live topics (aligned with `topics`) plus a final fresh-topic entry, and
/// drives the topic draw when the new table wins.
#[derive(Debug, Clone)]
pub struct TableProposal {
    pub table_log_weights: Vec<f64>,
    pub topics: Vec<usize>,
    pub topic_log_weights: Vec<f64>,
}

/// Per-word Gaussian rating factors, shared across candidate topics.
struct CellGauss {
    /// `exp(g_cell - g_max)` for the six cells.
    shifted: [f64; NUM_CELLS],
    g_max: f64,
}

impl CellGauss {
    fn compute(delta: &ReviewMeanDelta, observed_rating: f64, sigma2: f64) -> Self {
        let mut g = [0.0; NUM_CELLS];
        for (idx, (u, s)) in all_cells().into_iter().enumerate() {
            let mean = delta.mean_with(u, s);
            g[idx] = rating_log_likelihood(observed_rating, mean, sigma2);
        }
        let g_max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut shifted = [0.0; NUM_CELLS];
        for idx in 0..NUM_CELLS {
            shifted[idx] = (g[idx] - g_max).exp();
        }
        CellGauss { shifted, g_max }
    }

    fn sum(&self) -> f64 {
        self.shifted.iter().sum()
    }
}

/// Log likelihood of observing (word, rating) under topic `k` with the
/// word's own (preference, sentiment) summed out over the six cells.
fn word_log_f(state: &ModelState, k: usize, word: usize, author: usize, gauss: &CellGauss) -> f64 {
    let hyper = &state.hyper;
    let counts = &state.counts;
    let mut mix = 0.0;
    for (idx, (u, s)) in all_cells().into_iter().enumerate() {
        let psi = counts.psi_term(k, author, u, hyper.eta);
        let pi = counts.pi_term(k, word, s, hyper.lambda);
        mix += psi * pi * gauss.shifted[idx];
    }
    counts.phi_term(k, word, hyper.beta).ln() + mix.ln() + gauss.g_max
}

/// The fresh-topic analogue: uniform word, preference and sentiment terms.
fn word_log_f_fresh(state: &ModelState, gauss: &CellGauss) -> f64 {
    let v = state.corpus.num_words() as f64;
    -(v.ln()) - (NUM_PREFERENCES as f64).ln() - (NUM_SENTIMENTS as f64).ln()
        + gauss.sum().ln()
        + gauss.g_max
}

/// Computes the table conditional for word `(d, i)`.
///
/// The word must be detached (its counts removed, e.g. via
/// [`detach_word`]); existing-table weights are proportional to the table
/// occupancy times the topic likelihood, the new-table weight to the
/// franchise mixture over live and fresh topics.
pub fn propose_table(state: &ModelState, d: usize, i: usize) -> TableProposal {
    let review = &state.corpus.reviews[d];
    let word = review.tokens[i];
    let author = review.author_index;
    let hyper = &state.hyper;
    let counts = &state.counts;

    let delta = ReviewMeanDelta::excluding(
        &state.assign.word_rating[d],
        &state.assign.sentiment[d],
        i,
        hyper.mu,
    );
    let gauss = CellGauss::compute(&delta, review.rating, hyper.sigma2);

    let topics: Vec<usize> = counts.live_topics().collect();
    let log_f: Vec<f64> = topics
        .iter()
        .map(|&k| word_log_f(state, k, word, author, &gauss))
        .collect();
    let log_f_fresh = word_log_f_fresh(state, &gauss);

    // Franchise mixture for a new table: existing topics weighted by their
    // table counts, the fresh topic by gamma.
    let mut topic_log_weights: Vec<f64> = topics
        .iter()
        .zip(&log_f)
        .map(|(&k, &lf)| (counts.m_k[k] as f64).ln() + lf)
        .collect();
    topic_log_weights.push(hyper.gamma.ln() + log_f_fresh);
    let new_table_log_weight = hyper.alpha.ln() + log_sum_exp(&topic_log_weights)
        - (counts.m_total as f64 + hyper.gamma).ln();

    let num_tables = state.assign.topic_of_table[d].len();
    let mut table_log_weights = Vec::with_capacity(num_tables + 1);
    for t in 0..num_tables {
        let k = state.assign.topic_of_table[d][t];
        let topic_slot = topics.binary_search(&k).expect("table topic is live");
        table_log_weights.push((counts.n_dt[d][t] as f64).ln() + log_f[topic_slot]);
    }
    table_log_weights.push(new_table_log_weight);

    TableProposal {
        table_log_weights,
        topics,
        topic_log_weights,
    }
}

fn sample_table_choice<R: Rng>(proposal: &TableProposal, rng: &mut R) -> TableChoice {
    let probs = normalize_log_weights(&proposal.table_log_weights);
    let idx = sample_probs(&probs, rng);
    if idx + 1 < proposal.table_log_weights.len() {
        TableChoice::Existing(idx)
    } else {
        let topic_probs = normalize_log_weights(&proposal.topic_log_weights);
        let topic_idx = sample_probs(&topic_probs, rng);
        if topic_idx < proposal.topics.len() {
            TableChoice::NewTable(TopicChoice::Existing(proposal.topics[topic_idx]))
        } else {
            TableChoice::NewTable(TopicChoice::Fresh)
        }
    }
}

/// Removes word `(d, i)` from its table and from the count tables. An
/// emptied table is removed (the review's last table slides into its
/// slot), and an orphaned topic is freed.
pub fn detach_word(state: &mut ModelState, d: usize, i: usize) {
    let review = &state.corpus.reviews[d];
    let word = review.tokens[i];
    let author = review.author_index;
    let t = state.assign.table_of_word[d][i];
    let k = state.assign.topic_of_table[d][t];

    state.counts.remove_word(
        k,
        word,
        author,
        state.assign.sentiment[d][i],
        state.assign.preference[d][i],
    );
    state.assign.table_of_word[d][i] = usize::MAX;
    state.counts.n_dt[d][t] -= 1;
    if state.counts.n_dt[d][t] == 0 {
        state.counts.remove_table(k);
        let last = state.counts.n_dt[d].len() - 1;
        if t != last {
            state.counts.n_dt[d][t] = state.counts.n_dt[d][last];
            state.assign.topic_of_table[d][t] = state.assign.topic_of_table[d][last];
            for seat in state.assign.table_of_word[d].iter_mut() {
                if *seat == last {
                    *seat = t;
                }
            }
        }
        state.counts.n_dt[d].pop();
        state.assign.topic_of_table[d].pop();
    }
}

/// Seats a detached word according to the sampled choice and restores its
/// counts under the landing topic with its current cell.
pub fn seat_word(state: &mut ModelState, d: usize, i: usize, choice: TableChoice) {
    let review = &state.corpus.reviews[d];
    let word = review.tokens[i];
    let author = review.author_index;
    let t = match choice {
        TableChoice::Existing(t) => t,
        TableChoice::NewTable(topic_choice) => {
            let k = match topic_choice {
                TopicChoice::Existing(k) => k,
                TopicChoice::Fresh => state.counts.alloc_topic(),
            };
            state.counts.add_table(k);
            state.counts.n_dt[d].push(0);
            state.assign.topic_of_table[d].push(k);
            state.counts.n_dt[d].len() - 1
        }
    };
    state.assign.table_of_word[d][i] = t;
    state.counts.n_dt[d][t] += 1;
    let k = state.assign.topic_of_table[d][t];
    state.counts.add_word(
        k,
        word,
        author,
        state.assign.sentiment[d][i],
        state.assign.preference[d][i],
    );
}

/// One Gibbs update of the table index of word `(d, i)`.
pub fn resample_table(state: &mut ModelState, d: usize, i: usize) {
    detach_word(state, d, i);
    let proposal = propose_table(state, d, i);
    let choice = sample_table_choice(&proposal, &mut state.rng);
    seat_word(state, d, i, choice);
}

/// Candidate weights for re-drawing the topic of one detached table
/// block: live topics (aligned with `topics`) plus a final fresh-topic
/// entry.
#[derive(Debug, Clone)]
pub struct TopicProposal {
    pub topics: Vec<usize>,
    pub log_weights: Vec<f64>,
}

/// Computes the topic conditional for a detached table block of review
/// `d` holding the given word positions (see [`detach_table_block`]).
///
/// Weights multiply, over the block's words, the smoothed word, preference
/// and sentiment ratios at the words' current cells; the rating factor is
/// identical across candidate topics and cancels.
pub fn propose_table_topic(state: &ModelState, d: usize, positions: &[usize]) -> TopicProposal {
    let review = &state.corpus.reviews[d];
    let author = review.author_index;
    let hyper = &state.hyper;
    let counts = &state.counts;

    let topics: Vec<usize> = counts.live_topics().collect();
    let mut log_weights = Vec::with_capacity(topics.len() + 1);
    for &k in &topics {
        let mut lw = (counts.m_k[k] as f64).ln();
        for &i in positions {
            let word = review.tokens[i];
            let term = counts.phi_term(k, word, hyper.beta)
                * counts.psi_term(k, author, state.assign.preference[d][i], hyper.eta)
                * counts.pi_term(k, word, state.assign.sentiment[d][i], hyper.lambda);
            lw += term.ln();
        }
        log_weights.push(lw);
    }
    let v = state.corpus.num_words() as f64;
    let block = positions.len() as f64;
    log_weights.push(
        hyper.gamma.ln()
            - block * v.ln()
            - (NUM_PREFERENCES as f64).ln()
            - block * (NUM_SENTIMENTS as f64).ln(),
    );
    TopicProposal {
        topics,
        log_weights,
    }
}

/// Removes a table block's word counts and its topic registration,
/// returning the block's word positions. The table keeps its seats.
pub fn detach_table_block(state: &mut ModelState, d: usize, t: usize) -> Vec<usize> {
    let review = &state.corpus.reviews[d];
    let author = review.author_index;
    let k = state.assign.topic_of_table[d][t];
    let positions: Vec<usize> = (0..review.tokens.len())
        .filter(|&i| state.assign.table_of_word[d][i] == t)
        .collect();
    for &i in &positions {
        state.counts.remove_word(
            k,
            review.tokens[i],
            author,
            state.assign.sentiment[d][i],
            state.assign.preference[d][i],
        );
    }
    state.counts.remove_table(k);
    positions
}

/// Reattaches a detached block under the chosen topic.
pub fn attach_table_block(
    state: &mut ModelState,
    d: usize,
    t: usize,
    positions: &[usize],
    choice: TopicChoice,
) {
    let k = match choice {
        TopicChoice::Existing(k) => k,
        TopicChoice::Fresh => state.counts.alloc_topic(),
    };
    state.counts.add_table(k);
    state.assign.topic_of_table[d][t] = k;
    let review = &state.corpus.reviews[d];
    let author = review.author_index;
    for &i in positions {
        state.counts.add_word(
            k,
            review.tokens[i],
            author,
            state.assign.sentiment[d][i],
            state.assign.preference[d][i],
        );
    }
}

/// One Gibbs update of the topic served by table `t` of review `d`; every
/// word at the table switches topic together.
pub fn resample_table_topic(state: &mut ModelState, d: usize, t: usize) {
    let positions = detach_table_block(state, d, t);
    let proposal = propose_table_topic(state, d, &positions);
    let probs = normalize_log_weights(&proposal.log_weights);
    let idx = sample_probs(&probs, &mut state.rng);
    let choice = if idx < proposal.topics.len() {
        TopicChoice::Existing(proposal.topics[idx])
    } else {
        TopicChoice::Fresh
    };
    attach_table_block(state, d, t, &positions, choice);
}

/// The normalized joint (preference, sentiment) conditional of word
/// `(d, i)` over the six cells, with the word's own cell contribution
/// excluded from the counts. Cell order is `preference * S + sentiment`.
pub fn sentiment_preference_conditional(
    state: &ModelState,
    d: usize,
    i: usize,
) -> [f64; NUM_CELLS] {
    let review = &state.corpus.reviews[d];
    let word = review.tokens[i];
    let author = review.author_index;
    let hyper = &state.hyper;
    let counts = &state.counts;
    let k = state.assign.topic_of_word(d, i);
    let cur_s = state.assign.sentiment[d][i];
    let cur_u = state.assign.preference[d][i];

    let delta = ReviewMeanDelta::excluding(
        &state.assign.word_rating[d],
        &state.assign.sentiment[d],
        i,
        hyper.mu,
    );
    let gauss = CellGauss::compute(&delta, review.rating, hyper.sigma2);

    // Exclude the word's own cell: predictive ratios over the remaining
    // group members.
    let s_cells = &counts.l_kws[k][word];
    let s_total: u32 = s_cells.iter().sum();
    let u_cells = &counts.c_kxu[k][author];
    let u_total: u32 = u_cells.iter().sum();

    let mut weights = [0.0; NUM_CELLS];
    for (idx, (u, s)) in all_cells().into_iter().enumerate() {
        let s_count = s_cells[s.index()] - u32::from(s == cur_s);
        let u_count = u_cells[u.index()] - u32::from(u == cur_u);
        let pi = (s_count as f64 + hyper.lambda)
            / ((s_total - 1) as f64 + NUM_SENTIMENTS as f64 * hyper.lambda);
        let psi = (u_count as f64 + hyper.eta)
            / ((u_total - 1) as f64 + NUM_PREFERENCES as f64 * hyper.eta);
        weights[idx] = psi * pi * gauss.shifted[idx];
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// One Gibbs update of the joint (sentiment, preference) cell of word
/// `(d, i)`; the cached word rating follows the association rule.
pub fn resample_sentiment_preference(state: &mut ModelState, d: usize, i: usize) {
    let probs = sentiment_preference_conditional(state, d, i);
    let idx = sample_probs(&probs, &mut state.rng);
    let (u, s) = all_cells()[idx];
    set_sentiment_preference(state, d, i, s, u);
}

/// Forces word `(d, i)` to the given cell, keeping counts consistent.
pub fn set_sentiment_preference(
    state: &mut ModelState,
    d: usize,
    i: usize,
    s: Sentiment,
    u: Preference,
) {
    let review = &state.corpus.reviews[d];
    let word = review.tokens[i];
    let author = review.author_index;
    let k = state.assign.topic_of_word(d, i);
    let old_s = state.assign.sentiment[d][i];
    let old_u = state.assign.preference[d][i];
    state.counts.l_kws[k][word][old_s.index()] -= 1;
    state.counts.l_kws[k][word][s.index()] += 1;
    state.counts.c_kxu[k][author][old_u.index()] -= 1;
    state.counts.c_kxu[k][author][u.index()] += 1;
    state.assign.sentiment[d][i] = s;
    state.assign.preference[d][i] = u;
    state.assign.word_rating[d][i] = word_rating(u, s, state.hyper.mu);
}

/// One full Gibbs sweep: per review, re-seat every word, re-draw every
/// table's topic, then re-draw every word's cell.
pub fn sweep(state: &mut ModelState) {
    for d in 0..state.corpus.reviews.len() {
        for i in 0..state.corpus.reviews[d].tokens.len() {
            resample_table(state, d, i);
        }
        for t in 0..state.assign.topic_of_table[d].len() {
            resample_table_topic(state, d, t);
        }
        for i in 0..state.corpus.reviews[d].tokens.len() {
            resample_sentiment_preference(state, d, i);
        }
    }
    debug_assert!(state.verify().is_ok(), "state inconsistent after sweep");
}

/// Runs the full training schedule and estimates the final parameters.
pub fn train(
    corpus: &Corpus,
    hyper: HyperParams,
    config: &TrainConfig,
) -> Result<crate::model::TrainedModel> {
    train_with_observer(corpus, hyper, config, |_, _| Ok(()))
}

/// As [`train`], invoking the observer with (sweep index, state) at every
/// `checkpoint_every` boundary.
pub fn train_with_observer(
    corpus: &Corpus,
    hyper: HyperParams,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &ModelState) -> Result<()>,
) -> Result<crate::model::TrainedModel> {
    config.validate()?;
    let mut state = init_state(corpus, hyper, config.seed)?;
    if config.debug_invariants {
        state.verify()?;
    }
    for sweep_idx in 1..=config.sweeps {
        sweep(&mut state);
        if config.debug_invariants {
            state.verify()?;
        }
        let score = state.log_score();
        log::debug!(
            "sweep {sweep_idx}: K={} tables={} log-score word={:.3} sentiment={:.3} preference={:.3} rating={:.3}",
            state.counts.num_topics,
            state.counts.m_total,
            score.word,
            score.sentiment,
            score.preference,
            score.rating,
        );
        if config.checkpoint_every > 0 && sweep_idx % config.checkpoint_every == 0 {
            observer(sweep_idx, &state)?;
        }
    }
    Ok(crate::model::estimate_parameters(&state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Review, Vocabulary};
    use crate::model::recount_with_capacity;

    fn tiny_corpus() -> Corpus {
        let words = vec!["battery".into(), "screen".into(), "price".into()];
        Corpus {
            vocabulary: Vocabulary::from_words(words),
            reviews: vec![
                Review {
                    review_id: "r0".into(),
                    author_index: 0,
                    rating: 4.0,
                    tokens: vec![0, 1, 0, 2],
                },
                Review {
                    review_id: "r1".into(),
                    author_index: 1,
                    rating: 2.0,
                    tokens: vec![2, 2, 1],
                },
            ],
            num_authors: 2,
            num_products: 1,
        }
    }

    #[test]
    fn init_is_consistent_and_deterministic() {
        let corpus = tiny_corpus();
        let hyper = HyperParams::default();
        let state1 = init_state(&corpus, hyper, 42).unwrap();
        state1.verify().unwrap();
        let state2 = init_state(&corpus, hyper, 42).unwrap();
        assert_eq!(state1.assign, state2.assign);
        assert_eq!(state1.counts, state2.counts);
    }

    #[test]
    fn first_word_opens_new_table() {
        // A single one-word review: the only candidate is a new table with
        // a fresh topic.
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into()]),
            reviews: vec![Review {
                review_id: "r0".into(),
                author_index: 0,
                rating: 3.0,
                tokens: vec![0],
            }],
            num_authors: 1,
            num_products: 1,
        };
        for seed in 0..5 {
            let state = init_state(&corpus, HyperParams::default(), seed).unwrap();
            assert_eq!(state.counts.num_topics, 1);
            assert_eq!(state.counts.m_total, 1);
            assert_eq!(state.counts.n_dt[0], vec![1]);
        }
    }

    #[test]
    fn singleton_word_resample_is_pure_topic_draw() {
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into(), "v".into()]),
            reviews: vec![
                Review {
                    review_id: "r0".into(),
                    author_index: 0,
                    rating: 3.0,
                    tokens: vec![0],
                },
                Review {
                    review_id: "r1".into(),
                    author_index: 0,
                    rating: 3.0,
                    tokens: vec![1, 1],
                },
            ],
            num_authors: 1,
            num_products: 1,
        };
        let mut state = init_state(&corpus, HyperParams::default(), 3).unwrap();
        detach_word(&mut state, 0, 0);
        let proposal = propose_table(&state, 0, 0);
        // No table left in review 0: only the new-table candidate.
        assert_eq!(proposal.table_log_weights.len(), 1);
        seat_word(&mut state, 0, 0, TableChoice::NewTable(TopicChoice::Fresh));
        state.verify().unwrap();
    }

    #[test]
    fn crp_occupancy_proportionality() {
        // Two tables with occupancies 9 and 1 under the same topic, alpha
        // tiny: the re-seated word joins table 0 with probability ~0.9.
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into()]),
            reviews: vec![Review {
                review_id: "r0".into(),
                author_index: 0,
                rating: 3.5,
                tokens: vec![0; 11],
            }],
            num_authors: 1,
            num_products: 1,
        };
        let hyper = HyperParams {
            alpha: 1e-12,
            ..HyperParams::default()
        };
        let assign = Assignments {
            table_of_word: vec![vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1]],
            topic_of_table: vec![vec![0, 0]],
            sentiment: vec![vec![Sentiment::Neutral; 11]],
            preference: vec![vec![Preference::Weak; 11]],
            word_rating: vec![vec![3.5; 11]],
        };
        let mut state = ModelState::from_assignments(corpus, hyper, assign, 0).unwrap();
        // Word 10 sits at table 1; detaching leaves occupancies 9 and 1.
        detach_word(&mut state, 0, 10);
        assert_eq!(state.counts.n_dt[0], vec![9, 1]);
        let proposal = propose_table(&state, 0, 10);
        let probs = normalize_log_weights(&proposal.table_log_weights);
        // Identical topics mean identical f; the ratio is pure occupancy.
        assert!((probs[0] - 0.9).abs() < 1e-6, "got {probs:?}");
        assert!((probs[1] - 0.1).abs() < 1e-6);
        assert!(probs[2] < 1e-9);
    }

    #[test]
    fn topic_resample_degenerate_support() {
        // One live topic and gamma ~ 0: the table keeps its topic.
        let corpus = tiny_corpus();
        let hyper = HyperParams {
            gamma: 1e-300,
            ..HyperParams::default()
        };
        let mut state = init_state(&corpus, hyper, 9).unwrap();
        for _ in 0..5 {
            sweep(&mut state);
        }
        assert_eq!(state.counts.num_topics, 1);
        let k_before: Vec<Vec<usize>> = state.assign.topic_of_table.clone();
        for d in 0..state.corpus.reviews.len() {
            for t in 0..state.assign.topic_of_table[d].len() {
                resample_table_topic(&mut state, d, t);
            }
        }
        assert_eq!(state.assign.topic_of_table, k_before);
    }

    #[test]
    fn topic_resample_symmetric_topics_get_equal_weight() {
        // Two topics with identical count profiles for the block's words.
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into(), "v".into()]),
            reviews: vec![
                Review {
                    review_id: "r0".into(),
                    author_index: 0,
                    rating: 3.5,
                    tokens: vec![0],
                },
                Review {
                    review_id: "r1".into(),
                    author_index: 0,
                    rating: 3.5,
                    tokens: vec![0],
                },
                Review {
                    review_id: "r2".into(),
                    author_index: 0,
                    rating: 3.5,
                    tokens: vec![1],
                },
            ],
            num_authors: 1,
            num_products: 1,
        };
        let assign = Assignments {
            table_of_word: vec![vec![0], vec![0], vec![0]],
            topic_of_table: vec![vec![0], vec![1], vec![2]],
            sentiment: vec![vec![Sentiment::Neutral]; 3],
            preference: vec![vec![Preference::Weak]; 3],
            word_rating: vec![vec![3.5]; 3],
        };
        let mut state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 1).unwrap();
        // Resample the topic of review 2's table: topics 0 and 1 hold one
        // "w" each and have symmetric profiles for "v".
        let positions = detach_table_block(&mut state, 2, 0);
        let proposal = propose_table_topic(&state, 2, &positions);
        let probs = normalize_log_weights(&proposal.log_weights);
        let p0 = probs[proposal.topics.iter().position(|&k| k == 0).unwrap()];
        let p1 = probs[proposal.topics.iter().position(|&k| k == 1).unwrap()];
        assert!((p0 - p1).abs() < 1e-12);
        // Topic 2 died with the detach; a fresh draw recycles its slot.
        attach_table_block(&mut state, 2, 0, &positions, TopicChoice::Fresh);
        state.verify().unwrap();
    }

    #[test]
    fn sentiment_conditional_factorizes_when_sigma_large() {
        // With huge sigma2 the Gaussian factor is flat and the cell
        // posterior is the product of the two smoothed ratios.
        let corpus = tiny_corpus();
        let hyper = HyperParams {
            sigma2: 1e12,
            ..HyperParams::default()
        };
        let mut state = init_state(&corpus, hyper, 17).unwrap();
        sweep(&mut state);
        let probs = sentiment_preference_conditional(&state, 0, 1);

        // Direct evaluation of the factorized form.
        let d = 0;
        let i = 1;
        let review = &state.corpus.reviews[d];
        let k = state.assign.topic_of_word(d, i);
        let w = review.tokens[i];
        let x = review.author_index;
        let cur_s = state.assign.sentiment[d][i];
        let cur_u = state.assign.preference[d][i];
        let s_cells = state.counts.l_kws[k][w];
        let u_cells = state.counts.c_kxu[k][x];
        let s_total: u32 = s_cells.iter().sum();
        let u_total: u32 = u_cells.iter().sum();
        let mut expect = [0.0; NUM_CELLS];
        for (idx, (u, s)) in all_cells().into_iter().enumerate() {
            let sc = s_cells[s.index()] - u32::from(s == cur_s);
            let uc = u_cells[u.index()] - u32::from(u == cur_u);
            let pi = (sc as f64 + hyper.lambda) / ((s_total - 1) as f64 + 3.0 * hyper.lambda);
            let psi = (uc as f64 + hyper.eta) / ((u_total - 1) as f64 + 2.0 * hyper.eta);
            expect[idx] = psi * pi;
        }
        let total: f64 = expect.iter().sum();
        for (p, e) in probs.iter().zip(&expect) {
            assert!((p - e / total).abs() < 1e-9);
        }
    }

    #[test]
    fn single_word_review_rating_five_prefers_strong_positive() {
        // Flat counts, observed rating 5: the (strong, positive) cell has
        // review mean exactly 5 and dominates.
        let corpus = Corpus {
            vocabulary: Vocabulary::from_words(vec!["w".into()]),
            reviews: vec![Review {
                review_id: "r0".into(),
                author_index: 0,
                rating: 5.0,
                tokens: vec![0],
            }],
            num_authors: 1,
            num_products: 1,
        };
        let assign = Assignments {
            table_of_word: vec![vec![0]],
            topic_of_table: vec![vec![0]],
            sentiment: vec![vec![Sentiment::Neutral]],
            preference: vec![vec![Preference::Weak]],
            word_rating: vec![vec![3.5]],
        };
        let state =
            ModelState::from_assignments(corpus, HyperParams::default(), assign, 0).unwrap();
        let probs = sentiment_preference_conditional(&state, 0, 0);
        let best = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(idx, _)| idx)
            .unwrap();
        let (u, s) = all_cells()[best];
        assert_eq!((u, s), (Preference::Strong, Sentiment::Positive));
    }

    #[test]
    fn sweep_preserves_counts_and_determinism() {
        let corpus = tiny_corpus();
        let hyper = HyperParams::default();
        let mut state1 = init_state(&corpus, hyper, 7).unwrap();
        let mut state2 = init_state(&corpus, hyper, 7).unwrap();
        for _ in 0..10 {
            sweep(&mut state1);
            sweep(&mut state2);
            let fresh = recount_with_capacity(
                &state1.assign,
                &state1.corpus,
                state1.counts.topic_capacity(),
            )
            .unwrap();
            assert_eq!(fresh, state1.counts);
            assert!(state1.counts.num_topics >= 1);
        }
        assert_eq!(state1.assign, state2.assign);
        assert_eq!(state1.counts, state2.counts);
    }

    #[test]
    fn candidate_weights_normalize() {
        let corpus = tiny_corpus();
        let mut state = init_state(&corpus, HyperParams::default(), 5).unwrap();
        detach_word(&mut state, 0, 0);
        let proposal = propose_table(&state, 0, 0);
        let probs = normalize_log_weights(&proposal.table_log_weights);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p.is_finite() && p >= 0.0));
        let topic_probs = normalize_log_weights(&proposal.topic_log_weights);
        assert!((topic_probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        seat_word(&mut state, 0, 0, TableChoice::Existing(0));
        state.verify().unwrap();
    }

    #[test]
    fn train_zero_sweeps_is_initial_state_estimate() {
        let corpus = tiny_corpus();
        let hyper = HyperParams::default();
        let config = TrainConfig {
            sweeps: 0,
            burn_in: 0,
            seed: 3,
            checkpoint_every: 0,
            debug_invariants: true,
        };
        let model = train(&corpus, hyper, &config).unwrap();
        let state = init_state(&corpus, hyper, 3).unwrap();
        let direct = crate::model::estimate_parameters(&state);
        assert_eq!(model, direct);
    }

    #[test]
    fn train_is_seed_deterministic() {
        let corpus = tiny_corpus();
        let config = TrainConfig {
            sweeps: 20,
            burn_in: 5,
            seed: 11,
            checkpoint_every: 0,
            debug_invariants: true,
        };
        let m1 = train(&corpus, HyperParams::default(), &config).unwrap();
        let m2 = train(&corpus, HyperParams::default(), &config).unwrap();
        assert_eq!(m1, m2);
        let bytes1 = serde_json::to_vec(&m1.phi).unwrap();
        let bytes2 = serde_json::to_vec(&m2.phi).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            sweeps: 10,
            burn_in: 10,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let ok = TrainConfig {
            sweeps: 0,
            burn_in: 0,
            ..TrainConfig::default()
        };
        assert!(ok.validate().is_ok());
    }
}
