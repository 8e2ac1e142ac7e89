//! Review ingestion, text normalization, vocabulary construction and the
//! author-stratified train/test split.
//!
//! Input is JSON Lines, one review per line. Text is lowercased, stripped
//! of punctuation, suffix-normalized by a small fixed rule table and
//! filtered against a bundled stopword list; lemmatization is deliberately
//! not attempted.

mod stopwords;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// One review as found in the input file, before encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawReview {
    pub review_id: String,
    pub author_id: String,
    pub product_id: String,
    pub rating: f64,
    pub text: String,
}

impl RawReview {
    fn is_valid(&self) -> bool {
        !self.author_id.is_empty() && self.rating >= 1.0 && self.rating <= 5.0
    }
}

/// Dense bijective word <-> id mapping.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
    }
}

impl Vocabulary {
    /// Builds a vocabulary from a list of distinct words, assigning dense
    /// ids in list order.
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// An encoded review: dense author index, observed rating and word ids.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Review {
    pub review_id: String,
    pub author_index: usize,
    pub rating: f64,
    pub tokens: Vec<usize>,
}

/// An encoded review collection sharing one vocabulary and author index
/// space.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub reviews: Vec<Review>,
    /// Size of the author index space; every `author_index` is below this.
    pub num_authors: usize,
    /// Distinct products seen at build time (metadata only).
    pub num_products: usize,
}

impl Corpus {
    pub fn num_words(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn num_reviews(&self) -> usize {
        self.reviews.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.reviews.iter().map(|r| r.tokens.len()).sum()
    }
}

/// Result of [`load_reviews`]: parsed records plus a malformed-line tally.
#[derive(Debug)]
pub struct LoadedReviews {
    pub reviews: Vec<RawReview>,
    pub skipped: usize,
}

/// Reads JSON-Lines reviews in file order. Malformed lines (bad JSON,
/// missing keys, rating outside [1,5], empty author) are skipped and
/// counted, never fatal.
pub fn load_reviews(path: impl AsRef<Path>) -> Result<LoadedReviews> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut reviews = Vec::new();
    let mut skipped = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawReview>(&line) {
            Ok(review) if review.is_valid() => reviews.push(review),
            Ok(_) | Err(_) => {
                skipped += 1;
                log::warn!("skipping malformed review on line {}", lineno + 1);
            }
        }
    }
    Ok(LoadedReviews { reviews, skipped })
}

/// The bundled stopword list as an owned set.
pub fn default_stopwords() -> HashSet<String> {
    stopwords::STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Lowercases, strips punctuation, suffix-normalizes and stopword-filters a
/// text into tokens. Tokens are runs of ASCII letters; everything else is a
/// separator.
///
/// Idempotent: running the output through again yields the same sequence.
pub fn normalize_text(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .map(|t| normalize_token(&t.to_ascii_lowercase()))
        .filter(|t| t.len() >= 2 && !stopwords.contains(t))
        .collect()
}

/// Applies the suffix rule table until the token stops changing.
fn normalize_token(token: &str) -> String {
    let mut current = token.to_string();
    loop {
        let next = apply_suffix_rules(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// One pass of the fixed suffix rule table: plural stripping, -ies -> -y,
/// and -ing/-ed stripping with a length guard and doubled-consonant undo.
fn apply_suffix_rules(token: &str) -> String {
    let mut t = token.to_string();
    if t.ends_with("ies") && t.len() >= 5 {
        t.truncate(t.len() - 3);
        t.push('y');
    } else if t.ends_with("sses") {
        t.truncate(t.len() - 2);
    } else if t.ends_with('s')
        && !t.ends_with("ss")
        && !t.ends_with("us")
        && !t.ends_with("is")
        && t.len() >= 4
    {
        t.truncate(t.len() - 1);
    }
    if t.ends_with("ing") && t.len() >= 6 {
        t.truncate(t.len() - 3);
        undo_doubled_consonant(&mut t);
    } else if t.ends_with("ed") && t.len() >= 5 {
        t.truncate(t.len() - 2);
        undo_doubled_consonant(&mut t);
    }
    t
}

fn undo_doubled_consonant(t: &mut String) {
    let chars: Vec<char> = t.chars().collect();
    if chars.len() >= 2 {
        let last = chars[chars.len() - 1];
        let prev = chars[chars.len() - 2];
        if last == prev && !"aeiou".contains(last) && last != 'l' && last != 's' {
            t.pop();
        }
    }
}

/// Builds vocabulary and encoded reviews from raw input.
///
/// The vocabulary holds exactly the normalized tokens whose corpus
/// frequency is at least `min_word_count`, in lexicographic order. Reviews
/// whose token sequence becomes empty are dropped, and author ids are
/// densely re-indexed (lexicographically).
pub fn build_corpus(reviews: &[RawReview], min_word_count: usize) -> Result<Corpus> {
    if reviews.is_empty() {
        return Err(Error::EmptyCorpus("no input reviews".into()));
    }
    let stopwords = default_stopwords();
    let normalized: Vec<Vec<String>> = reviews
        .iter()
        .map(|r| normalize_text(&r.text, &stopwords))
        .collect();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &normalized {
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let words: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c >= min_word_count)
        .map(|(w, _)| w.to_string())
        .collect();
    let vocabulary = Vocabulary::from_words(words);

    let mut kept: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, tokens) in normalized.iter().enumerate() {
        let ids: Vec<usize> = tokens
            .iter()
            .filter_map(|t| vocabulary.id(t))
            .collect();
        if !ids.is_empty() {
            kept.push((i, ids));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyCorpus(
            "every review became empty after preprocessing".into(),
        ));
    }

    let authors: BTreeSet<&str> = kept
        .iter()
        .map(|(i, _)| reviews[*i].author_id.as_str())
        .collect();
    let author_index: HashMap<&str, usize> = authors
        .iter()
        .enumerate()
        .map(|(idx, a)| (*a, idx))
        .collect();
    let products: BTreeSet<&str> = kept
        .iter()
        .map(|(i, _)| reviews[*i].product_id.as_str())
        .collect();

    let encoded = kept
        .into_iter()
        .map(|(i, tokens)| Review {
            review_id: reviews[i].review_id.clone(),
            author_index: author_index[reviews[i].author_id.as_str()],
            rating: reviews[i].rating,
            tokens,
        })
        .collect();

    Ok(Corpus {
        vocabulary,
        reviews: encoded,
        num_authors: authors.len(),
        num_products: products.len(),
    })
}

/// Split protocol parameters. Defaults follow the standard preparation:
/// 80% of an author's reviews in train, at least 3 train and 1 test review
/// per retained author, at most 8000 training reviews in total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitParams {
    pub train_fraction: f64,
    pub min_train: usize,
    pub min_test: usize,
    pub max_train_total: usize,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            train_fraction: 0.8,
            min_train: 3,
            min_test: 1,
            max_train_total: 8000,
            seed: 0,
        }
    }
}

/// Splits a corpus by author: each retained author's earliest
/// `ceil(train_fraction * n)` reviews (corpus order) go to train, the rest
/// to test. Authors that cannot satisfy `min_train`/`min_test` are dropped
/// entirely; whole authors are then removed by seeded shuffle until the
/// train cap holds. Both outputs share the vocabulary and a re-indexed
/// author space.
pub fn split_by_author(corpus: &Corpus, params: &SplitParams) -> Result<(Corpus, Corpus)> {
    if !(params.train_fraction > 0.0 && params.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must be in (0,1), got {}",
            params.train_fraction
        )));
    }

    let mut by_author: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, review) in corpus.reviews.iter().enumerate() {
        by_author.entry(review.author_index).or_default().push(i);
    }

    let mut retained: Vec<(usize, usize)> = Vec::new(); // (author, train_n)
    for (&author, reviews) in &by_author {
        let n = reviews.len();
        let train_n = (params.train_fraction * n as f64).ceil() as usize;
        let test_n = n - train_n;
        if train_n >= params.min_train && test_n >= params.min_test {
            retained.push((author, train_n));
        }
    }
    if retained.is_empty() {
        return Err(Error::NoAuthorSurvives {
            min_train: params.min_train,
            min_test: params.min_test,
        });
    }

    let mut train_total: usize = retained.iter().map(|(_, t)| t).sum();
    if train_total > params.max_train_total {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..retained.len()).collect();
        order.shuffle(&mut rng);
        let mut removed: HashSet<usize> = HashSet::new();
        for slot in order {
            if train_total <= params.max_train_total {
                break;
            }
            train_total -= retained[slot].1;
            removed.insert(slot);
        }
        retained = retained
            .into_iter()
            .enumerate()
            .filter(|(slot, _)| !removed.contains(slot))
            .map(|(_, entry)| entry)
            .collect();
    }
    if retained.is_empty() {
        return Err(Error::NoAuthorSurvives {
            min_train: params.min_train,
            min_test: params.min_test,
        });
    }

    // Dense re-index over retained authors, preserving index order.
    let new_index: HashMap<usize, usize> = retained
        .iter()
        .enumerate()
        .map(|(new, (old, _))| (*old, new))
        .collect();
    let num_authors = retained.len();

    let mut train_reviews = Vec::new();
    let mut test_reviews = Vec::new();
    for (author, train_n) in &retained {
        for (pos, &review_idx) in by_author[author].iter().enumerate() {
            let mut review = corpus.reviews[review_idx].clone();
            review.author_index = new_index[author];
            if pos < *train_n {
                train_reviews.push((review_idx, review));
            } else {
                test_reviews.push((review_idx, review));
            }
        }
    }
    // Restore corpus order within each split.
    train_reviews.sort_by_key(|(i, _)| *i);
    test_reviews.sort_by_key(|(i, _)| *i);

    let make = |reviews: Vec<(usize, Review)>| Corpus {
        vocabulary: corpus.vocabulary.clone(),
        reviews: reviews.into_iter().map(|(_, r)| r).collect(),
        num_authors,
        num_products: corpus.num_products,
    };
    Ok((make(train_reviews), make(test_reviews)))
}

const CORPUS_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredReview {
    review_id: String,
    author_index: usize,
    rating: f64,
    tokens: Vec<usize>,
    split: String,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    version: u32,
    vocabulary: Vec<String>,
    num_authors: usize,
    num_products: usize,
    reviews: Vec<StoredReview>,
}

/// A train/test pair sharing one vocabulary and author index space, as
/// stored in an encoded-corpus file.
#[derive(Debug, Clone, Default)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub test: Corpus,
}

impl SplitCorpus {
    pub fn new(train: Corpus, test: Corpus) -> Self {
        SplitCorpus { train, test }
    }

    /// A corpus with all training reviews only held out as empty test.
    pub fn all_train(corpus: Corpus) -> Self {
        let test = Corpus {
            vocabulary: corpus.vocabulary.clone(),
            reviews: Vec::new(),
            num_authors: corpus.num_authors,
            num_products: corpus.num_products,
        };
        SplitCorpus {
            train: corpus,
            test,
        }
    }

    /// Train and test concatenated (train first), sharing metadata.
    pub fn merged(&self) -> Corpus {
        let mut reviews = self.train.reviews.clone();
        reviews.extend(self.test.reviews.iter().cloned());
        Corpus {
            vocabulary: self.train.vocabulary.clone(),
            reviews,
            num_authors: self.train.num_authors,
            num_products: self.train.num_products,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut reviews = Vec::with_capacity(self.train.reviews.len() + self.test.reviews.len());
        for (corpus, tag) in [(&self.train, "train"), (&self.test, "test")] {
            for r in &corpus.reviews {
                reviews.push(StoredReview {
                    review_id: r.review_id.clone(),
                    author_index: r.author_index,
                    rating: r.rating,
                    tokens: r.tokens.clone(),
                    split: tag.to_string(),
                });
            }
        }
        let file = CorpusFile {
            version: CORPUS_FILE_VERSION,
            vocabulary: self.train.vocabulary.words().to_vec(),
            num_authors: self.train.num_authors,
            num_products: self.train.num_products,
            reviews,
        };
        let out = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(out);
        serde_json::to_writer(&mut writer, &file)
            .map_err(|e| Error::format("corpus", path, e.to_string()))?;
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: CorpusFile = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::format("corpus", path, e.to_string()))?;
        if parsed.version != CORPUS_FILE_VERSION {
            return Err(Error::Version {
                what: "corpus",
                found: parsed.version,
                expected: CORPUS_FILE_VERSION,
            });
        }
        let vocabulary = Vocabulary::from_words(parsed.vocabulary);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in parsed.reviews {
            if r.tokens.iter().any(|&t| t >= vocabulary.len()) {
                return Err(Error::format(
                    "corpus",
                    path,
                    format!("review {} has token id outside the vocabulary", r.review_id),
                ));
            }
            if r.author_index >= parsed.num_authors {
                return Err(Error::format(
                    "corpus",
                    path,
                    format!("review {} has out-of-range author index", r.review_id),
                ));
            }
            let review = Review {
                review_id: r.review_id,
                author_index: r.author_index,
                rating: r.rating,
                tokens: r.tokens,
            };
            match r.split.as_str() {
                "train" => train.push(review),
                "test" => test.push(review),
                other => {
                    return Err(Error::format(
                        "corpus",
                        path,
                        format!("unknown split tag {other:?}"),
                    ))
                }
            }
        }
        let make = |reviews| Corpus {
            vocabulary: vocabulary.clone(),
            reviews,
            num_authors: parsed.num_authors,
            num_products: parsed.num_products,
        };
        Ok(SplitCorpus {
            train: make(train),
            test: make(test),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write as _;

    fn raw(author: &str, rating: f64, text: &str) -> RawReview {
        RawReview {
            review_id: format!("r{}", text.len()),
            author_id: author.to_string(),
            product_id: "p0".to_string(),
            rating,
            text: text.to_string(),
        }
    }

    #[test]
    fn load_reviews_counts_valid_and_skipped() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"review_id":"1","author_id":"a","product_id":"p","rating":4.0,"text":"good"}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"review_id":"2","author_id":"b","product_id":"p","rating":5.0,"text":"fine"}}"#
        )
        .unwrap();
        writeln!(
            file,
            r#"{{"review_id":"3","author_id":"c","product_id":"p","rating":2.0,"text":"ok"}}"#
        )
        .unwrap();
        let loaded = load_reviews(file.path()).unwrap();
        assert_eq!(loaded.reviews.len(), 3);
        assert_eq!(loaded.skipped, 0);
    }

    #[test]
    fn load_reviews_skips_malformed_lines() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"review_id":"1","author_id":"a","product_id":"p","rating":4.0,"text":"good"}}"#
        )
        .unwrap();
        writeln!(file, "not json at all").unwrap();
        writeln!(
            file,
            r#"{{"review_id":"2","author_id":"b","product_id":"p","rating":3.0,"text":"fine"}}"#
        )
        .unwrap();
        let loaded = load_reviews(file.path()).unwrap();
        assert_eq!(loaded.reviews.len(), 2);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn load_reviews_empty_file() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let loaded = load_reviews(file.path()).unwrap();
        assert!(loaded.reviews.is_empty());
        assert_eq!(loaded.skipped, 0);
    }

    #[test]
    fn load_reviews_rejects_out_of_range_rating() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            file,
            r#"{{"review_id":"1","author_id":"a","product_id":"p","rating":7.0,"text":"good"}}"#
        )
        .unwrap();
        let loaded = load_reviews(file.path()).unwrap();
        assert!(loaded.reviews.is_empty());
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn normalize_strips_punctuation_and_lowercases() {
        let tokens = normalize_text("Great battery!!", &HashSet::new());
        assert_eq!(tokens, vec!["great", "battery"]);
    }

    #[test]
    fn normalize_removes_stopwords() {
        let stop: HashSet<String> = ["the".to_string()].into_iter().collect();
        let tokens = normalize_text("the the the", &stop);
        assert!(tokens.is_empty());
    }

    #[test]
    fn normalize_applies_suffix_rules() {
        assert_eq!(normalize_text("batteries", &HashSet::new()), vec!["battery"]);
        assert_eq!(normalize_token("cats"), "cat");
        assert_eq!(normalize_token("glasses"), "glass");
        assert_eq!(normalize_token("running"), "run");
        assert_eq!(normalize_token("charged"), "charg");
        assert_eq!(normalize_token("falling"), "fall");
        assert_eq!(normalize_token("kiss"), "kiss");
        assert_eq!(normalize_token("analysis"), "analysis");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "\\PC{0,80}") {
            let stopwords = default_stopwords();
            let once = normalize_text(&text, &stopwords);
            let joined = once.join(" ");
            let twice = normalize_text(&joined, &stopwords);
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn build_corpus_threshold_semantics() {
        let reviews = vec![
            raw("a", 4.0, "battery battery screen"),
            raw("b", 2.0, "battery unique"),
        ];
        let corpus = build_corpus(&reviews, 2).unwrap();
        // battery appears 3x, screen and unique once each.
        assert_eq!(corpus.vocabulary.words(), &["battery".to_string()]);
        assert_eq!(corpus.reviews.len(), 2);
        assert_eq!(corpus.reviews[0].tokens, vec![0, 0]);
        assert_eq!(corpus.reviews[1].tokens, vec![0]);
    }

    #[test]
    fn build_corpus_keeps_shared_words() {
        let reviews = vec![raw("a", 4.0, "battery"), raw("b", 2.0, "battery")];
        let corpus = build_corpus(&reviews, 1).unwrap();
        assert_eq!(corpus.num_words(), 1);
        assert_eq!(corpus.reviews.len(), 2);
        assert_eq!(corpus.num_authors, 2);
    }

    #[test]
    fn build_corpus_drops_empty_reviews_and_reindexes() {
        let reviews = vec![
            raw("zed", 4.0, "battery battery"),
            raw("amy", 2.0, "!!!"),
            raw("bob", 3.0, "battery"),
        ];
        let corpus = build_corpus(&reviews, 1).unwrap();
        assert_eq!(corpus.reviews.len(), 2);
        assert_eq!(corpus.num_authors, 2);
        // bob < zed lexicographically.
        assert_eq!(corpus.reviews[0].author_index, 1);
        assert_eq!(corpus.reviews[1].author_index, 0);
    }

    #[test]
    fn build_corpus_all_dropped_is_fatal() {
        let reviews = vec![raw("a", 4.0, "..."), raw("b", 2.0, "!!")];
        assert!(matches!(
            build_corpus(&reviews, 1),
            Err(Error::EmptyCorpus(_))
        ));
    }

    fn corpus_with_authors(sizes: &[(&str, usize)]) -> Corpus {
        let mut reviews = Vec::new();
        for (author, n) in sizes {
            for i in 0..*n {
                let mut r = raw(author, 4.0, "battery screen battery screen");
                r.review_id = format!("{author}-{i}");
                reviews.push(r);
            }
        }
        build_corpus(&reviews, 1).unwrap()
    }

    #[test]
    fn split_respects_eighty_twenty() {
        let corpus = corpus_with_authors(&[("a", 5)]);
        let params = SplitParams::default();
        let (train, test) = split_by_author(&corpus, &params).unwrap();
        assert_eq!(train.reviews.len(), 4);
        assert_eq!(test.reviews.len(), 1);
    }

    #[test]
    fn split_drops_infeasible_authors() {
        // 3 reviews: ceil(0.8*3)=3 train, 0 test -> dropped.
        let corpus = corpus_with_authors(&[("a", 3), ("b", 5)]);
        let (train, test) = split_by_author(&corpus, &SplitParams::default()).unwrap();
        assert_eq!(train.num_authors, 1);
        assert!(train.reviews.iter().all(|r| r.author_index == 0));
        assert_eq!(train.reviews.len(), 4);
        assert_eq!(test.reviews.len(), 1);
    }

    #[test]
    fn split_fatal_when_nobody_survives() {
        let corpus = corpus_with_authors(&[("a", 3)]);
        assert!(matches!(
            split_by_author(&corpus, &SplitParams::default()),
            Err(Error::NoAuthorSurvives { .. })
        ));
    }

    #[test]
    fn split_enforces_train_cap_by_whole_authors() {
        let corpus = corpus_with_authors(&[("a", 5), ("b", 5), ("c", 5)]);
        let params = SplitParams {
            max_train_total: 8,
            ..SplitParams::default()
        };
        let (train, test) = split_by_author(&corpus, &params).unwrap();
        assert!(train.reviews.len() <= 8);
        assert_eq!(train.reviews.len(), 8); // two authors with 4 each
        assert_eq!(train.num_authors, 2);
        // Test authors are exactly the train authors.
        let train_authors: BTreeSet<_> = train.reviews.iter().map(|r| r.author_index).collect();
        let test_authors: BTreeSet<_> = test.reviews.iter().map(|r| r.author_index).collect();
        assert!(test_authors.is_subset(&train_authors));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let corpus = corpus_with_authors(&[("a", 7), ("b", 6), ("c", 9)]);
        let params = SplitParams {
            seed: 11,
            max_train_total: 12,
            ..SplitParams::default()
        };
        let (train1, test1) = split_by_author(&corpus, &params).unwrap();
        let (train2, test2) = split_by_author(&corpus, &params).unwrap();
        assert_eq!(train1.reviews, train2.reviews);
        assert_eq!(test1.reviews, test2.reviews);

        let train_ids: BTreeSet<_> = train1.reviews.iter().map(|r| &r.review_id).collect();
        let test_ids: BTreeSet<_> = test1.reviews.iter().map(|r| &r.review_id).collect();
        assert!(train_ids.is_disjoint(&test_ids));
    }

    #[test]
    fn split_corpus_file_round_trip() {
        let corpus = corpus_with_authors(&[("a", 5), ("b", 6)]);
        let (train, test) = split_by_author(&corpus, &SplitParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        let split = SplitCorpus::new(train, test);
        split.save(&path).unwrap();
        let loaded = SplitCorpus::load(&path).unwrap();
        assert_eq!(loaded.train.reviews, split.train.reviews);
        assert_eq!(loaded.test.reviews, split.test.reviews);
        assert_eq!(loaded.train.vocabulary.words(), split.train.vocabulary.words());
        assert_eq!(loaded.train.num_authors, split.train.num_authors);
    }
}
