//! Sparse lexical retrieval: tokenizer, inverted index and BM25 top-k search.
//!
//! Scores use the non-negative idf variant `ln(1 + (N - df + 0.5) / (df + 0.5))`
//! and the usual saturating term-frequency component:
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·dl/avgdl))
//! ```
//!
//! Repeated query tokens contribute once per occurrence.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Collection;
use crate::error::{Error, Result};
use crate::io::write_atomic;

const ARTIFACT_MAGIC: &str = "cqr-bm25-index";
const ARTIFACT_VERSION: u32 = 1;
const BUILD_CHUNK: usize = 16_384;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Document-length normalization.
    pub b: f64,
    pub lowercase: bool,
    pub min_token_len: usize,
    /// Porter2 (English) stemming.
    pub stem: bool,
    pub remove_stopwords: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4, lowercase: true, min_token_len: 1, stem: false, remove_stopwords: false }
    }
}

impl IndexConfig {
    /// BM25 parameters tuned for QReCC-style collections.
    pub fn qrecc() -> Self {
        Self { k1: 0.82, b: 0.68, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must be in [0, 1], got {}", self.b)));
        }
        if self.min_token_len < 1 {
            return Err(Error::invalid("min_token_len must be >= 1"));
        }
        Ok(())
    }

    /// Identifies the tokenizer settings; indexes are only valid for the tokenizer that built them.
    pub fn tokenizer_fingerprint(&self) -> String {
        format!(
            "lowercase={};min_token_len={};stem={};stopwords={}",
            self.lowercase, self.min_token_len, self.stem, self.remove_stopwords
        )
    }
}

pub struct Tokenizer {
    lowercase: bool,
    min_len: usize,
    stemmer: Option<Stemmer>,
    stopwords: Option<HashSet<&'static str>>,
}

impl Tokenizer {
    pub fn new(config: &IndexConfig) -> Self {
        Self {
            lowercase: config.lowercase,
            min_len: config.min_token_len.max(1),
            stemmer: config.stem.then(|| Stemmer::create(Algorithm::English)),
            stopwords: config.remove_stopwords.then(|| STOPWORDS.iter().copied().collect()),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|raw| !raw.is_empty())
            .filter_map(|raw| {
                let token = if self.lowercase { raw.to_lowercase() } else { raw.to_string() };
                if token.chars().count() < self.min_len {
                    return None;
                }
                if let Some(stop) = &self.stopwords {
                    if stop.contains(token.as_str()) {
                        return None;
                    }
                }
                match &self.stemmer {
                    Some(s) => Some(s.stem(&token).into_owned()),
                    None => Some(token),
                }
            })
            .collect()
    }
}

/// Splits on any non-alphanumeric character, then applies the configured filters.
pub fn tokenize(text: &str, config: &IndexConfig) -> Vec<String> {
    Tokenizer::new(config).tokenize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub pid: String,
    pub score: f64,
}

impl ScoredPassage {
    pub fn new(pid: impl Into<String>, score: f64) -> Self {
        Self { pid: pid.into(), score }
    }
}

/// Descending score, then ascending pid.
pub fn rank_order(a: &ScoredPassage, b: &ScoredPassage) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.pid.cmp(&b.pid))
}

/// Ranked passages for one query: scores non-increasing, pids distinct.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<ScoredPassage>,
}

impl RankedList {
    /// Validates ordering and uniqueness.
    pub fn new(entries: Vec<ScoredPassage>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert(e.pid.as_str()) {
                return Err(Error::invalid(format!("pid `{}` ranked twice", e.pid)));
            }
            if i > 0 && entries[i - 1].score < e.score {
                return Err(Error::invalid(format!("scores increase at rank {}", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Sorts arbitrary scored passages into rank order. Panics on duplicate pids in debug builds.
    pub fn from_unsorted(mut entries: Vec<ScoredPassage>) -> Self {
        entries.sort_by(rank_order);
        debug_assert!(entries.windows(2).all(|w| w[0].pid != w[1].pid || w[0].score != w[1].score));
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.pid.as_str())
    }

    pub fn top(&self, depth: usize) -> &[ScoredPassage] {
        &self.entries[..depth.min(self.entries.len())]
    }

    pub fn truncate(&mut self, depth: usize) {
        self.entries.truncate(depth);
    }
}

/// BM25 inverted index over a passage collection. Immutable once built.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    config: IndexConfig,
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    /// `k1 · (1 − b + b·dl/avgdl)` per document.
    length_norms: Vec<f64>,
    avg_doc_len: f64,
}

#[derive(Serialize, Deserialize)]
struct IndexArtifact {
    magic: String,
    version: u32,
    tokenizer: String,
    config: IndexConfig,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    terms: Vec<(String, Vec<Posting>)>,
}

/// Builds the index, tokenizing documents in parallel chunks and merging in ordinal order.
pub fn build_index(collection: &Collection, config: &IndexConfig) -> Result<InvertedIndex> {
    config.validate()?;
    if collection.is_empty() {
        return Err(Error::invalid("cannot index an empty corpus"));
    }
    if collection.len() > u32::MAX as usize {
        return Err(Error::invalid("corpus exceeds u32 document ordinals"));
    }
    let tokenizer = Tokenizer::new(config);
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_ids = Vec::with_capacity(collection.len());
    let mut doc_lengths = Vec::with_capacity(collection.len());

    for (chunk_idx, chunk) in collection.passages().chunks(BUILD_CHUNK).enumerate() {
        let counted: Vec<(u32, Vec<(String, u32)>)> = chunk
            .par_iter()
            .map(|p| {
                let tokens = tokenizer.tokenize(&p.text);
                let mut tf: HashMap<String, u32> = HashMap::new();
                for t in &tokens {
                    *tf.entry(t.clone()).or_default() += 1;
                }
                let mut terms: Vec<(String, u32)> = tf.into_iter().collect();
                terms.sort_unstable();
                (tokens.len() as u32, terms)
            })
            .collect();
        for (offset, (len, terms)) in counted.into_iter().enumerate() {
            let doc = (chunk_idx * BUILD_CHUNK + offset) as u32;
            for (term, tf) in terms {
                postings.entry(term).or_default().push(Posting { doc, tf });
            }
            doc_lengths.push(len);
        }
        doc_ids.extend(chunk.iter().map(|p| p.id.clone()));
    }
    let index = InvertedIndex::from_parts(config.clone(), postings, doc_ids, doc_lengths);
    log::info!(
        "indexed {} documents, {} terms, avgdl {:.2}",
        index.doc_count(),
        index.postings.len(),
        index.avg_doc_len
    );
    Ok(index)
}

impl InvertedIndex {
    fn from_parts(
        config: IndexConfig,
        postings: HashMap<String, Vec<Posting>>,
        doc_ids: Vec<String>,
        doc_lengths: Vec<u32>,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_lengths.len() as f64;
        let mut index = Self {
            config,
            postings,
            doc_ids,
            doc_lengths,
            length_norms: Vec::new(),
            avg_doc_len,
        };
        index.refresh_norms();
        index
    }

    fn refresh_norms(&mut self) {
        let (k1, b, avg) = (self.config.k1, self.config.b, self.avg_doc_len);
        self.length_norms = self
            .doc_lengths
            .iter()
            .map(|&dl| {
                // avgdl is zero only when every document tokenizes to nothing.
                let ratio = if avg > 0.0 { dl as f64 / avg } else { 0.0 };
                k1 * (1.0 - b + b * ratio)
            })
            .collect();
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_id(&self, ordinal: usize) -> Option<&str> {
        self.doc_ids.get(ordinal).map(String::as_str)
    }

    pub fn doc_len(&self, ordinal: usize) -> Option<u32> {
        self.doc_lengths.get(ordinal).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn tokenizer(&self) -> Tokenizer {
        Tokenizer::new(&self.config)
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    #[inline]
    fn term_weight(&self, idf: f64, tf: u32, ordinal: usize) -> f64 {
        let tf = tf as f64;
        idf * (tf * (self.config.k1 + 1.0) / (tf + self.length_norms[ordinal]))
    }

    /// BM25 score of one document for already-tokenized query terms.
    pub fn bm25_score<S: AsRef<str>>(&self, query_tokens: &[S], ordinal: usize) -> f64 {
        assert!(ordinal < self.doc_count(), "document ordinal {ordinal} out of range");
        let mut score = 0.0;
        for token in query_tokens {
            let list = self.postings(token.as_ref());
            if let Ok(pos) = list.binary_search_by_key(&(ordinal as u32), |p| p.doc) {
                score += self.term_weight(self.idf(list.len()), list[pos].tf, ordinal);
            }
        }
        score
    }

    /// Top-`k` documents with positive score; ties go to the smaller passage id.
    pub fn search(&self, query: &str, k: usize) -> RankedList {
        let tokens = self.tokenizer().tokenize(query);
        self.search_tokens(&tokens, k)
    }

    pub fn search_tokens<S: AsRef<str>>(&self, tokens: &[S], k: usize) -> RankedList {
        if k == 0 || tokens.is_empty() {
            return RankedList::default();
        }
        let lists: Vec<&[Posting]> = tokens.iter().map(|t| self.postings(t.as_ref())).collect();
        let touched: usize = lists.iter().map(|l| l.len()).sum();
        let mut acc: HashMap<u32, f64> = HashMap::with_capacity(touched.min(self.doc_count()));
        for list in lists {
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += self.term_weight(idf, p.tf, p.doc as usize);
            }
        }
        let mut hits: Vec<ScoredPassage> = acc
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(doc, score)| ScoredPassage { pid: self.doc_ids[doc as usize].clone(), score })
            .collect();
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_by(rank_order);
        RankedList { entries: hits }
    }

    /// Replaces the scoring parameters; tokenizer settings must be unchanged.
    pub fn with_scoring(mut self, k1: f64, b: f64) -> Result<Self> {
        let cfg = IndexConfig { k1, b, ..self.config.clone() };
        cfg.validate()?;
        self.config = cfg;
        self.refresh_norms();
        Ok(self)
    }

    fn to_artifact(&self) -> IndexArtifact {
        let mut terms: Vec<(String, Vec<Posting>)> =
            self.postings.iter().map(|(t, p)| (t.clone(), p.clone())).collect();
        terms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        IndexArtifact {
            magic: ARTIFACT_MAGIC.to_string(),
            version: ARTIFACT_VERSION,
            tokenizer: self.config.tokenizer_fingerprint(),
            config: self.config.clone(),
            doc_ids: self.doc_ids.clone(),
            doc_lengths: self.doc_lengths.clone(),
            terms,
        }
    }

    /// Deterministic binary encoding of the index.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        bincode::serialize(&self.to_artifact()).map_err(|e| Error::Index(e.to_string()))
    }

    /// SHA-256 of the serialized artifact, hex-encoded.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex_digest(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        write_atomic(path, |w| w.write_all(&bytes))?;
        Ok(hex_digest(&bytes))
    }

    /// Loads an artifact, refusing it if its tokenizer differs from `config`.
    /// Scoring parameters (`k1`, `b`) are taken from `config`.
    pub fn load(path: &Path, config: &IndexConfig) -> Result<Self> {
        config.validate()?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let artifact: IndexArtifact =
            bincode::deserialize(&bytes).map_err(|e| Error::Index(format!("{}: {e}", path.display())))?;
        if artifact.magic != ARTIFACT_MAGIC || artifact.version != ARTIFACT_VERSION {
            return Err(Error::Index(format!("{}: not a v{ARTIFACT_VERSION} index", path.display())));
        }
        let expected = config.tokenizer_fingerprint();
        if artifact.tokenizer != expected {
            return Err(Error::Index(format!(
                "tokenizer mismatch: index built with `{}`, config requests `{expected}`",
                artifact.tokenizer
            )));
        }
        if artifact.doc_ids.is_empty() || artifact.doc_ids.len() != artifact.doc_lengths.len() {
            return Err(Error::Index("inconsistent document tables".into()));
        }
        let postings: HashMap<String, Vec<Posting>> = artifact.terms.into_iter().collect();
        let cfg = IndexConfig { k1: config.k1, b: config.b, ..artifact.config };
        Ok(Self::from_parts(cfg, postings, artifact.doc_ids, artifact.doc_lengths))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Passage;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn collection(docs: &[(&str, &str)]) -> Collection {
        Collection::new(
            docs.iter().map(|(id, text)| Passage { id: id.to_string(), text: text.to_string() }).collect(),
        )
        .unwrap()
    }

    fn cfg() -> IndexConfig {
        IndexConfig::default()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("When was the song released?", &cfg()),
            vec!["when", "was", "the", "song", "released"]
        );
        assert!(tokenize("", &cfg()).is_empty());
        assert_eq!(tokenize("Cat-Power 2012", &cfg()), vec!["cat", "power", "2012"]);
        let strict = IndexConfig { min_token_len: 3, lowercase: false, ..cfg() };
        assert_eq!(tokenize("Go to the Big fair", &strict), vec!["the", "Big", "fair"]);
    }

    #[test]
    fn optional_stemming_and_stopwords() {
        let c = IndexConfig { stem: true, remove_stopwords: true, ..cfg() };
        assert_eq!(tokenize("The singers were singing", &c), vec!["singer", "were", "sing"]);
    }

    #[test]
    fn counts_postings_and_lengths() {
        let c = collection(&[("p1", "cat a a b"), ("p2", "the cat"), ("p3", "cat cat")]);
        let idx = build_index(&c, &cfg()).unwrap();
        assert_eq!(idx.postings("cat").len(), 3);
        assert_eq!(idx.postings("a"), &[Posting { doc: 0, tf: 2 }]);
        assert_eq!(idx.doc_len(0), Some(4));
        assert_eq!(idx.doc_count(), 3);
        assert!((idx.avg_doc_len() - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(build_index(&Collection::default(), &cfg()).is_err());
    }

    #[test]
    fn invalid_parameters() {
        let c = collection(&[("p1", "x")]);
        assert!(build_index(&c, &IndexConfig { k1: 0.0, ..cfg() }).is_err());
        assert!(build_index(&c, &IndexConfig { b: 1.5, ..cfg() }).is_err());
    }

    #[test]
    fn hand_evaluated_score() {
        // N = 3, df("x") = 1, tf = 1, every doc has the same length.
        let c = collection(&[("p1", "x y"), ("p2", "y z"), ("p3", "z y")]);
        let idx = build_index(&c, &cfg()).unwrap();
        let idf = (1.0f64 + 2.5 / 1.5).ln();
        assert!((idf - 0.980829).abs() < 1e-6);
        let expected = idf * (1.0 * 1.9) / (1.0 + 0.9);
        assert!((idx.bm25_score(&["x"], 0) - expected).abs() < 1e-12);
        assert_eq!(idx.bm25_score(&["x"], 1), 0.0);
        assert_eq!(idx.bm25_score::<&str>(&[], 2), 0.0);
    }

    #[test]
    fn single_match_and_positive_filter() {
        let c = collection(&[("p1", "alpha beta"), ("p2", "gamma delta"), ("p3", "beta alpha")]);
        let idx = build_index(&c, &cfg()).unwrap();
        let r = idx.search("gamma", 10);
        assert_eq!(r.len(), 1);
        assert_eq!(r.entries[0].pid, "p2");
        assert!(r.entries[0].score > 0.0);

        let docs: Vec<(String, String)> = (0..10)
            .map(|i| (format!("d{i}"), if i < 4 { format!("match w{i}") } else { format!("other w{i}") }))
            .collect();
        let refs: Vec<(&str, &str)> = docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let idx = build_index(&collection(&refs), &cfg()).unwrap();
        assert_eq!(idx.search("match", 100).len(), 4);
    }

    #[test]
    fn ties_break_by_pid() {
        let c = collection(&[("b", "same text"), ("a", "same text"), ("c", "same text")]);
        let idx = build_index(&c, &cfg()).unwrap();
        let r = idx.search("same", 10);
        assert_eq!(r.pids().collect::<Vec<_>>(), vec!["a", "b", "c"]);
    }

    fn random_collection(rng: &mut ChaCha8Rng, docs: usize, vocab: usize) -> Collection {
        let passages = (0..docs)
            .map(|i| {
                let len = rng.random_range(1..30);
                let text: Vec<String> = (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect();
                Passage { id: format!("doc{i:04}"), text: text.join(" ") }
            })
            .collect();
        Collection::new(passages).unwrap()
    }

    #[test]
    fn tf_sums_match_recounted_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_collection(&mut rng, 100, 40);
        let idx = build_index(&c, &cfg()).unwrap();
        let mut sums = vec![0u32; idx.doc_count()];
        for term in idx.terms() {
            let list = idx.postings(term);
            assert!(list.windows(2).all(|w| w[0].doc < w[1].doc));
            for p in list {
                sums[p.doc as usize] += p.tf;
            }
        }
        for (i, p) in c.iter().enumerate() {
            let recount = p.text.split(' ').filter(|w| !w.is_empty()).count() as u32;
            assert_eq!(sums[i], recount);
            assert_eq!(idx.doc_len(i), Some(recount));
        }
        let mean = sums.iter().map(|&s| s as f64).sum::<f64>() / sums.len() as f64;
        assert!((idx.avg_doc_len() - mean).abs() < 1e-12);
    }

    #[test]
    fn search_matches_exhaustive_scoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = random_collection(&mut rng, 100, 30);
        let idx = build_index(&c, &cfg()).unwrap();
        for _ in 0..20 {
            let q: Vec<String> = (0..rng.random_range(1..5)).map(|_| format!("w{}", rng.random_range(0..35))).collect();
            let query = q.join(" ");
            let tokens = tokenize(&query, &cfg());
            let mut all: Vec<ScoredPassage> = (0..idx.doc_count())
                .map(|d| ScoredPassage::new(idx.doc_id(d).unwrap(), idx.bm25_score(&tokens, d)))
                .filter(|s| s.score > 0.0)
                .collect();
            all.sort_by(rank_order);
            assert_eq!(idx.search(&query, usize::MAX).entries, all);
            all.truncate(7);
            assert_eq!(idx.search(&query, 7).entries, all);
        }
    }

    #[test]
    fn persistence_round_trip_and_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_collection(&mut rng, 50, 20);
        let idx = build_index(&c, &cfg()).unwrap();
        let path = dir.path().join("index.bin");
        let fp = idx.save(&path).unwrap();
        let again = build_index(&c, &cfg()).unwrap();
        assert_eq!(again.fingerprint().unwrap(), fp);

        let loaded = InvertedIndex::load(&path, &cfg()).unwrap();
        assert_eq!(loaded.search("w1 w2 w3", 20), idx.search("w1 w2 w3", 20));

        let other = IndexConfig { lowercase: false, ..cfg() };
        assert!(matches!(InvertedIndex::load(&path, &other), Err(Error::Index(_))));
        let rescored = InvertedIndex::load(&path, &IndexConfig::qrecc()).unwrap();
        assert_eq!(rescored.config().k1, 0.82);
    }

    #[test]
    fn ranked_list_validation() {
        assert!(RankedList::new(vec![ScoredPassage::new("a", 1.0), ScoredPassage::new("b", 2.0)]).is_err());
        assert!(RankedList::new(vec![ScoredPassage::new("a", 2.0), ScoredPassage::new("a", 1.0)]).is_err());
        assert!(RankedList::new(vec![ScoredPassage::new("a", 2.0), ScoredPassage::new("b", 2.0)]).is_ok());
    }

    proptest! {
        #[test]
        fn extra_occurrence_never_lowers_score(
            docs in prop::collection::vec(prop::collection::vec(0usize..8, 1..12), 1..10),
            base in prop::collection::vec(0usize..8, 0..12),
            term in 0usize..8,
            b in 0.0f64..=1.0,
        ) {
            // Two documents of equal length in one index: one gains an occurrence of the
            // query term, the other a non-query filler token.
            let render = |d: &[usize]| d.iter().map(|w| format!("t{w}")).collect::<Vec<_>>().join(" ");
            let mut passages: Vec<Passage> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| Passage { id: format!("d{i}"), text: render(d) })
                .collect();
            let stem = render(&base);
            passages.push(Passage { id: "more".into(), text: format!("{stem} t{term}") });
            passages.push(Passage { id: "same".into(), text: format!("{stem} filler") });
            let config = IndexConfig { b, ..cfg() };
            let idx = build_index(&Collection::new(passages).unwrap(), &config).unwrap();
            let n = idx.doc_count();
            let q = [format!("t{term}")];
            prop_assert_eq!(idx.doc_len(n - 2), idx.doc_len(n - 1));
            prop_assert!(idx.bm25_score(&q, n - 2) >= idx.bm25_score(&q, n - 1));
        }

        #[test]
        fn search_is_deterministic_across_threads(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_collection(&mut rng, 40, 15);
            let a = build_index(&c, &cfg()).unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let b = pool.install(|| build_index(&c, &cfg()).unwrap());
            prop_assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
            prop_assert_eq!(a.search("w1 w4 w9", 10), b.search("w1 w4 w9", 10));
        }
    }
}
