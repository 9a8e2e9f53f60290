//! Semantic similarity in `[0, 1]` between two texts.
//!
//! Two backends: cosine similarity of sentence embeddings served over HTTP
//! (negative cosines clamp to zero), and an offline lexical token-F1.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::retriever::{IndexConfig, Tokenizer};

pub const EMBED_BATCH: usize = 64;

/// Dense row-major K×K matrix of pairwise similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    k: usize,
    values: Vec<f64>,
}

impl SimMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { k, values: vec![0.0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("similarity matrix must be square"));
        }
        Ok(Self { k, values: rows.concat() })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.k + j]
    }

    fn set_pair(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.k + j] = v;
        self.values[j * self.k + i] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Same matrix with rows and columns reordered: `out[i][j] = self[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.k);
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                out.values[i * self.k + j] = self.get(pi, pj);
            }
        }
        out
    }
}

pub trait Similarity: Send + Sync {
    /// Symmetric similarity in `[0, 1]`.
    fn sim(&self, a: &str, b: &str) -> Result<f64>;

    fn self_similarity(&self, _text: &str) -> Result<f64> {
        Ok(1.0)
    }

    /// All pairwise similarities; each unordered pair is evaluated once.
    fn sim_matrix(&self, texts: &[String]) -> Result<SimMatrix> {
        if texts.len() < 2 {
            return Err(Error::invalid(format!("sim_matrix needs K >= 2, got {}", texts.len())));
        }
        let mut m = SimMatrix::zeros(texts.len());
        for i in 0..texts.len() {
            let d = self.self_similarity(&texts[i])?;
            m.set_pair(i, i, d);
            for j in i + 1..texts.len() {
                let v = self.sim(&texts[i], &texts[j]).map_err(|e| match e {
                    Error::Backend(msg) => Error::Backend(format!("pair ({i}, {j}): {msg}")),
                    other => other,
                })?;
                m.set_pair(i, j, v);
            }
        }
        Ok(m)
    }
}

/// Token-level F1 with multiset overlap.
pub struct LexicalSimilarity {
    tokenizer: Tokenizer,
}

impl LexicalSimilarity {
    pub fn new(config: &IndexConfig) -> Self {
        Self { tokenizer: Tokenizer::new(config) }
    }
}

impl Default for LexicalSimilarity {
    fn default() -> Self {
        Self::new(&IndexConfig::default())
    }
}

/// F1 between two token multisets; 0 when either side is empty.
pub fn token_f1<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / a.len() as f64;
    let recall = overlap as f64 / b.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

impl Similarity for LexicalSimilarity {
    fn sim(&self, a: &str, b: &str) -> Result<f64> {
        if a.is_empty() && b.is_empty() {
            log::warn!("similarity of two empty strings is taken as 0");
            return Ok(0.0);
        }
        let ta = self.tokenizer.tokenize(a);
        let tb = self.tokenizer.tokenize(b);
        if ta.is_empty() && tb.is_empty() {
            // Nothing to compare lexically; fall back to exact equality.
            return Ok(if a == b { 1.0 } else { 0.0 });
        }
        Ok(token_f1(&ta, &tb))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    /// Base URL; requests go to `<endpoint>/embeddings`.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8080/v1".into(),
            model: "all-mpnet-base-v2".into(),
            api_key_env: None,
            batch_size: EMBED_BATCH,
            timeout_secs: 60,
        }
    }
}

/// Cosine similarity of embeddings from an OpenAI-style `/embeddings` endpoint.
pub struct EmbeddingSimilarity {
    config: EmbeddingConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl EmbeddingSimilarity {
    pub fn new(config: EmbeddingConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::invalid("embedding batch_size must be >= 1"));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::invalid(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        Ok(Self { config, api_key, agent })
    }

    /// One vector per input text, in input order.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for (b, batch) in texts.chunks(self.config.batch_size).enumerate() {
            let start = b * self.config.batch_size;
            let vectors = self.embed_batch(batch).map_err(|e| match e {
                Error::Backend(msg) => Error::Backend(format!(
                    "embedding texts {start}..{}: {msg}",
                    start + batch.len()
                )),
                other => other,
            })?;
            out.extend(vectors);
        }
        Ok(out)
    }

    fn embed_batch(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embeddings", self.config.endpoint.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({ "model": self.config.model, "input": batch });
        let resp: EmbeddingResponse = req
            .send_json(body)
            .map_err(|e| Error::Backend(e.to_string()))?
            .into_json()
            .map_err(|e| Error::Backend(format!("bad embedding response: {e}")))?;
        let mut data = resp.data;
        if data.len() != batch.len() {
            return Err(Error::Backend(format!(
                "expected {} embeddings, got {}",
                batch.len(),
                data.len()
            )));
        }
        data.sort_by_key(|d| d.index);
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

/// `max(0, cos(a, b))`, with zero vectors treated as dissimilar.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

impl Similarity for EmbeddingSimilarity {
    fn sim(&self, a: &str, b: &str) -> Result<f64> {
        if a.is_empty() && b.is_empty() {
            log::warn!("similarity of two empty strings is taken as 0");
            return Ok(0.0);
        }
        let v = self.embed(&[a, b])?;
        Ok(clamped_cosine(&v[0], &v[1]))
    }

    fn self_similarity(&self, text: &str) -> Result<f64> {
        self.sim(text, text)
    }

    fn sim_matrix(&self, texts: &[String]) -> Result<SimMatrix> {
        if texts.len() < 2 {
            return Err(Error::invalid(format!("sim_matrix needs K >= 2, got {}", texts.len())));
        }
        // Embed each distinct text once.
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut unique: Vec<&str> = Vec::new();
        for t in texts {
            slot.entry(t.as_str()).or_insert_with(|| {
                unique.push(t.as_str());
                unique.len() - 1
            });
        }
        let vectors = self.embed(&unique)?;
        let vec_of = |i: usize| &vectors[slot[texts[i].as_str()]];
        let mut m = SimMatrix::zeros(texts.len());
        for i in 0..texts.len() {
            for j in i..texts.len() {
                let v = if texts[i].is_empty() && texts[j].is_empty() {
                    0.0
                } else {
                    clamped_cosine(vec_of(i), vec_of(j))
                };
                m.set_pair(i, j, v);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Embedding,
    #[default]
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimilarityConfig {
    pub kind: SimilarityKind,
    pub embedding: EmbeddingConfig,
}

/// Builds the configured backend. The lexical backend shares the retriever's tokenizer settings.
pub fn backend_from_config(config: &SimilarityConfig, tokenizer: &IndexConfig) -> Result<Box<dyn Similarity>> {
    Ok(match config.kind {
        SimilarityKind::Lexical => Box::new(LexicalSimilarity::new(tokenizer)),
        SimilarityKind::Embedding => Box::new(EmbeddingSimilarity::new(config.embedding.clone())?),
    })
}
