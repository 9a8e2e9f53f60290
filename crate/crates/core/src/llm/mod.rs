//! Text generation: candidate sampling, responses and prefix-guided rewrites.

mod http;
mod mock;
pub mod prompt;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use http::HttpChatBackend;
pub use mock::{MockBackend, MockRule, MockScript};
pub use prompt::{ResponseDemo, RewriteDemo, DEMOS_PER_PROMPT};

use crate::concurrency::bounded_map;
use crate::corpus::{DialogueTurn, Passage, TurnKey};
use crate::error::{Error, Result};
use crate::preference::{build_prompt, PreferenceTag};

/// Attempts per request before an empty or whitespace-only generation is an error.
pub const EMPTY_RETRIES: u32 = 3;

/// Prefix selecting the canned-response backend, e.g. `mock:responses.json`.
pub const MOCK_SCHEME: &str = "mock:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::invalid(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(Error::invalid("max_tokens must be >= 1"));
        }
        Ok(())
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Chat-completions base URL, or `mock:<path>` for canned responses.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// Temperature for candidate sampling.
    pub temperature: f64,
    /// Temperature for responses and inference-time rewrites.
    pub response_temperature: f64,
    pub max_tokens: u32,
    pub max_concurrency: usize,
    pub retry_limit: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "llama-2-7b-chat".into(),
            api_key_env: None,
            temperature: 1.0,
            response_temperature: 0.0,
            max_tokens: 128,
            max_concurrency: 8,
            retry_limit: 3,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("temperature", self.temperature), ("response_temperature", self.response_temperature)] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid(format!("llm.{name} must be >= 0, got {t}")));
            }
        }
        if self.max_tokens == 0 {
            return Err(Error::invalid("llm.max_tokens must be >= 1"));
        }
        if self.max_concurrency == 0 {
            return Err(Error::invalid("llm.max_concurrency must be >= 1"));
        }
        Ok(())
    }
}

/// Rewrite demonstrations sampled per request plus the response demonstrations,
/// of which the first five are used for every response prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoPool {
    pub rewrite: Vec<RewriteDemo>,
    #[serde(default)]
    pub response: Vec<ResponseDemo>,
}

impl DemoPool {
    pub fn new(rewrite: Vec<RewriteDemo>, response: Vec<ResponseDemo>) -> Result<Self> {
        let pool = Self { rewrite, response };
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pool: Self =
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rewrite.len() < DEMOS_PER_PROMPT {
            return Err(Error::invalid(format!(
                "demo pool needs at least {DEMOS_PER_PROMPT} rewrite examples, has {}",
                self.rewrite.len()
            )));
        }
        if !self.response.is_empty() && self.response.len() < DEMOS_PER_PROMPT {
            return Err(Error::invalid(format!(
                "demo pool needs at least {DEMOS_PER_PROMPT} response examples, has {}",
                self.response.len()
            )));
        }
        Ok(())
    }

    pub fn response_demos(&self) -> Result<&[ResponseDemo]> {
        if self.response.len() < DEMOS_PER_PROMPT {
            return Err(Error::invalid(format!(
                "direct responses need {DEMOS_PER_PROMPT} response examples, pool has {}",
                self.response.len()
            )));
        }
        Ok(&self.response[..DEMOS_PER_PROMPT])
    }
}

/// Per-turn seed: first eight bytes of `sha256("{seed}:{conv_id}:{turn_id}")`.
pub fn turn_seed(seed: u64, key: &TurnKey) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{}:{}", key.conv_id, key.turn_id).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Demonstration indices for `k` requests, each an independent draw without replacement.
pub fn draw_demo_indices(pool_size: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if pool_size < DEMOS_PER_PROMPT {
        return Err(Error::invalid(format!("demo pool too small: {pool_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|_| rand::seq::index::sample(&mut rng, pool_size, DEMOS_PER_PROMPT).into_vec())
        .collect())
}

pub struct LlmClient {
    backend: Arc<dyn Generator>,
    config: LlmConfig,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Generator>, config: LlmConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { backend, config })
    }

    /// Builds the backend named by `config.base_url`; mock paths resolve against `base_dir`.
    pub fn from_config(config: &LlmConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let backend: Arc<dyn Generator> = match config.base_url.strip_prefix(MOCK_SCHEME) {
            Some(path) => Arc::new(MockBackend::from_file(&base_dir.join(path))?),
            None => Arc::new(HttpChatBackend::new(config)?),
        };
        Self::new(backend, config.clone())
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// One generation, trimmed; empty outputs are retried.
    pub fn complete(&self, request: &GenerationRequest) -> Result<String> {
        request.validate()?;
        for attempt in 1..=EMPTY_RETRIES {
            let text = self.backend.generate(request)?;
            let text = text.trim();
            if !text.is_empty() {
                return Ok(text.to_string());
            }
            log::warn!("empty generation (attempt {attempt}/{EMPTY_RETRIES})");
        }
        Err(Error::Backend(format!("empty generation after {EMPTY_RETRIES} attempts")))
    }

    /// Runs requests concurrently; results are in request order.
    pub fn complete_many(&self, requests: &[GenerationRequest]) -> Vec<Result<String>> {
        bounded_map(requests, self.config.max_concurrency, |_, r| self.complete(r))
    }

    fn request(&self, prompt: String, temperature: f64, seed: Option<u64>) -> GenerationRequest {
        GenerationRequest { prompt, temperature, max_tokens: self.config.max_tokens, seed }
    }
}

fn with_turn(key: &TurnKey, err: Error) -> Error {
    match err {
        Error::Backend(msg) => Error::Backend(format!("turn {key}: {msg}")),
        Error::Invalid(msg) => Error::Invalid(format!("turn {key}: {msg}")),
        other => other,
    }
}

fn collect_all(key: &TurnKey, results: Vec<Result<String>>) -> Result<Vec<String>> {
    results.into_iter().map(|r| r.map_err(|e| with_turn(key, e))).collect()
}

/// Sampling requests for one turn: request `i` carries seed `seed + i` and its own demos.
pub fn rewrite_requests(
    client: &LlmClient,
    turn: &DialogueTurn,
    k: usize,
    pool: &DemoPool,
    seed: u64,
) -> Result<Vec<GenerationRequest>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 candidates per turn, got {k}")));
    }
    pool.validate()?;
    let draws = draw_demo_indices(pool.rewrite.len(), k, seed)?;
    Ok(draws
        .iter()
        .enumerate()
        .map(|(i, idx)| {
            let demos: Vec<&RewriteDemo> = idx.iter().map(|&j| &pool.rewrite[j]).collect();
            let prompt = prompt::rewrite_prompt(&demos, turn);
            client.request(prompt, client.config.temperature, Some(seed.wrapping_add(i as u64)))
        })
        .collect())
}

/// Samples `k` candidate rewrites in request order.
pub fn sample_rewrites(
    client: &LlmClient,
    turn: &DialogueTurn,
    k: usize,
    pool: &DemoPool,
    seed: u64,
) -> Result<Vec<String>> {
    let requests = rewrite_requests(client, turn, k, pool, seed).map_err(|e| with_turn(&turn.key(), e))?;
    let out = collect_all(&turn.key(), client.complete_many(&requests))?;
    if out.len() != k {
        return Err(Error::Backend(format!("turn {}: expected {k} rewrites, got {}", turn.key(), out.len())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseMode {
    #[default]
    Direct,
    Grounded,
}

fn response_request(
    client: &LlmClient,
    turn: &DialogueTurn,
    rewrite: &str,
    mode: ResponseMode,
    passages: Option<&[Passage]>,
    pool: &DemoPool,
) -> Result<GenerationRequest> {
    let prompt = match mode {
        ResponseMode::Direct => prompt::response_prompt(pool.response_demos()?, rewrite),
        ResponseMode::Grounded => {
            let passages = passages.unwrap_or_default();
            if passages.len() != 3 {
                return Err(Error::invalid(format!("grounded responses need 3 passages, got {}", passages.len())));
            }
            prompt::grounded_response_prompt(turn, rewrite, passages)
        }
    };
    Ok(client.request(prompt, client.config.response_temperature, None))
}

pub fn generate_response(
    client: &LlmClient,
    turn: &DialogueTurn,
    rewrite: &str,
    mode: ResponseMode,
    passages: Option<&[Passage]>,
    pool: &DemoPool,
) -> Result<String> {
    let key = turn.key();
    let request = response_request(client, turn, rewrite, mode, passages, pool).map_err(|e| with_turn(&key, e))?;
    client.complete(&request).map_err(|e| with_turn(&key, e))
}

/// One response per rewrite. In grounded mode `passages[i]` backs `rewrites[i]`.
pub fn generate_responses(
    client: &LlmClient,
    turn: &DialogueTurn,
    rewrites: &[String],
    mode: ResponseMode,
    passages: Option<&[Vec<Passage>]>,
    pool: &DemoPool,
) -> Result<Vec<String>> {
    let key = turn.key();
    if let Some(p) = passages {
        if p.len() != rewrites.len() {
            return Err(Error::invalid(format!("turn {key}: {} passage sets for {} rewrites", p.len(), rewrites.len())));
        }
    }
    let requests = rewrites
        .iter()
        .enumerate()
        .map(|(i, rq)| response_request(client, turn, rq, mode, passages.map(|p| p[i].as_slice()), pool))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| with_turn(&key, e))?;
    collect_all(&key, client.complete_many(&requests))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixedRewrite {
    pub tag: PreferenceTag,
    pub prompt: String,
    pub text: String,
}

/// Inference-time rewrite; `prefix` is a tag such as `[REWRITE]`.
pub fn generate_prefixed_rewrite(client: &LlmClient, turn: &DialogueTurn, prefix: &str) -> Result<PrefixedRewrite> {
    let tag: PreferenceTag = prefix.parse()?;
    let prompt = build_prompt(tag, turn);
    let request = client.request(prompt.clone(), client.config.response_temperature, None);
    let text = client.complete(&request).map_err(|e| with_turn(&turn.key(), e))?;
    Ok(PrefixedRewrite { tag, prompt, text })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::corpus::HistoryPair;
    use crate::testutil::serve;

    fn pool(n: usize) -> DemoPool {
        let rewrite = (0..n)
            .map(|i| RewriteDemo { dialogue: format!("Q: demo question {i}"), rewrite: format!("demo rewrite {i}") })
            .collect();
        let response = (0..6)
            .map(|i| ResponseDemo { question: format!("question {i}"), answer: format!("answer {i}") })
            .collect();
        DemoPool::new(rewrite, response).unwrap()
    }

    fn turn() -> DialogueTurn {
        DialogueTurn::new("c1", 2, "who sang it")
            .with_history(vec![HistoryPair::new("what is Hello", "A song by Adele.")])
    }

    /// Answers `RW<seed>` and records prompts.
    struct Echo(AtomicUsize);

    impl Generator for Echo {
        fn generate(&self, r: &GenerationRequest) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("RW{}", r.seed.unwrap_or(0)))
        }
    }

    fn client(backend: Arc<dyn Generator>) -> LlmClient {
        LlmClient::new(backend, LlmConfig::default()).unwrap()
    }

    fn mock(default: &str) -> Arc<MockBackend> {
        Arc::new(MockBackend::new(MockScript { rules: vec![], default: Some(default.into()) }).unwrap())
    }

    fn demo_sets(requests: &[GenerationRequest]) -> Vec<BTreeSet<String>> {
        requests
            .iter()
            .map(|r| {
                r.prompt
                    .lines()
                    .filter_map(|l| l.strip_prefix("Rewritten Sentence: demo rewrite "))
                    .map(str::to_string)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn sample_rewrites_returns_k_in_request_order() {
        let c = client(Arc::new(Echo(AtomicUsize::new(0))));
        let out = sample_rewrites(&c, &turn(), 4, &pool(8), 0).unwrap();
        assert_eq!(out, vec!["RW0", "RW1", "RW2", "RW3"]);
    }

    #[test]
    fn k_below_two_is_rejected() {
        let c = client(Arc::new(Echo(AtomicUsize::new(0))));
        let err = sample_rewrites(&c, &turn(), 1, &pool(8), 0).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)), "{err}");
    }

    #[test]
    fn small_pool_is_rejected() {
        let rewrite = vec![RewriteDemo { dialogue: "Q: a".into(), rewrite: "a".into() }; 4];
        assert!(DemoPool::new(rewrite, vec![]).is_err());
    }

    #[test]
    fn same_seed_selects_same_demonstrations() {
        let p = pool(12);
        let run = |seed| {
            let m = mock("x");
            sample_rewrites(&client(m.clone()), &turn(), 6, &p, seed).unwrap();
            demo_sets(&m.requests())
        };
        let a = run(42);
        assert_eq!(a, run(42));
        assert_ne!(a, run(43));
        for set in &a {
            assert_eq!(set.len(), DEMOS_PER_PROMPT);
        }
        // replaying the sampler yields the demonstrations found in the prompts
        let replay: Vec<BTreeSet<String>> = draw_demo_indices(12, 6, 42)
            .unwrap()
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| i.to_string()).collect())
            .collect();
        assert_eq!(a, replay);
    }

    #[test]
    fn draws_differ_across_requests() {
        let draws = draw_demo_indices(20, 8, 7).unwrap();
        let distinct: BTreeSet<Vec<usize>> = draws.iter().cloned().collect();
        assert!(distinct.len() > 1);
        for d in &draws {
            assert_eq!(d.iter().collect::<BTreeSet<_>>().len(), DEMOS_PER_PROMPT);
            assert!(d.iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn turn_seed_depends_on_every_part() {
        let k = TurnKey::new("c1", 2);
        assert_eq!(turn_seed(1, &k), turn_seed(1, &k));
        assert_ne!(turn_seed(1, &k), turn_seed(2, &k));
        assert_ne!(turn_seed(1, &k), turn_seed(1, &TurnKey::new("c1", 3)));
        assert_ne!(turn_seed(1, &k), turn_seed(1, &TurnKey::new("c2", 2)));
    }

    struct Blank(AtomicUsize);

    impl Generator for Blank {
        fn generate(&self, _: &GenerationRequest) -> Result<String> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(if n < 2 { "  \n".into() } else { " fine ".into() })
        }
    }

    #[test]
    fn empty_generations_are_retried_then_fail() {
        let c = client(Arc::new(Blank(AtomicUsize::new(0))));
        let req = c.request("p".into(), 0.0, None);
        assert_eq!(c.complete(&req).unwrap(), "fine");

        let c = client(mock("   "));
        let err = sample_rewrites(&c, &turn(), 2, &pool(5), 0).unwrap_err();
        assert!(err.is_backend());
        assert!(err.to_string().contains("c1#2"), "{err}");
    }

    #[test]
    fn direct_response_is_verbatim_with_fixed_demos() {
        let m = mock("Adele sang Hello.");
        let c = client(m.clone());
        let p = pool(5);
        let a = generate_response(&c, &turn(), "who sang Hello", ResponseMode::Direct, None, &p).unwrap();
        assert_eq!(a, "Adele sang Hello.");
        generate_response(&c, &turn(), "when was Hello released", ResponseMode::Direct, None, &p).unwrap();
        let reqs = m.requests();
        let head = |r: &GenerationRequest| r.prompt.split(prompt::ANNOTATED_MARKER).next().unwrap().to_string();
        assert_eq!(head(&reqs[0]), head(&reqs[1]));
        assert!(!head(&reqs[0]).contains("question 5"));
        assert_eq!(reqs[0].temperature, 0.0);
    }

    #[test]
    fn grounded_response_needs_three_passages() {
        let c = client(mock("r"));
        let ps: Vec<Passage> = (0..3).map(|i| Passage { id: format!("p{i}"), text: format!("text {i}") }).collect();
        let err = generate_response(&c, &turn(), "q", ResponseMode::Grounded, Some(&ps[..2]), &pool(5)).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
        assert_eq!(generate_response(&c, &turn(), "q", ResponseMode::Grounded, Some(&ps), &pool(5)).unwrap(), "r");
    }

    #[test]
    fn prefixed_rewrite_uses_tagged_prompt() {
        let m = mock("Who sang Hello?");
        let c = client(m.clone());
        let out = generate_prefixed_rewrite(&c, &turn(), "[REWRITE]").unwrap();
        assert!(out.prompt.starts_with("[REWRITE]"));
        assert_eq!(m.requests()[0].prompt, out.prompt);
        assert_eq!(out.prompt, build_prompt(PreferenceTag::Rewrite, &turn()));
        assert_eq!(out.text, "Who sang Hello?");
        assert!(generate_prefixed_rewrite(&c, &turn(), "[BOGUS]").is_err());
    }

    #[test]
    fn http_backend_end_to_end() {
        let body = serde_json::json!({"choices": [{"message": {"content": "  Who sang Hello?\n"}}]}).to_string();
        let (url, rx) = serve(vec![(200, body)]);
        let config = LlmConfig { base_url: url, ..LlmConfig::default() };
        let c = LlmClient::from_config(&config, Path::new(".")).unwrap();
        let out = generate_prefixed_rewrite(&c, &turn(), "[RETRIEVAL]").unwrap();
        assert_eq!(out.text, "Who sang Hello?");
        let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert!(sent["messages"][0]["content"].as_str().unwrap().starts_with("[RETRIEVAL]\n"));
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn mock_backend_from_config_resolves_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.json"), r#"{"default": "ok"}"#).unwrap();
        let config = LlmConfig { base_url: "mock:m.json".into(), ..LlmConfig::default() };
        let c = LlmClient::from_config(&config, dir.path()).unwrap();
        assert_eq!(generate_prefixed_rewrite(&c, &turn(), "rewrite").unwrap().text, "ok");
    }
}
