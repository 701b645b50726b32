//! Text generation and text embedding providers.
//!
//! [`MockProvider`] is a pure function of (request bytes, seed) and is the
//! default everywhere. [`HttpProvider`] talks to chat-completion and
//! embedding endpoints and only exists when network access is opted into.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::prompt::{PromptBundle, PromptKind};
use crate::error::{Error, Result};
use crate::linalg::norm;

/// Anything that can complete prompts and embed text.
pub trait Provider: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn name(&self) -> String;

    /// Completion text for a prompt. `sample` distinguishes repeated draws
    /// for the same prompt.
    fn generate(&self, prompt: &PromptBundle, sample: u32) -> Result<String>;

    /// Fixed-dimension embedding of non-empty text.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;

    /// Providers that return negative embeddings directly from a prompt
    /// (a contrastively fine-tuned model) override this.
    fn embed_prompt(&self, _prompt: &PromptBundle) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn generate(&self, prompt: &PromptBundle, sample: u32) -> Result<String> {
        (**self).generate(prompt, sample)
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        (**self).embed(text)
    }
    fn embed_prompt(&self, prompt: &PromptBundle) -> Result<Option<Vec<f64>>> {
        (**self).embed_prompt(prompt)
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn seed_from_digest(d: &[u8; 32]) -> [u8; 32] {
    *d
}

pub(crate) fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::InvalidArgument("cannot embed empty text".into()))
    } else {
        Ok(())
    }
}

/// Hash-seeded Gaussian vector, L2-normalized.
pub(crate) fn hashed_unit_vector(parts: &[&[u8]], dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::from_seed(seed_from_digest(&sha256(parts)));
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

const WORDS: &[&str] = &[
    "cozy",
    "lively",
    "budget",
    "premium",
    "family",
    "late-night",
    "vegan",
    "spicy",
    "vintage",
    "acoustic",
    "outdoor",
    "classic",
    "indie",
    "handmade",
    "quick",
    "quiet",
    "seasonal",
    "retro",
    "local",
    "imported",
    "playful",
    "strategic",
    "collectible",
    "educational",
];

/// Deterministic offline provider.
#[derive(Debug)]
pub struct MockProvider {
    seed: u64,
    dim: usize,
    none_rate: f64,
    generate_calls: AtomicU64,
    embed_calls: AtomicU64,
}

impl MockProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            none_rate: 0.0,
            generate_calls: AtomicU64::new(0),
            embed_calls: AtomicU64::new(0),
        }
    }

    /// Fraction of hard-negative requests answered with `"None"`.
    pub fn with_none_rate(mut self, rate: f64) -> Self {
        self.none_rate = rate;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generate_calls(&self) -> u64 {
        self.generate_calls.load(Ordering::Relaxed)
    }

    pub fn embed_calls(&self) -> u64 {
        self.embed_calls.load(Ordering::Relaxed)
    }

    fn phrase(rng: &mut ChaCha8Rng, n: usize) -> String {
        (0..n)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Provider for MockProvider {
    fn name(&self) -> String {
        format!("mock:seed={}:dim={}", self.seed, self.dim)
    }

    fn generate(&self, prompt: &PromptBundle, sample: u32) -> Result<String> {
        self.generate_calls.fetch_add(1, Ordering::Relaxed);
        let digest = sha256(&[
            b"generate",
            &self.seed.to_le_bytes(),
            &sample.to_le_bytes(),
            &prompt.canonical_bytes(),
        ]);
        let mut rng = ChaCha8Rng::from_seed(digest);
        let tag = hex::encode(&digest[..4]);
        let text = match prompt.kind {
            PromptKind::UserProfile | PromptKind::ItemProfile => json!({
                "summarization": format!("Appeals to people who like {} things ({tag})", Self::phrase(&mut rng, 3)),
                "reasoning": format!("mock reasoning {tag}"),
            }),
            PromptKind::HardNegative | PromptKind::Hybrid => {
                if rng.random::<f64>() < self.none_rate {
                    json!({"hard negative item": "None", "reasoning": "mock could not find one"})
                } else {
                    json!({
                        "hard negative item": format!("{} item {tag}", Self::phrase(&mut rng, 2)),
                        "reasoning": format!("mock reasoning {tag}"),
                    })
                }
            }
        };
        Ok(text.to_string())
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        check_text(text)?;
        self.embed_calls.fetch_add(1, Ordering::Relaxed);
        Ok(hashed_unit_vector(
            &[b"embed", &self.seed.to_le_bytes(), text.as_bytes()],
            self.dim,
        ))
    }
}

/// Exponential backoff for transient failures.
#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(200),
            max_delay: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if is_transient(&e) && attempt < self.max_retries => {
                    log::warn!("transient provider failure (attempt {}): {e}", attempt + 1);
                    thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                Err(e) if is_transient(&e) => {
                    return Err(Error::Provider(format!(
                        "giving up after {} attempts: {e}",
                        attempt + 1
                    )))
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn is_transient(e: &Error) -> bool {
    match e {
        Error::HttpStatus { status, .. } => *status == 429 || *status >= 500,
        Error::Provider(_) => true,
        _ => false,
    }
}

/// OpenAI-compatible HTTP endpoints.
pub struct HttpProvider {
    agent: ureq::Agent,
    chat_url: Option<String>,
    embedding_url: Option<String>,
    model: String,
    embedding_model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    /// Send hybrid/hard-negative prompts to the embedding endpoint and use
    /// the returned vector as the negative embedding.
    direct_embedding: bool,
}

impl HttpProvider {
    pub fn new(settings: &ProviderSettings) -> Result<Self> {
        if settings.endpoint.is_none() && settings.embedding_endpoint.is_none() {
            return Err(Error::Config(
                "http provider needs provider.endpoint or provider.embedding_endpoint".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(settings.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            chat_url: settings.endpoint.clone(),
            embedding_url: settings.embedding_endpoint.clone(),
            model: settings.model.clone(),
            embedding_model: settings.embedding_model.clone(),
            api_key: settings.api_key.clone(),
            retry: RetryPolicy {
                max_retries: settings.retries,
                base_delay: Duration::from_millis(settings.backoff_ms),
                ..RetryPolicy::default()
            },
            direct_embedding: settings.direct_embedding,
        })
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value> {
        self.retry.run(|| {
            let mut req = self
                .agent
                .post(url)
                .header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let mut resp = req
                .send_json(body)
                .map_err(|e| Error::Provider(format!("POST {url}: {e}")))?;
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Provider(format!("reading response from {url}: {e}")))?;
            if !(200..300).contains(&status) {
                return Err(Error::HttpStatus { status, body: text });
            }
            serde_json::from_str(&text).map_err(|e| Error::MalformedResponse {
                msg: e.to_string(),
                raw: text,
            })
        })
    }

    fn embedding_request(&self, input: &str) -> Result<Vec<f64>> {
        let url = self
            .embedding_url
            .as_deref()
            .ok_or_else(|| Error::Config("provider.embedding_endpoint is not set".into()))?;
        let v = self.post(url, &json!({"model": self.embedding_model, "input": input}))?;
        parse_embedding_response(&v)
    }
}

pub(crate) fn parse_chat_response(v: &Value) -> Result<String> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedResponse {
            msg: "missing choices[0].message.content".into(),
            raw: v.to_string(),
        })
}

pub(crate) fn parse_embedding_response(v: &Value) -> Result<Vec<f64>> {
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedResponse {
            msg: "missing data[0].embedding".into(),
            raw: v.to_string(),
        })?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| Error::MalformedResponse {
                    msg: "non-numeric embedding entry".into(),
                    raw: v.to_string(),
                })
        })
        .collect()
}

impl Provider for HttpProvider {
    fn name(&self) -> String {
        format!("http:{}:{}", self.model, self.embedding_model)
    }

    fn generate(&self, prompt: &PromptBundle, _sample: u32) -> Result<String> {
        let url = self
            .chat_url
            .as_deref()
            .ok_or_else(|| Error::Config("provider.endpoint is not set".into()))?;
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.payload},
            ],
        });
        parse_chat_response(&self.post(url, &body)?)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        check_text(text)?;
        self.embedding_request(text)
    }

    fn embed_prompt(&self, prompt: &PromptBundle) -> Result<Option<Vec<f64>>> {
        if !self.direct_embedding {
            return Ok(None);
        }
        let input = format!("{}\n{}", prompt.system, prompt.payload);
        self.embedding_request(&input).map(Some)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Mock,
    Http,
}

impl FromStr for ProviderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            other => Err(Error::Config(format!(
                "unknown provider {other:?} (expected mock|http)"
            ))),
        }
    }
}

/// Provider section of the experiment config.
#[derive(Clone, Debug, PartialEq)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub embedding_endpoint: Option<String>,
    pub model: String,
    pub embedding_model: String,
    pub api_key: Option<String>,
    pub mock_seed: u64,
    pub mock_dim: usize,
    pub mock_none_rate: f64,
    pub cache: Option<std::path::PathBuf>,
    pub max_inflight: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub allow_network: bool,
    pub direct_embedding: bool,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            embedding_endpoint: None,
            model: "gpt-3.5-turbo".into(),
            embedding_model: "text-embedding-ada-002".into(),
            api_key: None,
            mock_seed: 0,
            mock_dim: 64,
            mock_none_rate: 0.0,
            cache: None,
            max_inflight: 4,
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 200,
            allow_network: false,
            direct_embedding: false,
        }
    }
}

impl ProviderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_inflight == 0 {
            return Err(Error::Config("provider.max_inflight must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mock_none_rate) {
            return Err(Error::Config(
                "provider.mock_none_rate must lie in [0, 1]".into(),
            ));
        }
        match self.kind {
            ProviderKind::Mock if self.mock_dim == 0 => {
                Err(Error::Config("provider.mock_dim must be >= 1".into()))
            }
            ProviderKind::Http if !self.allow_network => Err(Error::Config(
                "http provider requires provider.allow_network = true".into(),
            )),
            ProviderKind::Http if self.endpoint.is_none() && self.embedding_endpoint.is_none() => {
                Err(Error::Config(
                    "http provider requires provider.endpoint".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Builds the configured provider (without caching).
pub fn build_provider(settings: &ProviderSettings) -> Result<Box<dyn Provider>> {
    settings.validate()?;
    Ok(match settings.kind {
        ProviderKind::Mock => Box::new(
            MockProvider::new(settings.mock_seed, settings.mock_dim)
                .with_none_rate(settings.mock_none_rate),
        ),
        ProviderKind::Http => Box::new(HttpProvider::new(settings)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cosine;
    use crate::semantic::prompt::build_item_prompt;

    #[test]
    fn mock_generation_is_deterministic() {
        let p = build_item_prompt(Some("x"), None, &[]);
        let a = MockProvider::new(7, 16).generate(&p, 0).unwrap();
        let b = MockProvider::new(7, 16).generate(&p, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, MockProvider::new(8, 16).generate(&p, 0).unwrap());
        assert_ne!(a, MockProvider::new(7, 16).generate(&p, 1).unwrap());
    }

    #[test]
    fn mock_embedding_unit_norm_and_distinct() {
        let m = MockProvider::new(1, 32);
        let a = m.embed("hello").unwrap();
        assert_eq!(a, m.embed("hello").unwrap());
        assert_eq!(a.len(), 32);
        assert!((norm(&a) - 1.0).abs() < 1e-12);
        let b = m.embed("hello!").unwrap();
        assert!(cosine(&a, &b).unwrap() < 1.0 - 1e-9);
        assert!(m.embed("   ").is_err());
        assert_eq!(m.embed_calls(), 3);
    }

    #[test]
    fn retry_gives_up_on_transient_errors() {
        let policy = RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        };
        let mut calls = 0;
        let r: Result<()> = policy.run(|| {
            calls += 1;
            Err(Error::HttpStatus {
                status: 503,
                body: String::new(),
            })
        });
        assert!(matches!(r, Err(Error::Provider(_))));
        assert_eq!(calls, 3);
    }

    #[test]
    fn retry_stops_on_client_errors() {
        let mut calls = 0;
        let r: Result<()> = RetryPolicy::default().run(|| {
            calls += 1;
            Err(Error::HttpStatus {
                status: 401,
                body: "no".into(),
            })
        });
        assert!(matches!(r, Err(Error::HttpStatus { status: 401, .. })));
        assert_eq!(calls, 1);
    }

    #[test]
    fn backoff_grows_exponentially() {
        let p = RetryPolicy {
            max_retries: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(350));
    }

    #[test]
    fn http_requires_opt_in() {
        let s = ProviderSettings {
            kind: ProviderKind::Http,
            endpoint: Some("http://localhost:1/v1/chat".into()),
            ..Default::default()
        };
        assert!(build_provider(&s).is_err());
        let missing = ProviderSettings {
            kind: ProviderKind::Http,
            allow_network: true,
            ..Default::default()
        };
        assert!(build_provider(&missing).is_err());
    }

    #[test]
    fn response_shapes() {
        let chat = json!({"choices": [{"message": {"content": "hi"}}]});
        assert_eq!(parse_chat_response(&chat).unwrap(), "hi");
        let emb = json!({"data": [{"embedding": [0.5, -1.0]}]});
        assert_eq!(parse_embedding_response(&emb).unwrap(), vec![0.5, -1.0]);
        assert!(parse_embedding_response(&json!({"data": []})).is_err());
    }
}
