//! Backends that answer rendered prompts: a chat-completions client and an
//! offline knowledge base, plus the on-disk response cache.

pub mod cache;
pub mod clock;
pub mod http;
pub mod offline;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Triplet;
use crate::prompts::PromptKind;

pub use cache::{CacheError, ResponseCache};
pub use clock::{Clock, FakeClock, RateLimiter, SystemClock};
pub use http::{ChatClient, ChatConfig, HttpResponse, ImageMode, ReqwestTransport, Transport};
pub use offline::OfflineKnowledgeBase;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    #[error("no table entry: {0}")]
    MissingEntry(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("unusable response: {0}")]
    BadResponse(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{kind} request failed: {failure}")]
pub struct ProviderError {
    pub kind: PromptKind,
    pub failure: ProviderFailure,
}

impl ProviderError {
    pub fn new(kind: PromptKind, failure: ProviderFailure) -> Self {
        ProviderError { kind, failure }
    }
}

/// Structured inputs behind a prompt.
///
/// Networked backends ignore this and only see the prompt text; the offline
/// knowledge base answers from it. It never takes part in the cache key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestContext {
    pub sample_id: Option<String>,
    /// Subject whose knowledge is requested.
    pub subject: Option<String>,
    /// Candidates to judge, or the key subgraph to express.
    pub triplets: Vec<Triplet>,
    pub response: Option<String>,
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderRequest {
    pub kind: PromptKind,
    pub prompt: String,
    pub image_ref: Option<String>,
    /// Retry ordinal; a non-zero attempt gets its own cache entry so that a
    /// retried request is not answered by the response it is retrying.
    pub attempt: u32,
    pub context: RequestContext,
    cache_key: String,
}

impl ProviderRequest {
    pub fn new(kind: PromptKind, prompt: impl Into<String>, image_ref: Option<&str>) -> Self {
        let prompt = prompt.into();
        let image_ref = image_ref.map(str::to_string);
        let cache_key = request_cache_key(kind, &prompt, image_ref.as_deref(), 0);
        ProviderRequest {
            kind,
            prompt,
            image_ref,
            attempt: 0,
            context: RequestContext::default(),
            cache_key,
        }
    }

    pub fn with_context(mut self, context: RequestContext) -> Self {
        self.context = context;
        self
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self.cache_key = request_cache_key(self.kind, &self.prompt, self.image_ref.as_deref(), attempt);
        self
    }

    pub fn cache_key(&self) -> &str {
        &self.cache_key
    }
}

/// Hex SHA-256 over the request kind, prompt and image reference.
pub fn request_cache_key(kind: PromptKind, prompt: &str, image_ref: Option<&str>, attempt: u32) -> String {
    let mut h = Sha256::new();
    for part in [kind.as_str(), prompt, image_ref.unwrap_or("")] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.update([u8::from(image_ref.is_some())]);
    if attempt > 0 {
        h.update(attempt.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub corrupt: usize,
}

/// Serves repeated requests from a [`ResponseCache`].
///
/// Concurrent identical requests wait on a per-key lock, so the inner
/// provider sees each key at most once.
pub struct CachingProvider<P> {
    inner: P,
    cache: ResponseCache,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
    corrupt: AtomicUsize,
}

impl<P: Provider> CachingProvider<P> {
    pub fn new(inner: P, cache: ResponseCache) -> Self {
        CachingProvider {
            inner,
            cache,
            inflight: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
            corrupt: AtomicUsize::new(0),
        }
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            corrupt: self.corrupt.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn lookup(&self, key: &str) -> Option<String> {
        match self.cache.get(key) {
            Ok(hit) => hit,
            Err(err) => {
                log::warn!("{err}; treating as a miss");
                self.corrupt.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }
}

impl<P: Provider> Provider for CachingProvider<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let key = request.cache_key().to_string();
        let slot = {
            let mut map = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
            Arc::clone(map.entry(key.clone()).or_default())
        };
        let result = {
            let _guard = slot.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(text) = self.lookup(&key) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(text)
            } else {
                self.misses.fetch_add(1, Ordering::Relaxed);
                let text = self.inner.complete(request)?;
                if let Err(err) = self.cache.put(&key, request.kind, &text) {
                    log::warn!("could not cache response {key}: {err}");
                }
                Ok(text)
            }
        };
        let mut map = self.inflight.lock().unwrap_or_else(|e| e.into_inner());
        if map.get(&key).is_some_and(|s| Arc::strong_count(s) == 2) {
            map.remove(&key);
        }
        result
    }
}
