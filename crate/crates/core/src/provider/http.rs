//! Blocking client for chat-completions compatible endpoints.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::clock::{Clock, RateLimiter, SystemClock};
use super::{Provider, ProviderError, ProviderFailure, ProviderRequest};

/// How images reach the endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageMode {
    /// The image reference is sent as given; it must be a URL the endpoint
    /// can fetch.
    #[default]
    Url,
    /// Local files are read and sent as base64 data URLs; http(s) references
    /// are passed through.
    Inline,
    /// Text only.
    Omit,
}

#[derive(Debug, Clone)]
pub struct ChatConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    /// Requests per second; `None` disables limiting.
    pub rate_limit: Option<f64>,
    pub image_mode: ImageMode,
    /// Base directory for relative local image paths.
    pub image_root: Option<PathBuf>,
    pub timeout: Duration,
}

impl Default for ChatConfig {
    fn default() -> Self {
        ChatConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key: None,
            temperature: 0.0,
            max_tokens: None,
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
            rate_limit: None,
            image_mode: ImageMode::Url,
            image_root: None,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One POST of a JSON body. `Err` means no HTTP response was received.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(ReqwestTransport { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<HttpResponse, String> {
        let mut req = self.client.post(url).json(body);
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

pub struct ChatClient<T = ReqwestTransport> {
    config: ChatConfig,
    transport: T,
    clock: Arc<dyn Clock>,
    limiter: Option<RateLimiter>,
}

impl ChatClient<ReqwestTransport> {
    pub fn from_config(config: ChatConfig) -> Result<Self, String> {
        let transport = ReqwestTransport::new(config.timeout)?;
        Ok(ChatClient::with_transport(config, transport, Arc::new(SystemClock::default())))
    }
}

impl<T: Transport> ChatClient<T> {
    pub fn with_transport(config: ChatConfig, transport: T, clock: Arc<dyn Clock>) -> Self {
        let limiter = config.rate_limit.map(|r| RateLimiter::new(r, Arc::clone(&clock)));
        ChatClient {
            config,
            transport,
            clock,
            limiter,
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn image_url(&self, image_ref: &str) -> Result<Option<String>, String> {
        let remote = image_ref.starts_with("http://")
            || image_ref.starts_with("https://")
            || image_ref.starts_with("data:");
        match self.config.image_mode {
            ImageMode::Omit => Ok(None),
            ImageMode::Url => Ok(Some(image_ref.to_string())),
            ImageMode::Inline if remote => Ok(Some(image_ref.to_string())),
            ImageMode::Inline => {
                let path = match &self.config.image_root {
                    Some(root) if Path::new(image_ref).is_relative() => root.join(image_ref),
                    _ => PathBuf::from(image_ref),
                };
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
                Ok(Some(format!("data:{};base64,{encoded}", mime_for(&path))))
            }
        }
    }

    /// The JSON body sent for `request`.
    pub fn payload(&self, request: &ProviderRequest) -> Result<Value, String> {
        let mut content = vec![json!({"type": "text", "text": request.prompt})];
        if let Some(image) = &request.image_ref {
            if let Some(url) = self.image_url(image)? {
                content.push(json!({"type": "image_url", "image_url": {"url": url}}));
            }
        }
        let mut body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": content}],
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        Ok(body)
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

fn message_content(body: &str) -> Result<String, String> {
    let value: Value = serde_json::from_str(body).map_err(|e| format!("invalid JSON: {e}"))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err("response has no choices[0].message.content".into()),
    }
}

impl<T: Transport> Provider for ChatClient<T> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        let fail = |failure| ProviderError::new(request.kind, failure);
        let body = self.payload(request).map_err(|e| fail(ProviderFailure::Config(e)))?;
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.clock.sleep(self.config.backoff_base * 2u32.saturating_pow(attempt - 1));
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self
                .transport
                .post_json(&self.config.endpoint, self.config.api_key.as_deref(), &body)
            {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return message_content(&resp.body).map_err(|e| fail(ProviderFailure::BadResponse(e)));
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last = format!("HTTP {}", resp.status);
                }
                Ok(resp) => {
                    return Err(fail(ProviderFailure::Status {
                        status: resp.status,
                        body: resp.body,
                    }));
                }
                Err(err) => last = err,
            }
            log::debug!("{} attempt {} failed: {last}", request.kind, attempt + 1);
        }
        Err(fail(ProviderFailure::Exhausted { attempts, last }))
    }
}
