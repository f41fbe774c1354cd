//! Chat-completions and embeddings clients for OpenAI-compatible endpoints.
//!
//! These use blocking I/O; async callers must run them on a blocking
//! thread.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Backend, BackendProfile, GatewayError, Role};
use crate::kg::embed::{normalize, EmbedError, Embedder};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    retries: u32,
    backoff: Duration,
    api_key: Option<String>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

fn client(timeout_secs: f64) -> Result<reqwest::blocking::Client, GatewayError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(timeout_secs))
        .build()
        .map_err(|e| GatewayError::Config(e.to_string()))
}

/// Run `attempt` up to `retries + 1` times with doubling delays.
fn with_retries<T>(
    retries: u32,
    backoff: Duration,
    mut attempt: impl FnMut() -> Result<T, String>,
) -> Result<T, GatewayError> {
    let mut last = String::new();
    for i in 0..=retries {
        if i > 0 {
            std::thread::sleep(backoff * 2u32.pow(i - 1));
        }
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) => last = e,
        }
    }
    Err(GatewayError::Failure { attempts: retries + 1, reason: last })
}

impl HttpBackend {
    pub fn from_profile(profile: &BackendProfile) -> Result<Self, GatewayError> {
        let BackendProfile::HttpEndpoint { url, model, timeout_secs, retries, backoff_ms, api_key_env, temperature } =
            profile
        else {
            return Err(GatewayError::Config("not an http-endpoint profile".into()));
        };
        Ok(Self {
            client: client(*timeout_secs)?,
            url: url.clone(),
            model: model.clone(),
            retries: *retries,
            backoff: Duration::from_millis(*backoff_ms),
            api_key: api_key_env.as_ref().and_then(|v| std::env::var(v).ok()),
            temperature: *temperature,
        })
    }

    pub fn request_body(&self, role: Role, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": role.system_prompt()},
                {"role": "user", "content": prompt},
            ],
        })
    }

    fn once(&self, body: &Value) -> Result<String, String> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| "response has no message content".to_string())
    }
}

impl Backend for HttpBackend {
    fn complete(&self, role: Role, prompt: &str) -> Result<String, GatewayError> {
        let body = self.request_body(role, prompt);
        with_retries(self.retries, self.backoff, || self.once(&body))
    }

    fn describe(&self) -> String {
        format!("http:{} ({})", self.url, self.model)
    }
}

/// Client for `/v1/embeddings`-style endpoints: `{"model", "input"}` in,
/// `{"data": [{"embedding": [...]}]}` out.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    dim: usize,
    retries: u32,
    backoff: Duration,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, dim: usize, timeout_secs: f64, retries: u32) -> Result<Self, GatewayError> {
        Ok(Self {
            client: client(timeout_secs)?,
            url: url.to_string(),
            model: model.to_string(),
            dim,
            retries,
            backoff: Duration::from_millis(250),
        })
    }

    fn once(&self, text: &str) -> Result<Vec<f64>, String> {
        let resp = self
            .client
            .post(&self.url)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .map_err(|e| e.to_string())?;
        if !resp.status().is_success() {
            return Err(format!("HTTP {}", resp.status()));
        }
        let v: Value = resp.json().map_err(|e| e.to_string())?;
        v.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| "response has no data[0].embedding".to_string())
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let v = with_retries(self.retries, self.backoff, || self.once(text))
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        if v.len() != self.dim {
            return Err(EmbedError::Dimension { expected: self.dim, got: v.len() });
        }
        normalize(v)
    }

    fn name(&self) -> String {
        format!("http:{}:{}", self.url, self.model)
    }
}
