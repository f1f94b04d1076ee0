//! Chat-completions client for remote vision-language endpoints.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, Policy, PolicyError, Query};
use crate::dataset::{render_sample_image, Role};
use crate::scenario::Raster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Per-request timeout, seconds.
    pub timeout: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First retry delay, seconds; doubled on each further retry.
    pub backoff_base: f64,
}

impl Default for RemoteEndpointConfig {
    fn default() -> Self {
        RemoteEndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout: 60.0,
            max_retries: 3,
            max_in_flight: 4,
            backoff_base: 1.0,
        }
    }
}

impl RemoteEndpointConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(PolicyError::Config("timeout must be positive".into()));
        }
        if self.max_in_flight < 1 {
            return Err(PolicyError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.backoff_base >= 0.0 && self.backoff_base.is_finite()) {
            return Err(PolicyError::Config("backoff_base must be non-negative".into()));
        }
        Ok(())
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(PolicyError),
    Fail(PolicyError),
}

pub struct RemoteClient {
    config: RemoteEndpointConfig,
    api_key: String,
    agent: ureq::Agent,
    slots: Semaphore,
    record: Option<Mutex<File>>,
}

fn is_retryable(status: u16) -> bool {
    status == 408 || status == 429 || (500..600).contains(&status)
}

fn excerpt(body: &str) -> String {
    body.chars().take(300).collect()
}

impl RemoteClient {
    /// Resolves the API key from the environment; no network access.
    pub fn new(config: RemoteEndpointConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| PolicyError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteClient {
            slots: Semaphore::new(config.max_in_flight),
            config,
            api_key,
            agent,
            record: None,
        })
    }

    /// Appends every request/response exchange to `path` as JSONL.
    pub fn with_record(mut self, path: &Path) -> Result<Self, PolicyError> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| PolicyError::Config(format!("cannot open record file {}: {e}", path.display())))?;
        self.record = Some(Mutex::new(f));
        Ok(self)
    }

    pub fn config(&self) -> &RemoteEndpointConfig {
        &self.config
    }

    pub fn request_body(&self, system: &str, messages: &[ChatMessage], image: Option<&Raster>) -> Result<Value, PolicyError> {
        let image_url = match image {
            Some(r) => {
                let png = r.to_png().map_err(|e| PolicyError::Internal(e.to_string()))?;
                Some(format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(png)
                ))
            }
            None => None,
        };
        let mut out = Vec::new();
        if !system.is_empty() {
            out.push(json!({"role": "system", "content": system}));
        }
        for m in messages {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let content = match (&image_url, m.image) {
                (Some(url), true) => json!([
                    {"type": "text", "text": m.text},
                    {"type": "image_url", "image_url": {"url": url}},
                ]),
                _ => json!(m.text),
            };
            out.push(json!({"role": role, "content": content}));
        }
        Ok(json!({"model": self.config.model_name, "messages": out}))
    }

    fn extract(body: &str) -> Result<String, PolicyError> {
        let v: Value = serde_json::from_str(body).map_err(|e| PolicyError::Response(e.to_string()))?;
        let content = &v["choices"][0]["message"]["content"];
        match content {
            Value::String(s) => Ok(s.clone()),
            Value::Array(parts) => Ok(parts
                .iter()
                .filter_map(|p| p["text"].as_str())
                .collect::<Vec<_>>()
                .join("")),
            _ => Err(PolicyError::Response(format!("no message content in `{}`", excerpt(body)))),
        }
    }

    fn attempt(&self, url: &str, body: &str) -> (Attempt, Option<u16>, Option<String>) {
        let _permit = self.slots.acquire();
        let sent = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => return (Attempt::Retry(PolicyError::Transport(e.to_string())), None, None),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return (Attempt::Retry(PolicyError::Transport(e.to_string())), Some(status), None),
        };
        let outcome = if (200..300).contains(&status) {
            match Self::extract(&text) {
                Ok(s) => Attempt::Done(s),
                Err(e) => Attempt::Fail(e),
            }
        } else if is_retryable(status) {
            Attempt::Retry(PolicyError::Endpoint {
                status,
                body: excerpt(&text),
            })
        } else {
            Attempt::Fail(PolicyError::Endpoint {
                status,
                body: excerpt(&text),
            })
        };
        (outcome, Some(status), Some(text))
    }

    fn log_exchange(&self, request: &Value, status: Option<u16>, response: Option<&str>, error: Option<&PolicyError>, latency: f64) {
        let Some(rec) = &self.record else { return };
        let line = json!({
            "request": request,
            "status": status,
            "response": response,
            "error": error.map(|e| e.to_string()),
            "latency": latency,
        });
        let mut f = rec.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("failed to record exchange: {e}");
        }
    }

    /// Backoff before retry `k` (0-based): base * 2^k plus up to 10% jitter.
    pub fn backoff(&self, k: u32) -> Duration {
        let base = self.config.backoff_base * 2f64.powi(k as i32);
        let jitter = if base > 0.0 { rand::rng().random_range(0.0..=0.1 * base) } else { 0.0 };
        Duration::from_secs_f64(base + jitter)
    }

    /// Sends one chat request, retrying transient failures.
    pub fn complete(&self, system: &str, messages: &[ChatMessage], image: Option<&Raster>) -> Result<String, PolicyError> {
        let request = self.request_body(system, messages, image)?;
        let body = request.to_string();
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut k = 0;
        loop {
            let start = Instant::now();
            let (outcome, status, text) = self.attempt(&url, &body);
            let latency = start.elapsed().as_secs_f64();
            let err = match &outcome {
                Attempt::Done(_) => None,
                Attempt::Retry(e) | Attempt::Fail(e) => Some(e),
            };
            self.log_exchange(&request, status, text.as_deref(), err, latency);
            match outcome {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) if k >= self.config.max_retries => {
                    return Err(PolicyError::Transport(format!("giving up after {} retries: {e}", k)));
                }
                Attempt::Retry(e) => {
                    log::debug!("retrying after {e}");
                    std::thread::sleep(self.backoff(k));
                    k += 1;
                }
            }
        }
    }
}

/// Policy backed by a [`RemoteClient`]; the scene image is rendered on demand.
pub struct RemotePolicy {
    pub client: RemoteClient,
}

impl Policy for RemotePolicy {
    fn name(&self) -> String {
        format!("remote:{}", self.client.config.model_name)
    }

    fn respond(&self, query: &Query<'_>) -> Result<String, PolicyError> {
        let image = if query.messages.iter().any(|m| m.image) {
            Some(render_sample_image(&query.sample.scene).map_err(|e| PolicyError::Internal(e.to_string()))?)
        } else {
            None
        };
        self.client.complete(query.system, query.messages, image.as_ref())
    }
}
