//! Blocking JSON-over-HTTP transport with bounded retries and an in-flight
//! request limit, shared by the completion and embedding clients.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use crate::error::{invalid, Error, Result};

pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
pub struct InFlightLimit {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.permits.lock().unwrap();
        while *free == 0 {
            free = self.freed.wait(free).unwrap();
        }
        *free -= 1;
        Permit { limit: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.limit.permits.lock().unwrap() += 1;
        self.limit.freed.notify_one();
    }
}

pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    attempts: AtomicU64,
}

enum Attempt {
    Done(Value),
    Retry(Error),
    Fail(Error),
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Result<Self> {
        let endpoint = endpoint.into();
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(invalid(format!("endpoint must be an http(s) URL, got {endpoint:?}")));
        }
        if retry.max_attempts == 0 {
            return Err(invalid("retry budget must allow at least one attempt"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(retry.timeout))
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            api_key,
            retry,
            attempts: AtomicU64::new(0),
        })
    }

    /// Reads the credential from `LLM_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, retry: RetryPolicy) -> Result<Self> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| invalid(format!("remote backend requires {API_KEY_ENV}")))?;
        Self::new(endpoint, Some(key), retry)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Total HTTP attempts issued by this client.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn post(&self, body: &Value) -> Result<Value> {
        let max = self.retry.max_attempts;
        let mut last = None;
        for attempt in 1..=max {
            if attempt > 1 {
                let backoff = self.retry.base_backoff * 2u32.pow(attempt - 2);
                std::thread::sleep(backoff);
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            match self.attempt(body, attempt) {
                Attempt::Done(v) => {
                    tracing::debug!(endpoint = %self.endpoint, attempts = attempt, "request succeeded");
                    return Ok(v);
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(endpoint = %self.endpoint, attempt, max_attempts = max, "request failed: {e}");
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn attempt(&self, body: &Value, attempt: u32) -> Attempt {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry(Error::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => {
                return Attempt::Retry(Error::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            }
        };
        if !(200..300).contains(&status) {
            let err = Error::Protocol { status, body: text };
            return if status == 429 || status >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fail(err)
            };
        }
        match serde_json::from_str(&text) {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(Error::MalformedResponse(e.to_string())),
        }
    }
}
