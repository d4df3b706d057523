use std::fs;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatProvider, CompletionRequest, LlmError, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per call, including the first.
    pub attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.min(16));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Append-only JSON-lines log of every attempt. No timestamps, so equal
/// runs give equal digests.
#[derive(Debug, Default)]
pub struct Transcript {
    inner: Mutex<TranscriptInner>,
}

#[derive(Debug, Default)]
struct TranscriptInner {
    calls: u64,
    lines: Vec<String>,
}

impl Transcript {
    pub fn new() -> Arc<Self> {
        Arc::new(Transcript::default())
    }

    fn begin_call(&self) -> u64 {
        let mut inner = self.inner.lock().expect("transcript lock");
        inner.calls += 1;
        inner.calls
    }

    fn push(&self, line: serde_json::Value) {
        let text = serde_json::to_string(&line).expect("transcript lines serialize");
        self.inner.lock().expect("transcript lock").lines.push(text);
    }

    pub fn lines(&self) -> Vec<String> {
        self.inner.lock().expect("transcript lock").lines.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("transcript lock").lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for line in self.lines() {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut text = self.lines().join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path, text)
    }
}

#[derive(Debug)]
struct Limiter {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter lock");
        while *free == 0 {
            free = self.cond.wait(free).expect("limiter lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter lock") += 1;
        self.0.cond.notify_one();
    }
}

/// Provider plus retry policy, concurrency bound and transcript.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn ChatProvider>,
    retry: RetryPolicy,
    limiter: Arc<Limiter>,
    transcript: Arc<Transcript>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn ChatProvider>, retry: RetryPolicy, max_in_flight: usize) -> Self {
        Gateway {
            provider,
            retry,
            limiter: Arc::new(Limiter {
                free: Mutex::new(max_in_flight.max(1)),
                cond: Condvar::new(),
            }),
            transcript: Transcript::new(),
        }
    }

    /// Same provider and bound, separate transcript.
    pub fn with_transcript(&self, transcript: Arc<Transcript>) -> Self {
        Gateway {
            transcript,
            ..self.clone()
        }
    }

    pub fn transcript(&self) -> &Arc<Transcript> {
        &self.transcript
    }

    /// Send `request`, retrying transient failures with exponential backoff.
    /// `label` names the caller in the transcript.
    pub fn complete(&self, label: &str, request: &CompletionRequest) -> Result<String, LlmError> {
        let call = self.transcript.begin_call();
        let digest = request.digest();
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.complete(request)
            };
            let mut line = json!({
                "call": call,
                "attempt": attempt,
                "label": label,
                "model": request.model,
                "request": digest,
            });
            match result {
                Ok(text) => {
                    line["prompt"] = json!(request.last_user_text());
                    line["response"] = json!(text);
                    self.transcript.push(line);
                    return Ok(text);
                }
                Err(err) => {
                    line["error"] = json!(err.to_string());
                    self.transcript.push(line);
                    match err {
                        ProviderError::Transient(msg) => last = msg,
                        ProviderError::Auth(msg) => return Err(LlmError::Auth(msg)),
                        ProviderError::ContextLength(msg) => return Err(LlmError::ContextLength(msg)),
                        ProviderError::Fatal(msg) => return Err(LlmError::Fatal(msg)),
                    }
                }
            }
            if attempt < attempts {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
        }
        Err(LlmError::Exhausted { attempts, last })
    }
}
