use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatProvider, CompletionRequest, Part, ProviderError, Role};

/// OpenAI-style chat completions endpoint.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(HttpProvider {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        })
    }

    fn body(request: &CompletionRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text { text } => json!({"type": "text", "text": text}),
                        Part::Image { media_type, data } => json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:{media_type};base64,{}", STANDARD.encode(data))}
                        }),
                    })
                    .collect();
                json!({"role": role, "content": content})
            })
            .collect();
        let mut body = json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

fn classify_status(status: u16, body: &str) -> ProviderError {
    let lower = body.to_ascii_lowercase();
    match status {
        401 | 403 => ProviderError::Auth(format!("HTTP {status}")),
        400 | 413 if lower.contains("context") && (lower.contains("length") || lower.contains("window")) => {
            ProviderError::ContextLength(format!("HTTP {status}"))
        }
        408 | 409 | 429 | 500..=599 => ProviderError::Transient(format!("HTTP {status}")),
        _ => ProviderError::Fatal(format!("HTTP {status}: {}", body.chars().take(200).collect::<String>())),
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.check()?;
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&Self::body(request))
            .send()
            .map_err(|e| ProviderError::Transient(e.without_url().to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| ProviderError::Transient(e.without_url().to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))
    }
}

/// One recorded call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recording {
    pub digest: String,
    pub model: String,
    /// Last user message, kept for reading the fixture by eye.
    pub prompt: String,
    pub response: String,
}

fn recording_path(dir: &Path, digest: &str, n: usize) -> PathBuf {
    dir.join(format!("{digest}-{n}.json"))
}

#[derive(Default)]
struct Occurrences(Mutex<HashMap<String, usize>>);

impl Occurrences {
    fn next(&self, digest: &str) -> usize {
        let mut seen = self.0.lock().expect("occurrence lock");
        let n = seen.entry(digest.to_string()).or_insert(0);
        *n += 1;
        *n - 1
    }
}

/// Passes calls through and writes each response to
/// `<dir>/<digest>-<n>.json`, where `n` counts repeats of the same request.
pub struct RecordingProvider {
    inner: Arc<dyn ChatProvider>,
    dir: PathBuf,
    seen: Occurrences,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn ChatProvider>, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(RecordingProvider {
            inner,
            dir,
            seen: Occurrences::default(),
        })
    }
}

impl ChatProvider for RecordingProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let response = self.inner.complete(request)?;
        let digest = request.digest();
        let n = self.seen.next(&digest);
        let record = Recording {
            digest: digest.clone(),
            model: request.model.clone(),
            prompt: request.last_user_text(),
            response: response.clone(),
        };
        let text = serde_json::to_string_pretty(&record).expect("recordings serialize");
        fs::write(recording_path(&self.dir, &digest, n), text)
            .map_err(|e| ProviderError::Fatal(format!("cannot write recording: {e}")))?;
        Ok(response)
    }
}

/// Serves responses recorded by [`RecordingProvider`]. A request without a
/// recording is a fatal error.
pub struct ReplayProvider {
    dir: PathBuf,
    seen: Occurrences,
}

impl ReplayProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, ProviderError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(ProviderError::Fatal(format!("replay directory {} does not exist", dir.display())));
        }
        Ok(ReplayProvider {
            dir,
            seen: Occurrences::default(),
        })
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.check()?;
        let digest = request.digest();
        let n = self.seen.next(&digest);
        let path = recording_path(&self.dir, &digest, n);
        let text = fs::read_to_string(&path)
            .map_err(|_| ProviderError::Fatal(format!("no recording {digest}-{n} in {}", self.dir.display())))?;
        let record: Recording = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        Ok(record.response)
    }
}

/// Returns queued results in order, regardless of the request.
#[derive(Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    requests: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(responses.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results(results: impl IntoIterator<Item = Result<String, ProviderError>>) -> Self {
        ScriptedProvider {
            queue: Mutex::new(results.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// A JSON array of response strings.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path).map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        let responses: Vec<String> =
            serde_json::from_str(&text).map_err(|e| ProviderError::Fatal(format!("{}: {e}", path.display())))?;
        Ok(Self::new(responses))
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script lock").len()
    }

    /// Every request seen so far, in call order.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.requests.lock().expect("script lock").clone()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.requests.lock().expect("script lock").push(request.clone());
        self.queue
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Fatal("script exhausted".into())))
    }
}

/// Provider backed by a closure; handy for routing on prompt content.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (self.0)(request)
    }
}
