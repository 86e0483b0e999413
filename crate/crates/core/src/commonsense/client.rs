//! Text-completion transport used by the concept scorer and the few-shot
//! baseline, with an HTTP implementation and a transcript replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_KEY_ENV: &str = "TAACO_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("malformed response: {0}")]
    Response(String),
    #[error("no recorded response for prompt")]
    NotRecorded,
}

/// Anything that can turn a prompt into a response.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

impl<F> CompletionClient for F
where
    F: Fn(&str) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        self(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_concurrent: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            timeout_secs: 60,
            max_concurrent: 4,
        }
    }
}

/// Chat-completions style HTTP client. The bearer token comes from
/// `TAACO_LLM_API_KEY`.
pub struct HttpCompletionClient {
    config: ClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpCompletionClient {
    pub fn new(config: ClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        let api_key = std::env::var(API_KEY_ENV).ok();
        Self { config, agent, api_key }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp: serde_json::Value = req
            .send_json(body)
            .map_err(|e| TransportError::Request(e.to_string()))?
            .into_json()
            .map_err(|e| TransportError::Response(e.to_string()))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Response(resp.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub prompt: String,
    pub response: String,
}

/// Replays responses recorded in a newline-delimited transcript file.
#[derive(Debug, Default)]
pub struct TranscriptReplay {
    responses: HashMap<String, String>,
}

impl TranscriptReplay {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut responses = HashMap::new();
        for r in records {
            responses.entry(r.prompt).or_insert(r.response);
        }
        Self { responses }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TranscriptRecord = serde_json::from_str(&line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            records.push(r);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl CompletionClient for TranscriptReplay {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        self.responses.get(prompt).cloned().ok_or(TransportError::NotRecorded)
    }
}

/// Wraps a client and appends every exchange to a transcript file.
pub struct RecordingClient<C> {
    inner: C,
    sink: Mutex<BufWriter<File>>,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner, sink: Mutex::new(BufWriter::new(file)) })
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let response = self.inner.complete(prompt)?;
        let record = TranscriptRecord { prompt: prompt.to_string(), response: response.clone() };
        let mut sink = self.sink.lock().expect("transcript sink poisoned");
        let line = serde_json::to_string(&record).map_err(|e| TransportError::Response(e.to_string()))?;
        writeln!(sink, "{line}")
            .and_then(|_| sink.flush())
            .map_err(|e| TransportError::Request(e.to_string()))?;
        Ok(response)
    }
}
