//! Chat-completion gateway with live, scripted and replay backends.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::{ChatMessage, Role};

pub const DEFAULT_TEMPERATURE: f64 = 0.6;
pub const DEFAULT_TOP_P: f64 = 0.7;
pub const REASK_SUFFIX: &str = "Respond with a single fenced code block.";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("scripted backend has no responses left")]
    ScriptExhausted,
    #[error("response contains no fenced code block")]
    NoCodeBlock,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: u64,
    pub model_id: String,
}

impl GenerationRequest {
    pub fn new(messages: Vec<ChatMessage>, seed: u64, model_id: impl Into<String>) -> GenerationRequest {
        GenerationRequest {
            messages,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            seed,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding. Content is hashed as is.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub system_fingerprint: String,
    pub timestamp: DateTime<Utc>,
    pub backend: BackendKind,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError>;
    fn kind(&self) -> BackendKind;
}

// ---- live ----

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Full URL of the chat completions endpoint.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    top_p: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    system_fingerprint: Option<String>,
    #[serde(default)]
    created: Option<i64>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<LiveBackend, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(LiveBackend { config, client })
    }
}

impl LlmBackend for LiveBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        req.validate()?;
        let body = WireRequest {
            model: &req.model_id,
            messages: &req.messages,
            temperature: req.temperature,
            top_p: req.top_p,
            seed: req.seed,
        };
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let wire: WireResponse = resp.json().map_err(|e| LlmError::Transport(e.to_string()))?;
        let text = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("response has no choices".into()))?;
        let timestamp = wire
            .created
            .and_then(|s| Utc.timestamp_opt(s, 0).single())
            .unwrap_or_else(Utc::now);
        Ok(GenerationResponse {
            text,
            system_fingerprint: wire.system_fingerprint.unwrap_or_default(),
            timestamp,
            backend: BackendKind::Live,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }
}

// ---- scripted ----

/// Pops canned responses in order. Meant for a single consumer.
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> ScriptedBackend
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend { queue: Mutex::new(responses.into_iter().map(Into::into).collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        req.validate()?;
        let text = self.queue.lock().unwrap().pop_front().ok_or(LlmError::ScriptExhausted)?;
        Ok(GenerationResponse {
            text,
            system_fingerprint: "scripted".into(),
            timestamp: Utc.timestamp_opt(0, 0).unwrap(),
            backend: BackendKind::Scripted,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}

// ---- transcripts ----

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub request: GenerationRequest,
    pub response: String,
    pub fingerprint: String,
    pub timestamp: DateTime<Utc>,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let io = |e: String| LlmError::Io { path: path.display().to_string(), message: e };
    let file = File::open(path).map_err(|e| io(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

/// Answers from a transcript by request digest. Repeated requests get the
/// recorded responses in order; the last one is reused after that.
pub struct ReplayBackend {
    entries: Mutex<HashMap<String, VecDeque<TranscriptEntry>>>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> ReplayBackend {
        let mut map: HashMap<String, VecDeque<TranscriptEntry>> = HashMap::new();
        for e in entries {
            map.entry(e.digest.clone()).or_default().push_back(e);
        }
        ReplayBackend { entries: Mutex::new(map) }
    }

    pub fn from_file(path: &Path) -> Result<ReplayBackend, LlmError> {
        Ok(ReplayBackend::new(read_transcript(path)?))
    }
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        let digest = req.digest();
        let mut map = self.entries.lock().unwrap();
        let queue = map.get_mut(&digest).ok_or_else(|| LlmError::ReplayMiss(digest.clone()))?;
        let entry = if queue.len() > 1 {
            queue.pop_front().unwrap()
        } else {
            queue.front().cloned().ok_or(LlmError::ReplayMiss(digest))?
        };
        Ok(GenerationResponse {
            text: entry.response,
            system_fingerprint: entry.fingerprint,
            timestamp: entry.timestamp,
            backend: BackendKind::Replay,
        })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }
}

/// Appends every exchange to a JSON-lines file and keeps a copy in memory.
pub struct Recorder {
    path: Option<PathBuf>,
    state: Mutex<(Option<File>, Vec<TranscriptEntry>)>,
}

impl Recorder {
    pub fn in_memory() -> Recorder {
        Recorder { path: None, state: Mutex::new((None, Vec::new())) }
    }

    pub fn to_file(path: &Path) -> Result<Recorder, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Ok(Recorder { path: Some(path.to_path_buf()), state: Mutex::new((Some(file), Vec::new())) })
    }

    pub fn record(&self, req: &GenerationRequest, resp: &GenerationResponse) -> Result<(), LlmError> {
        let entry = TranscriptEntry {
            digest: req.digest(),
            request: req.clone(),
            response: resp.text.clone(),
            fingerprint: resp.system_fingerprint.clone(),
            timestamp: resp.timestamp,
        };
        let mut state = self.state.lock().unwrap();
        if let Some(file) = state.0.as_mut() {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(file, "{line}").map_err(|e| LlmError::Io {
                path: self.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                message: e.to_string(),
            })?;
        }
        state.1.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.state.lock().unwrap().1.clone()
    }
}

// ---- code extraction ----

/// Bodies of all fenced blocks, in order. An unclosed fence runs to the end.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match current.as_mut() {
            None if fence => current = Some(Vec::new()),
            None => {}
            Some(lines) if fence && line.trim() == "```" => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            Some(lines) => lines.push(line),
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

/// The last fenced block defining a `pure def`, else the first fenced block.
pub fn extract_code(text: &str) -> Result<String, LlmError> {
    let blocks = fenced_blocks(text);
    blocks
        .iter()
        .rev()
        .find(|b| b.contains("pure def"))
        .or_else(|| blocks.first())
        .cloned()
        .ok_or(LlmError::NoCodeBlock)
}

// ---- gateway ----

/// Result of one code request, including a formatting re-ask if one was needed.
#[derive(Debug, Clone)]
pub struct CodeReply {
    pub code: String,
    pub response: GenerationResponse,
    pub reasked: bool,
}

pub struct Gateway {
    backend: Box<dyn LlmBackend>,
    recorder: Option<Recorder>,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
}

impl Gateway {
    pub fn new(backend: Box<dyn LlmBackend>, model_id: impl Into<String>) -> Gateway {
        Gateway {
            backend,
            recorder: None,
            model_id: model_id.into(),
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
        }
    }

    pub fn with_recorder(mut self, recorder: Recorder) -> Gateway {
        self.recorder = Some(recorder);
        self
    }

    pub fn recorder(&self) -> Option<&Recorder> {
        self.recorder.as_ref()
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn request(&self, messages: Vec<ChatMessage>, seed: u64) -> GenerationRequest {
        GenerationRequest {
            messages,
            temperature: self.temperature,
            top_p: self.top_p,
            seed,
            model_id: self.model_id.clone(),
        }
    }

    pub fn complete(&self, req: &GenerationRequest) -> Result<GenerationResponse, LlmError> {
        let resp = self.backend.complete(req)?;
        if let Some(r) = &self.recorder {
            r.record(req, &resp)?;
        }
        Ok(resp)
    }

    /// Sends `messages` and extracts code. When the answer has no fenced
    /// block, asks once more with a formatting reminder.
    pub fn complete_code(&self, messages: Vec<ChatMessage>, seed: u64) -> Result<CodeReply, LlmError> {
        let req = self.request(messages, seed);
        let resp = self.complete(&req)?;
        match extract_code(&resp.text) {
            Ok(code) => Ok(CodeReply { code, response: resp, reasked: false }),
            Err(LlmError::NoCodeBlock) => {
                let mut messages = req.messages;
                if !resp.text.trim().is_empty() {
                    messages.push(ChatMessage { role: Role::Assistant, content: resp.text.clone() });
                }
                messages.push(ChatMessage { role: Role::User, content: REASK_SUFFIX.into() });
                let again = self.complete(&self.request(messages, seed))?;
                let code = extract_code(&again.text)?;
                Ok(CodeReply { code, response: again, reasked: true })
            }
            Err(e) => Err(e),
        }
    }
}
