//! The LLM gateway: prompt templates, chat backends (HTTP and deterministic
//! mock), structured-output parsing, retries, and the call log.
//!
//! All three model interactions go through here:
//!
//! - `recognize` — extract the question's conditions and aims as
//!   (entity, label) pairs, constrained to the graph's label list;
//! - `filter_paths` — keep the candidate label paths that help answer the
//!   question (always a subset of the input, whatever the model says);
//! - `generate` — produce final answer strings from mined entity paths.
//!
//! Prompts are editable assets with `{{placeholder}}` markers; built-in
//! defaults are embedded in the binary and can be overridden per file from a
//! prompt directory. Responses are expected inside a fenced code block; the
//! parsers tolerate surrounding prose and fall back to the whole response
//! body when no fence is present.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GatewayError;
use crate::kg::normalize_name;
use crate::reasoner::LabelPath;

/// Template names, fixed by the pipeline's three interactions.
pub const TEMPLATE_NAMES: [&str; 3] = ["recognize", "semantic_filter", "generate_answer"];

const BUILTIN_RECOGNIZE: &str = include_str!("../assets/prompts/recognize.txt");
const BUILTIN_FILTER: &str = include_str!("../assets/prompts/semantic_filter.txt");
const BUILTIN_GENERATE: &str = include_str!("../assets/prompts/generate_answer.txt");

/// A named prompt template with `{{placeholder}}` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

impl PromptTemplate {
    /// Validate that no placeholder occurs more than once in the body.
    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut seen = BTreeSet::new();
        for ph in placeholders_in(&self.body) {
            if !seen.insert(ph.clone()) {
                return Err(GatewayError::BadTemplate {
                    name: self.name.clone(),
                    reason: format!("placeholder {{{{{ph}}}}} occurs more than once"),
                });
            }
        }
        Ok(())
    }

    /// Substitute every placeholder in the body. Placeholders without a
    /// binding are an error; extra bindings are accepted and ignored.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, GatewayError> {
        let mut out = self.body.clone();
        for ph in placeholders_in(&self.body) {
            match bindings.iter().find(|(k, _)| *k == ph) {
                Some((_, value)) => {
                    out = out.replace(&format!("{{{{{ph}}}}}"), value);
                }
                None => return Err(GatewayError::MissingBinding { name: ph }),
            }
        }
        Ok(out)
    }
}

fn placeholders_in(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                if !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_lowercase() || c == '_')
                {
                    out.push(name.to_owned());
                }
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

/// The three templates used by the pipeline.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub recognize: PromptTemplate,
    pub semantic_filter: PromptTemplate,
    pub generate_answer: PromptTemplate,
}

impl TemplateSet {
    /// The embedded default templates.
    pub fn builtin() -> TemplateSet {
        TemplateSet {
            recognize: PromptTemplate {
                name: "recognize".into(),
                body: BUILTIN_RECOGNIZE.into(),
            },
            semantic_filter: PromptTemplate {
                name: "semantic_filter".into(),
                body: BUILTIN_FILTER.into(),
            },
            generate_answer: PromptTemplate {
                name: "generate_answer".into(),
                body: BUILTIN_GENERATE.into(),
            },
        }
    }

    /// Load templates from `dir`, falling back to the built-in default for
    /// any of `recognize.txt`, `semantic_filter.txt`, `generate_answer.txt`
    /// that is absent. Every loaded template is validated.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, GatewayError> {
        let mut set = TemplateSet::builtin();
        for (name, slot) in [
            ("recognize", &mut set.recognize),
            ("semantic_filter", &mut set.semantic_filter),
            ("generate_answer", &mut set.generate_answer),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let body = std::fs::read_to_string(&path).map_err(|e| {
                    GatewayError::BadTemplate {
                        name: name.to_owned(),
                        reason: format!("cannot read {}: {e}", path.display()),
                    }
                })?;
                *slot = PromptTemplate {
                    name: name.to_owned(),
                    body,
                };
            }
        }
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        self.recognize.validate()?;
        self.semantic_filter.validate()?;
        self.generate_answer.validate()
    }
}

/// The question's extracted conditions and aims, as (entity, label) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub conditions: Vec<(String, String)>,
    pub aims: Vec<(String, String)>,
}

impl ExtractionResult {
    /// Every label mentioned, in order of first appearance.
    pub fn labels(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for (_, l) in self.conditions.iter().chain(self.aims.iter()) {
            if !out.contains(&l.as_str()) {
                out.push(l.as_str());
            }
        }
        out
    }
}

/// One prompt ready to send: the template it was rendered from plus the
/// rendered text. The template name keys mock fixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub template_name: String,
    pub prompt: String,
}

/// A chat-completion backend. `send` performs exactly one exchange; retry
/// policy lives in the [`Gateway`]. Implementations must tolerate concurrent
/// calls.
pub trait ChatBackend: Send + Sync {
    /// Identifier reported in run metadata (e.g. the model name).
    fn model_id(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

/// Fixture key for a request: `{template_name}-{sha256(rendered prompt)}`.
pub fn fixture_key(template_name: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    format!("{template_name}-{:x}", hasher.finalize())
}

/// Deterministic offline backend: responses are files in a fixture
/// directory, named `{fixture_key}.txt`. A missing file is an explicit
/// error naming the key so the fixture can be recorded.
pub struct FixtureMockBackend {
    dir: PathBuf,
    model: String,
}

impl FixtureMockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureMockBackend {
            dir: dir.into(),
            model: "mock".into(),
        }
    }
}

impl ChatBackend for FixtureMockBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let key = fixture_key(&request.template_name, &request.prompt);
        let path = self.dir.join(format!("{key}.txt"));
        std::fs::read_to_string(&path).map_err(|_| GatewayError::MockMiss { key })
    }
}

/// Scripted backend for tests and benchmarks: a deterministic function of
/// the request.
pub struct ScriptedBackend<F> {
    script: F,
    model: String,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(script: F) -> Self {
        ScriptedBackend {
            script,
            model: "scripted".into(),
        }
    }
}

impl<F> ChatBackend for ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn model_id(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        (self.script)(request)
    }
}

/// Wraps another backend and records every successful exchange as a mock
/// fixture file, so a scripted or live run can be replayed offline.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        RecordingBackend {
            inner,
            dir: dir.into(),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let response = self.inner.send(request)?;
        let key = fixture_key(&request.template_name, &request.prompt);
        let path = self.dir.join(format!("{key}.txt"));
        std::fs::write(&path, &response).map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: format!("recording fixture {}: {e}", path.display()),
        })?;
        Ok(response)
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
}

/// Parse a chat-completion response body: the first choice's message content.
pub fn parse_chat_response(body: &str) -> Result<String, String> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str())
        .map(str::to_owned)
        .ok_or_else(|| "response lacks choices[0].message.content".to_owned())
}

/// HTTP chat-completion backend: POSTs `{model, messages}` to a base URL
/// with an optional bearer token (taken from the environment by the caller;
/// never logged).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        timeout: Duration,
        api_key: Option<String>,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Transport {
                attempts: 0,
                message: format!("building HTTP client: {e}"),
            })?;
        Ok(HttpBackend {
            client,
            base_url: base_url.into(),
            model: model.into(),
            api_key,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = WireRequest {
            model: &self.model,
            messages: vec![WireMessage {
                role: "user",
                content: &request.prompt,
            }],
        };
        let mut http = self.client.post(&self.base_url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let transport = |message: String| GatewayError::Transport {
            attempts: 1,
            message,
        };
        let response = http.send().map_err(|e| transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| transport(e.to_string()))?;
        if !status.is_success() {
            return Err(transport(format!("HTTP {status}: {}", text.trim())));
        }
        parse_chat_response(&text).map_err(transport)
    }
}

/// Extract the contents of the first fenced code block; the opening fence
/// may carry a language tag; prose around the block is ignored. Returns
/// `None` when no complete block exists.
pub fn extract_fenced_block(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| l.trim_start().starts_with("```"))?;
    let mut block = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(block.join("\n"));
        }
        block.push(line);
    }
    None
}

/// The machine-readable payload of a response: the first fenced block if
/// present, otherwise the whole trimmed text.
fn payload_of(text: &str) -> String {
    extract_fenced_block(text).unwrap_or_else(|| text.trim().to_owned())
}

/// Parse a recognition response: a JSON object with `conditions` and `aims`
/// arrays of `[entity, label]` pairs. Entities and labels are normalized.
pub fn parse_extraction(text: &str) -> Result<ExtractionResult, String> {
    let payload = payload_of(text);
    let parsed: ExtractionResult = serde_json::from_str(payload.trim())
        .map_err(|e| format!("expected a JSON object with conditions/aims pair lists: {e}"))?;
    let clean = |pairs: Vec<(String, String)>| -> Vec<(String, String)> {
        pairs
            .into_iter()
            .map(|(e, l)| (normalize_name(&e), normalize_name(&l)))
            .filter(|(e, l)| !e.is_empty() && !l.is_empty())
            .collect()
    };
    let result = ExtractionResult {
        conditions: clean(parsed.conditions),
        aims: clean(parsed.aims),
    };
    if result.conditions.is_empty() {
        return Err("no conditions extracted".to_owned());
    }
    if result.aims.is_empty() {
        return Err("no aims extracted".to_owned());
    }
    Ok(result)
}

/// Parse a line-per-item response (path selections, answers).
fn parse_lines(text: &str) -> Vec<String> {
    payload_of(text)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

/// One gateway call as seen by the retry machinery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub template: String,
    pub attempts: u32,
    pub ok: bool,
}

/// Gateway tuning knobs.
#[derive(Debug, Clone)]
pub struct GatewayOptions {
    /// Total send attempts per logical call (transport and parse retries).
    pub max_attempts: u32,
    /// When the semantic filter selects nothing, fall back to the full
    /// candidate set instead of returning an empty selection.
    pub fallback_on_empty_filter: bool,
    /// Maximum simultaneous in-flight requests.
    pub inflight_cap: usize,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions {
            max_attempts: 2,
            fallback_on_empty_filter: true,
            inflight_cap: 4,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore poisoned");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().expect("semaphore poisoned");
        *permits += 1;
        self.sem.cv.notify_one();
    }
}

/// The LLM gateway: renders templates, sends with a bounded retry budget and
/// in-flight cap, parses structured outputs, and keeps a call log.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    templates: TemplateSet,
    options: GatewayOptions,
    semaphore: Semaphore,
    call_log: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn new(
        backend: Box<dyn ChatBackend>,
        templates: TemplateSet,
        options: GatewayOptions,
    ) -> Result<Gateway, GatewayError> {
        templates.validate()?;
        let cap = options.inflight_cap;
        Ok(Gateway {
            backend,
            templates,
            options,
            semaphore: Semaphore::new(cap),
            call_log: Mutex::new(Vec::new()),
        })
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Calls made so far: (template, attempts used, outcome).
    pub fn call_log(&self) -> Vec<CallRecord> {
        self.call_log.lock().expect("call log poisoned").clone()
    }

    fn record(&self, template: &str, attempts: u32, ok: bool) {
        self.call_log
            .lock()
            .expect("call log poisoned")
            .push(CallRecord {
                template: template.to_owned(),
                attempts,
                ok,
            });
    }

    /// Send one prompt, retrying transport failures and re-asking on
    /// unparseable output, up to the attempt budget. `parse` turns raw
    /// response text into the caller's type.
    fn send_parsed<T>(
        &self,
        template_name: &str,
        prompt: String,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let request = ChatRequest {
            template_name: template_name.to_owned(),
            prompt,
        };
        let budget = self.options.max_attempts.max(1);
        let mut last_err = None;
        for attempt in 1..=budget {
            let sent = {
                let _permit = self.semaphore.acquire();
                self.backend.send(&request)
            };
            match sent {
                Ok(raw) => match parse(&raw) {
                    Ok(value) => {
                        self.record(template_name, attempt, true);
                        return Ok(value);
                    }
                    Err(reason) => {
                        log::warn!(
                            "attempt {attempt}/{budget} for {template_name}: unparseable output ({reason})"
                        );
                        last_err = Some(GatewayError::Parse {
                            attempts: attempt,
                            raw,
                        });
                    }
                },
                Err(GatewayError::MockMiss { key }) => {
                    // A missing fixture is deterministic; retrying cannot help.
                    self.record(template_name, attempt, false);
                    return Err(GatewayError::MockMiss { key });
                }
                Err(e) => {
                    log::warn!("attempt {attempt}/{budget} for {template_name}: {e}");
                    last_err = Some(match e {
                        GatewayError::Transport { message, .. } => GatewayError::Transport {
                            attempts: attempt,
                            message,
                        },
                        other => other,
                    });
                }
            }
        }
        self.record(template_name, budget, false);
        Err(last_err.expect("budget ≥ 1 guarantees an error"))
    }

    /// Extract conditions and aims for a question, constrained to
    /// `label_list`. A response using labels outside the list triggers one
    /// corrective re-prompt before failing.
    pub fn recognize(
        &self,
        question: &str,
        label_list: &[&str],
    ) -> Result<ExtractionResult, GatewayError> {
        let joined = label_list.join(", ");
        let prompt = self
            .templates
            .recognize
            .render(&[("question", question), ("label_list", &joined)])?;
        let allowed: BTreeSet<&str> = label_list.iter().copied().collect();
        let out_of_vocab = |r: &ExtractionResult| -> Vec<String> {
            r.labels()
                .into_iter()
                .filter(|l| !allowed.contains(l))
                .map(str::to_owned)
                .collect()
        };

        let first = self.send_parsed("recognize", prompt.clone(), parse_extraction)?;
        let bad = out_of_vocab(&first);
        if bad.is_empty() {
            return Ok(first);
        }
        log::warn!("recognition used labels outside the label list: {bad:?}; re-prompting once");
        let corrective = format!(
            "{prompt}\n\nYour previous answer used labels that are not in the label list: \
             {}. Answer again using only labels from the label list.",
            bad.join(", ")
        );
        let second = self.send_parsed("recognize", corrective, parse_extraction)?;
        let still_bad = out_of_vocab(&second);
        if still_bad.is_empty() {
            Ok(second)
        } else {
            Err(GatewayError::LabelVocabulary { labels: still_bad })
        }
    }

    /// Ask the model which candidate paths help answer the question. The
    /// result is always a subset of `paths`, in input order; model lines
    /// that match no input path are dropped with a warning. An empty
    /// selection falls back to the full input when configured.
    pub fn filter_paths(
        &self,
        question: &str,
        paths: &[LabelPath],
    ) -> Result<Vec<LabelPath>, GatewayError> {
        let rendered: Vec<String> = paths.iter().map(LabelPath::render).collect();
        let listing = rendered.join("\n");
        let prompt = self
            .templates
            .semantic_filter
            .render(&[("question", question), ("paths", &listing)])?;
        let lines = self.send_parsed("semantic_filter", prompt, |raw| {
            let lines = parse_lines(raw);
            if lines.is_empty() && extract_fenced_block(raw).is_none() {
                return Err("no fenced block and no selection lines".to_owned());
            }
            Ok(lines)
        })?;

        let wanted: BTreeSet<&str> = lines.iter().map(String::as_str).collect();
        for line in &lines {
            if !rendered.iter().any(|r| r == line) {
                log::warn!("filter output is not one of the candidate paths, dropping: {line:?}");
            }
        }
        let selected: Vec<LabelPath> = paths
            .iter()
            .zip(rendered.iter())
            .filter(|(_, r)| wanted.contains(r.as_str()))
            .map(|(p, _)| p.clone())
            .collect();
        if selected.is_empty() && self.options.fallback_on_empty_filter {
            log::warn!("semantic filter selected nothing; falling back to all candidates");
            return Ok(paths.to_vec());
        }
        Ok(selected)
    }

    /// Generate final answers from formatted entity paths. Deduplicated,
    /// model order preserved.
    pub fn generate(
        &self,
        question: &str,
        entity_paths: &str,
    ) -> Result<Vec<String>, GatewayError> {
        let prompt = self
            .templates
            .generate_answer
            .render(&[("question", question), ("entity_paths", entity_paths)])?;
        self.send_parsed("generate_answer", prompt, |raw| {
            let mut seen = BTreeSet::new();
            let answers: Vec<String> = parse_lines(raw)
                .into_iter()
                .filter(|a| seen.insert(a.clone()))
                .collect();
            if answers.is_empty() {
                Err("no answer lines".to_owned())
            } else {
                Ok(answers)
            }
        })
    }
}
