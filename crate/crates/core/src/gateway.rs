//! Prompt templates, the chat-completion gateway, and rationale extraction.
//!
//! A [`Gateway`] answers prompts either from a fixture directory (one file
//! per prompt, named by the SHA-256 of the prompt text) or from an
//! OpenAI-style `/v1/chat/completions` endpoint. In service mode it can also
//! record every completion into a fixture directory, which later replays
//! the run without network access.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::text_key;
use crate::graph::{NodeId, TextualGraph};
use crate::transport::Transport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} needs slot {slot:?}")]
    MissingSlot { template: &'static str, slot: String },
    #[error("completion provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("no fixture for prompt with hash {0}")]
    FixtureMiss(String),
    #[error("provider answered {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("extraction output unparseable after {attempts} attempts: {reason}")]
    ParseFailure { attempts: u32, reason: String },
    #[error("no anchor could be grounded in the graph")]
    NoGroundedAnchors,
    #[error("judge reply not recognised: {0:?}")]
    JudgeUnparseable(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, GatewayError>;

fn io_error(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

const EXTRACTION: &str = "You are a helpful assistant for anchor and rationale extraction from graph evidence.

Inputs: a question, its answer, and a textualized graph database (nodes/edges described in text).
Goal: extract (1) a rationale chain that links the question to the answer using graph evidence, and (2) a small set of anchors (key intermediate entities/relations) that can be grounded to graph nodes/edges.

Definitions:
- Rationale chain: an ordered list of short reasoning steps. Each step should mention the evidence used and move closer to the answer.
- Anchors: reasoning-critical intermediate entities/relations that appear in the graph database and are necessary for the reasoning.

Constraints:
- Use only information supported by the provided graph database and the given answer.
- Anchors must be verbatim spans from the graph database (copy exact surface forms).
- Keep each rationale step concise.

Output format (follow exactly):
1. RationaleChain: a numbered list of steps (3-6 steps).
2. Anchors: a bullet list of anchors. For each anchor, provide its type (entity or relation) and the copied span.

Question: {question}

Answer: {answer}

Graph DataBase: {graph}

Now produce the output.";

const GENERATOR_QA: &str = "Textualized Graph: {graph}.

Please answer the given question.
Question: {question}

Answer:";

const GENERATOR_EXPLAGRAPHS: &str = "Textualized Graph: {graph}.

Argument 1: {arg1}

Argument 2: {arg2}

Question: Do argument 1 and argument 2 support or counter each other? Answer in one word in the form of 'support' or 'counter'.

Answer:";

const JUDGE_RELEVANCE: &str = "Evaluate the relevance of the anchor and rationale in answering the QUESTION. The relevant anchor and rationale contain information that helps answer the question, even if partially. Return one of the following labels: 'Relevant', or 'Irrelevant' without any additional response.

QUESTION: {question}

Anchors: {anchors}

Rationale: {rationale}";

const JUDGE_FAITHFULNESS: &str = "Evaluate the following anchor and rationale for faithfulness in answering the QUESTION. A faithful response should include information that helps answer the question, even if partially, avoid inventing new details, and not contradict the context. Return one of the following labels: 'Faithful' or 'Not Faithful' without any additional response.

QUESTION: {question}

Anchors: {anchors}

Rationale: {rationale}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Extraction,
    GeneratorQa,
    GeneratorExplagraphs,
    JudgeRelevance,
    JudgeFaithfulness,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::Extraction,
        TemplateId::GeneratorQa,
        TemplateId::GeneratorExplagraphs,
        TemplateId::JudgeRelevance,
        TemplateId::JudgeFaithfulness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Extraction => "extraction",
            TemplateId::GeneratorQa => "generator_qa",
            TemplateId::GeneratorExplagraphs => "generator_explagraphs",
            TemplateId::JudgeRelevance => "judge_relevance",
            TemplateId::JudgeFaithfulness => "judge_faithfulness",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Extraction => EXTRACTION,
            TemplateId::GeneratorQa => GENERATOR_QA,
            TemplateId::GeneratorExplagraphs => GENERATOR_EXPLAGRAPHS,
            TemplateId::JudgeRelevance => JUDGE_RELEVANCE,
            TemplateId::JudgeFaithfulness => JUDGE_FAITHFULNESS,
        }
    }

    /// Slot names in order of first appearance.
    pub fn slots(self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, _) in placeholders(self.body()) {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| GatewayError::UnknownTemplate(s.to_string()))
    }
}

/// `{name}` placeholders with their byte ranges.
fn placeholders(body: &str) -> Vec<(&str, std::ops::Range<usize>)> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(open) = body[rest..].find('{') {
        let start = rest + open;
        let Some(len) = body[start..].find('}') else { break };
        let end = start + len + 1;
        out.push((&body[start + 1..end - 1], start..end));
        rest = end;
    }
    out
}

/// Fills every `{slot}` of the template. Slot values are inserted as-is and
/// are never re-scanned for placeholders.
pub fn render_prompt(id: TemplateId, slots: &BTreeMap<&str, String>) -> Result<String> {
    let body = id.body();
    let mut out = String::with_capacity(body.len());
    let mut last = 0;
    for (name, range) in placeholders(body) {
        let value = slots.get(name).ok_or_else(|| GatewayError::MissingSlot {
            template: id.name(),
            slot: name.to_string(),
        })?;
        out.push_str(&body[last..range.start]);
        out.push_str(value);
        last = range.end;
    }
    out.push_str(&body[last..]);
    Ok(out)
}

/// Shorthand for building a slot map.
pub fn slots<const N: usize>(pairs: [(&'static str, &str); N]) -> BTreeMap<&'static str, String> {
    pairs.into_iter().map(|(k, v)| (k, v.to_string())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            model: "llama-3.1-70b-instruct".to_string(),
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Completions on disk: `<dir>/<sha256(prompt)>.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", text_key(prompt)))
    }

    pub fn get(&self, prompt: &str) -> Result<String> {
        let path = self.path_for(prompt);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(GatewayError::FixtureMiss(text_key(prompt)))
            }
            Err(e) => Err(io_error(&path, e)),
        }
    }

    pub fn record(&self, prompt: &str, completion: &str) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let path = self.path_for(prompt);
        fs::write(&path, completion).map_err(|e| io_error(&path, e))
    }
}

enum Backend {
    Fixture(FixtureStore),
    Service {
        base_url: String,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        retry: RetryPolicy,
        cassette: Option<FixtureStore>,
    },
}

pub struct Gateway {
    backend: Backend,
    params: CompletionParams,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl Gateway {
    /// Offline gateway answering only recorded prompts.
    pub fn fixture(dir: impl Into<PathBuf>) -> Self {
        Gateway {
            backend: Backend::Fixture(FixtureStore::new(dir)),
            params: CompletionParams::default(),
        }
    }

    pub fn service(
        base_url: impl Into<String>,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
    ) -> Self {
        Gateway {
            backend: Backend::Service {
                base_url: base_url.into(),
                api_key,
                transport,
                retry: RetryPolicy::default(),
                cassette: None,
            },
            params: CompletionParams::default(),
        }
    }

    pub fn with_params(mut self, params: CompletionParams) -> Self {
        self.params = params;
        self
    }

    /// Service mode only: replaces the retry policy.
    pub fn with_retry(mut self, policy: RetryPolicy) -> Self {
        if let Backend::Service { retry, .. } = &mut self.backend {
            *retry = policy;
        }
        self
    }

    /// Service mode only: every successful completion is also written to
    /// `dir`, so [`Gateway::fixture`] on the same directory replays it.
    pub fn recording_to(mut self, dir: impl Into<PathBuf>) -> Self {
        if let Backend::Service { cassette, .. } = &mut self.backend {
            *cassette = Some(FixtureStore::new(dir));
        }
        self
    }

    pub fn params(&self) -> &CompletionParams {
        &self.params
    }

    pub fn is_offline(&self) -> bool {
        matches!(self.backend, Backend::Fixture(_))
    }

    pub fn complete(&self, prompt: &str) -> Result<String> {
        match &self.backend {
            Backend::Fixture(store) => store.get(prompt),
            Backend::Service {
                base_url,
                api_key,
                transport,
                retry,
                cassette,
            } => {
                let text = self.call_service(base_url, api_key.as_deref(), transport.as_ref(), retry, prompt)?;
                if let Some(store) = cassette {
                    store.record(prompt, &text)?;
                }
                Ok(text)
            }
        }
    }

    fn call_service(
        &self,
        base_url: &str,
        api_key: Option<&str>,
        transport: &dyn Transport,
        retry: &RetryPolicy,
        prompt: &str,
    ) -> Result<String> {
        let url = format!("{}/v1/chat/completions", base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        });
        let attempts = retry.max_attempts.max(1);
        let mut last = GatewayError::ProviderUnavailable(url.clone());
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(retry.base_delay * 2u32.pow(attempt - 1));
            }
            match transport.post_json(&url, api_key, &body) {
                Err(e) => {
                    log::warn!("attempt {}: {e}", attempt + 1);
                    last = GatewayError::ProviderUnavailable(e.to_string());
                }
                Ok(reply) if reply.status == 429 => {
                    log::warn!("attempt {}: rate limited", attempt + 1);
                    last = GatewayError::RateLimited { attempts };
                }
                Ok(reply) if reply.status >= 500 => {
                    log::warn!("attempt {}: status {}", attempt + 1, reply.status);
                    last = GatewayError::ProviderUnavailable(format!("status {}", reply.status));
                }
                Ok(reply) if !(200..300).contains(&reply.status) => {
                    return Err(GatewayError::Rejected {
                        status: reply.status,
                        body: reply.body,
                    });
                }
                Ok(reply) => {
                    let parsed: ChatReply = serde_json::from_str(&reply.body).map_err(|e| {
                        GatewayError::ProviderUnavailable(format!("malformed reply: {e}"))
                    })?;
                    return parsed
                        .choices
                        .into_iter()
                        .next()
                        .map(|c| c.message.content)
                        .ok_or_else(|| GatewayError::ProviderUnavailable("reply has no choices".into()));
                }
            }
        }
        Err(last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Entity,
    Relation,
}

impl fmt::Display for AnchorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorKind::Entity => "entity",
            AnchorKind::Relation => "relation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anchor {
    pub kind: AnchorKind,
    pub span: String,
    /// Nodes whose text contains the span.
    pub nodes: Vec<NodeId>,
    /// Edge indices whose text contains the span.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleBundle {
    pub steps: Vec<String>,
    pub anchors: Vec<Anchor>,
}

impl RationaleBundle {
    pub fn rationale_text(&self) -> String {
        self.steps.join(" ")
    }

    /// Anchor spans joined by `"; "`, the text embedded as the anchor vector.
    pub fn anchor_text(&self) -> String {
        self.anchors
            .iter()
            .map(|a| a.span.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Sections of an extraction completion before grounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExtraction {
    pub steps: Vec<String>,
    pub anchors: Vec<(AnchorKind, String)>,
}

fn strip_markup(s: &str) -> String {
    s.replace("**", "").replace('`', "")
}

/// Section header such as `RationaleChain:`, `1. **Anchors**:`, `## Anchors`.
fn header_kind(line: &str) -> Option<&'static str> {
    let clean = strip_markup(line).to_lowercase();
    let clean = clean
        .trim_start_matches(|c: char| c.is_ascii_digit() || "#.)- \t".contains(c))
        .trim();
    let head = clean.split(':').next().unwrap_or("").trim();
    match head {
        "rationalechain" | "rationale chain" | "rationale" | "extracted rationale" => Some("steps"),
        "anchors" | "extracted anchors" => Some("anchors"),
        _ => None,
    }
}

/// `1. text`, `2) text`, `- text`, `* text`, `• text` → `text`.
fn list_item(line: &str) -> Option<&str> {
    let t = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Some(rest.trim());
        }
    }
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return Some(r.trim());
        }
    }
    None
}

fn parse_anchor(item: &str) -> Option<(AnchorKind, String)> {
    let clean = strip_markup(item);
    let lower = clean.to_lowercase();
    let (kind, rest) = [("entity", AnchorKind::Entity), ("relation", AnchorKind::Relation)]
        .into_iter()
        .find_map(|(word, kind)| {
            for form in [format!("({word})"), format!("[{word}]"), word.to_string()] {
                if lower.starts_with(&form) {
                    return Some((kind, &clean[form.len()..]));
                }
            }
            None
        })?;
    let span = rest
        .trim_start_matches([':', '-', '–', ' ', '\t', ','])
        .trim()
        .trim_matches(['"', '\'', '“', '”'])
        .trim();
    (!span.is_empty()).then(|| (kind, span.to_string()))
}

/// Finds the two sections and their items. Returns a reason on failure.
pub fn parse_extraction(text: &str) -> std::result::Result<RawExtraction, String> {
    let mut section = None;
    let mut seen_steps = false;
    let mut seen_anchors = false;
    let mut steps = Vec::new();
    let mut anchors = Vec::new();
    for line in text.lines() {
        if let Some(kind) = header_kind(line) {
            section = Some(kind);
            if kind == "steps" {
                seen_steps = true;
            } else {
                seen_anchors = true;
            }
            // items may follow the header on the same line
            let after = line.split_once(':').map(|(_, r)| r.trim()).unwrap_or("");
            if kind == "anchors" {
                if let Some(a) = parse_anchor(after) {
                    anchors.push(a);
                }
            }
            continue;
        }
        let Some(item) = list_item(line) else { continue };
        match section {
            Some("steps") => {
                let s = strip_markup(item).trim().to_string();
                if !s.is_empty() {
                    steps.push(s);
                }
            }
            Some("anchors") => match parse_anchor(item) {
                Some(a) => anchors.push(a),
                None => log::warn!("anchor line without entity/relation type: {item:?}"),
            },
            _ => {}
        }
    }
    if !seen_steps {
        return Err("no RationaleChain section".into());
    }
    if !seen_anchors {
        return Err("no Anchors section".into());
    }
    if steps.is_empty() {
        return Err("RationaleChain has no steps".into());
    }
    if !(3..=6).contains(&steps.len()) {
        log::warn!("rationale chain has {} steps, expected 3-6", steps.len());
    }
    Ok(RawExtraction { steps, anchors })
}

/// Case-insensitive substring grounding. Anchors found nowhere are dropped.
pub fn ground_anchors(raw: &[(AnchorKind, String)], g: &TextualGraph) -> Vec<Anchor> {
    let node_texts: Vec<(NodeId, String)> = g.nodes().map(|(id, t)| (id, t.to_lowercase())).collect();
    let edge_texts: Vec<String> = g.edges().iter().map(|e| e.text.to_lowercase()).collect();
    let mut out: Vec<Anchor> = Vec::new();
    for (kind, span) in raw {
        if out.iter().any(|a| a.kind == *kind && a.span == *span) {
            continue;
        }
        let needle = span.to_lowercase();
        let nodes: Vec<NodeId> = node_texts
            .iter()
            .filter(|(_, t)| t.contains(&needle))
            .map(|(id, _)| *id)
            .collect();
        let edges: Vec<usize> = edge_texts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.contains(&needle))
            .map(|(i, _)| i)
            .collect();
        if nodes.is_empty() && edges.is_empty() {
            log::warn!("dropping ungrounded {kind} anchor {span:?}");
            continue;
        }
        out.push(Anchor {
            kind: *kind,
            span: span.clone(),
            nodes,
            edges,
        });
    }
    out
}

/// Extra attempts after an unparseable extraction.
pub const REPROMPT_BUDGET: u32 = 2;

fn format_reminder(attempt: u32) -> String {
    format!(
        "\n\nReminder ({attempt}): your previous output did not follow the output format. \
         Start with a line \"RationaleChain:\" followed by numbered steps, then a line \
         \"Anchors:\" followed by bullets of the form \"- entity: <span>\" or \"- relation: <span>\"."
    )
}

/// The extraction prompt for one question. Multiple gold answers are joined
/// with `"; "`.
pub fn extraction_prompt(question: &str, answers: &[String], g: &TextualGraph) -> Result<String> {
    render_prompt(
        TemplateId::Extraction,
        &slots([
            ("question", question),
            ("answer", &answers.join("; ")),
            ("graph", &g.linearize()),
        ]),
    )
}

/// Every prompt [`extract_rationale`] may send, in order.
pub fn extraction_prompts(question: &str, answers: &[String], g: &TextualGraph) -> Result<Vec<String>> {
    let base = extraction_prompt(question, answers, g)?;
    Ok((0..=REPROMPT_BUDGET)
        .map(|a| if a == 0 { base.clone() } else { base.clone() + &format_reminder(a) })
        .collect())
}

pub fn extract_rationale(
    question: &str,
    answers: &[String],
    g: &TextualGraph,
    gateway: &Gateway,
) -> Result<RationaleBundle> {
    if g.is_empty() {
        return Err(GatewayError::NoGroundedAnchors);
    }
    let prompts = extraction_prompts(question, answers, g)?;
    let mut reason = String::new();
    for prompt in &prompts {
        let text = gateway.complete(prompt)?;
        match parse_extraction(&text) {
            Ok(raw) => {
                let anchors = ground_anchors(&raw.anchors, g);
                if anchors.is_empty() {
                    return Err(GatewayError::NoGroundedAnchors);
                }
                return Ok(RationaleBundle {
                    steps: raw.steps,
                    anchors,
                });
            }
            Err(r) => {
                log::warn!("extraction reply rejected: {r}");
                reason = r;
            }
        }
    }
    Err(GatewayError::ParseFailure {
        attempts: prompts.len() as u32,
        reason,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Relevance,
    Faithfulness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeLabel {
    Relevant,
    Irrelevant,
    Faithful,
    #[serde(rename = "Not Faithful")]
    NotFaithful,
}

impl fmt::Display for JudgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JudgeLabel::Relevant => "Relevant",
            JudgeLabel::Irrelevant => "Irrelevant",
            JudgeLabel::Faithful => "Faithful",
            JudgeLabel::NotFaithful => "Not Faithful",
        })
    }
}

/// Maps a free-form judge reply onto a label by containment. The negative
/// label is checked first since it contains the positive one.
pub fn coerce_label(kind: JudgeKind, reply: &str) -> Result<JudgeLabel> {
    let r = reply.to_lowercase();
    let label = match kind {
        JudgeKind::Relevance if r.contains("irrelevant") => JudgeLabel::Irrelevant,
        JudgeKind::Relevance if r.contains("relevant") => JudgeLabel::Relevant,
        JudgeKind::Faithfulness if r.contains("not faithful") || r.contains("unfaithful") => {
            JudgeLabel::NotFaithful
        }
        JudgeKind::Faithfulness if r.contains("faithful") => JudgeLabel::Faithful,
        _ => return Err(GatewayError::JudgeUnparseable(reply.to_string())),
    };
    Ok(label)
}

pub fn judge_prompt(question: &str, bundle: &RationaleBundle, kind: JudgeKind) -> Result<String> {
    let id = match kind {
        JudgeKind::Relevance => TemplateId::JudgeRelevance,
        JudgeKind::Faithfulness => TemplateId::JudgeFaithfulness,
    };
    let anchors = bundle
        .anchors
        .iter()
        .map(|a| format!("{}: {}", a.kind, a.span))
        .collect::<Vec<_>>()
        .join("; ");
    let rationale = bundle
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join(" ");
    render_prompt(
        id,
        &slots([("question", question), ("anchors", &anchors), ("rationale", &rationale)]),
    )
}

pub fn judge(question: &str, bundle: &RationaleBundle, kind: JudgeKind, gateway: &Gateway) -> Result<JudgeLabel> {
    let reply = gateway.complete(&judge_prompt(question, bundle, kind)?)?;
    coerce_label(kind, &reply)
}
