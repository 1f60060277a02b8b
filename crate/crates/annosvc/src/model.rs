//! HIT, option and event types. Everything here is plain serializable data.

use serde::{Deserialize, Serialize};

/// Half-open token range `[start, end)` in turn `turn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanRef {
    pub turn: usize,
    pub start: usize,
    pub end: usize,
}

impl SpanRef {
    pub fn precedes(&self, other: &SpanRef) -> bool {
        self.turn < other.turn || (self.turn == other.turn && self.end <= other.start)
    }
}

impl From<crel_core::MentionSpan> for SpanRef {
    fn from(s: crel_core::MentionSpan) -> Self {
        SpanRef { turn: s.turn_index, start: s.tok_start, end: s.tok_end }
    }
}

pub const NONE_OPTION: &str = "none";
pub const NOT_IN_DIALOGUE: &str = "nid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitOption {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<SpanRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
}

impl HitOption {
    pub fn span(prefix: char, span: SpanRef, label: String) -> Self {
        HitOption { id: format!("{prefix}{}:{}-{}", span.turn, span.start, span.end), label, span: Some(span), entity: None }
    }

    pub fn entity(id: &str) -> Self {
        HitOption { id: format!("e:{id}"), label: id.to_string(), span: None, entity: Some(id.to_string()) }
    }

    pub fn special(id: &str, label: &str) -> Self {
        HitOption { id: id.to_string(), label: label.to_string(), span: None, entity: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub speaker: String,
    pub text: String,
    pub tokens: Vec<String>,
}

/// An explicit mention pooled from linker outputs and the mention detector. The same
/// text may occur at several positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledMention {
    pub span: SpanRef,
    pub text: String,
    /// `normalize_mention(text)`; options and linking decisions are per key.
    pub key: String,
    /// Entity options for the linking stage, without the NONE option.
    pub entities: Vec<String>,
    /// Matched the stoplist: offered as an antecedent but never linked.
    pub stopped: bool,
}

/// Everything the workflow needs about one conversation, computed once at project
/// creation so that replaying the log needs no models or KB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub id: String,
    pub turns: Vec<TurnView>,
    /// Candidate personal-mention spans (without the NONE option).
    pub personal_candidates: Vec<HitOption>,
    pub pool: Vec<PooledMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Init { conversations: Vec<ConversationRecord> },
    Submit { hit: String, annotator: String, selection: Vec<String>, at_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub annotator: String,
    pub selection: String,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum HitStatus {
    Open,
    Passed { option: String },
    Failed,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub stage: u8,
    pub conversation: String,
    /// Stage 2: the personal mention; stage 3: the mention to link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<SpanRef>,
    pub options: Vec<HitOption>,
    pub required_responses: usize,
    pub responses: Vec<Response>,
    pub status: HitStatus,
    /// Stage 2: index of the personal-mention chain; stage 3: index into the pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
}

impl Hit {
    pub fn is_open(&self) -> bool {
        self.status == HitStatus::Open
    }

    pub fn option(&self, id: &str) -> Option<&HitOption> {
        self.options.iter().find(|o| o.id == id)
    }

    pub fn has_responded(&self, annotator: &str) -> bool {
        self.responses.iter().any(|r| r.annotator == annotator)
    }
}
