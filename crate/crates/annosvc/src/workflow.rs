//! The three-stage agreement-gated workflow as a pure fold over events.
//!
//! Stage 1 asks for the personal mention of a conversation, stage 2 for each of its
//! antecedents (one HIT per antecedent, until "not in dialogue"), stage 3 for the
//! entity of every distinct pooled mention text. A conversation enters stage s+1 only
//! after passing stage s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConversationRecord, Event, Hit, HitOption, HitStatus, Response, SpanRef, NONE_OPTION, NOT_IN_DIALOGUE};

pub const INITIAL_RESPONSES: usize = 3;
pub const MAX_RESPONSES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkflowError {
    #[error("unknown HIT {0}")]
    UnknownHit(String),
    #[error("HIT {0} is closed")]
    Closed(String),
    #[error("annotator {annotator} already answered HIT {hit}")]
    DuplicateAnnotator { hit: String, annotator: String },
    #[error("option {option:?} is not offered by HIT {hit}")]
    UnknownOption { hit: String, option: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("project is already initialized")]
    AlreadyInitialized,
    #[error("project is not initialized")]
    NotInitialized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversationStatus {
    /// No my/our in any user turn.
    Excluded,
    Stage1,
    Stage2,
    Stage3,
    Done,
    /// Annotators agreed there is no personal mention.
    Dropped,
    /// A gate was not passed.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStatus {
    Open,
    Complete,
    Failed,
}

/// A personal mention and the antecedents agreed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub personal: SpanRef,
    pub antecedents: Vec<SpanRef>,
    pub status: ChainStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub record: ConversationRecord,
    pub status: ConversationStatus,
    pub chains: Vec<Chain>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectState {
    /// Number of events applied.
    pub seq: u64,
    pub order: Vec<String>,
    pub conversations: BTreeMap<String, ConversationState>,
    pub hits: BTreeMap<u64, Hit>,
    pub next_hit: u64,
}

fn hit_key(id: &str) -> Option<u64> {
    id.strip_prefix('h')?.parse().ok()
}

/// Option chosen by at least `min` responses, if exactly one option has the top count.
fn agreed(responses: &[Response], min: usize) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in responses {
        *counts.entry(r.selection.as_str()).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    let leaders: Vec<&&str> = counts.iter().filter(|(_, c)| **c == top).map(|(o, _)| o).collect();
    (top >= min && leaders.len() == 1).then(|| leaders[0].to_string())
}

fn top_count(responses: &[Response]) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in responses {
        *counts.entry(r.selection.as_str()).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Next status of a HIT whose responses just reached `required_responses`, and the new
/// requirement (unchanged unless extended).
fn judge(stage: u8, responses: &[Response]) -> (HitStatus, usize) {
    let n = responses.len();
    let pass = |o: String| HitStatus::Passed { option: o };
    match (stage, n) {
        (1, _) => (agreed(responses, 2).map_or(HitStatus::Failed, pass), n),
        (2, n) if n < MAX_RESPONSES => match top_count(responses) {
            c if c == n => (pass(responses[0].selection.clone()), n),
            2 => (HitStatus::Open, MAX_RESPONSES),
            _ => (HitStatus::Failed, n),
        },
        (2, _) => (agreed(responses, 3).map_or(HitStatus::Failed, pass), n),
        (_, n) if n < MAX_RESPONSES => match agreed(responses, 2) {
            Some(o) => (pass(o), n),
            None => (HitStatus::Open, MAX_RESPONSES),
        },
        _ => (agreed(responses, 1).map_or(HitStatus::Unresolved, pass), n),
    }
}

impl ProjectState {
    pub fn is_initialized(&self) -> bool {
        self.seq > 0
    }

    pub fn hit(&self, id: &str) -> Option<&Hit> {
        self.hits.get(&hit_key(id)?)
    }

    /// Lowest-numbered open HIT (optionally of one stage) this annotator has not answered.
    pub fn next_hit(&self, annotator: &str, stage: Option<u8>) -> Option<&Hit> {
        self.hits
            .values()
            .find(|h| h.is_open() && stage.is_none_or(|s| h.stage == s) && !h.has_responded(annotator))
    }

    /// Checks an event against the current state without changing it.
    pub fn validate(&self, event: &Event) -> Result<(), WorkflowError> {
        match event {
            Event::Init { conversations } => {
                if self.is_initialized() {
                    return Err(WorkflowError::AlreadyInitialized);
                }
                let mut ids: Vec<&str> = conversations.iter().map(|c| c.id.as_str()).collect();
                ids.sort();
                if ids.windows(2).any(|w| w[0] == w[1]) {
                    return Err(WorkflowError::BadRequest("duplicate conversation id".into()));
                }
                Ok(())
            }
            Event::Submit { hit, annotator, selection, .. } => {
                if !self.is_initialized() {
                    return Err(WorkflowError::NotInitialized);
                }
                let h = self.hit(hit).ok_or_else(|| WorkflowError::UnknownHit(hit.clone()))?;
                if annotator.trim().is_empty() {
                    return Err(WorkflowError::BadRequest("annotator id is empty".into()));
                }
                if !h.is_open() {
                    return Err(WorkflowError::Closed(hit.clone()));
                }
                if h.has_responded(annotator) {
                    return Err(WorkflowError::DuplicateAnnotator { hit: hit.clone(), annotator: annotator.clone() });
                }
                let [choice] = selection.as_slice() else {
                    return Err(WorkflowError::BadRequest(format!("select exactly one option, got {}", selection.len())));
                };
                if h.option(choice).is_none() {
                    return Err(WorkflowError::UnknownOption { hit: hit.clone(), option: choice.clone() });
                }
                Ok(())
            }
        }
    }

    /// Validates and applies one event. On error the state is unchanged.
    pub fn apply(&mut self, event: &Event) -> Result<(), WorkflowError> {
        self.validate(event)?;
        match event {
            Event::Init { conversations } => {
                for record in conversations {
                    let status =
                        if record.personal_candidates.is_empty() { ConversationStatus::Excluded } else { ConversationStatus::Stage1 };
                    self.order.push(record.id.clone());
                    self.conversations.insert(
                        record.id.clone(),
                        ConversationState { record: record.clone(), status, chains: Vec::new() },
                    );
                    if status == ConversationStatus::Stage1 {
                        let mut options = record.personal_candidates.clone();
                        options.push(HitOption::special(NONE_OPTION, "No personal entity mention"));
                        self.add_hit(1, &record.id, None, options, None);
                    }
                }
            }
            Event::Submit { hit, annotator, selection, at_ms } => {
                let key = hit_key(hit).expect("validated");
                let h = self.hits.get_mut(&key).expect("validated");
                h.responses.push(Response { annotator: annotator.clone(), selection: selection[0].clone(), at_ms: *at_ms });
                if h.responses.len() >= h.required_responses {
                    let (status, required) = judge(h.stage, &h.responses);
                    h.required_responses = required;
                    h.status = status;
                    if !h.is_open() {
                        let closed = h.clone();
                        self.on_closed(&closed);
                    }
                }
            }
        }
        self.seq += 1;
        Ok(())
    }

    /// Rebuilds a state from an event log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, WorkflowError> {
        let mut s = ProjectState::default();
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    fn add_hit(&mut self, stage: u8, conversation: &str, focus: Option<SpanRef>, options: Vec<HitOption>, target: Option<usize>) {
        let key = self.next_hit;
        self.next_hit += 1;
        self.hits.insert(
            key,
            Hit {
                id: format!("h{key}"),
                stage,
                conversation: conversation.to_string(),
                focus,
                options,
                required_responses: INITIAL_RESPONSES,
                responses: Vec::new(),
                status: HitStatus::Open,
                target,
            },
        );
    }

    fn on_closed(&mut self, hit: &Hit) {
        let conv = hit.conversation.clone();
        match (hit.stage, &hit.status) {
            (1, HitStatus::Passed { option }) if option == NONE_OPTION => self.set_status(&conv, ConversationStatus::Dropped),
            (1, HitStatus::Passed { option }) => {
                let personal = hit.option(option).and_then(|o| o.span).expect("stage-1 options carry spans");
                let state = self.conversations.get_mut(&conv).expect("known conversation");
                state.status = ConversationStatus::Stage2;
                state.chains.push(Chain { personal, antecedents: Vec::new(), status: ChainStatus::Open });
                let chain = state.chains.len() - 1;
                self.open_antecedent_hit(&conv, chain);
            }
            (1, _) => self.set_status(&conv, ConversationStatus::Failed),
            (2, status) => {
                let chain_idx = hit.target.expect("stage-2 HITs target a chain");
                let state = self.conversations.get_mut(&conv).expect("known conversation");
                let chain = &mut state.chains[chain_idx];
                let mut ask_again = false;
                match status {
                    HitStatus::Passed { option } if option != NOT_IN_DIALOGUE => {
                        chain.antecedents.push(hit.option(option).and_then(|o| o.span).expect("span option"));
                        chain.antecedents.sort();
                        ask_again = true;
                    }
                    HitStatus::Passed { .. } => chain.status = ChainStatus::Complete,
                    // a failed follow-up keeps the antecedents already agreed on
                    _ if !chain.antecedents.is_empty() => chain.status = ChainStatus::Complete,
                    _ => chain.status = ChainStatus::Failed,
                }
                if ask_again && !self.open_antecedent_hit(&conv, chain_idx) {
                    self.conversations.get_mut(&conv).unwrap().chains[chain_idx].status = ChainStatus::Complete;
                }
                self.after_chain_update(&conv);
            }
            (_, _) => {
                let done = self.hits.values().filter(|h| h.conversation == conv && h.stage == 3).all(|h| !h.is_open());
                if done {
                    self.set_status(&conv, ConversationStatus::Done);
                }
            }
        }
    }

    fn set_status(&mut self, conv: &str, status: ConversationStatus) {
        self.conversations.get_mut(conv).expect("known conversation").status = status;
    }

    /// Opens a stage-2 HIT for the chain's next antecedent. The first HIT of a chain is
    /// always opened (it may offer only "not in dialogue"); follow-ups need a remaining
    /// candidate. Returns whether a HIT was opened.
    fn open_antecedent_hit(&mut self, conv: &str, chain_idx: usize) -> bool {
        let state = &self.conversations[conv];
        let chain = &state.chains[chain_idx];
        let pool = &state.record.pool;
        let mut keys: Vec<&str> =
            pool.iter().filter(|m| chain.antecedents.contains(&m.span)).map(|m| m.key.as_str()).collect();
        let mut options = Vec::new();
        for m in pool.iter().filter(|m| m.span.precedes(&chain.personal)) {
            if !keys.contains(&m.key.as_str()) {
                keys.push(&m.key);
                options.push(HitOption::span('m', m.span, m.text.clone()));
            }
        }
        if options.is_empty() && !chain.antecedents.is_empty() {
            return false;
        }
        options.push(HitOption::special(NOT_IN_DIALOGUE, "Not in dialogue"));
        let personal = chain.personal;
        self.add_hit(2, conv, Some(personal), options, Some(chain_idx));
        true
    }

    fn after_chain_update(&mut self, conv: &str) {
        let state = &self.conversations[conv];
        if state.chains.iter().any(|c| c.status == ChainStatus::Failed) {
            self.set_status(conv, ConversationStatus::Failed);
            return;
        }
        if state.chains.iter().any(|c| c.status == ChainStatus::Open) {
            return;
        }
        let mut keys: Vec<&str> = Vec::new();
        let mut mentions: Vec<(usize, SpanRef, Vec<HitOption>)> = Vec::new();
        for (i, m) in state.record.pool.iter().enumerate() {
            if m.stopped || keys.contains(&m.key.as_str()) {
                continue;
            }
            keys.push(&m.key);
            let mut options: Vec<HitOption> = m.entities.iter().map(|e| HitOption::entity(e)).collect();
            options.push(HitOption::special(NONE_OPTION, "None of these"));
            mentions.push((i, m.span, options));
        }
        if mentions.is_empty() {
            self.set_status(conv, ConversationStatus::Done);
            return;
        }
        self.set_status(conv, ConversationStatus::Stage3);
        for (i, span, options) in mentions {
            self.add_hit(3, conv, Some(span), options, Some(i));
        }
    }
}
