//! Precomputes the per-conversation HIT material (stage-1 candidates, the explicit
//! mention pool and stage-3 entity options) that goes into the `init` event.

use std::collections::HashMap;

use crel_core::ed::{normalize_mention, search_titles, KnowledgeBase};
use crel_core::md::MdModel;
use crel_core::{Conversation, ConversationAnnotation, Error, MentionSpan, Pos, Result};

use crate::model::{ConversationRecord, Event, HitOption, PooledMention, SpanRef, TurnView};

/// Tokens allowed after the my/our trigger.
pub const MAX_FOLLOWERS: usize = 10;
pub const TITLE_RESULTS: usize = 10;
pub const DEFAULT_STOPLIST: [&str; 2] = ["please", "i am"];

/// Normalized mention texts that never get a linking HIT.
#[derive(Debug, Clone)]
pub struct Stoplist(Vec<String>);

impl Default for Stoplist {
    fn default() -> Self {
        Stoplist::new(DEFAULT_STOPLIST)
    }
}

impl Stoplist {
    pub fn new<S: AsRef<str>>(entries: impl IntoIterator<Item = S>) -> Self {
        let mut v: Vec<String> =
            entries.into_iter().map(|e| normalize_mention(e.as_ref())).filter(|e| !e.is_empty()).collect();
        v.sort();
        v.dedup();
        Stoplist(v)
    }

    /// One entry per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Stoplist::new(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')))
    }

    pub fn contains(&self, mention: &str) -> bool {
        self.0.binary_search(&normalize_mention(mention)).is_ok()
    }
}

/// Candidate personal mentions: each my/our in a USER turn followed by 1..=10 tokens,
/// stopping at punctuation. Duplicates under [`normalize_mention`] keep the first span.
pub fn personal_candidates(conv: &Conversation) -> Vec<HitOption> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for (t, turn) in conv.user_turns() {
        for (i, tok) in turn.tokens.iter().enumerate() {
            if !matches!(tok.lower().as_str(), "my" | "our") {
                continue;
            }
            for end in i + 2..=(i + 1 + MAX_FOLLOWERS).min(turn.tokens.len()) {
                if turn.tokens[end - 1].pos == Pos::Punct {
                    break;
                }
                let text = turn.span_text(i, end);
                let key = normalize_mention(&text);
                if seen.contains(&key) {
                    continue;
                }
                seen.push(key);
                out.push(HitOption::span('p', SpanRef { turn: t, start: i, end }, text));
            }
        }
    }
    out
}

/// Pools explicit mentions from linker outputs and the mention detector in document
/// order. Overlapping spans with the same [`normalize_mention`] key ("a restaurant" and
/// "restaurant") collapse into the first one; the same text elsewhere is kept.
pub fn pool_mentions(
    conv: &Conversation,
    linkers: &[&ConversationAnnotation],
    md: Option<&MdModel>,
    kb: &KnowledgeBase,
    stoplist: &Stoplist,
) -> Result<Vec<PooledMention>> {
    let mut spans: Vec<(MentionSpan, Option<String>)> = Vec::new();
    for ann in linkers {
        for l in ann.links() {
            conv.check_span(&l.span)?;
            if conv.turns[l.span.turn_index].is_user() {
                spans.push((l.span, Some(l.entity_id.clone())));
            }
        }
    }
    if let Some(md) = md {
        for (t, _) in conv.user_turns() {
            spans.extend(md.detect(conv, t)?.into_iter().map(|s| (s, None)));
        }
    }
    spans.sort_by_key(|(s, _)| (s.turn_index, s.tok_start, s.tok_end));

    let mut linked: HashMap<String, Vec<String>> = HashMap::new();
    for (s, e) in &spans {
        let list = linked.entry(normalize_mention(&conv.span_text(s))).or_default();
        if let Some(e) = e {
            if !list.contains(e) {
                list.push(e.clone());
            }
        }
    }

    let mut titles: HashMap<String, Vec<String>> = HashMap::new();
    let mut pool: Vec<PooledMention> = Vec::new();
    for (s, _) in spans {
        let text = conv.span_text(&s);
        let key = normalize_mention(&text);
        let span = SpanRef::from(s);
        let clash = |m: &PooledMention| m.key == key && m.span.turn == span.turn && m.span.start < span.end && span.start < m.span.end;
        if key.is_empty() || pool.iter().any(clash) {
            continue;
        }
        let entities = titles
            .entry(key.clone())
            .or_insert_with(|| {
                let mut entities = linked[&key].clone();
                for title in search_titles(&text, kb, TITLE_RESULTS) {
                    if !entities.contains(&title) {
                        entities.push(title);
                    }
                }
                entities
            })
            .clone();
        pool.push(PooledMention { span, stopped: stoplist.contains(&text), text, key, entities });
    }
    Ok(pool)
}

pub fn conversation_record(
    conv: &Conversation,
    linkers: &[&ConversationAnnotation],
    md: Option<&MdModel>,
    kb: &KnowledgeBase,
    stoplist: &Stoplist,
) -> Result<ConversationRecord> {
    let turns = conv
        .turns
        .iter()
        .map(|t| TurnView {
            speaker: t.speaker.as_str().to_string(),
            text: t.text.clone(),
            tokens: t.tokens.iter().map(|k| k.text.clone()).collect(),
        })
        .collect();
    Ok(ConversationRecord {
        id: conv.id.clone(),
        turns,
        personal_candidates: personal_candidates(conv),
        pool: pool_mentions(conv, linkers, md, kb, stoplist)?,
    })
}

/// The `init` event for a new project. Each linker is one annotation file; its entries
/// are matched to conversations by id, and ids unknown to `conversations` are an error.
pub fn build_init(
    conversations: &[Conversation],
    linkers: &[Vec<ConversationAnnotation>],
    md: Option<&MdModel>,
    kb: &KnowledgeBase,
    stoplist: &Stoplist,
) -> Result<Event> {
    let mut by_id: HashMap<&str, Vec<&ConversationAnnotation>> =
        conversations.iter().map(|c| (c.id.as_str(), Vec::new())).collect();
    if by_id.len() != conversations.len() {
        return Err(Error::Validation("duplicate conversation id".into()));
    }
    for file in linkers {
        for ann in file {
            by_id
                .get_mut(ann.id.as_str())
                .ok_or_else(|| Error::Validation(format!("linker output for unknown conversation {:?}", ann.id)))?
                .push(ann);
        }
    }
    let records = conversations
        .iter()
        .map(|c| conversation_record(c, &by_id[c.id.as_str()], md, kb, stoplist))
        .collect::<Result<Vec<_>>>()?;
    Ok(Event::Init { conversations: records })
}
