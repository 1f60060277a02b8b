//! JSON readers and canonical writers for conversations and annotations.
//!
//! Canonical output uses sorted object keys, two-space indentation and a trailing
//! newline, so that `write(read(write(x)))` reproduces the same bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::annotation::{ConversationAnnotation, Split, TurnAnnotation};
use crate::error::{Error, Result};
use crate::tokenize::{tokenize_with, LexiconTagger, PosTagger};
use crate::types::{Conversation, EntityLink, MentionSpan, PersonalEntityLink, Pos, Speaker, Token, Turn};

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    Many(Vec<T>),
    One(T),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::Many(v) => v,
            OneOrMany::One(x) => vec![x],
        }
    }
}

#[derive(Deserialize)]
struct RawToken {
    text: String,
    pos: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: String,
    text: String,
    tokens: Option<Vec<RawToken>>,
}

#[derive(Deserialize)]
struct RawConversation {
    id: String,
    turns: Vec<RawTurn>,
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses with line/column diagnostics. Untagged wrappers swallow serde's field
/// names, so on failure the input is re-parsed as an array to recover them.
fn parse_one_or_many<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>> {
    match serde_json::from_str::<OneOrMany<T>>(text) {
        Ok(v) => Ok(v.into_vec()),
        Err(_) => {
            let trimmed = text.trim_start();
            let err = if trimmed.starts_with('[') {
                serde_json::from_str::<Vec<T>>(text).err()
            } else {
                serde_json::from_str::<T>(text).err()
            };
            let err = err.expect("untagged parse failed but typed parse succeeded");
            Err(Error::parse(format!("{origin} line {}", err.line()), err.to_string()))
        }
    }
}

pub fn read_conversations(path: &Path) -> Result<Vec<Conversation>> {
    read_conversations_with(path, &LexiconTagger::default())
}

/// Reads conversations; turns without `tokens` are tokenized and tagged by `tagger`,
/// turns with `tokens` are taken verbatim.
pub fn read_conversations_with(path: &Path, tagger: &dyn PosTagger) -> Result<Vec<Conversation>> {
    let text = read_file(path)?;
    parse_conversations(&text, &path.display().to_string(), tagger)
}

pub fn parse_conversations(text: &str, origin: &str, tagger: &dyn PosTagger) -> Result<Vec<Conversation>> {
    let raw: Vec<RawConversation> = parse_one_or_many(text, origin)?;
    raw.into_iter()
        .enumerate()
        .map(|(ci, rc)| {
            let turns = rc
                .turns
                .into_iter()
                .enumerate()
                .map(|(ti, rt)| {
                    let speaker: Speaker = rt.speaker.parse().map_err(|e: Error| {
                        Error::Validation(format!("{origin}: conversations[{ci}].turns[{ti}].speaker: {e}"))
                    })?;
                    let tokens = match rt.tokens {
                        None => tokenize_with(&rt.text, tagger),
                        Some(toks) => toks
                            .into_iter()
                            .enumerate()
                            .map(|(k, t)| {
                                let pos: Pos = t.pos.parse().map_err(|e: Error| {
                                    Error::Validation(format!(
                                        "{origin}: conversations[{ci}].turns[{ti}].tokens[{k}].pos: {e}"
                                    ))
                                })?;
                                Ok(Token::new(t.text, pos, t.start, t.end))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    };
                    Turn::new(speaker, rt.text, tokens).map_err(|e| {
                        Error::Validation(format!("{origin}: conversations[{ci}].turns[{ti}]: {e}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Conversation::new(rc.id, turns)
                .map_err(|e| Error::Validation(format!("{origin}: conversations[{ci}]: {e}")))
        })
        .collect()
}

pub fn conversation_to_json(conv: &Conversation) -> Value {
    let turns: Vec<Value> = conv
        .turns
        .iter()
        .map(|t| {
            let tokens: Vec<Value> = t
                .tokens
                .iter()
                .map(|tok| {
                    json!({"text": tok.text, "pos": tok.pos.as_str(), "start": tok.char_start, "end": tok.char_end})
                })
                .collect();
            json!({"speaker": t.speaker.as_str(), "text": t.text, "tokens": tokens})
        })
        .collect();
    json!({"id": conv.id, "turns": turns})
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_canonical_string<T: Serialize>(value: &T) -> String {
    // round-trip through Value: its map type keeps keys sorted
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable value");
    s.push('\n');
    s
}

pub fn conversations_to_string(convs: &[Conversation]) -> String {
    let v: Vec<Value> = convs.iter().map(conversation_to_json).collect();
    to_canonical_string(&v)
}

pub fn write_conversations(path: &Path, convs: &[Conversation]) -> Result<()> {
    write_file(path, &conversations_to_string(convs))
}

// ---- annotations ----

#[derive(Serialize, Deserialize)]
struct RawSpanRef {
    turn: usize,
    start_tok: usize,
    end_tok: usize,
}

#[derive(Serialize, Deserialize)]
struct RawLink {
    start_tok: usize,
    end_tok: usize,
    entity: String,
    #[serde(default = "one")]
    conf: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct RawPersonal {
    start_tok: usize,
    end_tok: usize,
    antecedents: Vec<RawSpanRef>,
    #[serde(default)]
    entities: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawTurnAnnotation {
    turn: usize,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default)]
    personal: Vec<RawPersonal>,
}

#[derive(Serialize, Deserialize)]
struct RawAnnotation {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    turns: Vec<RawTurnAnnotation>,
}

fn check_range(origin: &str, what: &str, start: usize, end: usize) -> Result<()> {
    if start >= end {
        return Err(Error::Validation(format!("{origin}: {what}: empty span [{start}, {end})")));
    }
    Ok(())
}

pub fn parse_annotations(text: &str, origin: &str) -> Result<Vec<ConversationAnnotation>> {
    let raw: Vec<RawAnnotation> = parse_one_or_many(text, origin)?;
    raw.into_iter()
        .enumerate()
        .map(|(ci, ra)| {
            if ra.id.is_empty() {
                return Err(Error::Validation(format!("{origin}: annotations[{ci}].id is empty")));
            }
            let split = ra
                .split
                .map(|s| s.parse::<Split>())
                .transpose()
                .map_err(|e| Error::Validation(format!("{origin}: annotations[{ci}].split: {e}")))?;
            let mut turns = Vec::with_capacity(ra.turns.len());
            for (ti, rt) in ra.turns.into_iter().enumerate() {
                let at = format!("annotations[{ci}].turns[{ti}]");
                let mut links = Vec::new();
                for (k, l) in rt.links.into_iter().enumerate() {
                    check_range(origin, &format!("{at}.links[{k}]"), l.start_tok, l.end_tok)?;
                    links.push(EntityLink {
                        span: MentionSpan::explicit(rt.turn, l.start_tok, l.end_tok),
                        entity_id: l.entity,
                        confidence: l.conf,
                    });
                }
                let mut personal = Vec::new();
                for (k, p) in rt.personal.into_iter().enumerate() {
                    check_range(origin, &format!("{at}.personal[{k}]"), p.start_tok, p.end_tok)?;
                    let span = MentionSpan::personal(rt.turn, p.start_tok, p.end_tok);
                    let mut antecedents = Vec::new();
                    for (j, a) in p.antecedents.into_iter().enumerate() {
                        check_range(origin, &format!("{at}.personal[{k}].antecedents[{j}]"), a.start_tok, a.end_tok)?;
                        let ante = MentionSpan::explicit(a.turn, a.start_tok, a.end_tok);
                        if !ante.strictly_precedes(&span) {
                            return Err(Error::Validation(format!(
                                "{origin}: {at}.personal[{k}].antecedents[{j}] does not precede the personal mention"
                            )));
                        }
                        antecedents.push(ante);
                    }
                    personal.push(PersonalEntityLink { personal: span, antecedents, inherited_entities: p.entities });
                }
                turns.push(TurnAnnotation { turn: rt.turn, links, personal });
            }
            Ok(ConversationAnnotation { id: ra.id, split, turns })
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<ConversationAnnotation>> {
    let text = read_file(path)?;
    parse_annotations(&text, &path.display().to_string())
}

fn to_raw(a: &ConversationAnnotation) -> RawAnnotation {
    RawAnnotation {
        id: a.id.clone(),
        split: a.split.map(|s| s.as_str().to_string()),
        turns: a
            .turns
            .iter()
            .map(|t| RawTurnAnnotation {
                turn: t.turn,
                links: t
                    .links
                    .iter()
                    .map(|l| RawLink {
                        start_tok: l.span.tok_start,
                        end_tok: l.span.tok_end,
                        entity: l.entity_id.clone(),
                        conf: l.confidence,
                    })
                    .collect(),
                personal: t
                    .personal
                    .iter()
                    .map(|p| RawPersonal {
                        start_tok: p.personal.tok_start,
                        end_tok: p.personal.tok_end,
                        antecedents: p
                            .antecedents
                            .iter()
                            .map(|s| RawSpanRef { turn: s.turn_index, start_tok: s.tok_start, end_tok: s.tok_end })
                            .collect(),
                        entities: p.inherited_entities.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn annotations_to_string(annotations: &[ConversationAnnotation]) -> String {
    let raw: Vec<RawAnnotation> = annotations.iter().map(to_raw).collect();
    to_canonical_string(&raw)
}

pub fn write_annotations(path: &Path, annotations: &[ConversationAnnotation]) -> Result<()> {
    write_file(path, &annotations_to_string(annotations))
}
