//! Conversation data model shared by every stage of the linker.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Adj,
    Adv,
    Noun,
    Propn,
    Pron,
    Verb,
    Num,
    Part,
    Det,
    Adp,
    Punct,
    Other,
}

impl Pos {
    pub const ALL: [Pos; 12] = [
        Pos::Adj,
        Pos::Adv,
        Pos::Noun,
        Pos::Propn,
        Pos::Pron,
        Pos::Verb,
        Pos::Num,
        Pos::Part,
        Pos::Det,
        Pos::Adp,
        Pos::Punct,
        Pos::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Noun => "NOUN",
            Pos::Propn => "PROPN",
            Pos::Pron => "PRON",
            Pos::Verb => "VERB",
            Pos::Num => "NUM",
            Pos::Part => "PART",
            Pos::Det => "DET",
            Pos::Adp => "ADP",
            Pos::Punct => "PUNCT",
            Pos::Other => "OTHER",
        }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pos::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown POS tag {s:?}")))
    }
}

/// A token with half-open character offsets into its turn's text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub pos: Pos,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, pos: Pos, char_start: usize, char_end: usize) -> Self {
        Token { text: text.into(), pos, char_start, char_end }
    }

    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "USER",
            Speaker::System => "SYSTEM",
        }
    }
}

impl FromStr for Speaker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "USER" => Ok(Speaker::User),
            "SYSTEM" => Ok(Speaker::System),
            other => Err(Error::Validation(format!("unknown speaker value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Turn {
    /// Builds a turn, checking the token invariants against `text`.
    pub fn new(speaker: Speaker, text: impl Into<String>, tokens: Vec<Token>) -> Result<Self> {
        let turn = Turn { speaker, text: text.into(), tokens };
        turn.validate()?;
        Ok(turn)
    }

    pub fn validate(&self) -> Result<()> {
        let chars: Vec<char> = self.text.chars().collect();
        let mut prev_end = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.char_start >= tok.char_end {
                return Err(Error::Validation(format!(
                    "token {i} has empty or inverted offsets ({}, {})",
                    tok.char_start, tok.char_end
                )));
            }
            if tok.char_start < prev_end {
                return Err(Error::Validation(format!("token {i} overlaps or is out of order")));
            }
            if tok.char_end > chars.len() {
                return Err(Error::Validation(format!("token {i} ends past the turn text")));
            }
            let slice: String = chars[tok.char_start..tok.char_end].iter().collect();
            if slice != tok.text {
                return Err(Error::Validation(format!(
                    "token {i} text {:?} does not match turn text {:?} at ({}, {})",
                    tok.text, slice, tok.char_start, tok.char_end
                )));
            }
            prev_end = tok.char_end;
        }
        Ok(())
    }

    pub fn is_user(&self) -> bool {
        self.speaker == Speaker::User
    }

    /// Surface text of tokens `[start, end)`, joined by the original inter-token text.
    pub fn span_text(&self, start: usize, end: usize) -> String {
        if start >= end || end > self.tokens.len() {
            return String::new();
        }
        let from = self.tokens[start].char_start;
        let to = self.tokens[end - 1].char_end;
        self.text.chars().skip(from).take(to - from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Conversation {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Result<Self> {
        let conv = Conversation { id: id.into(), turns };
        conv.validate()?;
        Ok(conv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("conversation id is empty".into()));
        }
        if !self.turns.iter().any(Turn::is_user) {
            return Err(Error::Validation(format!("conversation {:?} has no USER turn", self.id)));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            turn.validate()
                .map_err(|e| Error::Validation(format!("conversation {:?} turn {i}: {e}", self.id)))?;
        }
        Ok(())
    }

    pub fn user_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns.iter().enumerate().filter(|(_, t)| t.is_user())
    }

    pub fn span_text(&self, span: &MentionSpan) -> String {
        self.turns
            .get(span.turn_index)
            .map(|t| t.span_text(span.tok_start, span.tok_end))
            .unwrap_or_default()
    }

    /// Checks a span against this conversation's turns and token counts.
    pub fn check_span(&self, span: &MentionSpan) -> Result<()> {
        let turn = self.turns.get(span.turn_index).ok_or_else(|| {
            Error::Validation(format!("span {span} refers to missing turn in {:?}", self.id))
        })?;
        if span.tok_start >= span.tok_end || span.tok_end > turn.tokens.len() {
            return Err(Error::Validation(format!(
                "span {span} out of range for turn with {} tokens",
                turn.tokens.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MentionKind {
    Explicit,
    Personal,
}

/// A half-open token range `[tok_start, tok_end)` inside one turn.
///
/// Ordering is document order: turn first, then token position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MentionSpan {
    pub turn_index: usize,
    pub tok_start: usize,
    pub tok_end: usize,
    pub kind: MentionKind,
}

impl MentionSpan {
    pub fn new(turn_index: usize, tok_start: usize, tok_end: usize, kind: MentionKind) -> Self {
        MentionSpan { turn_index, tok_start, tok_end, kind }
    }

    pub fn explicit(turn_index: usize, tok_start: usize, tok_end: usize) -> Self {
        Self::new(turn_index, tok_start, tok_end, MentionKind::Explicit)
    }

    pub fn personal(turn_index: usize, tok_start: usize, tok_end: usize) -> Self {
        Self::new(turn_index, tok_start, tok_end, MentionKind::Personal)
    }

    pub fn len(&self) -> usize {
        self.tok_end - self.tok_start
    }

    pub fn is_empty(&self) -> bool {
        self.tok_end <= self.tok_start
    }

    /// Index of the last token (exclusive end minus one).
    pub fn last_token(&self) -> usize {
        self.tok_end - 1
    }

    /// True when `self` ends before `other` starts in document order.
    pub fn strictly_precedes(&self, other: &MentionSpan) -> bool {
        self.turn_index < other.turn_index
            || (self.turn_index == other.turn_index && self.tok_end <= other.tok_start)
    }

    pub fn overlaps(&self, other: &MentionSpan) -> bool {
        self.turn_index == other.turn_index
            && self.tok_start < other.tok_end
            && other.tok_start < self.tok_end
    }

    pub fn contained_in(&self, other: &MentionSpan) -> bool {
        self.turn_index == other.turn_index
            && other.tok_start <= self.tok_start
            && self.tok_end <= other.tok_end
    }

    pub fn same_range(&self, other: &MentionSpan) -> bool {
        self.turn_index == other.turn_index
            && self.tok_start == other.tok_start
            && self.tok_end == other.tok_end
    }
}

impl fmt::Display for MentionSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:[{}, {})", self.turn_index, self.tok_start, self.tok_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityLink {
    pub span: MentionSpan,
    pub entity_id: String,
    pub confidence: f64,
}

/// A personal mention ("my cars") paired with the explicit mentions it refers back to.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalEntityLink {
    pub personal: MentionSpan,
    pub antecedents: Vec<MentionSpan>,
    pub inherited_entities: Vec<String>,
}

impl PersonalEntityLink {
    /// Builds a link whose inherited entities are the union of the antecedents' links.
    pub fn with_inheritance(
        personal: MentionSpan,
        antecedents: Vec<MentionSpan>,
        links: &[EntityLink],
    ) -> Self {
        let mut inherited: Vec<String> = Vec::new();
        for ante in &antecedents {
            for link in links.iter().filter(|l| l.span.same_range(ante)) {
                if !inherited.contains(&link.entity_id) {
                    inherited.push(link.entity_id.clone());
                }
            }
        }
        PersonalEntityLink { personal, antecedents, inherited_entities: inherited }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turn_rejects_mismatched_token_text() {
        let toks = vec![Token::new("my", Pos::Pron, 0, 2), Token::new("cat", Pos::Noun, 3, 6)];
        assert!(Turn::new(Speaker::User, "my car", toks).is_err());
    }

    #[test]
    fn turn_rejects_overlap() {
        let toks = vec![Token::new("my", Pos::Pron, 0, 2), Token::new("y", Pos::Noun, 1, 2)];
        assert!(Turn::new(Speaker::User, "my", toks).is_err());
    }

    #[test]
    fn conversation_requires_user_turn() {
        let t = Turn::new(Speaker::System, "", vec![]).unwrap();
        assert!(Conversation::new("c", vec![t]).is_err());
        let t = Turn::new(Speaker::User, "", vec![]).unwrap();
        assert!(Conversation::new("", vec![t]).is_err());
    }

    #[test]
    fn document_order() {
        let a = MentionSpan::explicit(0, 3, 4);
        let b = MentionSpan::personal(1, 0, 2);
        let c = MentionSpan::explicit(1, 1, 3);
        assert!(a.strictly_precedes(&b));
        assert!(!c.strictly_precedes(&b));
        assert!(c.overlaps(&b));
        assert!(a < b);
    }

    #[test]
    fn inheritance_is_union_of_antecedent_links() {
        let life = MentionSpan::explicit(0, 0, 1);
        let pilot = MentionSpan::explicit(0, 2, 3);
        let links = vec![
            EntityLink { span: life, entity_id: "Life".into(), confidence: 1.0 },
            EntityLink { span: pilot, entity_id: "Pilot".into(), confidence: 1.0 },
        ];
        let pel = PersonalEntityLink::with_inheritance(
            MentionSpan::personal(1, 0, 2),
            vec![life, pilot, MentionSpan::explicit(0, 4, 5)],
            &links,
        );
        assert_eq!(pel.inherited_entities, vec!["Life".to_string(), "Pilot".to_string()]);
    }
}
