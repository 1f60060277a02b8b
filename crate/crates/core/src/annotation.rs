//! Per-conversation annotation records: the linker's output and the gold format.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::types::{EntityLink, MentionSpan, PersonalEntityLink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Validation(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TurnAnnotation {
    pub turn: usize,
    pub links: Vec<EntityLink>,
    /// In gold data a personal mention may carry no antecedents ("not in dialogue").
    pub personal: Vec<PersonalEntityLink>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConversationAnnotation {
    pub id: String,
    /// Present only in gold files.
    pub split: Option<Split>,
    pub turns: Vec<TurnAnnotation>,
}

impl ConversationAnnotation {
    pub fn new(id: impl Into<String>) -> Self {
        ConversationAnnotation { id: id.into(), split: None, turns: Vec::new() }
    }

    pub fn links(&self) -> impl Iterator<Item = &EntityLink> {
        self.turns.iter().flat_map(|t| t.links.iter())
    }

    pub fn personal(&self) -> impl Iterator<Item = &PersonalEntityLink> {
        self.turns.iter().flat_map(|t| t.personal.iter())
    }

    /// Explicit spans in document order.
    pub fn explicit_spans(&self) -> Vec<MentionSpan> {
        let mut spans: Vec<MentionSpan> = self.links().map(|l| l.span).collect();
        spans.sort();
        spans
    }

    pub fn turn_mut(&mut self, turn: usize) -> &mut TurnAnnotation {
        let pos = match self.turns.binary_search_by_key(&turn, |t| t.turn) {
            Ok(p) => p,
            Err(p) => {
                self.turns.insert(p, TurnAnnotation { turn, ..Default::default() });
                p
            }
        };
        &mut self.turns[pos]
    }
}
