//! Rule-based detection of personal entity mentions ("my cars", "our two dogs of war").
//!
//! A mention starts at a `my`/`our` token and extends over the longest run of
//! following tokens that are adjectives, nouns, proper nouns, pronouns, numbers,
//! particles or determiners, or the words `of`/`in`. Trailing `of`/`in` are trimmed
//! and the run is capped at ten tokens after the trigger.

use crate::annotation::ConversationAnnotation;
use crate::eval::{micro_prf, EvalOptions, Matching, MetricReport, Mode};
use crate::types::{MentionSpan, Pos, Token, Turn};

pub const MAX_FOLLOWERS: usize = 10;

fn is_trigger(tok: &Token) -> bool {
    let lower = tok.lower();
    lower == "my" || lower == "our"
}

fn is_preposition(tok: &Token) -> bool {
    let lower = tok.lower();
    lower == "of" || lower == "in"
}

fn continues(tok: &Token) -> bool {
    matches!(tok.pos, Pos::Adj | Pos::Noun | Pos::Propn | Pos::Pron | Pos::Num | Pos::Part | Pos::Det)
        || is_preposition(tok)
}

/// Personal mention spans of one turn, sorted and non-overlapping.
pub fn detect_personal_mentions(turn: &Turn, turn_index: usize) -> Vec<MentionSpan> {
    let toks = &turn.tokens;
    let mut spans = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if !is_trigger(&toks[i]) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < toks.len() && end - i - 1 < MAX_FOLLOWERS && continues(&toks[end]) {
            end += 1;
        }
        while end > i + 1 && is_preposition(&toks[end - 1]) {
            end -= 1;
        }
        if end > i + 1 {
            spans.push(MentionSpan::personal(turn_index, i, end));
            i = end;
        } else {
            i += 1;
        }
    }
    spans
}

/// Scores detected personal mentions against gold ones (span-level, PERSONAL only).
pub fn score_pem_rules(
    gold: &[ConversationAnnotation],
    pred: &[ConversationAnnotation],
    matching: Matching,
) -> crate::error::Result<MetricReport> {
    micro_prf(gold, pred, Mode::PersonalSpans, matching, &EvalOptions::default())
}
