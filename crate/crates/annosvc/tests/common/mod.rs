#![allow(dead_code)]

use std::collections::BTreeMap;

use crel_annosvc::model::{Hit, NONE_OPTION, NOT_IN_DIALOGUE};
use crel_annosvc::{build_init, Event, HitStatus, ProjectState, Stoplist};
use crel_core::synth;
use crel_core::{Conversation, ConversationAnnotation};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct Fixture {
    pub conversations: Vec<Conversation>,
    pub gold: Vec<ConversationAnnotation>,
    pub init: Event,
}

/// Synthetic conversations whose gold links double as the single linker output.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let (conversations, gold): (Vec<_>, Vec<_>) = synth::fixture(n, seed).into_iter().unzip();
    let linker: Vec<ConversationAnnotation> = gold
        .iter()
        .map(|g| {
            let mut a = g.clone();
            a.split = None;
            for t in &mut a.turns {
                t.personal.clear();
            }
            a
        })
        .collect();
    let kb = synth::knowledge_base().unwrap();
    let init = build_init(&conversations, &[linker], None, &kb, &Stoplist::default()).unwrap();
    Fixture { conversations, gold, init }
}

/// The option a careful annotator picks given the gold annotation.
pub fn truthful(hit: &Hit, state: &ProjectState, gold: &[ConversationAnnotation]) -> String {
    let g = gold.iter().find(|g| g.id == hit.conversation).expect("gold for every conversation");
    let same = |s: &crel_core::MentionSpan, o: &crel_annosvc::HitOption| {
        o.span.is_some_and(|x| x.turn == s.turn_index && x.start == s.tok_start && x.end == s.tok_end)
    };
    match hit.stage {
        1 => {
            let p = g.personal().next().map(|p| p.personal);
            p.and_then(|p| hit.options.iter().find(|o| same(&p, o))).map_or(NONE_OPTION.into(), |o| o.id.clone())
        }
        2 => {
            let focus = hit.focus.unwrap();
            let p = g
                .personal()
                .find(|p| p.personal.turn_index == focus.turn && p.personal.tok_start == focus.start)
                .expect("focus is the gold personal mention");
            let _ = state;
            hit.options
                .iter()
                .find(|o| p.antecedents.iter().any(|a| same(a, o)))
                .map_or(NOT_IN_DIALOGUE.into(), |o| o.id.clone())
        }
        _ => {
            let focus = hit.focus.unwrap();
            let link = g.links().find(|l| {
                l.span.turn_index == focus.turn && l.span.tok_start == focus.start && l.span.tok_end == focus.end
            });
            link.map_or(NONE_OPTION.into(), |l| format!("e:{}", l.entity_id))
        }
    }
}

/// Truthful with probability `1 - noise`, otherwise a uniformly random option.
pub fn noisy<R: Rng>(hit: &Hit, state: &ProjectState, gold: &[ConversationAnnotation], noise: f64, rng: &mut R) -> String {
    if rng.gen_bool(noise) {
        hit.options.choose(rng).unwrap().id.clone()
    } else {
        truthful(hit, state, gold)
    }
}

/// Independent statement of the agreement rules, applied to the full response list of
/// a closed HIT: the status it must have ended in.
pub fn expected_status(stage: u8, selections: &[&str]) -> HitStatus {
    let count = |xs: &[&str]| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for x in xs {
            *m.entry(x.to_string()).or_default() += 1;
        }
        let mut v: Vec<(usize, String)> = m.into_iter().map(|(k, c)| (c, k)).collect();
        v.sort_by_key(|x| std::cmp::Reverse(x.0));
        v
    };
    let first3 = count(&selections[..3]);
    let pass = |s: &str| HitStatus::Passed { option: s.to_string() };
    match stage {
        1 => {
            assert_eq!(selections.len(), 3);
            if first3[0].0 >= 2 { pass(&first3[0].1) } else { HitStatus::Failed }
        }
        2 => match first3[0].0 {
            3 => {
                assert_eq!(selections.len(), 3);
                pass(&first3[0].1)
            }
            2 => {
                assert_eq!(selections.len(), 5);
                let all = count(selections);
                if all[0].0 >= 3 { pass(&all[0].1) } else { HitStatus::Failed }
            }
            _ => {
                assert_eq!(selections.len(), 3);
                HitStatus::Failed
            }
        },
        _ => {
            if first3[0].0 >= 2 {
                assert_eq!(selections.len(), 3);
                return pass(&first3[0].1);
            }
            assert_eq!(selections.len(), 5);
            let all = count(selections);
            if all.len() > 1 && all[0].0 == all[1].0 { HitStatus::Unresolved } else { pass(&all[0].1) }
        }
    }
}
