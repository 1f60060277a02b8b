//! End-to-end linking: mention detection, disambiguation, personal mention detection,
//! personal entity linking, and entity inheritance.

use crate::annotation::{ConversationAnnotation, TurnAnnotation};
use crate::ed::{disambiguate, EdWeights, KnowledgeBase};
use crate::error::{Error, Result};
use crate::md::MdModel;
use crate::pel::{link_personal_mentions, span_endpoints, PelModel, SpanEndpoints};
use crate::pem::detect_personal_mentions;
use crate::types::{Conversation, MentionSpan};

#[derive(Debug, Clone, Copy, Default)]
pub struct LinkConfig {
    /// Also detect explicit mentions in SYSTEM turns and offer them as antecedents.
    /// Their links are not emitted.
    pub include_system_antecedents: bool,
}

/// Every artifact needed by [`link`].
#[derive(Debug, Clone)]
pub struct Models {
    pub md: MdModel,
    pub pel: PelModel,
    pub kb: KnowledgeBase,
    pub ed: EdWeights,
}

impl Models {
    pub fn check(&self) -> Result<()> {
        self.ed.validate()?;
        if self.md.encoder.max_context_tokens() == 0 || self.pel.encoder.max_context_tokens() == 0 {
            return Err(Error::Validation("encoder context budget must be positive".into()));
        }
        Ok(())
    }
}

/// Annotates every USER turn of `conv`. Deterministic for fixed models.
pub fn link(conv: &Conversation, models: &Models, config: LinkConfig) -> Result<ConversationAnnotation> {
    conv.validate()?;
    models.check()?;
    let mut explicit: Vec<MentionSpan> = Vec::new();
    let mut personal: Vec<MentionSpan> = Vec::new();
    for (t, turn) in conv.turns.iter().enumerate() {
        if turn.is_user() {
            personal.extend(detect_personal_mentions(turn, t));
        }
        if turn.is_user() || config.include_system_antecedents {
            explicit.extend(models.md.detect(conv, t)?);
        }
    }
    explicit.retain(|e| !personal.iter().any(|p| e.contained_in(p)));

    let links = disambiguate(conv, &explicit, &models.kb, &models.ed);

    let mut ann = ConversationAnnotation::new(conv.id.clone());
    for (t, turn) in conv.turns.iter().enumerate() {
        if turn.is_user() {
            ann.turns.push(TurnAnnotation { turn: t, ..Default::default() });
        }
    }
    for l in &links {
        if conv.turns[l.span.turn_index].is_user() {
            ann.turn_mut(l.span.turn_index).links.push(l.clone());
        }
    }

    let scorer = &models.pel.scorer;
    let mut personal_turns: Vec<usize> = personal.iter().map(|p| p.turn_index).collect();
    personal_turns.dedup();
    for t in personal_turns {
        let out = models.pel.encoder.encode(conv, t)?;
        let ends = |spans: &mut dyn Iterator<Item = &MentionSpan>| -> Result<Vec<(MentionSpan, SpanEndpoints)>> {
            let mut v = Vec::new();
            for s in spans {
                if let Some(e) = span_endpoints(&out, s, scorer).transpose()? {
                    v.push((*s, e));
                }
            }
            Ok(v)
        };
        let here = ends(&mut personal.iter().filter(|p| p.turn_index == t))?;
        let before = ends(&mut explicit.iter().filter(|e| e.turn_index <= t))?;
        for pl in link_personal_mentions(&before, &here, scorer, &links)? {
            ann.turn_mut(t).personal.push(pl);
        }
    }
    Ok(ann)
}

/// Links each conversation independently; output order follows input order.
pub fn link_all(convs: &[Conversation], models: &Models, config: LinkConfig) -> Result<Vec<ConversationAnnotation>> {
    convs.iter().map(|c| link(c, models, config)).collect()
}
