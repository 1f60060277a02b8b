//! Gold export, split assignment and agreement statistics.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crel_core::eval::{fleiss_kappa, DatasetStats, RatingsMatrix};
use crel_core::{ConversationAnnotation, EntityLink, MentionSpan, PersonalEntityLink, Split, TurnAnnotation};

use crate::model::{HitStatus, SpanRef};
use crate::workflow::{ChainStatus, ConversationStatus, ProjectState, WorkflowError};

/// 60/20/20 by the first eight bytes of SHA-256(id), big-endian, modulo 100.
pub fn split_for(id: &str) -> Split {
    let digest = Sha256::digest(id.as_bytes());
    let bucket = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) % 100;
    match bucket {
        0..60 => Split::Train,
        60..80 => Split::Val,
        _ => Split::Test,
    }
}

fn explicit(s: SpanRef) -> MentionSpan {
    MentionSpan::explicit(s.turn, s.start, s.end)
}

/// Gold annotations for every finished conversation, in project order.
pub fn export(state: &ProjectState) -> Vec<ConversationAnnotation> {
    let mut out = Vec::new();
    for id in &state.order {
        let conv = &state.conversations[id];
        if conv.status != ConversationStatus::Done {
            continue;
        }
        let mut ann = ConversationAnnotation::new(id.clone());
        ann.split = Some(split_for(id));
        for (t, turn) in conv.record.turns.iter().enumerate() {
            if turn.speaker == "USER" {
                ann.turns.push(TurnAnnotation { turn: t, ..Default::default() });
            }
        }
        let mut links = Vec::new();
        for hit in state.hits.values().filter(|h| h.stage == 3 && &h.conversation == id) {
            let HitStatus::Passed { option } = &hit.status else { continue };
            let Some(entity) = hit.option(option).and_then(|o| o.entity.clone()) else { continue };
            let key = &conv.record.pool[hit.target.expect("stage-3 HITs target a pooled mention")].key;
            for m in conv.record.pool.iter().filter(|m| &m.key == key) {
                links.push(EntityLink { span: explicit(m.span), entity_id: entity.clone(), confidence: 1.0 });
            }
        }
        links.sort_by_key(|l| l.span);
        for chain in conv.chains.iter().filter(|c| c.status == ChainStatus::Complete) {
            let p = chain.personal;
            let personal = PersonalEntityLink::with_inheritance(
                MentionSpan::personal(p.turn, p.start, p.end),
                chain.antecedents.iter().copied().map(explicit).collect(),
                &links,
            );
            ann.turn_mut(p.turn).personal.push(personal);
        }
        for l in links {
            ann.turn_mut(l.span.turn_index).links.push(l);
        }
        out.push(ann);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: u8,
    pub hits: usize,
    pub open: usize,
    pub passed: usize,
    pub failed: usize,
    pub unresolved: usize,
    /// Passed over closed HITs; `None` until one closes.
    pub pass_rate: Option<f64>,
    pub responses: usize,
    /// Fleiss' kappa over closed HITs, categories = option positions.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectStats {
    pub events: u64,
    pub conversations: usize,
    pub status_counts: Vec<(ConversationStatus, usize)>,
    pub stages: Vec<StageStats>,
    /// Statistics of the data an export would produce right now.
    pub dataset: DatasetStats,
}

/// Per-stage rating counts for kappa: one row per closed HIT, one column per option position.
pub fn stage_ratings(state: &ProjectState, stage: u8) -> Vec<Vec<u64>> {
    let closed: Vec<_> = state.hits.values().filter(|h| h.stage == stage && !h.is_open()).collect();
    let width = closed.iter().map(|h| h.options.len()).max().unwrap_or(0);
    closed
        .iter()
        .map(|h| {
            let mut row = vec![0u64; width];
            for r in &h.responses {
                let k = h.options.iter().position(|o| o.id == r.selection).expect("validated selection");
                row[k] += 1;
            }
            row
        })
        .collect()
}

pub fn stats(state: &ProjectState) -> Result<ProjectStats, WorkflowError> {
    if !state.is_initialized() {
        return Err(WorkflowError::NotInitialized);
    }
    if state.hits.values().all(|h| h.is_open()) {
        return Err(WorkflowError::BadRequest("no completed HIT yet".into()));
    }
    let mut stages = Vec::new();
    for stage in 1..=3u8 {
        let hits: Vec<_> = state.hits.values().filter(|h| h.stage == stage).collect();
        let count = |f: &dyn Fn(&HitStatus) -> bool| hits.iter().filter(|h| f(&h.status)).count();
        let open = count(&|s| *s == HitStatus::Open);
        let passed = count(&|s| matches!(s, HitStatus::Passed { .. }));
        let closed = hits.len() - open;
        let ratings = stage_ratings(state, stage);
        let kappa = if ratings.is_empty() { None } else { RatingsMatrix::new(ratings).and_then(|m| fleiss_kappa(&m)).ok() };
        stages.push(StageStats {
            stage,
            hits: hits.len(),
            open,
            passed,
            failed: count(&|s| *s == HitStatus::Failed),
            unresolved: count(&|s| *s == HitStatus::Unresolved),
            pass_rate: (closed > 0).then(|| passed as f64 / closed as f64),
            responses: hits.iter().map(|h| h.responses.len()).sum(),
            kappa,
        });
    }
    let mut status_counts: Vec<(ConversationStatus, usize)> = Vec::new();
    for c in state.conversations.values() {
        match status_counts.iter_mut().find(|(s, _)| *s == c.status) {
            Some((_, n)) => *n += 1,
            None => status_counts.push((c.status, 1)),
        }
    }
    status_counts.sort_by_key(|(s, _)| *s as u8);
    let dataset = DatasetStats::of(&export(state)).expect("exported annotations carry splits");
    Ok(ProjectStats { events: state.seq, conversations: state.conversations.len(), status_counts, stages, dataset })
}
