//! Micro-averaged precision/recall/F1 for mention detection, entity linking and
//! personal entity linking; Fleiss' kappa; gold dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::annotation::{ConversationAnnotation, Split};
use crate::error::{Error, Result};
use crate::io::{parse_annotations, read_file};
use crate::types::MentionSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Explicit mention spans.
    Md,
    /// Explicit spans with their entity.
    El,
    /// (personal span, antecedent span) pairs.
    Pel,
    /// Personal mention spans alone.
    #[serde(rename = "pem")]
    PersonalSpans,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" => Ok(Mode::Md),
            "el" => Ok(Mode::El),
            "pel" => Ok(Mode::Pel),
            "pem" => Ok(Mode::PersonalSpans),
            other => Err(Error::Validation(format!("unknown eval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Identical turn and token boundaries.
    #[default]
    Strong,
    /// Same turn and at least one shared token.
    Weak,
}

impl FromStr for Matching {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(Matching::Strong),
            "weak" => Ok(Matching::Weak),
            other => Err(Error::Validation(format!("unknown matching {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Score predicted pairs whose personal mention is gold "not in dialogue"
    /// (as false positives). By default such pairs are excluded.
    pub include_nid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        MetricReport { tp, fp, fn_, precision, recall, f1 }
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P={:.3} R={:.3} F={:.3} (tp={} fp={} fn={})",
            self.precision, self.recall, self.f1, self.tp, self.fp, self.fn_
        )
    }
}

/// One scoring unit: one or two spans plus an optional entity label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Item {
    pub spans: Vec<MentionSpan>,
    pub label: Option<String>,
}

pub fn spans_match(a: &MentionSpan, b: &MentionSpan, matching: Matching) -> bool {
    match matching {
        Matching::Strong => a.same_range(b),
        Matching::Weak => a.overlaps(b),
    }
}

pub fn items_match(gold: &Item, pred: &Item, matching: Matching) -> bool {
    gold.label == pred.label
        && gold.spans.len() == pred.spans.len()
        && gold.spans.iter().zip(&pred.spans).all(|(g, p)| spans_match(g, p, matching))
}

/// Extracts the scoring items of one conversation for a mode, in document order.
pub fn items(ann: &ConversationAnnotation, mode: Mode) -> Vec<Item> {
    let mut out: Vec<Item> = match mode {
        Mode::Md => ann.links().map(|l| Item { spans: vec![l.span], label: None }).collect(),
        Mode::El => ann
            .links()
            .map(|l| Item { spans: vec![l.span], label: Some(l.entity_id.clone()) })
            .collect(),
        Mode::Pel => ann
            .personal()
            .flat_map(|p| p.antecedents.iter().map(move |a| Item { spans: vec![p.personal, *a], label: None }))
            .collect(),
        Mode::PersonalSpans => ann.personal().map(|p| Item { spans: vec![p.personal], label: None }).collect(),
    };
    for item in &mut out {
        for s in &mut item.spans {
            // kind is not part of identity when scoring
            s.kind = crate::types::MentionKind::Explicit;
        }
    }
    out.sort();
    out
}

/// Size of a maximum one-to-one matching between gold and pred items (augmenting paths,
/// predictions visited in document order).
pub fn max_matching(gold: &[Item], pred: &[Item], matching: Matching) -> usize {
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gold.len()).filter(|&g| items_match(&gold[g], p, matching)).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gold.len()];

    fn augment(p: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &g in &adj[p] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].is_none_or(|q| augment(q, adj, seen, owner)) {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }

    let mut count = 0;
    for p in 0..pred.len() {
        let mut seen = vec![false; gold.len()];
        if augment(p, &adj, &mut seen, &mut owner) {
            count += 1;
        }
    }
    count
}

fn nid_spans(gold: &ConversationAnnotation) -> Vec<MentionSpan> {
    gold.personal().filter(|p| p.antecedents.is_empty()).map(|p| p.personal).collect()
}

/// Pools counts over every conversation, then computes P/R/F.
pub fn micro_prf(
    gold: &[ConversationAnnotation],
    pred: &[ConversationAnnotation],
    mode: Mode,
    matching: Matching,
    opts: &EvalOptions,
) -> Result<MetricReport> {
    let gold_by_id: BTreeMap<&str, &ConversationAnnotation> = gold.iter().map(|a| (a.id.as_str(), a)).collect();
    let pred_by_id: BTreeMap<&str, &ConversationAnnotation> = pred.iter().map(|a| (a.id.as_str(), a)).collect();
    if gold_by_id.len() != gold.len() || pred_by_id.len() != pred.len() {
        return Err(Error::Validation("duplicate conversation id".into()));
    }
    let gold_ids: BTreeSet<&str> = gold_by_id.keys().copied().collect();
    let pred_ids: BTreeSet<&str> = pred_by_id.keys().copied().collect();
    if gold_ids != pred_ids {
        let missing: Vec<&&str> = gold_ids.symmetric_difference(&pred_ids).take(5).collect();
        return Err(Error::Validation(format!("conversation-id mismatch between gold and pred: {missing:?}")));
    }
    let (mut tp, mut n_gold, mut n_pred) = (0, 0, 0);
    for (id, g) in &gold_by_id {
        let p = pred_by_id[id];
        let gi = items(g, mode);
        let mut pi = items(p, mode);
        if mode == Mode::Pel && !opts.include_nid {
            let nid = nid_spans(g);
            pi.retain(|it| !nid.iter().any(|s| spans_match(s, &it.spans[0], matching)));
        }
        tp += max_matching(&gi, &pi, matching);
        n_gold += gi.len();
        n_pred += pi.len();
    }
    Ok(MetricReport::from_counts(tp, n_pred - tp, n_gold - tp))
}

// ---- Fleiss' kappa ----

/// Subjects × categories rating counts. Subjects may have different rater counts.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    counts: Vec<Vec<u64>>,
}

impl RatingsMatrix {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        if let Some(first) = counts.first() {
            if counts.iter().any(|r| r.len() != first.len()) {
                return Err(Error::Validation("ratings rows have different category counts".into()));
            }
        }
        Ok(RatingsMatrix { counts })
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n_subjects(&self) -> usize {
        self.counts.len()
    }

    /// Reads `subject,category,count` rows; a header row is skipped when present.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut subjects: Vec<String> = Vec::new();
        let mut categories: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let loc = format!("{} line {}", path.display(), line + 1);
            let rec = rec.map_err(|e| Error::parse(&loc, e.to_string()))?;
            if rec.len() != 3 {
                return Err(Error::parse(&loc, format!("expected 3 fields, got {}", rec.len())));
            }
            let count: u64 = match rec[2].parse() {
                Ok(c) => c,
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::parse(&loc, format!("count: {e}"))),
            };
            let s = index_of(&mut subjects, &rec[0]);
            let c = index_of(&mut categories, &rec[1]);
            *cells.entry((s, c)).or_default() += count;
        }
        let mut counts = vec![vec![0; categories.len()]; subjects.len()];
        for ((s, c), n) in cells {
            counts[s][c] = n;
        }
        RatingsMatrix::new(counts)
    }
}

fn index_of(list: &mut Vec<String>, key: &str) -> usize {
    match list.iter().position(|k| k == key) {
        Some(i) => i,
        None => {
            list.push(key.to_string());
            list.len() - 1
        }
    }
}

/// Fleiss' kappa with per-subject agreement normalized by `n_i (n_i - 1)`, so subjects
/// may be rated by different numbers of raters.
pub fn fleiss_kappa(ratings: &RatingsMatrix) -> Result<f64> {
    let rows = ratings.rows();
    if rows.is_empty() {
        return Err(Error::Validation("no subjects to compute kappa over".into()));
    }
    let n_cat = rows[0].len();
    let mut totals = vec![0.0f64; n_cat];
    let mut all = 0.0;
    let mut p_bar = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n < 2 {
            return Err(Error::Validation(format!("subject {i} has {n} ratings; at least 2 required")));
        }
        let agree: u64 = row.iter().map(|&c| c * c).sum::<u64>() - n;
        p_bar += agree as f64 / (n * (n - 1)) as f64;
        for (j, &c) in row.iter().enumerate() {
            totals[j] += c as f64;
        }
        all += n as f64;
    }
    p_bar /= rows.len() as f64;
    let p_e: f64 = totals.iter().map(|t| (t / all).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        // every rating falls in one category
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

// ---- dataset statistics ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SplitStats {
    pub conversations: usize,
    pub user_utterances: usize,
    pub ne_concept_annotations: usize,
    pub personal_annotations: usize,
}

impl SplitStats {
    pub fn add(&mut self, ann: &ConversationAnnotation) {
        self.conversations += 1;
        self.user_utterances += ann.turns.len();
        self.ne_concept_annotations += ann.links().count();
        self.personal_annotations += ann.personal().count();
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.conversations, self.user_utterances, self.ne_concept_annotations, self.personal_annotations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub val: SplitStats,
    pub test: SplitStats,
}

impl DatasetStats {
    pub fn of(annotations: &[ConversationAnnotation]) -> Result<Self> {
        let mut stats = DatasetStats::default();
        for a in annotations {
            let split = a
                .split
                .ok_or_else(|| Error::Validation(format!("gold conversation {:?} has no split tag", a.id)))?;
            stats.split_mut(split).add(a);
        }
        Ok(stats)
    }

    pub fn split(&self, s: Split) -> &SplitStats {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, s: Split) -> &mut SplitStats {
        match s {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn total(&self) -> SplitStats {
        let mut t = SplitStats::default();
        for s in Split::ALL {
            let x = self.split(s);
            t.conversations += x.conversations;
            t.user_utterances += x.user_utterances;
            t.ne_concept_annotations += x.ne_concept_annotations;
            t.personal_annotations += x.personal_annotations;
        }
        t
    }
}

/// Loads a gold annotation file (every conversation tagged train/val/test; one
/// `turns` entry per user utterance) and counts it per split.
pub fn load_dataset(path: &Path) -> Result<(Vec<ConversationAnnotation>, DatasetStats)> {
    let text = read_file(path)?;
    let anns = parse_annotations(&text, &path.display().to_string())?;
    let stats = DatasetStats::of(&anns).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok((anns, stats))
}

pub fn filter_split(anns: &[ConversationAnnotation], split: Split) -> Vec<ConversationAnnotation> {
    anns.iter().filter(|a| a.split == Some(split)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::TurnAnnotation;
    use crate::types::{EntityLink, PersonalEntityLink};

    fn link(turn: usize, s: usize, e: usize, ent: &str) -> EntityLink {
        EntityLink { span: MentionSpan::explicit(turn, s, e), entity_id: ent.into(), confidence: 1.0 }
    }

    fn ann(links: Vec<EntityLink>) -> ConversationAnnotation {
        ConversationAnnotation {
            id: "c".into(),
            split: None,
            turns: vec![TurnAnnotation { turn: 0, links, personal: vec![] }],
        }
    }

    #[test]
    fn identical_is_perfect() {
        let g = vec![ann(vec![link(0, 0, 1, "A"), link(0, 2, 4, "B")])];
        for mode in [Mode::Md, Mode::El, Mode::Pel] {
            let r = micro_prf(&g, &g, mode, Matching::Strong, &EvalOptions::default()).unwrap();
            if mode != Mode::Pel {
                assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
            }
        }
    }

    #[test]
    fn wrong_entity_counts_fp_and_fn() {
        let g = vec![ann(vec![link(0, 0, 1, "A"), link(0, 2, 4, "B")])];
        let p = vec![ann(vec![link(0, 0, 1, "A"), link(0, 2, 4, "C")])];
        let r = micro_prf(&g, &p, Mode::El, Matching::Strong, &EvalOptions::default()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        let r = micro_prf(&g, &p, Mode::Md, Matching::Strong, &EvalOptions::default()).unwrap();
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn zero_denominators() {
        let g = vec![ann(vec![link(0, 0, 1, "A")])];
        let p = vec![ann(vec![])];
        let r = micro_prf(&g, &p, Mode::Md, Matching::Strong, &EvalOptions::default()).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn weak_matching_overlap() {
        let g = vec![ann(vec![link(0, 0, 3, "A")])];
        let p = vec![ann(vec![link(0, 2, 5, "A")])];
        let strong = micro_prf(&g, &p, Mode::Md, Matching::Strong, &EvalOptions::default()).unwrap();
        let weak = micro_prf(&g, &p, Mode::Md, Matching::Weak, &EvalOptions::default()).unwrap();
        assert_eq!(strong.tp, 0);
        assert_eq!(weak.tp, 1);
    }

    #[test]
    fn id_mismatch_is_error() {
        let g = vec![ann(vec![])];
        let mut p = g.clone();
        p[0].id = "other".into();
        assert!(micro_prf(&g, &p, Mode::Md, Matching::Strong, &EvalOptions::default()).is_err());
    }

    #[test]
    fn nid_pairs_excluded_by_default() {
        let personal = MentionSpan::personal(1, 0, 2);
        let mut g = ann(vec![]);
        g.turns.push(TurnAnnotation {
            turn: 1,
            links: vec![],
            personal: vec![PersonalEntityLink { personal, antecedents: vec![], inherited_entities: vec![] }],
        });
        let mut p = ann(vec![]);
        p.turns.push(TurnAnnotation {
            turn: 1,
            links: vec![],
            personal: vec![PersonalEntityLink {
                personal,
                antecedents: vec![MentionSpan::explicit(0, 0, 1)],
                inherited_entities: vec![],
            }],
        });
        let (g, p) = (vec![g], vec![p]);
        let r = micro_prf(&g, &p, Mode::Pel, Matching::Strong, &EvalOptions::default()).unwrap();
        assert_eq!(r.fp, 0);
        let r = micro_prf(&g, &p, Mode::Pel, Matching::Strong, &EvalOptions { include_nid: true }).unwrap();
        assert_eq!(r.fp, 1);
    }

    #[test]
    fn kappa_perfect_and_hand_case() {
        let m = RatingsMatrix::new(vec![vec![3, 0], vec![0, 3]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
        let m = RatingsMatrix::new(vec![vec![3, 0], vec![3, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&m).unwrap(), 1.0);
        // P_i = (4 + 1 - 3) / 6 = 1/3, P_e = 1/2 -> kappa = -1/3
        let m = RatingsMatrix::new(vec![vec![2, 1], vec![1, 2]]).unwrap();
        assert!((fleiss_kappa(&m).unwrap() + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_needs_two_ratings() {
        let m = RatingsMatrix::new(vec![vec![1, 0], vec![2, 0]]).unwrap();
        assert!(fleiss_kappa(&m).is_err());
        assert!(fleiss_kappa(&RatingsMatrix::new(vec![]).unwrap()).is_err());
    }

    #[test]
    fn stats_direct_count() {
        let text = r#"[{"id": "c1", "split": "train", "turns": [
            {"turn": 0, "links": [{"start_tok": 0, "end_tok": 1, "entity": "A"}, {"start_tok": 2, "end_tok": 3, "entity": "B"}]},
            {"turn": 2, "links": [{"start_tok": 4, "end_tok": 5, "entity": "C"}],
             "personal": [{"start_tok": 0, "end_tok": 2, "antecedents": [{"turn": 0, "start_tok": 0, "end_tok": 1}]}]}]}]"#;
        let anns = parse_annotations(text, "mem").unwrap();
        let stats = DatasetStats::of(&anns).unwrap();
        assert_eq!(stats.train.as_tuple(), (1, 2, 3, 1));
        assert_eq!(stats.val.as_tuple(), (0, 0, 0, 0));
        assert_eq!(DatasetStats::of(&[]).unwrap(), DatasetStats::default());
    }
}
