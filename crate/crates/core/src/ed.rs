//! Entity disambiguation: alias-prior candidates, local context similarity, and
//! conversation-wide coherence resolved by greedy iterative conditional maximization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array1;

use crate::annotation::ConversationAnnotation;
use crate::error::{Error, Result};
use crate::eval::{micro_prf, EvalOptions, Matching, MetricReport, Mode};
use crate::io::read_file;
use crate::types::{Conversation, EntityLink, MentionSpan, Pos};

/// Tokens on each side of a mention that feed its context vector.
pub const CONTEXT_WINDOW: usize = 25;
/// Candidates kept per mention.
pub const TOP_K: usize = 10;
pub const MAX_SWEEPS: usize = 10;
const LOG_PRIOR_FLOOR: f64 = -13.815510557964274; // ln(1e-6)

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, drops punctuation and leading articles, and collapses whitespace.
pub fn normalize_mention(text: &str) -> String {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    let mut words: Vec<&str> = cleaned.split_whitespace().collect();
    while words.len() > 1 && ARTICLES.contains(&words[0]) {
        words.remove(0);
    }
    words.join(" ")
}

pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    aliases: BTreeMap<String, Vec<(String, f64)>>,
    entity_vectors: HashMap<String, Array1<f64>>,
    word_vectors: HashMap<String, Array1<f64>>,
    titles: Vec<String>,
}

fn parse_vectors(text: &str, origin: &str, dim: &mut Option<usize>, lowercase: bool) -> Result<HashMap<String, Array1<f64>>> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = format!("{origin} line {}", i + 1);
        let (id, floats) = line.split_once('\t').ok_or_else(|| Error::parse(&loc, "expected id<TAB>floats"))?;
        let v: Vec<f64> = floats
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(&loc, format!("bad float {f:?}"))))
            .collect::<Result<_>>()?;
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(&loc, "vector must be non-empty and finite"));
        }
        match *dim {
            None => *dim = Some(v.len()),
            Some(k) if k != v.len() => {
                return Err(Error::Dimension(format!("{loc}: vector has {} values, expected {k}", v.len())))
            }
            _ => {}
        }
        let key = if lowercase { id.to_lowercase() } else { id.to_string() };
        out.insert(key, Array1::from(v));
    }
    Ok(out)
}

impl KnowledgeBase {
    /// Builds a KB from in-memory tables. Aliases are normalized; priors are validated.
    pub fn new(
        aliases: impl IntoIterator<Item = (String, String, f64)>,
        entity_vectors: HashMap<String, Array1<f64>>,
        word_vectors: HashMap<String, Array1<f64>>,
        titles: Vec<String>,
    ) -> Result<Self> {
        let mut table: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (alias, entity, prior) in aliases {
            if !(prior > 0.0 && prior <= 1.0) {
                return Err(Error::Validation(format!("prior {prior} for {alias:?} -> {entity:?} is outside (0, 1]")));
            }
            let entry = table.entry(normalize_mention(&alias)).or_default();
            if entry.iter().any(|(e, _)| *e == entity) {
                return Err(Error::Validation(format!("duplicate alias entry {alias:?} -> {entity:?}")));
            }
            entry.push((entity, prior));
        }
        for (alias, entries) in &mut table {
            let total: f64 = entries.iter().map(|(_, p)| p).sum();
            if total > 1.0 + 1e-6 {
                return Err(Error::Validation(format!("priors for alias {alias:?} sum to {total}")));
            }
            entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        }
        let dims: Vec<usize> = entity_vectors.values().chain(word_vectors.values()).map(|v| v.len()).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Dimension("entity and word vectors differ in length".into()));
        }
        let titles = if titles.is_empty() {
            let mut t: Vec<String> = table.values().flatten().map(|(e, _)| e.clone()).collect();
            t.sort();
            t.dedup();
            t
        } else {
            titles
        };
        Ok(KnowledgeBase { aliases: table, entity_vectors, word_vectors, titles })
    }

    /// Loads `aliases.tsv` (required), `entity_vecs.tsv`, `word_vecs.tsv` and `titles.txt`
    /// (optional) from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let alias_path = dir.join("aliases.tsv");
        let origin = alias_path.display().to_string();
        let mut rows = Vec::new();
        for (i, line) in read_file(&alias_path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let loc = format!("{origin} line {}", i + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            let [alias, entity, prior] = fields.as_slice() else {
                return Err(Error::parse(loc, "expected alias<TAB>entity_id<TAB>prior"));
            };
            let prior: f64 = prior.trim().parse().map_err(|_| Error::parse(&loc, format!("bad prior {prior:?}")))?;
            rows.push((alias.to_string(), entity.trim().to_string(), prior));
        }
        let mut dim = None;
        let mut load_vectors = |name: &str, lowercase: bool| -> Result<HashMap<String, Array1<f64>>> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(HashMap::new());
            }
            parse_vectors(&read_file(&path)?, &path.display().to_string(), &mut dim, lowercase)
        };
        let entity_vectors = load_vectors("entity_vecs.tsv", false)?;
        let word_vectors = load_vectors("word_vecs.tsv", true)?;
        let title_path = dir.join("titles.txt");
        let titles = if title_path.exists() {
            read_file(&title_path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
        } else {
            Vec::new()
        };
        Self::new(rows, entity_vectors, word_vectors, titles)
    }

    pub fn entity_vector(&self, id: &str) -> Option<&Array1<f64>> {
        self.entity_vectors.get(id)
    }

    pub fn is_vectorless(&self, id: &str) -> bool {
        !self.entity_vectors.contains_key(id)
    }

    pub fn word_vector(&self, word: &str) -> Option<&Array1<f64>> {
        self.word_vectors.get(&word.to_lowercase())
    }

    pub fn titles(&self) -> &[String] {
        &self.titles
    }

    /// True when some alias resolves to `id`, or it is a listed title.
    pub fn contains_entity(&self, id: &str) -> bool {
        self.aliases.values().flatten().any(|(e, _)| e == id) || self.titles.iter().any(|t| t == id)
    }
}

/// Top-`k` `(entity, prior)` pairs for a mention, prior descending then id ascending.
pub fn candidates(mention: &str, kb: &KnowledgeBase, k: usize) -> Vec<(String, f64)> {
    kb.aliases
        .get(&normalize_mention(mention))
        .map(|entries| entries.iter().take(k).cloned().collect())
        .unwrap_or_default()
}

/// Mean word vector over the non-punctuation tokens within `window` tokens of the
/// mention, counting back through earlier turns. `None` if no token has a vector.
pub fn context_vector(conv: &Conversation, mention: &MentionSpan, kb: &KnowledgeBase, window: usize) -> Option<Array1<f64>> {
    let mut flat = Vec::new();
    let mut start = 0;
    for (t, turn) in conv.turns.iter().enumerate().take(mention.turn_index + 1) {
        if t == mention.turn_index {
            start = flat.len() + mention.tok_start;
        }
        flat.extend(turn.tokens.iter());
    }
    let end = start + mention.len();
    let lo = start.saturating_sub(window);
    let hi = (end + window).min(flat.len());
    let mut sum: Option<Array1<f64>> = None;
    let mut n = 0;
    for tok in &flat[lo..hi] {
        if tok.pos == Pos::Punct {
            continue;
        }
        if let Some(v) = kb.word_vector(&tok.text) {
            match sum.as_mut() {
                Some(s) => *s += v,
                None => sum = Some(v.clone()),
            }
            n += 1;
        }
    }
    sum.map(|s| s / n as f64)
}

pub fn local_score(context: Option<&Array1<f64>>, entity: &str, kb: &KnowledgeBase) -> f64 {
    match (context, kb.entity_vector(entity)) {
        (Some(c), Some(e)) if c.len() == e.len() => cosine(c, e),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdWeights {
    pub lambda_prior: f64,
    pub lambda_local: f64,
    pub lambda_coh: f64,
    pub theta_nil: f64,
}

impl Default for EdWeights {
    fn default() -> Self {
        EdWeights { lambda_prior: 1.0, lambda_local: 0.0, lambda_coh: 0.0, theta_nil: -1e6 }
    }
}

impl EdWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda_prior, self.lambda_local, self.lambda_coh, self.theta_nil].iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation("ED weights must be finite".into()))
        }
    }

    pub fn to_checkpoint(&self) -> String {
        format!(
            "edv1 lambda_prior={} lambda_local={} lambda_coh={} theta_nil={}\n",
            self.lambda_prior, self.lambda_local, self.lambda_coh, self.theta_nil
        )
    }

    pub fn from_checkpoint(text: &str, origin: &str) -> Result<Self> {
        let ck = crate::checkpoint::parse(text, origin)?;
        if ck.magic != "edv1" {
            return Err(Error::parse(format!("{origin} line 1"), format!("expected edv1, got {:?}", ck.magic)));
        }
        let w = EdWeights {
            lambda_prior: ck.field("lambda_prior")?,
            lambda_local: ck.field("lambda_local")?,
            lambda_coh: ck.field("lambda_coh")?,
            theta_nil: ck.field("theta_nil")?,
        };
        w.validate()?;
        Ok(w)
    }
}

/// Candidates of one mention with their coherence-free score parts.
#[derive(Debug, Clone)]
pub struct MentionCandidates {
    pub span: MentionSpan,
    pub entities: Vec<String>,
    /// `lambda_prior * log prior + lambda_local * local` per candidate.
    pub unary: Vec<f64>,
    pub vectors: Vec<Option<Array1<f64>>>,
}

/// A disambiguation instance: mentions with at least one candidate, in document order.
#[derive(Debug, Clone)]
pub struct EdProblem {
    pub mentions: Vec<MentionCandidates>,
    pub lambda_coh: f64,
}

#[derive(Debug, Clone)]
pub struct IcmResult {
    pub assignment: Vec<usize>,
    /// Joint score at initialization and after each sweep.
    pub joint_scores: Vec<f64>,
}

impl EdProblem {
    pub fn build(conv: &Conversation, mentions: &[MentionSpan], kb: &KnowledgeBase, weights: &EdWeights) -> Self {
        let mut sorted = mentions.to_vec();
        sorted.sort();
        let mut out = Vec::new();
        for span in sorted {
            let cands = candidates(&conv.span_text(&span), kb, TOP_K);
            if cands.is_empty() {
                continue;
            }
            let context = context_vector(conv, &span, kb, CONTEXT_WINDOW);
            let unary = cands
                .iter()
                .map(|(e, p)| {
                    weights.lambda_prior * p.ln().max(LOG_PRIOR_FLOOR)
                        + weights.lambda_local * local_score(context.as_ref(), e, kb)
                })
                .collect();
            let vectors = cands.iter().map(|(e, _)| kb.entity_vector(e).cloned()).collect();
            out.push(MentionCandidates { span, entities: cands.into_iter().map(|(e, _)| e).collect(), unary, vectors });
        }
        EdProblem { mentions: out, lambda_coh: weights.lambda_coh }
    }

    fn cos(&self, i: usize, ci: usize, j: usize, cj: usize) -> f64 {
        match (&self.mentions[i].vectors[ci], &self.mentions[j].vectors[cj]) {
            (Some(a), Some(b)) if a.len() == b.len() => cosine(a, b),
            _ => 0.0,
        }
    }

    /// Mean cosine between candidate `c` of mention `i` and the other mentions' choices.
    pub fn coherence(&self, i: usize, c: usize, assignment: &[usize]) -> f64 {
        let m = self.mentions.len();
        if m < 2 {
            return 0.0;
        }
        let total: f64 = (0..m).filter(|&j| j != i).map(|j| self.cos(i, c, j, assignment[j])).sum();
        total / (m - 1) as f64
    }

    pub fn combined(&self, i: usize, c: usize, assignment: &[usize]) -> f64 {
        self.mentions[i].unary[c] + self.lambda_coh * self.coherence(i, c, assignment)
    }

    /// Sum of unary scores plus `lambda_coh / (m - 1)` times the pairwise cosine sum.
    /// A single mention's move changes this by exactly its change in `combined`.
    pub fn joint_score(&self, assignment: &[usize]) -> f64 {
        let m = self.mentions.len();
        let unary: f64 = (0..m).map(|i| self.mentions[i].unary[assignment[i]]).sum();
        if m < 2 {
            return unary;
        }
        let mut pairs = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                pairs += self.cos(i, assignment[i], j, assignment[j]);
            }
        }
        unary + self.lambda_coh / (m - 1) as f64 * pairs
    }

    pub fn icm(&self) -> IcmResult {
        let mut assignment = vec![0; self.mentions.len()];
        let mut joint_scores = vec![self.joint_score(&assignment)];
        for _ in 0..MAX_SWEEPS {
            let mut changed = false;
            for i in 0..self.mentions.len() {
                let mut best = assignment[i];
                let mut best_score = self.combined(i, best, &assignment);
                for c in 0..self.mentions[i].entities.len() {
                    let s = self.combined(i, c, &assignment);
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                }
                if best != assignment[i] {
                    assignment[i] = best;
                    changed = true;
                }
            }
            joint_scores.push(self.joint_score(&assignment));
            if !changed {
                break;
            }
        }
        IcmResult { assignment, joint_scores }
    }

    /// Joint-score maximizer over every candidate combination (first found on ties).
    pub fn exhaustive(&self) -> Vec<usize> {
        let m = self.mentions.len();
        let mut current = vec![0; m];
        let mut best = current.clone();
        let mut best_score = self.joint_score(&current);
        loop {
            let mut i = 0;
            while i < m {
                current[i] += 1;
                if current[i] < self.mentions[i].entities.len() {
                    break;
                }
                current[i] = 0;
                i += 1;
            }
            if i == m {
                return best;
            }
            let s = self.joint_score(&current);
            if s > best_score {
                best_score = s;
                best = current.clone();
            }
        }
    }

    /// Links for an assignment: drops choices scoring below `theta_nil`; confidence is the
    /// softmax weight of the chosen candidate.
    pub fn links(&self, assignment: &[usize], theta_nil: f64) -> Vec<(EntityLink, f64)> {
        let mut out = Vec::new();
        for (i, m) in self.mentions.iter().enumerate() {
            let scores: Vec<f64> = (0..m.entities.len()).map(|c| self.combined(i, c, assignment)).collect();
            let chosen = scores[assignment[i]];
            if chosen < theta_nil {
                continue;
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            let confidence = (chosen - max).exp() / z;
            out.push((EntityLink { span: m.span, entity_id: m.entities[assignment[i]].clone(), confidence }, chosen));
        }
        out
    }
}

/// Links `mentions` jointly. Mentions without candidates or scoring below the NIL
/// threshold get no link.
pub fn disambiguate(conv: &Conversation, mentions: &[MentionSpan], kb: &KnowledgeBase, weights: &EdWeights) -> Vec<EntityLink> {
    let problem = EdProblem::build(conv, mentions, kb, weights);
    let result = problem.icm();
    problem.links(&result.assignment, weights.theta_nil).into_iter().map(|(l, _)| l).collect()
}

/// Gold-mention ED example.
#[derive(Debug, Clone)]
pub struct EdExample {
    pub conversation: Conversation,
    pub gold: ConversationAnnotation,
}

fn weight_grid() -> Vec<(f64, f64, f64)> {
    const STEPS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for &a in &STEPS {
        for &b in &STEPS {
            for &c in &STEPS {
                let s = a + b + c;
                if s == 0.0 {
                    continue;
                }
                let w = (a / s, b / s, c / s);
                let dup = out.iter().any(|o| (o.0 - w.0).abs() < 1e-9 && (o.1 - w.1).abs() < 1e-9 && (o.2 - w.2).abs() < 1e-9);
                if !dup {
                    out.push(w);
                }
            }
        }
    }
    out
}

fn quantiles(sorted: &[f64], n: usize) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let last = (sorted.len() - 1) as f64;
    (0..n)
        .map(|q| {
            let pos = last * q as f64 / (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        })
        .collect()
}

/// Grid search over normalized weights and NIL thresholds maximizing micro F_EL on
/// gold mentions. Ties prefer larger `lambda_prior`, then larger `lambda_local`, then
/// larger `theta_nil`.
pub fn train_ed(examples: &[EdExample], kb: &KnowledgeBase) -> Result<(EdWeights, MetricReport)> {
    if examples.iter().all(|e| e.gold.links().next().is_none()) {
        return Err(Error::Dataset("no gold entity links to fit ED weights on".into()));
    }
    let gold: Vec<ConversationAnnotation> = examples.iter().map(|e| e.gold.clone()).collect();
    let mut best: Option<(EdWeights, MetricReport)> = None;
    for (lp, ll, lc) in weight_grid() {
        let weights = EdWeights { lambda_prior: lp, lambda_local: ll, lambda_coh: lc, theta_nil: f64::NEG_INFINITY };
        let scored: Vec<Vec<(EntityLink, f64)>> = examples
            .iter()
            .map(|e| {
                let problem = EdProblem::build(&e.conversation, &e.gold.explicit_spans(), kb, &weights);
                let result = problem.icm();
                problem.links(&result.assignment, f64::NEG_INFINITY)
            })
            .collect();
        let mut all: Vec<f64> = scored.iter().flatten().map(|(_, s)| *s).collect();
        all.sort_by(f64::total_cmp);
        let mut thetas = quantiles(&all, 101);
        if thetas.is_empty() {
            thetas.push(EdWeights::default().theta_nil);
        }
        thetas.dedup();
        for theta in thetas {
            let pred: Vec<ConversationAnnotation> = examples
                .iter()
                .zip(&scored)
                .map(|(e, links)| {
                    let mut ann = ConversationAnnotation::new(e.gold.id.clone());
                    for (l, s) in links {
                        if *s >= theta {
                            ann.turn_mut(l.span.turn_index).links.push(l.clone());
                        }
                    }
                    ann
                })
                .collect();
            let report = micro_prf(&gold, &pred, Mode::El, Matching::Strong, &EvalOptions::default())?;
            let cand = EdWeights { theta_nil: theta, ..weights };
            let better = match &best {
                None => true,
                Some((bw, br)) => {
                    let key = |w: &EdWeights| (w.lambda_prior, w.lambda_local, w.theta_nil);
                    report.f1 > br.f1 || (report.f1 == br.f1 && key(&cand).partial_cmp(&key(bw)) == Some(std::cmp::Ordering::Greater))
                }
            };
            if better {
                best = Some((cand, report));
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// Up to `n` titles ranked by exact match, prefix match, shared-token count, then title.
/// Titles matching in none of those ways are left out.
pub fn search_titles(query: &str, kb: &KnowledgeBase, n: usize) -> Vec<String> {
    let q = normalize_mention(query);
    if q.is_empty() {
        return Vec::new();
    }
    let q_tokens: Vec<&str> = q.split_whitespace().collect();
    let mut ranked: Vec<(bool, bool, usize, &String)> = kb
        .titles
        .iter()
        .filter_map(|title| {
            let t = normalize_mention(title);
            let exact = t == q;
            let prefix = t.starts_with(&q);
            let overlap = q_tokens.iter().filter(|w| t.split_whitespace().any(|x| x == **w)).count();
            (exact || prefix || overlap > 0).then_some((exact, prefix, overlap, title))
        })
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)).then(a.3.cmp(b.3)));
    ranked.into_iter().take(n).map(|r| r.3.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_mention("a restaurant"), "restaurant");
        assert_eq!(normalize_mention("Restaurant"), "restaurant");
        assert_eq!(normalize_mention("  The  U.S. "), "us");
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        let z = Array1::zeros(3);
        let a = Array1::from(vec![1.0, 0.0, 0.0]);
        assert_eq!(cosine(&z, &a), 0.0);
        assert_eq!(cosine(&a, &a), 1.0);
    }

    #[test]
    fn priors_must_be_valid() {
        let bad = vec![("x".to_string(), "X".to_string(), 0.7), ("x".to_string(), "Y".to_string(), 0.7)];
        assert!(KnowledgeBase::new(bad, HashMap::new(), HashMap::new(), vec![]).is_err());
        let zero = vec![("x".to_string(), "X".to_string(), 0.0)];
        assert!(KnowledgeBase::new(zero, HashMap::new(), HashMap::new(), vec![]).is_err());
    }

    #[test]
    fn grid_has_unique_normalized_points() {
        let g = weight_grid();
        assert!(g.iter().all(|w| (w.0 + w.1 + w.2 - 1.0).abs() < 1e-12));
        assert!(g.contains(&(1.0, 0.0, 0.0)));
        // 124 non-zero grid points collapse to distinct directions
        assert!(g.len() < 124);
    }

    #[test]
    fn weights_round_trip() {
        let w = EdWeights { lambda_prior: 0.5, lambda_local: 1.0 / 3.0, lambda_coh: 1.0 / 6.0, theta_nil: -2.25 };
        assert_eq!(EdWeights::from_checkpoint(&w.to_checkpoint(), "mem").unwrap(), w);
    }
}
