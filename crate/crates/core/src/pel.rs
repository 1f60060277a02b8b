//! Personal entity linking: endpoint projections, four-way bilinear span-pair score,
//! threshold selection of antecedents, and BCE training.
//!
//! For a mention with first-token vector `v_s` and last-token vector `v_e`:
//!
//! ```text
//! m_s = gelu(W_s v_s)      m_e = gelu(W_e v_e)
//! score(bf, af) = m_s[bf]ᵀ B_ss m_s[af] + m_s[bf]ᵀ B_se m_e[af]
//!               + m_e[bf]ᵀ B_es m_s[af] + m_e[bf]ᵀ B_ee m_e[af]
//! ```
//!
//! where `bf` is the earlier (explicit) mention and `af` the personal mention. Every pair
//! scoring above `tau` is selected, so one personal mention may get several antecedents.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::ConversationAnnotation;
use crate::checkpoint::{self, write_matrix};
use crate::encoder::{Encoder, EncoderConfig, EncoderGrads, EncoderOutput, LiteEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{apply, uniform, AdamW, Matrix, Parameters};
use crate::types::{Conversation, EntityLink, MentionSpan, PersonalEntityLink};

/// Exact GELU, `0.5 x (1 + erf(x / sqrt 2))`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    pub w_s: Matrix,
    pub w_e: Matrix,
    pub b_ss: Matrix,
    pub b_se: Matrix,
    pub b_es: Matrix,
    pub b_ee: Matrix,
    pub tau: f64,
}

impl ScorerParams {
    /// Uniform `±1/sqrt(d)` for the projections and `±1/sqrt(h)` for the bilinear maps.
    pub fn random(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pd = 1.0 / (d as f64).sqrt();
        let ph = 1.0 / (h as f64).sqrt();
        ScorerParams {
            w_s: uniform(h, d, pd, &mut rng),
            w_e: uniform(h, d, pd, &mut rng),
            b_ss: uniform(h, h, ph, &mut rng),
            b_se: uniform(h, h, ph, &mut rng),
            b_es: uniform(h, h, ph, &mut rng),
            b_ee: uniform(h, h, ph, &mut rng),
            tau: 0.0,
        }
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        ScorerParams {
            w_s: Array2::zeros((h, d)),
            w_e: Array2::zeros((h, d)),
            b_ss: Array2::zeros((h, h)),
            b_se: Array2::zeros((h, h)),
            b_es: Array2::zeros((h, h)),
            b_ee: Array2::zeros((h, h)),
            tau: 0.0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_s.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_s.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, d) = (self.hidden(), self.input_dim());
        if h == 0 || d == 0 {
            return Err(Error::Validation("scorer needs h >= 1 and d >= 1".into()));
        }
        if self.w_e.dim() != (h, d) {
            return Err(Error::Dimension(format!("W_e is {:?}, expected ({h}, {d})", self.w_e.dim())));
        }
        for (name, b) in [("B_ss", &self.b_ss), ("B_se", &self.b_se), ("B_es", &self.b_es), ("B_ee", &self.b_ee)] {
            if b.dim() != (h, h) {
                return Err(Error::Dimension(format!("{name} is {:?}, expected ({h}, {h})", b.dim())));
            }
        }
        if !self.all_finite() || self.tau.is_nan() {
            return Err(Error::Validation("scorer parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = format!("pelv1 d={} h={} tau={}\n", self.input_dim(), self.hidden(), self.tau);
        for (name, m) in self.tensors() {
            write_matrix(&mut s, &name, m);
        }
        s
    }

    pub fn from_parsed(ck: &checkpoint::Checkpoint) -> Result<Self> {
        if ck.magic != "pelv1" {
            return Err(Error::parse("checkpoint header", format!("expected pelv1, got {:?}", ck.magic)));
        }
        let d: usize = ck.field("d")?;
        let h: usize = ck.field("h")?;
        let p = ScorerParams {
            w_s: ck.matrix("W_s", h, d)?,
            w_e: ck.matrix("W_e", h, d)?,
            b_ss: ck.matrix("B_ss", h, h)?,
            b_se: ck.matrix("B_se", h, h)?,
            b_es: ck.matrix("B_es", h, h)?,
            b_ee: ck.matrix("B_ee", h, h)?,
            tau: ck.field("tau")?,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Parameters for ScorerParams {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("W_s".into(), &self.w_s),
            ("W_e".into(), &self.w_e),
            ("B_ss".into(), &self.b_ss),
            ("B_se".into(), &self.b_se),
            ("B_es".into(), &self.b_es),
            ("B_ee".into(), &self.b_ee),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("W_s".into(), &mut self.w_s),
            ("W_e".into(), &mut self.w_e),
            ("B_ss".into(), &mut self.b_ss),
            ("B_se".into(), &mut self.b_se),
            ("B_es".into(), &mut self.b_es),
            ("B_ee".into(), &mut self.b_ee),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanEndpoints {
    pub m_s: Array1<f64>,
    pub m_e: Array1<f64>,
}

pub fn project_endpoints(v_start: ArrayView1<f64>, v_end: ArrayView1<f64>, params: &ScorerParams) -> Result<SpanEndpoints> {
    let d = params.input_dim();
    if v_start.len() != d || v_end.len() != d {
        return Err(Error::Dimension(format!(
            "token vectors have length {} / {}, projections expect {d}",
            v_start.len(),
            v_end.len()
        )));
    }
    Ok(SpanEndpoints { m_s: params.w_s.dot(&v_start).mapv(gelu), m_e: params.w_e.dot(&v_end).mapv(gelu) })
}

/// Endpoints of a span from one encoder pass; `None` when the span's tokens were
/// truncated out of the context.
pub fn span_endpoints(out: &EncoderOutput, span: &MentionSpan, params: &ScorerParams) -> Option<Result<SpanEndpoints>> {
    let s = out.row(span.turn_index, span.tok_start)?;
    let e = out.row(span.turn_index, span.last_token())?;
    Some(project_endpoints(s, e, params))
}

fn bilinear(a: &Array1<f64>, b: &Matrix, c: &Array1<f64>) -> f64 {
    a.dot(&b.dot(c))
}

pub fn pair_score(before: &SpanEndpoints, after: &SpanEndpoints, params: &ScorerParams) -> Result<f64> {
    let h = params.hidden();
    for m in [&before.m_s, &before.m_e, &after.m_s, &after.m_e] {
        if m.len() != h {
            return Err(Error::Dimension(format!("endpoint vector has length {}, expected {h}", m.len())));
        }
    }
    Ok(bilinear(&before.m_s, &params.b_ss, &after.m_s)
        + bilinear(&before.m_s, &params.b_se, &after.m_e)
        + bilinear(&before.m_e, &params.b_es, &after.m_s)
        + bilinear(&before.m_e, &params.b_ee, &after.m_e))
}

/// Pairs each personal mention with every preceding explicit mention scoring above `tau`.
/// Personal mentions with no selected antecedent are omitted.
pub fn link_personal_mentions(
    explicit: &[(MentionSpan, SpanEndpoints)],
    personal: &[(MentionSpan, SpanEndpoints)],
    params: &ScorerParams,
    links: &[EntityLink],
) -> Result<Vec<PersonalEntityLink>> {
    let mut out = Vec::new();
    for (p, pe) in personal {
        let mut antecedents = Vec::new();
        for (e, ee) in explicit {
            if !e.strictly_precedes(p) {
                continue;
            }
            if pair_score(ee, pe, params)? > params.tau {
                antecedents.push(*e);
            }
        }
        if !antecedents.is_empty() {
            antecedents.sort();
            out.push(PersonalEntityLink::with_inheritance(*p, antecedents, links));
        }
    }
    Ok(out)
}

// ---- training data ----

/// One conversation with its explicit mentions and gold personal→antecedent pairs.
#[derive(Debug, Clone)]
pub struct PelExample {
    pub conversation: Conversation,
    pub explicit: Vec<MentionSpan>,
    /// Personal mention and its gold antecedents (empty: "not in dialogue").
    pub personal: Vec<(MentionSpan, Vec<MentionSpan>)>,
}

impl PelExample {
    /// Builds an example from a gold annotation: explicit mentions are the linked spans
    /// plus every gold antecedent span.
    pub fn from_gold(conversation: Conversation, gold: &ConversationAnnotation, include_system: bool) -> Result<Self> {
        let mut explicit: Vec<MentionSpan> = gold.links().map(|l| l.span).collect();
        for p in gold.personal() {
            explicit.extend(p.antecedents.iter().copied());
        }
        for s in &mut explicit {
            s.kind = crate::types::MentionKind::Explicit;
        }
        explicit.sort();
        explicit.dedup();
        explicit.retain(|s| include_system || conversation.turns.get(s.turn_index).is_some_and(|t| t.is_user()));
        let personal: Vec<(MentionSpan, Vec<MentionSpan>)> =
            gold.personal().map(|p| (p.personal, p.antecedents.clone())).collect();
        for s in explicit.iter().chain(personal.iter().map(|(p, _)| p)) {
            conversation.check_span(s)?;
        }
        Ok(PelExample { conversation, explicit, personal })
    }

    /// Candidate antecedents of `personal`: explicit mentions strictly before it.
    pub fn candidates(&self, personal: &MentionSpan) -> Vec<MentionSpan> {
        self.explicit.iter().filter(|e| e.strictly_precedes(personal)).copied().collect()
    }

    pub fn n_candidate_pairs(&self) -> usize {
        self.personal.iter().map(|(p, _)| self.candidates(p).len()).sum()
    }

    fn personal_turns(&self) -> Vec<usize> {
        let mut turns: Vec<usize> = self.personal.iter().map(|(p, _)| p.turn_index).collect();
        turns.sort();
        turns.dedup();
        turns
    }
}

#[derive(Debug, Clone)]
pub struct PelModel {
    pub encoder: Encoder,
    pub scorer: ScorerParams,
}

impl PelModel {
    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(format!("{}end\n{}", self.scorer.to_checkpoint(), self.encoder.to_checkpoint()?))
    }

    pub fn from_checkpoint(text: &str, origin: &str, vectors: Option<&crate::encoder::PrecomputedVectors>) -> Result<Self> {
        let ck = checkpoint::parse(text, origin)?;
        let scorer = ScorerParams::from_parsed(&ck)?;
        let encoder = Encoder::from_checkpoint(&ck.rest.join("\n"), origin, vectors)?;
        if encoder.dim() != scorer.input_dim() {
            return Err(Error::Dimension(format!(
                "encoder d={} but scorer expects d={}",
                encoder.dim(),
                scorer.input_dim()
            )));
        }
        Ok(PelModel { encoder, scorer })
    }

    /// Scores of every candidate pair, grouped as `(personal, candidate, score)`.
    pub fn score_pairs(&self, ex: &PelExample) -> Result<Vec<(MentionSpan, MentionSpan, f64)>> {
        let mut out = Vec::new();
        for t in ex.personal_turns() {
            let enc = self.encoder.encode(&ex.conversation, t)?;
            for (p, _) in ex.personal.iter().filter(|(p, _)| p.turn_index == t) {
                let Some(pe) = span_endpoints(&enc, p, &self.scorer).transpose()? else { continue };
                for c in ex.candidates(p) {
                    let Some(ce) = span_endpoints(&enc, &c, &self.scorer).transpose()? else { continue };
                    out.push((*p, c, pair_score(&ce, &pe, &self.scorer)?));
                }
            }
        }
        Ok(out)
    }

    /// Selected `(personal, antecedent)` pairs at the model's threshold.
    pub fn predict_pairs(&self, ex: &PelExample) -> Result<Vec<(MentionSpan, MentionSpan)>> {
        Ok(self
            .score_pairs(ex)?
            .into_iter()
            .filter(|(_, _, s)| *s > self.scorer.tau)
            .map(|(p, c, _)| (p, c))
            .collect())
    }
}

fn gold_pairs(ex: &PelExample) -> Vec<(MentionSpan, MentionSpan)> {
    ex.personal.iter().flat_map(|(p, ants)| ants.iter().map(move |a| (*p, *a))).collect()
}

fn same_pair(a: &(MentionSpan, MentionSpan), b: &(MentionSpan, MentionSpan)) -> bool {
    a.0.same_range(&b.0) && a.1.same_range(&b.1)
}

/// Pair-level F1 of the model's selections against the gold pairs.
pub fn pair_f1(model: &PelModel, examples: &[PelExample]) -> Result<crate::eval::MetricReport> {
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for ex in examples {
        let gold = gold_pairs(ex);
        let pred = model.predict_pairs(ex)?;
        tp += pred.iter().filter(|p| gold.iter().any(|g| same_pair(g, p))).count();
        n_pred += pred.len();
        n_gold += gold.len();
    }
    Ok(crate::eval::MetricReport::from_counts(tp, n_pred - tp, n_gold - tp))
}

// ---- loss and gradients ----

#[derive(Debug, Clone)]
pub struct PelGrads {
    pub scorer: ScorerParams,
    pub encoder: Option<EncoderGrads>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Endpoint projection with the pre-activations kept for backprop.
struct Projected {
    span: MentionSpan,
    rows: (usize, usize),
    pre_s: Array1<f64>,
    pre_e: Array1<f64>,
    ends: SpanEndpoints,
}

fn project_traced(out: &EncoderOutput, span: MentionSpan, params: &ScorerParams) -> Option<Projected> {
    let rs = out.row_index(span.turn_index, span.tok_start)?;
    let re = out.row_index(span.turn_index, span.last_token())?;
    let pre_s = params.w_s.dot(&out.vectors.row(rs));
    let pre_e = params.w_e.dot(&out.vectors.row(re));
    let ends = SpanEndpoints { m_s: pre_s.mapv(gelu), m_e: pre_e.mapv(gelu) };
    Some(Projected { span, rows: (rs, re), pre_s, pre_e, ends })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Matrix {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}

/// Mean binary cross-entropy of `sigmoid(score)` over every candidate pair, and its
/// gradient with respect to the scorer (and the trainable encoder, if any).
pub fn loss_and_grad(encoder: &Encoder, scorer: &ScorerParams, examples: &[PelExample]) -> Result<(f64, PelGrads)> {
    let n_pairs: usize = examples.iter().map(PelExample::n_candidate_pairs).sum();
    if n_pairs == 0 {
        return Err(Error::Dataset("no candidate (personal, explicit) pairs".into()));
    }
    let norm = 1.0 / n_pairs as f64;
    let mut g = ScorerParams::zeros(scorer.input_dim(), scorer.hidden());
    let mut enc_grads = encoder.as_lite().map(EncoderGrads::zeros_like);
    let mut loss = 0.0;

    for ex in examples {
        for t in ex.personal_turns() {
            let (out, trace) = encoder.encode_traced(&ex.conversation, t)?;
            if out.vectors.ncols() != scorer.input_dim() {
                return Err(Error::Dimension(format!(
                    "encoder d={} but scorer expects d={}",
                    out.vectors.ncols(),
                    scorer.input_dim()
                )));
            }
            // gradient w.r.t. m_s / m_e of every mention projected in this pass
            let mut projected: Vec<Projected> = Vec::new();
            let mut dm: Vec<(Array1<f64>, Array1<f64>)> = Vec::new();
            let slot = |span: MentionSpan, projected: &mut Vec<Projected>, dm: &mut Vec<(Array1<f64>, Array1<f64>)>| {
                if let Some(i) = projected.iter().position(|p| p.span == span) {
                    return Some(i);
                }
                let p = project_traced(&out, span, scorer)?;
                dm.push((Array1::zeros(scorer.hidden()), Array1::zeros(scorer.hidden())));
                projected.push(p);
                Some(projected.len() - 1)
            };
            for (p, gold) in ex.personal.iter().filter(|(p, _)| p.turn_index == t) {
                let Some(pi) = slot(*p, &mut projected, &mut dm) else { continue };
                for c in ex.candidates(p) {
                    let Some(ci) = slot(c, &mut projected, &mut dm) else { continue };
                    let (bf, af) = (&projected[ci].ends, &projected[pi].ends);
                    let s = pair_score(bf, af, scorer)?;
                    let y = if gold.iter().any(|a| a.same_range(&c)) { 1.0 } else { 0.0 };
                    loss += norm * (softplus(s) - y * s);
                    let ds = norm * (sigmoid(s) - y);
                    g.b_ss.scaled_add(ds, &outer(&bf.m_s, &af.m_s));
                    g.b_se.scaled_add(ds, &outer(&bf.m_s, &af.m_e));
                    g.b_es.scaled_add(ds, &outer(&bf.m_e, &af.m_s));
                    g.b_ee.scaled_add(ds, &outer(&bf.m_e, &af.m_e));
                    let d_bf_s = scorer.b_ss.dot(&af.m_s) + scorer.b_se.dot(&af.m_e);
                    let d_bf_e = scorer.b_es.dot(&af.m_s) + scorer.b_ee.dot(&af.m_e);
                    let d_af_s = scorer.b_ss.t().dot(&bf.m_s) + scorer.b_es.t().dot(&bf.m_e);
                    let d_af_e = scorer.b_se.t().dot(&bf.m_s) + scorer.b_ee.t().dot(&bf.m_e);
                    dm[ci].0.scaled_add(ds, &d_bf_s);
                    dm[ci].1.scaled_add(ds, &d_bf_e);
                    dm[pi].0.scaled_add(ds, &d_af_s);
                    dm[pi].1.scaled_add(ds, &d_af_e);
                }
            }
            let mut d_out = Array2::<f64>::zeros(out.vectors.raw_dim());
            for (p, (dms, dme)) in projected.iter().zip(&dm) {
                let dpre_s = dms * &p.pre_s.mapv(gelu_grad);
                let dpre_e = dme * &p.pre_e.mapv(gelu_grad);
                let (rs, re) = p.rows;
                g.w_s += &outer(&dpre_s, &out.vectors.row(rs).to_owned());
                g.w_e += &outer(&dpre_e, &out.vectors.row(re).to_owned());
                let mut row = d_out.row_mut(rs);
                row += &scorer.w_s.t().dot(&dpre_s);
                let mut row = d_out.row_mut(re);
                row += &scorer.w_e.t().dot(&dpre_e);
            }
            if let Some(eg) = enc_grads.as_mut() {
                eg.add_assign(&encoder.backward(trace.as_ref(), &d_out)?);
            }
        }
    }
    Ok((loss, PelGrads { scorer: g, encoder: enc_grads }))
}

pub fn loss(encoder: &Encoder, scorer: &ScorerParams, examples: &[PelExample]) -> Result<f64> {
    loss_and_grad(encoder, scorer, examples).map(|(l, _)| l)
}

// ---- training ----

#[derive(Debug, Clone)]
pub struct PelTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Used when no precomputed vectors are supplied.
    pub encoder: EncoderConfig,
    pub train_encoder: bool,
}

impl Default for PelTrainConfig {
    fn default() -> Self {
        PelTrainConfig {
            epochs: 200,
            batch_size: 8,
            lr: 5e-3,
            weight_decay: 0.0,
            hidden: 32,
            seed: 13,
            encoder: EncoderConfig::default(),
            train_encoder: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// Mean training loss over the full training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains scorer (and trainable encoder) on `train`, then picks `tau` on `val`
/// (or on `train` when `val` is empty).
pub fn train_pel(
    train: &[PelExample],
    val: &[PelExample],
    config: &PelTrainConfig,
    vectors: Option<&crate::encoder::PrecomputedVectors>,
) -> Result<(PelModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::Dataset("empty PEL training set".into()));
    }
    let n_pairs: usize = train.iter().map(PelExample::n_candidate_pairs).sum();
    if n_pairs == 0 {
        return Err(Error::Dataset("training set has no candidate (personal, explicit) pairs".into()));
    }
    if train.iter().all(|ex| ex.personal.iter().all(|(_, a)| a.is_empty())) {
        return Err(Error::Dataset("training set has no positive pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = match vectors {
        Some(v) => Encoder::Precomputed(v.clone()),
        None => {
            let vocab = Vocabulary::from_conversations(train.iter().map(|e| &e.conversation));
            Encoder::Lite(LiteEncoder::new(config.encoder.clone(), vocab, &mut rng))
        }
    };
    let scorer = ScorerParams::random(encoder.dim(), config.hidden, config.seed.wrapping_add(1));
    let mut model = PelModel { encoder, scorer };
    let mut opt_s = AdamW::new(config.lr, config.weight_decay);
    let mut opt_e = AdamW::new(config.lr, config.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let batch = config.batch_size.max(1);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let batch_ex: Vec<PelExample> = chunk.iter().map(|&i| train[i].clone()).collect();
            if batch_ex.iter().all(|e| e.n_candidate_pairs() == 0) {
                continue;
            }
            let (_, grads) = loss_and_grad(&model.encoder, &model.scorer, &batch_ex)?;
            apply(&mut opt_s, &mut model.scorer, &grads.scorer);
            if config.train_encoder {
                if let (Some(enc), Some(eg)) = (model.encoder.as_lite_mut(), grads.encoder.as_ref()) {
                    apply(&mut opt_e, enc, eg);
                }
            }
        }
        report.epoch_losses.push(loss(&model.encoder, &model.scorer, train)?);
    }
    let tune = if val.is_empty() { train } else { val };
    model.scorer.tau = select_tau(&model, tune)?;
    Ok((model, report))
}

/// Linear-interpolated quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Threshold maximising pair-level F1 over 101 quantiles of the score distribution;
/// ties go to the larger threshold.
pub fn select_tau(model: &PelModel, examples: &[PelExample]) -> Result<f64> {
    let mut scored: Vec<(f64, bool)> = Vec::new();
    let mut n_gold = 0;
    for ex in examples {
        let gold = gold_pairs(ex);
        n_gold += gold.len();
        for (p, c, s) in model.score_pairs(ex)? {
            scored.push((s, gold.iter().any(|g| same_pair(g, &(p, c)))));
        }
    }
    if scored.is_empty() {
        return Ok(model.scorer.tau);
    }
    let mut sorted: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..=100 {
        let tau = quantile(&sorted, k as f64 / 100.0);
        let n_pred = scored.iter().filter(|(s, _)| *s > tau).count();
        let tp = scored.iter().filter(|(s, y)| *s > tau && *y).count();
        let f1 = crate::eval::MetricReport::from_counts(tp, n_pred - tp, n_gold - tp).f1;
        if f1 > best.0 || (f1 == best.0 && tau > best.1) {
            best = (f1, tau);
        }
    }
    Ok(best.1)
}
