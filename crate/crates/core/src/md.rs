//! Mention detection as B/I/O token classification over encoder vectors.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::annotation::ConversationAnnotation;
use crate::checkpoint::{self, write_matrix};
use crate::encoder::{Encoder, EncoderConfig, EncoderGrads, LiteEncoder, PrecomputedVectors, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::nn::{apply, uniform, AdamW, Matrix, Parameters};
use crate::types::{Conversation, MentionSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    B,
    I,
    O,
}

impl BioTag {
    /// Row of the tag in the classifier head.
    pub fn index(self) -> usize {
        match self {
            BioTag::B => 0,
            BioTag::I => 1,
            BioTag::O => 2,
        }
    }

    pub const ALL: [BioTag; 3] = [BioTag::B, BioTag::I, BioTag::O];
}

/// Linear head producing B/I/O logits from a token vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MdHead {
    pub w: Matrix,
    pub b: Matrix,
}

impl MdHead {
    pub fn random(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MdHead { w: uniform(3, d, 1.0 / (d as f64).sqrt(), &mut rng), b: Array2::zeros((1, 3)) }
    }

    pub fn zeros(d: usize) -> Self {
        MdHead { w: Array2::zeros((3, d)), b: Array2::zeros((1, 3)) }
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn logits(&self, vectors: &Matrix) -> Matrix {
        vectors.dot(&self.w.t()) + self.b.row(0)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = format!("mdv1 d={}\n", self.dim());
        write_matrix(&mut s, "W_md", &self.w);
        write_matrix(&mut s, "b_md", &self.b);
        s
    }

    pub fn from_parsed(ck: &checkpoint::Checkpoint) -> Result<Self> {
        if ck.magic != "mdv1" {
            return Err(Error::parse("checkpoint header", format!("expected mdv1, got {:?}", ck.magic)));
        }
        let d: usize = ck.field("d")?;
        let head = MdHead { w: ck.matrix("W_md", 3, d)?, b: ck.matrix("b_md", 1, 3)? };
        if !head.all_finite() {
            return Err(Error::Validation("MD head has non-finite weights".into()));
        }
        Ok(head)
    }
}

impl Parameters for MdHead {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("W_md".into(), &self.w), ("b_md".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![("W_md".into(), &mut self.w), ("b_md".into(), &mut self.b)]
    }
}

/// Per-row argmax; ties resolve O, then B, then I.
pub fn predict_bio(vectors: &Matrix, head: &MdHead) -> Vec<BioTag> {
    let logits = head.logits(vectors);
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = BioTag::O;
            for tag in [BioTag::B, BioTag::I] {
                if row[tag.index()] > row[best.index()] {
                    best = tag;
                }
            }
            best
        })
        .collect()
}

/// Spans of a tag sequence. An `I` with no open span starts one, as if it were `B`.
pub fn decode_bio(tags: &[BioTag], turn_index: usize) -> Vec<MentionSpan> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::B => {
                if let Some(s) = open {
                    spans.push(MentionSpan::explicit(turn_index, s, i));
                }
                open = Some(i);
            }
            BioTag::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            BioTag::O => {
                if let Some(s) = open.take() {
                    spans.push(MentionSpan::explicit(turn_index, s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push(MentionSpan::explicit(turn_index, s, tags.len()));
    }
    spans
}

pub fn encode_bio(spans: &[MentionSpan], n_tokens: usize) -> Result<Vec<BioTag>> {
    let mut tags = vec![BioTag::O; n_tokens];
    let mut sorted = spans.to_vec();
    sorted.sort();
    for (k, s) in sorted.iter().enumerate() {
        if s.tok_start >= s.tok_end || s.tok_end > n_tokens {
            return Err(Error::Validation(format!("span {s} out of range for {n_tokens} tokens")));
        }
        if k > 0 && sorted[k - 1].tok_end > s.tok_start {
            return Err(Error::Validation(format!("spans {} and {s} overlap", sorted[k - 1])));
        }
        tags[s.tok_start] = BioTag::B;
        for t in &mut tags[s.tok_start + 1..s.tok_end] {
            *t = BioTag::I;
        }
    }
    Ok(tags)
}

// ---- training ----

/// One labeled user turn: gold explicit spans over `conversation.turns[turn]`.
#[derive(Debug, Clone)]
pub struct MdExample {
    pub conversation: Conversation,
    pub turn: usize,
    pub tags: Vec<BioTag>,
}

impl MdExample {
    /// One example per user turn of the gold annotation.
    pub fn from_gold(conversation: &Conversation, gold: &ConversationAnnotation) -> Result<Vec<Self>> {
        conversation
            .user_turns()
            .map(|(t, turn)| {
                let spans: Vec<MentionSpan> = gold.links().filter(|l| l.span.turn_index == t).map(|l| l.span).collect();
                for s in &spans {
                    conversation.check_span(s)?;
                }
                Ok(MdExample { conversation: conversation.clone(), turn: t, tags: encode_bio(&spans, turn.tokens.len())? })
            })
            .collect()
    }

    pub fn gold_spans(&self) -> Vec<MentionSpan> {
        decode_bio(&self.tags, self.turn)
    }
}

#[derive(Debug, Clone)]
pub struct MdModel {
    pub encoder: Encoder,
    pub head: MdHead,
}

impl MdModel {
    pub fn predict_turn(&self, conv: &Conversation, turn: usize) -> Result<Vec<BioTag>> {
        let out = self.encoder.encode(conv, turn)?;
        let rows: Vec<usize> = (0..conv.turns[turn].tokens.len())
            .map(|k| out.row_index(turn, k).expect("current turn is always encoded"))
            .collect();
        Ok(predict_bio(&out.vectors.select(Axis(0), &rows), &self.head))
    }

    pub fn detect(&self, conv: &Conversation, turn: usize) -> Result<Vec<MentionSpan>> {
        Ok(decode_bio(&self.predict_turn(conv, turn)?, turn))
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(format!("{}end\n{}", self.head.to_checkpoint(), self.encoder.to_checkpoint()?))
    }

    pub fn from_checkpoint(text: &str, origin: &str, vectors: Option<&PrecomputedVectors>) -> Result<Self> {
        let ck = checkpoint::parse(text, origin)?;
        let head = MdHead::from_parsed(&ck)?;
        let encoder = Encoder::from_checkpoint(&ck.rest.join("\n"), origin, vectors)?;
        if encoder.dim() != head.dim() {
            return Err(Error::Dimension(format!("encoder d={} but MD head expects d={}", encoder.dim(), head.dim())));
        }
        Ok(MdModel { encoder, head })
    }
}

#[derive(Debug, Clone)]
pub struct MdGrads {
    pub head: MdHead,
    pub encoder: Option<EncoderGrads>,
}

fn log_softmax(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.mapv(|x| x - lse)
}

/// Mean token-level cross-entropy over every labeled token, with gradients.
pub fn loss_and_grad(encoder: &Encoder, head: &MdHead, examples: &[MdExample]) -> Result<(f64, MdGrads)> {
    let n_tokens: usize = examples.iter().map(|e| e.tags.len()).sum();
    if n_tokens == 0 {
        return Err(Error::Dataset("no labeled tokens".into()));
    }
    let norm = 1.0 / n_tokens as f64;
    let mut g = MdHead::zeros(head.dim());
    let mut enc_grads = encoder.as_lite().map(EncoderGrads::zeros_like);
    let mut loss = 0.0;
    for ex in examples {
        let (out, trace) = encoder.encode_traced(&ex.conversation, ex.turn)?;
        if out.vectors.ncols() != head.dim() {
            return Err(Error::Dimension(format!("encoder d={} but MD head expects d={}", out.vectors.ncols(), head.dim())));
        }
        let mut d_out = Array2::<f64>::zeros(out.vectors.raw_dim());
        for (k, tag) in ex.tags.iter().enumerate() {
            let r = out.row_index(ex.turn, k).expect("current turn is always encoded");
            let v = out.vectors.row(r);
            let logits = head.w.dot(&v) + head.b.row(0);
            let logp = log_softmax(logits.view());
            loss -= norm * logp[tag.index()];
            let mut dlogits = logp.mapv(f64::exp);
            dlogits[tag.index()] -= 1.0;
            dlogits *= norm;
            g.w += &dlogits.view().insert_axis(Axis(1)).dot(&v.insert_axis(Axis(0)));
            let mut gb = g.b.row_mut(0);
            gb += &dlogits;
            let mut drow = d_out.row_mut(r);
            drow += &head.w.t().dot(&dlogits);
        }
        if let Some(eg) = enc_grads.as_mut() {
            eg.add_assign(&encoder.backward(trace.as_ref(), &d_out)?);
        }
    }
    Ok((loss, MdGrads { head: g, encoder: enc_grads }))
}

pub fn loss(encoder: &Encoder, head: &MdHead, examples: &[MdExample]) -> Result<f64> {
    loss_and_grad(encoder, head, examples).map(|(l, _)| l)
}

#[derive(Debug, Clone)]
pub struct MdTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub train_encoder: bool,
}

impl Default for MdTrainConfig {
    fn default() -> Self {
        MdTrainConfig {
            epochs: 100,
            batch_size: 16,
            lr: 5e-3,
            weight_decay: 0.0,
            seed: 11,
            encoder: EncoderConfig::default(),
            train_encoder: true,
        }
    }
}

/// Builds a fresh model for `train` (vocabulary from its conversations).
pub fn init_model(train: &[MdExample], config: &MdTrainConfig, vectors: Option<&PrecomputedVectors>) -> MdModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let encoder = match vectors {
        Some(v) => Encoder::Precomputed(v.clone()),
        None => {
            let vocab = Vocabulary::from_conversations(train.iter().map(|e| &e.conversation));
            Encoder::Lite(LiteEncoder::new(config.encoder.clone(), vocab, &mut rng))
        }
    };
    let head = MdHead::random(encoder.dim(), config.seed.wrapping_add(1));
    MdModel { encoder, head }
}

/// Continues training `model` for `config.epochs`; returns per-epoch training loss.
pub fn train_md_from(model: &mut MdModel, train: &[MdExample], config: &MdTrainConfig) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::Dataset("empty MD training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut opt_h = AdamW::new(config.lr, config.weight_decay);
    let mut opt_e = AdamW::new(config.lr, config.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<MdExample> = chunk.iter().map(|&i| train[i].clone()).collect();
            if batch.iter().all(|e| e.tags.is_empty()) {
                continue;
            }
            let (_, grads) = loss_and_grad(&model.encoder, &model.head, &batch)?;
            apply(&mut opt_h, &mut model.head, &grads.head);
            if config.train_encoder {
                if let (Some(enc), Some(eg)) = (model.encoder.as_lite_mut(), grads.encoder.as_ref()) {
                    apply(&mut opt_e, enc, eg);
                }
            }
        }
        losses.push(loss(&model.encoder, &model.head, train)?);
    }
    Ok(losses)
}

pub fn train_md(
    train: &[MdExample],
    config: &MdTrainConfig,
    vectors: Option<&PrecomputedVectors>,
) -> Result<(MdModel, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::Dataset("empty MD training set".into()));
    }
    let mut model = init_model(train, config, vectors);
    let losses = train_md_from(&mut model, train, config)?;
    Ok((model, losses))
}

/// Span-level (strong) F1 of the model's detections on labeled turns.
pub fn span_f1(model: &MdModel, examples: &[MdExample]) -> Result<MetricReport> {
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    for ex in examples {
        let gold = ex.gold_spans();
        let pred = model.detect(&ex.conversation, ex.turn)?;
        tp += pred.iter().filter(|p| gold.contains(p)).count();
        n_pred += pred.len();
        n_gold += gold.len();
    }
    Ok(MetricReport::from_counts(tp, n_pred - tp, n_gold - tp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use BioTag::*;

    fn ranges(spans: &[MentionSpan]) -> Vec<(usize, usize)> {
        spans.iter().map(|s| (s.tok_start, s.tok_end)).collect()
    }

    #[test]
    fn decode_examples() {
        assert!(decode_bio(&[O, O, O], 0).is_empty());
        assert_eq!(ranges(&decode_bio(&[B, I, O, B], 0)), vec![(0, 2), (3, 4)]);
        assert_eq!(ranges(&decode_bio(&[O, I, I], 0)), vec![(1, 3)]);
        assert_eq!(ranges(&decode_bio(&[B, B, I], 0)), vec![(0, 1), (1, 3)]);
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode_bio(&[], 3).unwrap(), vec![O, O, O]);
        assert_eq!(encode_bio(&[MentionSpan::explicit(0, 0, 2)], 3).unwrap(), vec![B, I, O]);
        let overlapping = [MentionSpan::explicit(0, 0, 2), MentionSpan::explicit(0, 1, 3)];
        assert!(encode_bio(&overlapping, 3).is_err());
        assert!(encode_bio(&[MentionSpan::explicit(0, 2, 4)], 3).is_err());
    }

    #[test]
    fn zero_head_with_o_bias_predicts_all_o() {
        let mut head = MdHead::zeros(4);
        head.b[[0, BioTag::O.index()]] = 1.0;
        let v = Array2::from_elem((5, 4), 0.7);
        assert_eq!(predict_bio(&v, &head), vec![O; 5]);
        // exact ties resolve to O
        assert_eq!(predict_bio(&v, &MdHead::zeros(4)), vec![O; 5]);
    }

    #[test]
    fn tie_between_b_and_i_prefers_b() {
        let mut head = MdHead::zeros(1);
        head.b[[0, 0]] = 1.0;
        head.b[[0, 1]] = 1.0;
        assert_eq!(predict_bio(&Array2::zeros((1, 1)), &head), vec![B]);
    }

    #[test]
    fn head_checkpoint_round_trip() {
        let head = MdHead::random(5, 3);
        let back = MdHead::from_parsed(&checkpoint::parse(&head.to_checkpoint(), "mem").unwrap()).unwrap();
        assert_eq!(back, head);
    }

    proptest::proptest! {
        #[test]
        fn decode_is_total_and_valid(tags in proptest::collection::vec(0usize..3, 0..12)) {
            let tags: Vec<BioTag> = tags.into_iter().map(|i| BioTag::ALL[i]).collect();
            let spans = decode_bio(&tags, 0);
            for w in spans.windows(2) {
                proptest::prop_assert!(w[0].tok_end <= w[1].tok_start);
            }
            for s in &spans {
                proptest::prop_assert!(s.tok_start < s.tok_end && s.tok_end <= tags.len());
            }
            // re-encoding a decoded sequence is a fixpoint of decoding
            let again = encode_bio(&spans, tags.len()).unwrap();
            proptest::prop_assert_eq!(decode_bio(&again, 0), spans);
        }
    }
}
