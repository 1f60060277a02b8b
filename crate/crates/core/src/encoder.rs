//! Per-token contextual vectors over a conversation's history and current turn.
//!
//! Two backends:
//! * a small trainable encoder: embedding lookup + sinusoidal position signal + a stack
//!   of bidirectional mixing layers `h' = h + tanh(U h + C mean(H) + b)`;
//! * precomputed vectors loaded from a text file (e.g. exported transformer states).
//!
//! The context is turns `0..=upto_turn`; when it exceeds `max_context_tokens`, whole
//! turns are dropped oldest first. The current turn is never dropped.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::checkpoint::{self, write_matrix, write_vocab};
use crate::error::{Error, Result};
use crate::io::read_file;
use crate::nn::{uniform, Matrix, Parameters};
use crate::types::Conversation;

pub const UNK: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    TrainableLite,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub max_context_tokens: usize,
    /// Number of context-mixing layers (trainable mode only).
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { dim: 64, max_context_tokens: 512, layers: 1 }
    }
}

/// Lowercased token vocabulary; index 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut sorted: Vec<String> = words.into_iter().map(|w| w.to_lowercase()).collect();
        sorted.sort();
        sorted.dedup();
        sorted.retain(|w| w != UNK);
        let mut all = vec![UNK.to_string()];
        all.extend(sorted);
        Self::from_list(all)
    }

    fn from_list(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words, index }
    }

    pub fn from_conversations<'a>(convs: impl IntoIterator<Item = &'a Conversation>) -> Self {
        Self::from_words(convs.into_iter().flat_map(|c| c.turns.iter().flat_map(|t| t.tokens.iter().map(|k| k.text.clone()))))
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixLayer {
    pub u: Matrix,
    pub c: Matrix,
    pub b: Matrix,
}

impl MixLayer {
    pub fn zeros(d: usize) -> Self {
        MixLayer { u: Array2::zeros((d, d)), c: Array2::zeros((d, d)), b: Array2::zeros((1, d)) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiteEncoder {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub embeddings: Matrix,
    pub layers: Vec<MixLayer>,
}

impl LiteEncoder {
    pub fn new(config: EncoderConfig, vocab: Vocabulary, rng: &mut impl Rng) -> Self {
        let d = config.dim;
        let bound = 1.0 / (d as f64).sqrt();
        let embeddings = uniform(vocab.len(), d, 1.0, rng);
        let layers = (0..config.layers)
            .map(|_| MixLayer { u: uniform(d, d, bound, rng), c: uniform(d, d, bound, rng), b: Array2::zeros((1, d)) })
            .collect();
        LiteEncoder { config, vocab, embeddings, layers }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut s = format!("encv1 mode=lite d={} layers={} max_ctx={}\n", c.dim, c.layers, c.max_context_tokens);
        write_vocab(&mut s, self.vocab.words());
        write_matrix(&mut s, "E", &self.embeddings);
        for (i, l) in self.layers.iter().enumerate() {
            write_matrix(&mut s, &format!("U{i}"), &l.u);
            write_matrix(&mut s, &format!("C{i}"), &l.c);
            write_matrix(&mut s, &format!("b{i}"), &l.b);
        }
        s
    }

    fn from_parsed(ck: &checkpoint::Checkpoint) -> Result<Self> {
        let config = EncoderConfig {
            dim: ck.field("d")?,
            layers: ck.field("layers")?,
            max_context_tokens: ck.field("max_ctx")?,
        };
        let words = ck.vocab.clone().ok_or_else(|| Error::parse("encv1 checkpoint", "missing vocab block"))?;
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::parse("encv1 checkpoint", "vocab must start with <unk>"));
        }
        let vocab = Vocabulary::from_list(words);
        let d = config.dim;
        let embeddings = ck.matrix("E", vocab.len(), d)?;
        let layers = (0..config.layers)
            .map(|i| {
                Ok(MixLayer {
                    u: ck.matrix(&format!("U{i}"), d, d)?,
                    c: ck.matrix(&format!("C{i}"), d, d)?,
                    b: ck.matrix(&format!("b{i}"), 1, d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LiteEncoder { config, vocab, embeddings, layers })
    }
}

/// Gradient (or any same-shaped tensor set) for a [`LiteEncoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embeddings: Matrix,
    pub layers: Vec<MixLayer>,
}

impl EncoderGrads {
    pub fn zeros_like(enc: &LiteEncoder) -> Self {
        EncoderGrads {
            embeddings: Array2::zeros(enc.embeddings.raw_dim()),
            layers: (0..enc.layers.len()).map(|_| MixLayer::zeros(enc.dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        self.embeddings += &other.embeddings;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.u += &b.u;
            a.c += &b.c;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.embeddings *= k;
        for l in &mut self.layers {
            l.u *= k;
            l.c *= k;
            l.b *= k;
        }
    }
}

macro_rules! impl_encoder_params {
    ($t:ty) => {
        impl Parameters for $t {
            fn tensors(&self) -> Vec<(String, &Matrix)> {
                let mut v = vec![("E".to_string(), &self.embeddings)];
                for (i, l) in self.layers.iter().enumerate() {
                    v.push((format!("U{i}"), &l.u));
                    v.push((format!("C{i}"), &l.c));
                    v.push((format!("b{i}"), &l.b));
                }
                v
            }

            fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
                let mut v = vec![("E".to_string(), &mut self.embeddings)];
                for (i, l) in self.layers.iter_mut().enumerate() {
                    v.push((format!("U{i}"), &mut l.u));
                    v.push((format!("C{i}"), &mut l.c));
                    v.push((format!("b{i}"), &mut l.b));
                }
                v
            }
        }
    };
}

impl_encoder_params!(LiteEncoder);
impl_encoder_params!(EncoderGrads);

/// Vectors keyed by `(conversation id, turn, token)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedVectors {
    pub dim: usize,
    pub max_context_tokens: usize,
    rows: BTreeMap<(String, usize, usize), Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `dim=<d>` header, then `conv_id \t turn \t token \t f1 f2 ... fd` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(format!("{origin} line 1"), "empty vectors file"))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .filter(|&d| d >= 1)
            .ok_or_else(|| Error::parse(format!("{origin} line 1"), format!("expected dim=<d>, got {header:?}")))?;
        let mut rows = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let loc = format!("{origin} line {}", i + 1);
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(&loc, format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let turn: usize = fields[1].parse().map_err(|_| Error::parse(&loc, "turn: not an integer"))?;
            let tok: usize = fields[2].parse().map_err(|_| Error::parse(&loc, "token: not an integer"))?;
            let vec = fields[3]
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| Error::parse(&loc, format!("bad float {x:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vec.len() != dim {
                return Err(Error::Dimension(format!("{loc}: vector has {} values, header says {dim}", vec.len())));
            }
            if vec.iter().any(|x| !x.is_finite()) {
                return Err(Error::parse(&loc, "non-finite value"));
            }
            rows.insert((fields[0].to_string(), turn, tok), vec);
        }
        Ok(PrecomputedVectors { dim, max_context_tokens: usize::MAX, rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Lite(LiteEncoder),
    Precomputed(PrecomputedVectors),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub vectors: Matrix,
    /// `(turn_index, token_index)` for each row.
    pub positions: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
}

impl EncoderOutput {
    fn new(vectors: Matrix, positions: Vec<(usize, usize)>) -> Self {
        let index = positions.iter().enumerate().map(|(r, &p)| (p, r)).collect();
        EncoderOutput { vectors, positions, index }
    }

    pub fn row_index(&self, turn: usize, token: usize) -> Option<usize> {
        self.index.get(&(turn, token)).copied()
    }

    pub fn row(&self, turn: usize, token: usize) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.row_index(turn, token).map(|r| self.vectors.row(r))
    }

    pub fn n_tokens(&self) -> usize {
        self.positions.len()
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    ids: Vec<usize>,
    inputs: Vec<Matrix>,
    activations: Vec<Matrix>,
    means: Vec<Array1<f64>>,
}

/// Turn indices kept in the context window, oldest first.
pub fn context_turns(conv: &Conversation, upto_turn: usize, max_tokens: usize) -> Result<Vec<usize>> {
    if upto_turn >= conv.turns.len() {
        return Err(Error::Validation(format!(
            "upto_turn {upto_turn} out of range for conversation {:?} with {} turns",
            conv.id,
            conv.turns.len()
        )));
    }
    let current = conv.turns[upto_turn].tokens.len();
    if current > max_tokens {
        return Err(Error::Validation(format!(
            "turn {upto_turn} of {:?} has {current} tokens, more than max_context_tokens={max_tokens}",
            conv.id
        )));
    }
    let mut kept = vec![upto_turn];
    let mut total = current;
    for t in (0..upto_turn).rev() {
        let n = conv.turns[t].tokens.len();
        if total + n > max_tokens {
            break;
        }
        total += n;
        kept.push(t);
    }
    kept.reverse();
    Ok(kept)
}

fn context_positions(conv: &Conversation, turns: &[usize]) -> Vec<(usize, usize)> {
    turns.iter().flat_map(|&t| (0..conv.turns[t].tokens.len()).map(move |k| (t, k))).collect()
}

pub fn position_signal(n: usize, d: usize) -> Matrix {
    Array2::from_shape_fn((n, d), |(p, k)| {
        let pair = (k / 2 * 2) as f64;
        let angle = p as f64 / 10000f64.powf(pair / d as f64);
        if k % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

impl Encoder {
    pub fn dim(&self) -> usize {
        match self {
            Encoder::Lite(e) => e.dim(),
            Encoder::Precomputed(p) => p.dim,
        }
    }

    pub fn mode(&self) -> EncoderMode {
        match self {
            Encoder::Lite(_) => EncoderMode::TrainableLite,
            Encoder::Precomputed(_) => EncoderMode::Precomputed,
        }
    }

    pub fn max_context_tokens(&self) -> usize {
        match self {
            Encoder::Lite(e) => e.config.max_context_tokens,
            Encoder::Precomputed(p) => p.max_context_tokens,
        }
    }

    pub fn encode(&self, conv: &Conversation, upto_turn: usize) -> Result<EncoderOutput> {
        self.encode_traced(conv, upto_turn).map(|(out, _)| out)
    }

    pub fn encode_traced(&self, conv: &Conversation, upto_turn: usize) -> Result<(EncoderOutput, Option<EncoderTrace>)> {
        let turns = context_turns(conv, upto_turn, self.max_context_tokens())?;
        let positions = context_positions(conv, &turns);
        match self {
            Encoder::Precomputed(p) => {
                let mut m = Array2::zeros((positions.len(), p.dim));
                for (r, &(t, k)) in positions.iter().enumerate() {
                    let key = (conv.id.clone(), t, k);
                    let v = p
                        .rows
                        .get(&key)
                        .ok_or_else(|| Error::MissingKey(format!("({:?}, turn {t}, token {k})", conv.id)))?;
                    m.row_mut(r).assign(&ndarray::ArrayView1::from(v.as_slice()));
                }
                Ok((EncoderOutput::new(m, positions), None))
            }
            Encoder::Lite(enc) => {
                let ids: Vec<usize> = positions.iter().map(|&(t, k)| enc.vocab.id(&conv.turns[t].tokens[k].text)).collect();
                let (h, trace) = lite_forward(enc, ids);
                Ok((EncoderOutput::new(h, positions), Some(trace)))
            }
        }
    }

    /// Gradient of the loss with respect to the encoder parameters, given the loss
    /// gradient with respect to every output row.
    pub fn backward(&self, trace: Option<&EncoderTrace>, grad_out: &Matrix) -> Result<EncoderGrads> {
        match (self, trace) {
            (Encoder::Precomputed(_), _) => {
                Err(Error::Unsupported("backward pass through precomputed encoder vectors".into()))
            }
            (Encoder::Lite(_), None) => Err(Error::Unsupported("backward pass without a forward trace".into())),
            (Encoder::Lite(enc), Some(tr)) => lite_backward(enc, tr, grad_out),
        }
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        match self {
            Encoder::Lite(e) => Ok(e.to_checkpoint()),
            Encoder::Precomputed(_) => Ok("encv1 mode=precomputed\n".to_string()),
        }
    }

    /// Parses an `encv1` section. A precomputed section needs `vectors` supplied by the caller.
    pub fn from_checkpoint(text: &str, origin: &str, vectors: Option<&PrecomputedVectors>) -> Result<Self> {
        let ck = checkpoint::parse(text, origin)?;
        if ck.magic != "encv1" {
            return Err(Error::parse(format!("{origin} line 1"), format!("expected encv1 header, got {:?}", ck.magic)));
        }
        match ck.fields.get("mode").map(String::as_str) {
            Some("lite") => Ok(Encoder::Lite(LiteEncoder::from_parsed(&ck)?)),
            Some("precomputed") => vectors
                .cloned()
                .map(Encoder::Precomputed)
                .ok_or_else(|| Error::Validation("checkpoint expects precomputed vectors; none supplied".into())),
            other => Err(Error::parse(format!("{origin} line 1"), format!("unknown encoder mode {other:?}"))),
        }
    }

    pub fn as_lite(&self) -> Option<&LiteEncoder> {
        match self {
            Encoder::Lite(e) => Some(e),
            Encoder::Precomputed(_) => None,
        }
    }

    pub fn as_lite_mut(&mut self) -> Option<&mut LiteEncoder> {
        match self {
            Encoder::Lite(e) => Some(e),
            Encoder::Precomputed(_) => None,
        }
    }
}

fn lite_forward(enc: &LiteEncoder, ids: Vec<usize>) -> (Matrix, EncoderTrace) {
    let n = ids.len();
    let d = enc.dim();
    let mut h = position_signal(n, d);
    for (r, &id) in ids.iter().enumerate() {
        let mut row = h.row_mut(r);
        row += &enc.embeddings.row(id);
    }
    let mut trace = EncoderTrace { ids, inputs: Vec::new(), activations: Vec::new(), means: Vec::new() };
    for layer in &enc.layers {
        let mean = if n == 0 { Array1::zeros(d) } else { h.mean_axis(Axis(0)).expect("non-empty") };
        // Z = H U^T + (C mean)^T + b
        let ctx = layer.c.dot(&mean);
        let mut z = h.dot(&layer.u.t());
        z += &ctx;
        z += &layer.b.row(0);
        let a = z.mapv(f64::tanh);
        trace.inputs.push(h.clone());
        trace.means.push(mean);
        h = &h + &a;
        trace.activations.push(a);
    }
    (h, trace)
}

fn lite_backward(enc: &LiteEncoder, trace: &EncoderTrace, grad_out: &Matrix) -> Result<EncoderGrads> {
    let n = trace.ids.len();
    if grad_out.dim() != (n, enc.dim()) {
        return Err(Error::Dimension(format!(
            "upstream gradient is {:?}, encoder output is ({n}, {})",
            grad_out.dim(),
            enc.dim()
        )));
    }
    let mut grads = EncoderGrads::zeros_like(enc);
    let mut g = grad_out.clone();
    for (l, layer) in enc.layers.iter().enumerate().rev() {
        let a = &trace.activations[l];
        let h = &trace.inputs[l];
        let dz = &g * &a.mapv(|x| 1.0 - x * x);
        let s = dz.sum_axis(Axis(0));
        let gl = &mut grads.layers[l];
        gl.u = dz.t().dot(h);
        let mean = &trace.means[l];
        gl.c = s.view().insert_axis(Axis(1)).dot(&mean.view().insert_axis(Axis(0)));
        gl.b = s.clone().insert_axis(Axis(0));
        let mut dh = g + dz.dot(&layer.u);
        if n > 0 {
            let ctx_grad = layer.c.t().dot(&s) / n as f64;
            dh += &ctx_grad;
        }
        g = dh;
    }
    for (r, &id) in trace.ids.iter().enumerate() {
        let mut row = grads.embeddings.row_mut(id);
        row += &g.row(r);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::tokenize;
    use crate::types::{Speaker, Turn};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv(turns: &[(Speaker, &str)]) -> Conversation {
        let turns = turns.iter().map(|(s, t)| Turn::new(*s, *t, tokenize(t)).unwrap()).collect();
        Conversation::new("c1", turns).unwrap()
    }

    fn lite(d: usize, layers: usize, max_ctx: usize, c: &Conversation) -> LiteEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = EncoderConfig { dim: d, max_context_tokens: max_ctx, layers };
        LiteEncoder::new(cfg, Vocabulary::from_conversations([c]), &mut rng)
    }

    #[test]
    fn identity_stack_is_embedding_plus_position() {
        let c = conv(&[(Speaker::User, "cars")]);
        for layers in [0, 1] {
            let mut enc = lite(6, layers, 16, &c);
            for l in &mut enc.layers {
                *l = MixLayer::zeros(6);
            }
            let id = enc.vocab.id("cars");
            let expected = &enc.embeddings.row(id) + &position_signal(1, 6).row(0);
            let out = Encoder::Lite(enc).encode(&c, 0).unwrap();
            assert_eq!(out.vectors.row(0), expected);
        }
    }

    #[test]
    fn shape_and_finiteness() {
        let c = conv(&[(Speaker::User, "I love my cars ."), (Speaker::System, "Which ones ?"), (Speaker::User, "Life")]);
        let out = Encoder::Lite(lite(8, 2, 64, &c)).encode(&c, 2).unwrap();
        assert_eq!(out.vectors.dim(), (9, 8));
        assert!(out.vectors.iter().all(|x| x.is_finite()));
        assert_eq!(out.row_index(2, 0), Some(8));
    }

    #[test]
    fn truncation_drops_oldest_whole_turns() {
        let c = conv(&[(Speaker::User, "a b c"), (Speaker::System, "d e"), (Speaker::User, "f g h")]);
        assert_eq!(context_turns(&c, 2, 5).unwrap(), vec![1, 2]);
        assert_eq!(context_turns(&c, 2, 4).unwrap(), vec![2]);
        assert_eq!(context_turns(&c, 2, 100).unwrap(), vec![0, 1, 2]);
        assert!(context_turns(&c, 2, 2).is_err());
        let out = Encoder::Lite(lite(4, 1, 5, &c)).encode(&c, 2).unwrap();
        assert_eq!(out.positions.first(), Some(&(1, 0)));
        assert_eq!(out.row_index(0, 0), None);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let train = conv(&[(Speaker::User, "cars")]);
        let enc = lite(4, 1, 16, &train);
        assert_eq!(enc.vocab.id("zebra"), 0);
        assert_eq!(enc.vocab.id("CARS"), enc.vocab.id("cars"));
        let other = conv(&[(Speaker::User, "zebra")]);
        assert!(Encoder::Lite(enc).encode(&other, 0).is_ok());
    }

    #[test]
    fn precomputed_rows_are_bit_exact() {
        let text = "dim=2\nc1\t0\t0\t0.1 -0.2\nc1\t0\t1\t1e-3 3.5\nc1\t0\t2\t0.30000000000000004 -7\n";
        let vecs = PrecomputedVectors::parse(text, "mem").unwrap();
        let c = conv(&[(Speaker::User, "my cars .")]);
        let out = Encoder::Precomputed(vecs).encode(&c, 0).unwrap();
        let expected = [0.1, -0.2, 1e-3, 3.5, 0.30000000000000004, -7.0];
        assert!(out.vectors.iter().zip(expected).all(|(a, b): (&f64, f64)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn precomputed_missing_key_names_it() {
        let vecs = PrecomputedVectors::parse("dim=1\nc1\t0\t0\t1\n", "mem").unwrap();
        let c = conv(&[(Speaker::User, "my cars")]);
        let err = Encoder::Precomputed(vecs).encode(&c, 0).unwrap_err();
        assert!(matches!(err, Error::MissingKey(ref k) if k.contains("token 1")), "{err}");
    }

    #[test]
    fn precomputed_backward_unsupported() {
        let vecs = PrecomputedVectors::parse("dim=1\n", "mem").unwrap();
        let enc = Encoder::Precomputed(vecs);
        assert!(matches!(enc.backward(None, &Array2::zeros((0, 1))), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero() {
        let c = conv(&[(Speaker::User, "I love my cars")]);
        let enc = Encoder::Lite(lite(5, 2, 16, &c));
        let (out, tr) = enc.encode_traced(&c, 0).unwrap();
        let g = enc.backward(tr.as_ref(), &Array2::zeros(out.vectors.raw_dim())).unwrap();
        assert!(g.tensors().iter().all(|(_, m)| m.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn unk_only_input_touches_only_unk_row() {
        let train = conv(&[(Speaker::User, "cars dogs")]);
        let enc = Encoder::Lite(lite(4, 1, 16, &train));
        let c = conv(&[(Speaker::User, "zebra okapi tapir")]);
        let (out, tr) = enc.encode_traced(&c, 0).unwrap();
        let g = enc.backward(tr.as_ref(), &Array2::ones(out.vectors.raw_dim())).unwrap();
        for (r, row) in g.embeddings.rows().into_iter().enumerate() {
            let touched = row.iter().any(|&x| x != 0.0);
            assert_eq!(touched, r == 0, "row {r}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = conv(&[(Speaker::User, "I love my cars")]);
        let enc = Encoder::Lite(lite(3, 2, 32, &c));
        let text = enc.to_checkpoint().unwrap();
        let back = Encoder::from_checkpoint(&text, "mem", None).unwrap();
        assert_eq!(back, enc);
    }
}
