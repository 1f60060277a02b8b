#![allow(dead_code)]

use crel_core::encoder::{Encoder, EncoderConfig, LiteEncoder, Vocabulary};
use crel_core::nn::{Matrix, Parameters};
use crel_core::tokenize::tokenize;
use crel_core::{Conversation, Pos, Speaker, Token, Turn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn conv(id: &str, turns: &[(Speaker, &str)]) -> Conversation {
    let turns = turns.iter().map(|(s, t)| Turn::new(*s, *t, tokenize(t)).unwrap()).collect();
    Conversation::new(id, turns).unwrap()
}

/// A turn from `word/TAG` pairs separated by spaces.
pub fn tagged_turn(spec: &str) -> Turn {
    let mut text = String::new();
    let mut tokens = Vec::new();
    for item in spec.split_whitespace() {
        let (word, tag) = item.rsplit_once('/').expect("word/TAG");
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.chars().count();
        text.push_str(word);
        tokens.push(Token::new(word, tag.parse::<Pos>().unwrap(), start, start + word.chars().count()));
    }
    Turn::new(Speaker::User, text, tokens).unwrap()
}

pub fn lite_encoder(convs: &[Conversation], dim: usize, layers: usize, seed: u64) -> Encoder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = EncoderConfig { dim, max_context_tokens: 512, layers };
    Encoder::Lite(LiteEncoder::new(config, Vocabulary::from_conversations(convs), &mut rng))
}

fn tensor_mut<'a, H: Parameters>(enc: &'a mut Encoder, head: &'a mut H, k: usize) -> &'a mut Matrix {
    let n_head = head.tensors().len();
    if k < n_head {
        head.tensors_mut().swap_remove(k).1
    } else {
        enc.as_lite_mut().expect("trainable encoder").tensors_mut().swap_remove(k - n_head).1
    }
}

/// Per-tensor relative error `|g - fd| / max(|g| + |fd|, 1e-6)` (Frobenius norms)
/// between analytic gradients and central finite differences.
pub fn finite_difference_errors<H: Parameters + Clone>(
    enc: &Encoder,
    head: &H,
    analytic: &[(String, Matrix)],
    loss: impl Fn(&Encoder, &H) -> f64,
) -> Vec<(String, f64)> {
    const EPS: f64 = 1e-5;
    let mut enc = enc.clone();
    let mut head = head.clone();
    let mut out = Vec::new();
    for (k, (name, g)) in analytic.iter().enumerate() {
        let mut fd = Matrix::zeros(g.raw_dim());
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let orig = tensor_mut(&mut enc, &mut head, k)[[r, c]];
            tensor_mut(&mut enc, &mut head, k)[[r, c]] = orig + EPS;
            let up = loss(&enc, &head);
            tensor_mut(&mut enc, &mut head, k)[[r, c]] = orig - EPS;
            let down = loss(&enc, &head);
            tensor_mut(&mut enc, &mut head, k)[[r, c]] = orig;
            fd[[r, c]] = (up - down) / (2.0 * EPS);
        }
        let diff = (g - &fd).mapv(|x| x * x).sum().sqrt();
        let scale = g.mapv(|x| x * x).sum().sqrt() + fd.mapv(|x| x * x).sum().sqrt();
        out.push((name.clone(), diff / scale.max(1e-6)));
    }
    out
}
