use crel_core::md::{decode_bio, encode_bio, BioTag};
use crel_core::MentionSpan;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn decode_is_total_on_every_length_eight_sequence() {
    for code in 0..3usize.pow(8) {
        let tags: Vec<BioTag> = (0..8).map(|i| BioTag::ALL[(code / 3usize.pow(i)) % 3]).collect();
        let spans = decode_bio(&tags, 0);
        for s in &spans {
            assert!(s.tok_start < s.tok_end && s.tok_end <= 8, "{tags:?}");
            // every span starts on a B or a repaired I, and covers only B/I tokens
            assert!(tags[s.tok_start..s.tok_end].iter().all(|t| *t != BioTag::O), "{tags:?}");
        }
        for w in spans.windows(2) {
            assert!(w[0].tok_end <= w[1].tok_start, "{tags:?}");
        }
        let covered: usize = spans.iter().map(|s| s.len()).sum();
        assert_eq!(covered, tags.iter().filter(|t| **t != BioTag::O).count(), "{tags:?}");
    }
}

#[test]
fn decode_inverts_encode_on_random_span_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n = rng.gen_range(0..20);
        let mut spans = Vec::new();
        let mut i = 0;
        while i < n {
            if rng.gen_bool(0.4) {
                let end = rng.gen_range(i + 1..=n);
                spans.push(MentionSpan::explicit(0, i, end));
                i = end + rng.gen_range(0..2);
            } else {
                i += 1;
            }
        }
        // adjacent spans are legal: B after I starts a new span
        assert_eq!(decode_bio(&encode_bio(&spans, n).unwrap(), 0), spans);
    }
}
