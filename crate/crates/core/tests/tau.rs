mod common;

use crel_core::pel::{PelExample, PelModel, ScorerParams};
use crel_core::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn higher_threshold_selects_a_subset() {
    let data = synth::fixture(4, 2);
    let examples: Vec<PelExample> = data.iter().map(|(c, a)| PelExample::from_gold(c.clone(), a, false).unwrap()).collect();
    let convs: Vec<_> = data.iter().map(|(c, _)| c.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for trial in 0..200 {
        let d = rng.gen_range(2..=12);
        let h = rng.gen_range(1..=8);
        let encoder = common::lite_encoder(&convs, d, rng.gen_range(0..=2), trial);
        let mut model = PelModel { encoder, scorer: ScorerParams::random(d, h, trial + 1) };
        let t1: f64 = rng.gen_range(-1.0..1.0);
        let t2 = t1 + rng.gen_range(0.0..1.0);
        for ex in &examples {
            model.scorer.tau = t1;
            let low = model.predict_pairs(ex).unwrap();
            model.scorer.tau = t2;
            let high = model.predict_pairs(ex).unwrap();
            assert!(high.iter().all(|p| low.contains(p)), "trial {trial}");
        }
    }
}
