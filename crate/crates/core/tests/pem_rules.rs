mod common;

use common::tagged_turn;
use crel_core::pem::detect_personal_mentions;

fn parse_expected(s: &str) -> Vec<(usize, usize)> {
    if s.trim() == "-" {
        return Vec::new();
    }
    s.split_whitespace()
        .map(|r| {
            let (a, b) = r.split_once('-').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn grammar_fixture_suite() {
    let cases = include_str!("fixtures/pem_cases.txt");
    let mut n = 0;
    for line in cases.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let (input, expected) = line.split_once("=>").unwrap();
        let turn = tagged_turn(input);
        let got: Vec<(usize, usize)> =
            detect_personal_mentions(&turn, 0).iter().map(|s| (s.tok_start, s.tok_end)).collect();
        assert_eq!(got, parse_expected(expected), "case: {input}");
        n += 1;
    }
    assert!(n >= 30, "only {n} cases");
}

#[test]
fn builtin_tagger_examples() {
    let c = common::conv("c", &[(crel_core::Speaker::User, "our two dogs of war barked")]);
    let spans = detect_personal_mentions(&c.turns[0], 0);
    assert_eq!(spans.len(), 1);
    assert_eq!(c.span_text(&spans[0]), "our two dogs of war");
    let c = common::conv("c", &[(crel_core::Speaker::User, "Yes, my cars are great.")]);
    let spans = detect_personal_mentions(&c.turns[0], 0);
    assert_eq!(spans.iter().map(|s| c.span_text(s)).collect::<Vec<_>>(), vec!["my cars"]);
}
