use crel_core::eval::{load_dataset, DatasetStats};
use crel_core::io::{annotations_to_string, conversations_to_string, parse_annotations, parse_conversations};
use crel_core::tokenize::{tokenize, LexiconTagger};
use crel_core::{synth, Pos, Split};

#[test]
fn tokenizer_examples() {
    let toks = tokenize("my cars.");
    let got: Vec<(&str, usize, usize)> = toks.iter().map(|t| (t.text.as_str(), t.char_start, t.char_end)).collect();
    assert_eq!(got, vec![("my", 0, 2), ("cars", 3, 7), (".", 7, 8)]);
    assert_eq!(toks[2].pos, Pos::Punct);
    let tags: Vec<Pos> = tokenize("I love Honda").iter().map(|t| t.pos).collect();
    assert_eq!(tags, vec![Pos::Pron, Pos::Verb, Pos::Propn]);
}

#[test]
fn canonical_files_round_trip_byte_identically() {
    let data = synth::fixture(5, 3);
    let convs: Vec<_> = data.iter().map(|(c, _)| c.clone()).collect();
    let text = conversations_to_string(&convs);
    let back = parse_conversations(&text, "mem", &LexiconTagger::default()).unwrap();
    assert_eq!(back, convs);
    assert_eq!(conversations_to_string(&back), text);

    let anns: Vec<_> = data.iter().map(|(_, a)| a.clone()).collect();
    let text = annotations_to_string(&anns);
    assert_eq!(annotations_to_string(&parse_annotations(&text, "mem").unwrap()), text);
}

#[test]
fn malformed_files_name_line_and_field() {
    let bad = "[\n  {\"id\": \"c\", \"turns\": [{\"speaker\": \"USER\", \"text\": 3}]}\n]";
    let err = parse_conversations(bad, "conv.json", &LexiconTagger::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("conv.json") && msg.contains("line 2"), "{msg}");
    let unknown = r#"{"id": "c", "turns": [{"speaker": "ROBOT", "text": "hi"}]}"#;
    assert!(matches!(
        parse_conversations(unknown, "x", &LexiconTagger::default()),
        Err(crel_core::Error::Validation(_))
    ));
}

#[test]
fn dataset_statistics_count_per_split() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    assert_eq!(load_dataset(&empty).unwrap().1, DatasetStats::default());

    let path = dir.path().join("gold.json");
    std::fs::write(
        &path,
        r#"[{"id": "a", "split": "val", "turns": [
            {"turn": 0, "links": [{"start_tok": 0, "end_tok": 1, "entity": "X"}, {"start_tok": 2, "end_tok": 3, "entity": "Y"}]},
            {"turn": 2, "links": [{"start_tok": 0, "end_tok": 1, "entity": "Z"}],
             "personal": [{"start_tok": 2, "end_tok": 4, "antecedents": [{"turn": 0, "start_tok": 0, "end_tok": 1}], "entities": ["X"]}]}
        ]}]"#,
    )
    .unwrap();
    let (anns, stats) = load_dataset(&path).unwrap();
    assert_eq!(anns.len(), 1);
    assert_eq!(stats.split(Split::Val).as_tuple(), (1, 2, 3, 1));
    assert_eq!(stats.split(Split::Train).as_tuple(), (0, 0, 0, 0));

    let untagged = dir.path().join("untagged.json");
    std::fs::write(&untagged, r#"[{"id": "a", "turns": []}]"#).unwrap();
    assert!(load_dataset(&untagged).is_err());
}
