use crel_core::encoder::EncoderConfig;
use crel_core::io::annotations_to_string;
use crel_core::md::{self, MdExample, MdTrainConfig};
use crel_core::pel::{self, PelExample, PelTrainConfig};
use crel_core::pipeline::{link, LinkConfig, Models};
use crel_core::tokenize::tokenize;
use crel_core::{synth, Conversation, Speaker, Turn};

fn models() -> Models {
    let data = synth::fixture(10, 5);
    let enc = EncoderConfig { dim: 16, max_context_tokens: 512, layers: 1 };
    let md_ex: Vec<MdExample> = data.iter().flat_map(|(c, a)| MdExample::from_gold(c, a).unwrap()).collect();
    let (md, _) = md::train_md(&md_ex, &MdTrainConfig { encoder: enc.clone(), ..Default::default() }, None).unwrap();
    let pel_ex: Vec<PelExample> = data.iter().map(|(c, a)| PelExample::from_gold(c.clone(), a, false).unwrap()).collect();
    let (pel, _) = pel::train_pel(&pel_ex, &[], &PelTrainConfig { hidden: 8, encoder: enc, ..Default::default() }, None).unwrap();
    Models { md, pel, kb: synth::knowledge_base().unwrap(), ed: Default::default() }
}

#[test]
fn figure_one_end_to_end() {
    let models = models();
    let (c, _) = synth::figure_one();
    let ann = link(&c, &models, LinkConfig::default()).unwrap();
    let dealers = ann.links().find(|l| c.span_text(&l.span) == "car dealers").expect("car dealers linked");
    assert_eq!(dealers.entity_id, "Car dealership");
    let personal: Vec<_> = ann.personal().collect();
    assert_eq!(personal.len(), 1);
    assert_eq!(c.span_text(&personal[0].personal), "my cars");
    let antecedents: Vec<String> = personal[0].antecedents.iter().map(|a| c.span_text(a)).collect();
    assert_eq!(antecedents, vec!["Life", "Pilot"]);
    assert_eq!(personal[0].inherited_entities, vec!["Life", "Pilot"]);

    let again = link(&c, &models, LinkConfig::default()).unwrap();
    assert_eq!(annotations_to_string(&[ann]), annotations_to_string(&[again]));
}

#[test]
fn plain_conversation_yields_no_annotations() {
    let models = models();
    let text = "I drive every week.";
    let c = Conversation::new("plain", vec![Turn::new(Speaker::User, text, tokenize(text)).unwrap()]).unwrap();
    let ann = link(&c, &models, LinkConfig::default()).unwrap();
    assert_eq!(ann.links().count(), 0);
    assert_eq!(ann.personal().count(), 0);
}
