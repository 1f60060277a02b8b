//! Small synthetic conversations with gold annotations, for smoke-testing training and
//! the end-to-end pipeline.
//!
//! Every conversation follows one template: the user names one or two vehicles (and
//! sometimes a city), mentions buying from "car dealers", and later says "my cars".
//! The vehicles are the gold antecedents of "my cars"; cities and dealers are not.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::ConversationAnnotation;
use crate::ed::KnowledgeBase;
use crate::error::Result;
use crate::tokenize::tokenize;
use crate::types::{Conversation, EntityLink, MentionSpan, PersonalEntityLink, Speaker, Turn};

pub const VEHICLES: [&str; 8] = ["Life", "Pilot", "Civic", "Accord", "Jazz", "Odyssey", "Legend", "Prelude"];
pub const CITIES: [&str; 6] = ["Paris", "London", "Berlin", "Madrid", "Boston", "Tokyo"];
pub const DEALERSHIP: &str = "Car dealership";

fn turn(speaker: Speaker, text: &str) -> Turn {
    Turn::new(speaker, text, tokenize(text)).expect("tokenizer output is valid")
}

fn find(turn: &Turn, words: &[&str]) -> MentionSpan {
    let toks: Vec<&str> = turn.tokens.iter().map(|t| t.text.as_str()).collect();
    let start = toks.windows(words.len()).position(|w| w == words).expect("phrase present in template");
    MentionSpan::explicit(0, start, start + words.len())
}

fn link(turn_index: usize, turn: &Turn, words: &[&str], entity: &str) -> EntityLink {
    let mut span = find(turn, words);
    span.turn_index = turn_index;
    EntityLink { span, entity_id: entity.to_string(), confidence: 1.0 }
}

/// Builds one conversation. `city_first_turn` puts a city where the second vehicle
/// would go; `city_third_turn` adds a city to the purchase turn.
fn build(id: &str, vehicles: &[&str], city_first_turn: Option<&str>, city_third_turn: Option<&str>) -> (Conversation, ConversationAnnotation) {
    let t0 = match (vehicles, city_first_turn) {
        ([a, b], _) => format!("I drive a {a} and a {b} every week."),
        ([a], Some(c)) => format!("I drive a {a} and I love {c} a lot."),
        ([a], None) => format!("I drive a {a} every single week."),
        _ => unreachable!("one or two vehicles"),
    };
    let t2 = match city_third_turn {
        Some(c) => format!("I bought them in {c} from car dealers."),
        None => "I bought them from car dealers in town.".to_string(),
    };
    let turns = vec![
        turn(Speaker::User, &t0),
        turn(Speaker::System, "Honda makes both of those."),
        turn(Speaker::User, &t2),
        turn(Speaker::System, "Do you like them?"),
        turn(Speaker::User, "Yes, my cars are great."),
    ];
    let conv = Conversation::new(id, turns).expect("template conversation is valid");
    let mut ann = ConversationAnnotation::new(id);
    let mut antecedents = Vec::new();
    for v in vehicles {
        let l = link(0, &conv.turns[0], &[v], v);
        antecedents.push(l.span);
        ann.turn_mut(0).links.push(l);
    }
    if let Some(c) = city_first_turn {
        ann.turn_mut(0).links.push(link(0, &conv.turns[0], &[c], c));
    }
    if let Some(c) = city_third_turn {
        ann.turn_mut(2).links.push(link(2, &conv.turns[2], &[c], c));
    }
    ann.turn_mut(2).links.push(link(2, &conv.turns[2], &["car", "dealers"], DEALERSHIP));
    for t in &mut ann.turns {
        t.links.sort_by_key(|l| l.span);
    }
    let mut personal = find(&conv.turns[4], &["my", "cars"]);
    personal.turn_index = 4;
    personal.kind = crate::types::MentionKind::Personal;
    let links: Vec<EntityLink> = ann.links().cloned().collect();
    ann.turn_mut(4).personal.push(PersonalEntityLink::with_inheritance(personal, antecedents, &links));
    ann.turn_mut(1);
    ann.turn_mut(3);
    ann.turns.retain(|t| conv.turns[t.turn].is_user());
    (conv, ann)
}

/// The worked example: "Life" and "Pilot" are the user's cars, bought from "car dealers".
pub fn figure_one() -> (Conversation, ConversationAnnotation) {
    build("fig1", &["Life", "Pilot"], None, None)
}

/// `n` conversations: [`figure_one`] followed by `n - 1` seeded variations.
pub fn fixture(n: usize, seed: u64) -> Vec<(Conversation, ConversationAnnotation)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(figure_one());
    }
    for i in 1..n {
        let mut vs = VEHICLES.to_vec();
        vs.shuffle(&mut rng);
        let two = rng.gen_bool(0.5);
        let city = |rng: &mut ChaCha8Rng| CITIES[rng.gen_range(0..CITIES.len())];
        let first_city = (!two).then(|| city(&mut rng));
        let third_city = rng.gen_bool(0.5).then(|| city(&mut rng));
        let vehicles = if two { &vs[..2] } else { &vs[..1] };
        out.push(build(&format!("synth{i:02}"), vehicles, first_city, third_city));
    }
    out
}

/// A KB covering every fixture entity, plus Honda and two ambiguous aliases.
pub fn knowledge_base() -> Result<KnowledgeBase> {
    let mut rows: Vec<(String, String, f64)> = Vec::new();
    for v in VEHICLES {
        rows.push((v.to_string(), v.to_string(), 0.8));
    }
    rows.push(("life".into(), "Life (magazine)".into(), 0.15));
    rows.push(("pilot".into(), "Pilot (aviation)".into(), 0.15));
    for c in CITIES {
        rows.push((c.to_string(), c.to_string(), 0.9));
    }
    rows.push(("car dealers".into(), DEALERSHIP.into(), 0.9));
    rows.push(("car dealership".into(), DEALERSHIP.into(), 1.0));
    rows.push(("Honda".into(), "Honda".into(), 0.95));
    let mut titles: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    titles.push("Car".into());
    titles.push("Carpet".into());
    titles.sort();
    titles.dedup();
    KnowledgeBase::new(rows, Default::default(), Default::default(), titles)
}
