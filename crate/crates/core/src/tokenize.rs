//! Whitespace + punctuation tokenizer and the built-in part-of-speech taggers.

use std::collections::HashMap;

use crate::types::{Pos, Token};

/// Assigns coarse POS tags to an already tokenized word sequence.
pub trait PosTagger: Send + Sync {
    fn tag(&self, words: &[&str]) -> Vec<Pos>;
}

pub fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{2013}' | '\u{2014}'
                | '\u{00AB}' | '\u{00BB}' | '\u{00BF}' | '\u{00A1}'
        )
}

/// Tokenizes with the default [`LexiconTagger`].
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_with(text, &LexiconTagger::default())
}

/// Splits on whitespace, then peels leading and trailing punctuation off each chunk,
/// one `PUNCT` token per character. Offsets are character (not byte) positions.
pub fn tokenize_with(text: &str, tagger: &dyn PosTagger) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut ranges);
    }
    let words: Vec<String> = ranges.iter().map(|&(s, e)| chars[s..e].iter().collect()).collect();
    let refs: Vec<&str> = words.iter().map(String::as_str).collect();
    let tags = tagger.tag(&refs);
    words
        .into_iter()
        .zip(ranges)
        .zip(tags)
        .map(|((w, (s, e)), pos)| Token::new(w, pos, s, e))
        .collect()
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    let mut lo = start;
    while lo < end && is_punct(chars[lo]) {
        out.push((lo, lo + 1));
        lo += 1;
    }
    if lo == end {
        return;
    }
    let mut hi = end;
    while hi > lo && is_punct(chars[hi - 1]) {
        hi -= 1;
    }
    out.push((lo, hi));
    for p in hi..end {
        out.push((p, p + 1));
    }
}

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it",
    "its", "itself", "they", "them", "their", "theirs", "themselves", "what", "who", "whom",
    "whose", "which", "something", "anything", "everything", "nothing", "someone", "anyone",
    "everyone", "one",
];
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "every", "each", "no",
    "all", "both", "another", "such",
];
const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "from", "with", "by", "for", "about", "into", "over", "under",
    "after", "before", "through", "during", "without", "between", "near", "since",
];
const PARTICLES: &[&str] = &["to", "not", "n't", "'s", "up", "off", "out"];
const CONJUNCTIONS: &[&str] =
    &["and", "or", "but", "nor", "so", "yet", "because", "if", "while", "when", "than", "then"];
const NUMBER_WORDS: &[&str] = &[
    "zero", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "twenty", "hundred", "thousand", "million",
];
const VERBS: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "do", "does",
    "did", "can", "could", "will", "would", "shall", "should", "may", "might", "must", "love",
    "loves", "get", "gets", "go", "goes", "went", "gone", "want", "wants", "think", "thinks",
    "know", "knows", "knew", "see", "sees", "saw", "seen", "buy", "buys", "bought", "drive",
    "drives", "drove", "owns", "need", "needs", "make", "makes", "made", "take", "takes",
    "took", "say", "says", "said", "use", "uses", "enjoy", "enjoys", "play", "plays", "watch",
    "watches", "eat", "eats", "ate", "live", "lives", "work", "works", "visit", "visits",
    "prefer", "prefers", "got", "sold", "sell", "sells", "hate", "hates", "keep", "keeps",
    "kept", "let", "feel", "feels", "felt", "run", "runs", "ran",
];
const ADVERBS: &[&str] = &[
    "very", "really", "too", "also", "just", "always", "never", "often", "sometimes", "here",
    "there", "now", "again", "still", "already", "soon", "well", "quite", "almost", "even",
    "ever", "maybe", "perhaps", "today", "yesterday", "tomorrow",
];
const ADJECTIVES: &[&str] = &[
    "old", "new", "good", "great", "big", "small", "little", "favorite", "favourite", "best",
    "better", "bad", "worse", "worst", "young", "large", "long", "short", "high", "low", "nice",
    "happy", "sad", "first", "last", "own", "other", "red", "blue", "green", "black", "white",
    "fast", "slow", "cool", "hot", "cold", "popular",
];
const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "ive", "able", "ible", "less", "ical", "ish"];

/// Closed-class word lists, capitalization and suffix heuristics. Unknown words default to NOUN.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    lexicon: HashMap<String, Pos>,
}

impl Default for LexiconTagger {
    fn default() -> Self {
        let mut lexicon = HashMap::new();
        // later lists win on collisions, so the most specific go last
        for (words, pos) in [
            (ADJECTIVES, Pos::Adj),
            (ADVERBS, Pos::Adv),
            (VERBS, Pos::Verb),
            (NUMBER_WORDS, Pos::Num),
            (CONJUNCTIONS, Pos::Other),
            (PARTICLES, Pos::Part),
            (ADPOSITIONS, Pos::Adp),
            (DETERMINERS, Pos::Det),
            (PRONOUNS, Pos::Pron),
        ] {
            for w in words {
                lexicon.insert((*w).to_string(), pos);
            }
        }
        LexiconTagger { lexicon }
    }
}

impl LexiconTagger {
    /// Adds or overrides a lexicon entry (matched case-insensitively).
    pub fn with_entry(mut self, word: &str, pos: Pos) -> Self {
        self.lexicon.insert(word.to_lowercase(), pos);
        self
    }

    pub fn tag_word(&self, word: &str) -> Pos {
        if !word.is_empty() && word.chars().all(is_punct) {
            return Pos::Punct;
        }
        if word.chars().any(|c| c.is_ascii_digit())
            && word.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
        {
            return Pos::Num;
        }
        let lower = word.to_lowercase();
        if let Some(&pos) = self.lexicon.get(&lower) {
            return pos;
        }
        if word.chars().next().is_some_and(char::is_uppercase) {
            return Pos::Propn;
        }
        let n = lower.chars().count();
        if n > 4 && lower.ends_with("ly") {
            return Pos::Adv;
        }
        if n > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
            return Pos::Verb;
        }
        if n > 4 && ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
            return Pos::Adj;
        }
        Pos::Noun
    }
}

impl PosTagger for LexiconTagger {
    fn tag(&self, words: &[&str]) -> Vec<Pos> {
        words.iter().map(|w| self.tag_word(w)).collect()
    }
}

/// Exact word→tag table with a fallback tag; used for gold-tagged fixtures.
#[derive(Debug, Clone)]
pub struct TableTagger {
    pub table: HashMap<String, Pos>,
    pub fallback: Pos,
}

impl PosTagger for TableTagger {
    fn tag(&self, words: &[&str]) -> Vec<Pos> {
        words.iter().map(|w| self.table.get(*w).copied().unwrap_or(self.fallback)).collect()
    }
}
