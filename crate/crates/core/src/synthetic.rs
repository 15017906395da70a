//! Templated toy corpus with a matching lexicon, for smoke runs and tests.
//!
//! Every sentence carries one or two sentiment words of its label's
//! polarity; the rest is label-independent filler. Sentence polarity is
//! therefore learnable only through the sentiment words.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Example, Label};
use crate::error::Result;
use crate::lexicon::Lexicon;

pub const POSITIVE_WORDS: [&str; 40] = [
    "good", "great", "excellent", "wonderful", "amazing", "delightful", "superb", "lovely", "brilliant", "charming",
    "pleasant", "fantastic", "enjoyable", "terrific", "outstanding", "marvelous", "splendid", "gorgeous", "beautiful",
    "perfect", "fabulous", "impressive", "stunning", "friendly", "elegant", "graceful", "joyful", "cheerful",
    "refreshing", "inspiring", "touching", "clever", "fun", "warm", "generous", "tasty", "fresh", "polished",
    "satisfying", "memorable",
];

pub const NEGATIVE_WORDS: [&str; 40] = [
    "bad", "terrible", "awful", "horrible", "dreadful", "poor", "boring", "dull", "bland", "mediocre",
    "disappointing", "annoying", "ugly", "nasty", "rude", "painful", "tedious", "awkward", "clumsy", "sloppy", "stale",
    "greasy", "noisy", "dirty", "broken", "cheap", "lousy", "miserable", "pathetic", "shabby", "gloomy", "bitter",
    "sour", "flawed", "weak", "messy", "lame", "grim", "tacky", "unpleasant",
];

/// Words scored on both sides; never masking candidates.
pub const MIXED_WORDS: [&str; 4] = ["sharp", "wild", "intense", "strange"];

const NOUNS: [&str; 30] = [
    "movie", "film", "plot", "actor", "script", "ending", "soundtrack", "director", "scene", "story", "meal", "waiter",
    "menu", "room", "hotel", "staff", "service", "pizza", "coffee", "book", "chapter", "phone", "screen", "battery",
    "album", "song", "show", "game", "visit", "product",
];

const FILLERS: [&str; 15] = [
    "long", "new", "red", "small", "large", "second", "recent", "local", "modern", "short", "early", "late", "main",
    "usual", "whole",
];

const TEMPLATES: [&str; 10] = [
    "the {n} was {s}",
    "i thought the {n} was {s} and {f}",
    "a {s} {n} with a {f} {n}",
    "honestly the {n} felt {s} , really {s}",
    "we found the {n} {s} overall",
    "what a {s} {n}",
    "the {f} {n} and the {n} were both {s}",
    "my {f} {n} was {m} but the {n} was {s}",
    "it is a {s} place for a {f} {n}",
    "{s} {n} , {s} {n}",
];

/// The toy lexicon: graded scores for the polar words, both-sided scores
/// for the mixed words, and a few explicit zero entries.
pub fn lexicon() -> Lexicon {
    let grade = |i: usize| [0.5, 0.625, 0.75][i % 3];
    let mut records: Vec<(String, f64, f64)> = Vec::new();
    for (i, w) in POSITIVE_WORDS.iter().enumerate() {
        records.push((w.to_string(), grade(i), 0.0));
    }
    for (i, w) in NEGATIVE_WORDS.iter().enumerate() {
        records.push((w.to_string(), 0.0, grade(i)));
    }
    for w in MIXED_WORDS {
        records.push((w.to_string(), 0.25, 0.375));
    }
    for w in ["movie", "table", "the"] {
        records.push((w.to_string(), 0.0, 0.0));
    }
    Lexicon::from_records(records).expect("static records are valid")
}

fn sentence(rng: &mut impl Rng, label: Label) -> String {
    let pool: &[&str] = match label {
        Label::Positive => &POSITIVE_WORDS,
        Label::Negative => &NEGATIVE_WORDS,
    };
    let template = TEMPLATES.choose(rng).expect("non-empty");
    let mut out = Vec::new();
    for slot in template.split(' ') {
        let word = match slot {
            "{s}" => pool.choose(rng).copied(),
            "{n}" => NOUNS.choose(rng).copied(),
            "{f}" => FILLERS.choose(rng).copied(),
            "{m}" => MIXED_WORDS.choose(rng).copied(),
            w => Some(w),
        };
        out.push(word.expect("non-empty"));
    }
    out.join(" ")
}

/// `n` labeled sentences, half of each polarity (positive gets the odd
/// one), in shuffled order.
pub fn sentences(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Example> = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            Example::new(sentence(&mut rng, label), label).expect("templates are non-empty")
        })
        .collect();
    out.shuffle(&mut rng);
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub lexicon: Lexicon,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
}

/// Train and validation splits drawn from independent streams.
pub fn generate(n_train: usize, n_valid: usize, seed: u64) -> Result<SyntheticCorpus> {
    Ok(SyntheticCorpus {
        lexicon: lexicon(),
        train: sentences(n_train, seed),
        valid: sentences(n_valid, seed.wrapping_add(0x9e37_79b9)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Polarity;
    use crate::masking::split_words;

    #[test]
    fn balanced_and_reproducible() {
        let a = sentences(101, 3);
        assert_eq!(a, sentences(101, 3));
        assert_ne!(a, sentences(101, 4));
        assert_eq!(a.iter().filter(|e| e.label == Label::Positive).count(), 51);
    }

    #[test]
    fn polar_words_match_labels() {
        let lex = lexicon();
        for ex in sentences(300, 1) {
            let pols: Vec<Polarity> = split_words(&ex.text).iter().map(|w| lex.polarity(w)).filter(|p| p.is_polar()).collect();
            assert!(!pols.is_empty(), "{}", ex.text);
            let want = match ex.label {
                Label::Positive => Polarity::Positive,
                Label::Negative => Polarity::Negative,
            };
            assert!(pols.iter().all(|p| *p == want), "{}", ex.text);
        }
        assert_eq!(lex.polarity("sharp"), Polarity::Multi);
        assert_eq!(lex.polarity("table"), Polarity::None);
    }
}
