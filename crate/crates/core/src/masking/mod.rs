//! Tokenization and lexicon-selective corruption of token sequences.

mod tokenize;
mod vocab;

pub use tokenize::{split_words, TokenSequence, Tokenizer, TokenizerMode};
pub use vocab::{Vocabulary, CLS, MASK, PAD, RESERVED, UNK};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

/// Default fraction of candidate words masked per sentence.
pub const DEFAULT_MASK_RATIO: f64 = 0.1;

/// A corrupted sequence. `original_words` holds the source word for each
/// masked position (the same word repeats for every subtoken of a masked
/// word in subword mode).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub input_ids: Vec<usize>,
    pub mask_positions: Vec<usize>,
    pub original_ids: Vec<usize>,
    pub original_words: Vec<String>,
    /// Set when the sentence had no candidates; the word loss skips it.
    pub skipped: bool,
}

impl MaskedSequence {
    /// The uncorrupted sequence, for sentences that take no word loss.
    pub fn unmasked(seq: &TokenSequence) -> MaskedSequence {
        MaskedSequence {
            input_ids: seq.ids.clone(),
            mask_positions: Vec::new(),
            original_ids: Vec::new(),
            original_words: Vec::new(),
            skipped: true,
        }
    }
}

/// Word indices (into `seq.words`) eligible for masking, ascending.
pub fn candidate_words(seq: &TokenSequence, lexicon: &Lexicon) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for w in seq.word_index.iter().flatten() {
        if out.last() != Some(w) && lexicon.is_candidate(&seq.words[*w]) {
            out.push(*w);
        }
    }
    out
}

/// Token positions whose source word is strictly positive or negative.
/// Reserved tokens are never candidates.
pub fn find_candidate_positions(seq: &TokenSequence, lexicon: &Lexicon) -> Vec<usize> {
    seq.word_index
        .iter()
        .enumerate()
        .filter_map(|(pos, w)| w.filter(|&w| lexicon.is_candidate(&seq.words[w])).map(|_| pos))
        .collect()
}

/// Number of words to mask out of `n_candidates`: half-up rounding of
/// `ratio * n` with a floor of one whenever a candidate exists.
pub fn mask_count(n_candidates: usize, ratio: f64) -> usize {
    if n_candidates == 0 {
        return 0;
    }
    let k = (ratio * n_candidates as f64 + 0.5).floor() as usize;
    k.clamp(1, n_candidates)
}

/// Replaces a uniformly chosen subset of candidate words with the mask id.
/// All subtokens of a chosen word are masked together.
pub fn mask_sequence<R: Rng + ?Sized>(
    seq: &TokenSequence,
    lexicon: &Lexicon,
    ratio: f64,
    rng: &mut R,
) -> Result<MaskedSequence> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("mask ratio {ratio} not in (0,1]")));
    }
    let words = candidate_words(seq, lexicon);
    if words.is_empty() {
        return Ok(MaskedSequence::unmasked(seq));
    }
    let k = mask_count(words.len(), ratio);
    let mut chosen = vec![false; seq.words.len()];
    for i in index::sample(rng, words.len(), k) {
        chosen[words[i]] = true;
    }
    let mut input_ids = seq.ids.clone();
    let mut out = MaskedSequence {
        input_ids: Vec::new(),
        mask_positions: Vec::new(),
        original_ids: Vec::new(),
        original_words: Vec::new(),
        skipped: false,
    };
    for (pos, w) in seq.word_index.iter().enumerate() {
        if let Some(w) = *w {
            if chosen[w] {
                out.mask_positions.push(pos);
                out.original_ids.push(seq.ids[pos]);
                out.original_words.push(seq.words[w].clone());
                input_ids[pos] = MASK;
            }
        }
    }
    out.input_ids = input_ids;
    Ok(out)
}
