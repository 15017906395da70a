use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    /// Case-folded words and punctuation, one token per word.
    #[default]
    Word,
    /// Greedy longest-match word pieces (`##` marks continuations).
    Subword,
}

impl std::str::FromStr for TokenizerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "word" => Ok(TokenizerMode::Word),
            "subword" => Ok(TokenizerMode::Subword),
            other => Err(format!("unknown tokenizer mode `{other}` (word|subword)")),
        }
    }
}

impl std::fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TokenizerMode::Word => "word",
            TokenizerMode::Subword => "subword",
        })
    }
}

/// Lowercases and splits on whitespace; punctuation characters become
/// their own tokens. Apostrophes, hyphens and underscores stay inside words.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || matches!(ch, '\'' | '-' | '_') {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub text: String,
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    /// Source word of each token; `None` for the classification slot.
    pub word_index: Vec<Option<usize>>,
    pub words: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    vocab: Vocabulary,
    mode: TokenizerMode,
    max_len: usize,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary, mode: TokenizerMode, max_len: usize) -> Tokenizer {
        assert!(max_len >= 1, "max_len must leave room for the classification slot");
        Tokenizer { vocab, mode, max_len }
    }

    /// Learns a vocabulary from `texts`. Words seen at least `min_count`
    /// times become tokens; in subword mode every character is added as a
    /// leading and a continuation piece so any word can be segmented.
    pub fn build<S: AsRef<str>>(texts: &[S], mode: TokenizerMode, max_len: usize, min_count: usize) -> Tokenizer {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut chars: Vec<char> = Vec::new();
        for t in texts {
            for w in split_words(t.as_ref()) {
                if mode == TokenizerMode::Subword {
                    chars.extend(w.chars());
                }
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = words.into_iter().map(|(w, _)| w).collect();
        if mode == TokenizerMode::Subword {
            chars.sort_unstable();
            chars.dedup();
            for c in chars {
                tokens.push(c.to_string());
                tokens.push(format!("##{c}"));
            }
        }
        Tokenizer::new(Vocabulary::from_tokens(tokens), mode, max_len)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Prepends the classification slot and truncates from the right to
    /// `max_len` tokens.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let words = split_words(text);
        let mut seq = TokenSequence {
            text: text.to_string(),
            tokens: vec![self.vocab.token(CLS).unwrap().to_string()],
            ids: vec![CLS],
            word_index: vec![None],
            words: Vec::new(),
        };
        'outer: for (wi, w) in words.iter().enumerate() {
            let pieces = match self.mode {
                TokenizerMode::Word => vec![w.clone()],
                TokenizerMode::Subword => self.word_pieces(w),
            };
            for piece in pieces {
                if seq.ids.len() == self.max_len {
                    break 'outer;
                }
                let id = self.vocab.id(&piece).unwrap_or(UNK);
                let tok = if id == UNK { self.vocab.token(UNK).unwrap().to_string() } else { piece };
                seq.tokens.push(tok);
                seq.ids.push(id);
                seq.word_index.push(Some(wi));
            }
        }
        let n_words = seq.word_index.last().copied().flatten().map_or(0, |w| w + 1);
        seq.words = words.into_iter().take(n_words).collect();
        seq
    }

    fn word_pieces(&self, word: &str) -> Vec<String> {
        if self.vocab.id(word).is_some() {
            return vec![word.to_string()];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let prefix = if start == 0 { "" } else { "##" };
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let cand: String = prefix.chars().chain(chars[start..end].iter().copied()).collect();
                if self.vocab.id(&cand).is_some() {
                    found = Some(cand);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => {
                    out.push(piece);
                    start = end;
                }
                None => {
                    // unknown character; emit it so it maps to [UNK]
                    out.push(format!("{prefix}{}", chars[start]));
                    start += 1;
                }
            }
        }
        out
    }
}
