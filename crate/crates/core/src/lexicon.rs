//! Sentiment lexicon: per-word positivity/negativity scores and the
//! four-way word polarity derived from them.
//!
//! The on-disk format is tab separated, one record per line:
//!
//! ```text
//! # lemma<TAB>pos_score<TAB>neg_score
//! good	0.75	0
//! ```
//!
//! A lemma may appear on several lines; its scores are the arithmetic mean
//! over those records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::split_words;

/// Scores for one case-folded surface form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub pos_score: f64,
    pub neg_score: f64,
}

/// Word polarity. `None` covers words missing from the lexicon and words
/// whose two scores are both zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
    Multi,
    None,
}

impl Polarity {
    pub fn from_scores(pos: f64, neg: f64) -> Polarity {
        match (pos > 0.0, neg > 0.0) {
            (true, false) => Polarity::Positive,
            (false, true) => Polarity::Negative,
            (true, true) => Polarity::Multi,
            (false, false) => Polarity::None,
        }
    }

    /// Strictly positive or strictly negative.
    pub fn is_polar(self) -> bool {
        matches!(self, Polarity::Positive | Polarity::Negative)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    source_path: Option<PathBuf>,
}

fn check_score(v: f64) -> std::result::Result<f64, String> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("score {v} outside [0,1]"))
    }
}

impl Lexicon {
    /// Builds a lexicon from raw `(lemma, pos, neg)` records, averaging
    /// duplicates. Scores are summed in sorted order so the result does not
    /// depend on record order.
    pub fn from_records<I, S>(records: I) -> Result<Lexicon>
    where
        I: IntoIterator<Item = (S, f64, f64)>,
        S: AsRef<str>,
    {
        let mut grouped: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (lemma, pos, neg) in records {
            let lemma = lemma.as_ref().trim().to_lowercase();
            if lemma.is_empty() {
                return Err(Error::invalid("empty lemma"));
            }
            let pos = check_score(pos).map_err(Error::InvalidInput)?;
            let neg = check_score(neg).map_err(Error::InvalidInput)?;
            let slot = grouped.entry(lemma).or_default();
            slot.0.push(pos);
            slot.1.push(neg);
        }
        Ok(Lexicon {
            entries: grouped
                .into_iter()
                .map(|(lemma, (pos, neg))| {
                    let entry = LexiconEntry {
                        pos_score: sorted_mean(pos),
                        neg_score: sorted_mean(neg),
                    };
                    (lemma, entry)
                })
                .collect(),
            source_path: None,
        })
    }

    /// Loads the tab-separated lexicon format. `#` lines and blank lines are
    /// skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            };
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let lemma = fields[0].trim();
            if lemma.is_empty() {
                return Err(parse_err("empty lemma".into()));
            }
            let score = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad score `{s}`")))?;
                check_score(v).map_err(parse_err)
            };
            let pos = score(fields[1])?;
            let neg = score(fields[2])?;
            records.push((lemma.to_string(), pos, neg));
        }
        let mut lex = Lexicon::from_records(records)?;
        lex.source_path = Some(path.to_path_buf());
        Ok(lex)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("# lemma\tpos_score\tneg_score\n");
        for (lemma, e) in &self.entries {
            out.push_str(&format!("{lemma}\t{}\t{}\n", e.pos_score, e.neg_score));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(word.to_lowercase().as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &LexiconEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn polarity(&self, word: &str) -> Polarity {
        match self.get(word) {
            Some(e) => Polarity::from_scores(e.pos_score, e.neg_score),
            None => Polarity::None,
        }
    }

    /// Only strictly positive or strictly negative words are eligible for
    /// masking; multi-polarity words never are.
    pub fn is_candidate(&self, word: &str) -> bool {
        self.polarity(word).is_polar()
    }

    /// Share of word tokens in `texts` that are masking candidates.
    pub fn sentiword_fraction<S: AsRef<str>>(&self, texts: &[S]) -> Result<f64> {
        let mut total = 0usize;
        let mut hits = 0usize;
        for text in texts {
            for w in split_words(text.as_ref()) {
                total += 1;
                if self.is_candidate(&w) {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            return Err(Error::invalid("corpus has no tokens; ratio undefined"));
        }
        Ok(hits as f64 / total as f64)
    }
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Parses the SentiWordNet 3.0 distribution (`POS ID PosScore NegScore
/// SynsetTerms Gloss`) into flat `(lemma, pos, neg)` records, one per synset
/// term with its `#sense` suffix stripped.
pub fn parse_sentiwordnet(path: impl AsRef<Path>) -> Result<Vec<(String, f64, f64)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        if fields.len() < 5 {
            return Err(parse_err(format!("expected >= 5 fields, found {}", fields.len())));
        }
        let pos: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad PosScore `{}`", fields[2])))?;
        let neg: f64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad NegScore `{}`", fields[3])))?;
        for term in fields[4].split_whitespace() {
            let lemma = term.split('#').next().unwrap_or("").to_lowercase();
            if !lemma.is_empty() {
                out.push((lemma, pos, neg));
            }
        }
    }
    Ok(out)
}
