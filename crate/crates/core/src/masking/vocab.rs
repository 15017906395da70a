use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const MASK: usize = 3;

/// Reserved tokens, in id order. Written as the fixed header of a
/// vocabulary file.
pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[MASK]"];

/// Token/id bijection. Ids `0..4` are the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from corpus tokens; duplicates and reserved strings are
    /// dropped, first occurrence fixes the id.
    pub fn from_tokens<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !t.is_empty() && !v.index.contains_key(&t) {
                v.push(t);
            }
        }
        v
    }

    fn push(&mut self, t: String) {
        self.index.insert(t.clone(), self.tokens.len());
        self.tokens.push(t);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Newline-delimited token list, reserved header first.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.tokens.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = body.lines().collect();
        Vocabulary::from_list(&lines).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message,
        })
    }

    /// Rebuilds from a full token list whose first entries are the
    /// reserved header.
    pub fn from_list<S: AsRef<str>>(lines: &[S]) -> std::result::Result<Vocabulary, String> {
        if lines.len() < RESERVED.len()
            || lines.iter().zip(RESERVED).any(|(l, r)| l.as_ref() != r)
        {
            return Err(format!("vocabulary must start with {RESERVED:?}"));
        }
        let v = Vocabulary::from_tokens(lines[RESERVED.len()..].iter().map(|s| s.as_ref().to_string()));
        if v.len() != lines.len() {
            return Err("vocabulary has duplicate or empty tokens".into());
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_fixed() {
        let v = Vocabulary::from_tokens(["hello", "[CLS]", "world", "hello"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("[CLS]"), Some(CLS));
        assert_eq!(v.id("[MASK]"), Some(MASK));
        assert_eq!(v.id("hello"), Some(4));
        assert_eq!(v.token(5), Some("world"));
    }

    #[test]
    fn save_load() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        assert_eq!(Vocabulary::load(f.path()).unwrap(), v);
        fs::write(f.path(), "a\nb\n").unwrap();
        assert!(Vocabulary::load(f.path()).is_err());
    }
}
