//! A tokenizer paired with an encoder: text in, sentence embeddings out.

use ndarray::Array2;

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::masking::Tokenizer;

/// Anything that maps sentences to fixed-width embeddings.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed_texts(&self, texts: &[&str]) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub tokenizer: Tokenizer,
    pub encoder: Encoder,
}

impl Model {
    pub fn new(tokenizer: Tokenizer, encoder: Encoder) -> Result<Model> {
        if tokenizer.vocab().len() != encoder.config().vocab_size {
            return Err(Error::invalid(format!(
                "vocabulary has {} tokens but encoder expects {}",
                tokenizer.vocab().len(),
                encoder.config().vocab_size
            )));
        }
        if tokenizer.max_len() > encoder.config().max_len {
            return Err(Error::invalid("tokenizer max_len exceeds encoder max_len"));
        }
        Ok(Model { tokenizer, encoder })
    }

    pub fn token_ids(&self, texts: &[&str]) -> Vec<Vec<usize>> {
        texts.iter().map(|t| self.tokenizer.tokenize(t).ids).collect()
    }
}

impl Embedder for Model {
    fn dim(&self) -> usize {
        self.encoder.config().hidden_dim
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Array2<f64>> {
        if texts.is_empty() {
            return Ok(Array2::zeros((0, self.dim())));
        }
        self.encoder.embed(&self.token_ids(texts))
    }
}

/// Fixed lookup embedder, handy for evaluation with precomputed vectors.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    pub table: std::collections::HashMap<String, Vec<f64>>,
    pub dim: usize,
}

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((texts.len(), self.dim));
        for (i, t) in texts.iter().enumerate() {
            let v = self
                .table
                .get(*t)
                .ok_or_else(|| Error::invalid(format!("no embedding for `{t}`")))?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
        Ok(out)
    }
}
