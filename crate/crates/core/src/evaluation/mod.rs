//! Representation-quality evaluation.

pub mod fewshot;
pub mod geometry;
pub mod probe;
pub mod stats;

pub use fewshot::{fewshot_eval, FewShotConfig, FewShotResult, SeedOutcome};
pub use geometry::{alignment, pca_project, uniformity, PcaProjection};
pub use probe::{linear_probe, LabeledSplit, ProbeResult};
pub use stats::{cosine, metric_correlation, pearson, spearman};

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, SgtsPair};
use crate::error::{Error, Result};
use crate::model::Embedder;
use crate::objectives::normalize_rows;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtsReport {
    pub spearman_rho: f64,
    pub n_pairs: usize,
    /// Cosine similarity per pair, in benchmark order.
    pub similarities: Vec<f64>,
}

/// Spearman correlation between pair cosines and the 0/1 same-polarity
/// labels, pooled over every pair.
pub fn sgts_score<E: Embedder + ?Sized>(embedder: &E, pairs: &[SgtsPair]) -> Result<SgtsReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty benchmark"));
    }
    let same = pairs.iter().filter(|p| p.label == 1).count();
    if same == 0 || same == pairs.len() {
        return Err(Error::invalid("benchmark has a single label class"));
    }
    let texts: Vec<&str> = pairs
        .iter()
        .map(|p| p.a.as_str())
        .chain(pairs.iter().map(|p| p.b.as_str()))
        .collect();
    let emb = embedder.embed_texts(&texts)?;
    let n = pairs.len();
    let similarities = (0..n)
        .map(|i| cosine(emb.row(i), emb.row(n + i)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = pairs.iter().map(|p| f64::from(p.label)).collect();
    Ok(SgtsReport {
        spearman_rho: spearman(&similarities, &labels)?,
        n_pairs: n,
        similarities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub index: usize,
    pub text: String,
    pub label: crate::corpus::Label,
    pub score: f64,
}

/// Top-`k` candidates by cosine to the query; ties keep input order and
/// `k` beyond the candidate count returns everything.
pub fn nn_query<E: Embedder + ?Sized>(embedder: &E, query: &str, candidates: &[Example], k: usize) -> Result<Vec<Neighbor>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates"));
    }
    let q = embedder.embed_texts(&[query])?;
    let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
    let emb = embedder.embed_texts(&texts)?;
    Ok(geometry::rank_by_cosine(q.row(0), &emb, k)?
        .into_iter()
        .map(|(index, score)| Neighbor {
            index,
            text: candidates[index].text.clone(),
            label: candidates[index].label,
            score,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignUniform {
    pub alignment: f64,
    pub uniformity: f64,
}

/// Alignment over the same-polarity pairs of a benchmark and uniformity
/// over all of its sentences, both on unit-normalized embeddings.
pub fn alignment_uniformity<E: Embedder + ?Sized>(embedder: &E, pairs: &[SgtsPair]) -> Result<AlignUniform> {
    let positives: Vec<&SgtsPair> = pairs.iter().filter(|p| p.label == 1).collect();
    if positives.is_empty() {
        return Err(Error::invalid("no same-polarity pairs for alignment"));
    }
    let a: Vec<&str> = positives.iter().map(|p| p.a.as_str()).collect();
    let b: Vec<&str> = positives.iter().map(|p| p.b.as_str()).collect();
    let ea = normalize_rows(&embedder.embed_texts(&a)?);
    let eb = normalize_rows(&embedder.embed_texts(&b)?);
    let mut all: Vec<&str> = pairs.iter().flat_map(|p| [p.a.as_str(), p.b.as_str()]).collect();
    all.sort_unstable();
    all.dedup();
    let eall = normalize_rows(&embedder.embed_texts(&all)?);
    Ok(AlignUniform {
        alignment: alignment(&ea, &eb)?,
        uniformity: uniformity(&eall)?,
    })
}

/// Score rows from published result tables, bundled for the
/// metric-correlation analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub model: String,
    pub dataset: String,
    pub sgts: f64,
    pub fewshot_1: f64,
    pub fewshot_5: f64,
}

const PUBLISHED_GRID: &str = include_str!("../../data/published_grid.csv");

pub fn published_grid() -> Vec<PublishedRow> {
    PUBLISHED_GRID
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| f[i].parse::<f64>().expect("bundled grid is well formed");
            PublishedRow {
                model: f[0].to_string(),
                dataset: f[1].to_string(),
                sgts: num(2),
                fewshot_1: num(3),
                fewshot_5: num(4),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::model::TableEmbedder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn pair(a: &str, b: &str, label: u8) -> SgtsPair {
        SgtsPair {
            a: a.into(),
            b: b.into(),
            label,
        }
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> TableEmbedder {
        TableEmbedder {
            dim: entries[0].1.len(),
            table: entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<HashMap<_, _>>(),
        }
    }

    #[test]
    fn perfect_ranking_gives_one() {
        // same-polarity pairs at cosine 0.9, cross pairs at 0.1
        let c9 = (0.9f64, (1.0f64 - 0.81).sqrt());
        let c1 = (0.1f64, (1.0f64 - 0.01).sqrt());
        let e = table(&[
            ("x", vec![1.0, 0.0]),
            ("s", vec![c9.0, c9.1]),
            ("d", vec![c1.0, c1.1]),
        ]);
        let pairs = vec![pair("x", "s", 1), pair("x", "d", 0), pair("x", "s", 1), pair("x", "d", 0)];
        let r = sgts_score(&e, &pairs).unwrap();
        assert!((r.spearman_rho - 1.0).abs() < 1e-12);
        assert_eq!(r.n_pairs, 4);
        let flipped: Vec<SgtsPair> = pairs.iter().map(|p| pair(&p.a, &p.b, 1 - p.label)).collect();
        assert!((sgts_score(&e, &flipped).unwrap().spearman_rho + 1.0).abs() < 1e-12);
        assert!(sgts_score(&e, &pairs[..1]).is_err());
    }

    #[test]
    fn scale_invariant_and_null_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut entries = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..1000 {
            let a = format!("a{i}");
            let b = format!("b{i}");
            entries.push((a.clone(), (0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()));
            entries.push((b.clone(), (0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>()));
            pairs.push(pair(&a, &b, (i % 2) as u8));
        }
        let e = TableEmbedder {
            dim: 16,
            table: entries.iter().cloned().collect(),
        };
        let r = sgts_score(&e, &pairs).unwrap();
        assert!(r.spearman_rho.abs() < 0.1, "{}", r.spearman_rho);
        let scaled = TableEmbedder {
            dim: 16,
            table: entries.iter().map(|(k, v)| (k.clone(), v.iter().map(|x| x * 7.5).collect())).collect(),
        };
        let r2 = sgts_score(&scaled, &pairs).unwrap();
        assert!((r.spearman_rho - r2.spearman_rho).abs() < 1e-12);
    }

    #[test]
    fn query_ranks_and_clamps() {
        let e = table(&[("q", vec![1.0, 0.0]), ("one", vec![1.0, 0.0]), ("two", vec![0.0, 1.0])]);
        let cands = vec![
            Example::new("one", Label::Positive).unwrap(),
            Example::new("two", Label::Negative).unwrap(),
        ];
        let r = nn_query(&e, "q", &cands, 5).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].index, 0);
        assert_eq!(r[0].score, 1.0);
        assert!(nn_query(&e, "q", &cands, 0).is_err());
        assert!(nn_query(&e, "q", &[], 1).is_err());
    }

    #[test]
    fn published_grid_loads() {
        let g = published_grid();
        assert_eq!(g.len(), 45);
        let scores: Vec<f64> = g.iter().map(|r| r.sgts).collect();
        let acc: Vec<f64> = g.iter().map(|r| r.fewshot_1).collect();
        let (r, p) = metric_correlation(&scores, &acc).unwrap();
        // reference value from scipy.stats.pearsonr on the same grid
        assert!((r - 0.9105).abs() < 1e-4, "{r}");
        assert!(p < 1e-10);
    }
}
