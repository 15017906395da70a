//! Labeled sentence data: ingestion, splits, quadruple sampling for the
//! contrastive objective, sentiment-similarity benchmark construction and
//! few-shot sampling. Every sampler is a pure function of its inputs and seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn parse(raw: &str) -> Option<Label> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "1" | "+" => Some(Label::Positive),
            "negative" | "neg" | "0" | "-" => Some(Label::Negative),
            _ => None,
        }
    }

    /// 1 for positive, 0 for negative.
    pub fn as_class(self) -> usize {
        match self {
            Label::Positive => 1,
            Label::Negative => 0,
        }
    }

    pub fn from_class(c: usize) -> Label {
        if c == 1 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub text: String,
    pub label: Label,
}

impl Example {
    pub fn new(text: impl Into<String>, label: Label) -> Result<Example> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("example text is empty"));
        }
        Ok(Example { text, label })
    }
}

/// Contrastive training unit: two distinct positive and two distinct
/// negative sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub p: Example,
    pub p_plus: Example,
    pub n: Example,
    pub n_plus: Example,
}

impl Quadruple {
    pub fn members(&self) -> [&Example; 4] {
        [&self.p, &self.p_plus, &self.n, &self.n_plus]
    }
}

/// Sentence pair with binary sentiment-similarity label (1 = same polarity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgtsPair {
    pub a: String,
    pub b: String,
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplits {
    pub name: String,
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Tsv,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<DataFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Some(DataFormat::Jsonl),
            Some("tsv") | Some("txt") => Some(DataFormat::Tsv),
            _ => None,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            DataFormat::Jsonl => "jsonl",
            DataFormat::Tsv => "tsv",
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: serde_json::Value,
}

/// Reads one split file. JSONL records are `{"text": .., "label": ..}`;
/// TSV lines are `text<TAB>label` with an optional `text<TAB>label` header.
pub fn read_examples(path: impl AsRef<Path>, format: DataFormat) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let (text, raw_label) = match format {
            DataFormat::Jsonl => {
                let rec: RawRecord =
                    serde_json::from_str(line).map_err(|e| err(format!("malformed record: {e}")))?;
                let label = match rec.label {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    other => return Err(err(format!("unknown label `{other}`"))),
                };
                (rec.text, label)
            }
            DataFormat::Tsv => {
                let Some((text, label)) = line.rsplit_once('\t') else {
                    return Err(err("expected `text<TAB>label`".into()));
                };
                if idx == 0 && label.trim() == "label" {
                    continue;
                }
                (text.to_string(), label.to_string())
            }
        };
        let label = Label::parse(&raw_label).ok_or_else(|| err(format!("unknown label `{raw_label}`")))?;
        if text.trim().is_empty() {
            return Err(err("empty text".into()));
        }
        out.push(Example { text, label });
    }
    Ok(out)
}

/// Loads a dataset. A directory is searched for `train`, `valid` (or `dev`)
/// and `test` files with the format's extension; a single file becomes the
/// train split.
pub fn load_dataset(path: impl AsRef<Path>, format: Option<DataFormat>) -> Result<DatasetSplits> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    if path.is_dir() {
        let format = format.unwrap_or(DataFormat::Jsonl);
        let find = |stems: &[&str]| -> Option<PathBuf> {
            stems
                .iter()
                .map(|s| path.join(format!("{s}.{}", format.ext())))
                .find(|p| p.is_file())
        };
        let train = find(&["train"])
            .ok_or_else(|| Error::invalid(format!("{} has no train.{} file", path.display(), format.ext())))?;
        let load_opt = |p: Option<PathBuf>| -> Result<Vec<Example>> {
            p.map(|p| read_examples(p, format)).transpose().map(Option::unwrap_or_default)
        };
        Ok(DatasetSplits {
            name,
            train: read_examples(train, format)?,
            valid: load_opt(find(&["valid", "dev"]))?,
            test: load_opt(find(&["test"]))?,
        })
    } else {
        let format = format
            .or_else(|| DataFormat::from_path(path))
            .ok_or_else(|| Error::invalid(format!("cannot infer format of {}", path.display())))?;
        Ok(DatasetSplits {
            name,
            train: read_examples(path, format)?,
            ..Default::default()
        })
    }
}

pub fn write_examples(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    write_jsonl(path, examples)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[SgtsPair]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<SgtsPair>> {
    let path = path.as_ref();
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            let pair: SgtsPair = serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            if pair.label > 1 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("label {} not in {{0,1}}", pair.label),
                });
            }
            Ok(pair)
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        let line = serde_json::to_string(item).expect("serializable");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

/// Holds out `round(fraction * n)` examples as validation. Both outputs
/// keep the original relative order.
pub fn make_validation_split(
    train: &[Example],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("validation fraction {fraction} not in (0,1)")));
    }
    if train.is_empty() {
        return Err(Error::invalid("cannot split an empty training set"));
    }
    let n_valid = (fraction * train.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; train.len()];
    for i in index::sample(&mut rng, train.len(), n_valid) {
        held[i] = true;
    }
    let (mut rest, mut valid) = (Vec::new(), Vec::new());
    for (ex, h) in train.iter().zip(held) {
        if h {
            valid.push(ex.clone());
        } else {
            rest.push(ex.clone());
        }
    }
    Ok((rest, valid))
}

fn partition(examples: &[Example]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, e) in examples.iter().enumerate() {
        match e.label {
            Label::Positive => pos.push(i),
            Label::Negative => neg.push(i),
        }
    }
    (pos, neg)
}

/// One quadruple per positive sentence: the anchor, a different positive
/// drawn uniformly, and two different negatives drawn uniformly.
pub fn sample_quadruples(train: &[Example], seed: u64) -> Result<Vec<Quadruple>> {
    let (pos, neg) = partition(train);
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(format!(
            "quadruple sampling needs >= 2 examples per class (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quads = pos
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            // uniform over the other positives
            let mut j = rand::Rng::random_range(&mut rng, 0..pos.len() - 1);
            if j >= k {
                j += 1;
            }
            let negs = index::sample(&mut rng, neg.len(), 2);
            Quadruple {
                p: train[p].clone(),
                p_plus: train[pos[j]].clone(),
                n: train[neg[negs.index(0)]].clone(),
                n_plus: train[neg[negs.index(1)]].clone(),
            }
        })
        .collect();
    Ok(quads)
}

/// Shuffles the examples and pairs them consecutively; an odd leftover is
/// dropped. Pair label is 1 when both sentences share a polarity.
pub fn build_sgts_benchmark(examples: &[Example], seed: u64) -> Result<Vec<SgtsPair>> {
    if examples.len() < 2 {
        return Err(Error::invalid("need at least 2 examples to form a pair"));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(pair_in_order(examples, &order))
}

pub(crate) fn pair_in_order(examples: &[Example], order: &[usize]) -> Vec<SgtsPair> {
    order
        .chunks_exact(2)
        .map(|c| {
            let (a, b) = (&examples[c[0]], &examples[c[1]]);
            SgtsPair {
                a: a.text.clone(),
                b: b.text.clone(),
                label: u8::from(a.label == b.label),
            }
        })
        .collect()
}

/// `k` shots per class without replacement plus `val_size` validation
/// examples drawn from what remains.
pub fn sample_fewshot(
    train: &[Example],
    k: usize,
    val_size: usize,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let (mut pos, mut neg) = partition(train);
    if k == 0 || pos.len() < k || neg.len() < k {
        return Err(Error::invalid(format!(
            "need {k} > 0 shots per class (have {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    if train.len() - 2 * k < val_size {
        return Err(Error::invalid(format!(
            "only {} examples remain for a validation set of {val_size}",
            train.len() - 2 * k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut used = vec![false; train.len()];
    let mut shots = Vec::with_capacity(2 * k);
    for &i in pos[..k].iter().chain(&neg[..k]) {
        used[i] = true;
        shots.push(train[i].clone());
    }
    let mut rest: Vec<usize> = (0..train.len()).filter(|&i| !used[i]).collect();
    rest.shuffle(&mut rng);
    let valset = rest[..val_size].iter().map(|&i| train[i].clone()).collect();
    Ok((shots, valset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(text: &str, label: Label) -> Example {
        Example::new(text, label).unwrap()
    }

    fn balanced(n_pos: usize, n_neg: usize) -> Vec<Example> {
        (0..n_pos)
            .map(|i| ex(&format!("pos {i}"), Label::Positive))
            .chain((0..n_neg).map(|i| ex(&format!("neg {i}"), Label::Negative)))
            .collect()
    }

    #[test]
    fn jsonl_loading_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train.jsonl");
        fs::write(
            &p,
            "{\"text\": \"a good film\", \"label\": \"pos\"}\n{\"text\": \"fine\", \"label\": \"positive\"}\n{\"text\": \"awful\", \"label\": 0}\n",
        )
        .unwrap();
        let d = load_dataset(dir.path(), None).unwrap();
        assert_eq!(d.train.len(), 3);
        assert_eq!(
            d.train.iter().map(|e| e.label).collect::<Vec<_>>(),
            vec![Label::Positive, Label::Positive, Label::Negative]
        );
        assert!(d.valid.is_empty() && d.test.is_empty());

        fs::write(&p, "{\"text\": \"meh\", \"label\": \"neutral\"}\n").unwrap();
        let err = load_dataset(&p, None).unwrap_err().to_string();
        assert!(err.contains("unknown label"), "{err}");
        assert!(err.contains(":1:"), "{err}");

        fs::write(&p, "{\"text\": \"  \", \"label\": \"neg\"}\n").unwrap();
        assert!(load_dataset(&p, None).unwrap_err().to_string().contains("empty text"));

        fs::write(&p, "{\"text\": \"ok\", \"label\": \"neg\"}\n{not json\n").unwrap();
        assert!(load_dataset(&p, None).unwrap_err().to_string().contains(":2:"));
    }

    #[test]
    fn tsv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        fs::write(&p, "text\tlabel\nnice one\t1\nbad one\t0\n").unwrap();
        let d = load_dataset(&p, None).unwrap();
        assert_eq!(d.train.len(), 2);
        assert_eq!(d.train[1].label, Label::Negative);
    }

    #[test]
    fn validation_split_sizes() {
        let data = balanced(50, 50);
        let (t, v) = make_validation_split(&data, 0.1, 7).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t2, v2) = make_validation_split(&data, 0.1, 7).unwrap();
        assert_eq!((t, v), (t2, v2));
        let imdb = balanced(12_500, 12_500);
        let (t, v) = make_validation_split(&imdb, 0.1, 0).unwrap();
        assert_eq!((t.len(), v.len()), (22_500, 2_500));
        assert!(make_validation_split(&data, 1.0, 0).is_err());
        assert!(make_validation_split(&data, 0.0, 0).is_err());
    }

    #[test]
    fn quadruples_forced_choice() {
        let data = balanced(2, 2);
        let q = sample_quadruples(&data, 3).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].p.text, "pos 0");
        assert_eq!(q[0].p_plus.text, "pos 1");
        assert_eq!(q[1].p_plus.text, "pos 0");
        for quad in &q {
            let mut negs = [quad.n.text.as_str(), quad.n_plus.text.as_str()];
            negs.sort();
            assert_eq!(negs, ["neg 0", "neg 1"]);
        }
        assert!(sample_quadruples(&balanced(1, 5), 0).is_err());
        assert!(sample_quadruples(&balanced(5, 1), 0).is_err());
    }

    #[test]
    fn sgts_pairing_rule() {
        let data = vec![
            ex("a", Label::Positive),
            ex("b", Label::Positive),
            ex("c", Label::Negative),
            ex("d", Label::Negative),
        ];
        let pairs = pair_in_order(&data, &[0, 1, 2, 3]);
        assert_eq!(pairs.iter().map(|p| p.label).collect::<Vec<_>>(), vec![1, 1]);
        let pairs = pair_in_order(&data, &[0, 2, 1, 3]);
        assert_eq!(pairs.iter().map(|p| p.label).collect::<Vec<_>>(), vec![0, 0]);
        let pairs = pair_in_order(&data, &[0, 1, 2]);
        assert_eq!(pairs.len(), 1);

        assert_eq!(build_sgts_benchmark(&balanced(2, 1), 1).unwrap().len(), 1);
        assert_eq!(build_sgts_benchmark(&balanced(436, 436), 1).unwrap().len(), 436);
        assert!(build_sgts_benchmark(&balanced(1, 0), 1).is_err());
    }

    #[test]
    fn fewshot_sampling() {
        let data = balanced(300, 300);
        let (shots, val) = sample_fewshot(&data, 5, 20, 9).unwrap();
        assert_eq!(shots.len(), 10);
        assert_eq!(shots.iter().filter(|e| e.label == Label::Positive).count(), 5);
        assert_eq!(val.len(), 20);
        let (shots, val) = sample_fewshot(&data, 1, 500, 9).unwrap();
        assert_eq!((shots.len(), val.len()), (2, 500));
        for s in &shots {
            assert!(!val.contains(s));
        }
        assert!(sample_fewshot(&balanced(3, 30), 5, 1, 0).is_err());
        assert!(sample_fewshot(&balanced(5, 5), 5, 1, 0).is_err());
    }

    #[test]
    fn pair_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.jsonl");
        let pairs = build_sgts_benchmark(&balanced(5, 5), 4).unwrap();
        write_pairs(&p, &pairs).unwrap();
        assert_eq!(read_pairs(&p).unwrap(), pairs);
        fs::write(&p, "{\"a\":\"x\",\"b\":\"y\",\"label\":2}\n").unwrap();
        assert!(read_pairs(&p).is_err());
    }

    proptest! {
        #[test]
        fn quadruple_invariants(n_pos in 2usize..40, n_neg in 2usize..40, seed in any::<u64>()) {
            let data = balanced(n_pos, n_neg);
            let q = sample_quadruples(&data, seed).unwrap();
            prop_assert_eq!(q.len(), n_pos);
            for quad in &q {
                prop_assert_eq!(quad.p.label, Label::Positive);
                prop_assert_eq!(quad.p_plus.label, Label::Positive);
                prop_assert_eq!(quad.n.label, Label::Negative);
                prop_assert_eq!(quad.n_plus.label, Label::Negative);
                prop_assert_ne!(&quad.p, &quad.p_plus);
                prop_assert_ne!(&quad.n, &quad.n_plus);
            }
            prop_assert_eq!(&q, &sample_quadruples(&data, seed).unwrap());
        }

        #[test]
        fn sgts_labels_match_polarity(n_pos in 0usize..30, n_neg in 0usize..30, seed in any::<u64>()) {
            prop_assume!(n_pos + n_neg >= 2);
            let data = balanced(n_pos, n_neg);
            let pairs = build_sgts_benchmark(&data, seed).unwrap();
            prop_assert_eq!(pairs.len(), (n_pos + n_neg) / 2);
            let mut seen = std::collections::HashSet::new();
            for p in &pairs {
                let la = p.a.starts_with("pos");
                let lb = p.b.starts_with("pos");
                prop_assert_eq!(p.label, u8::from(la == lb));
                prop_assert!(seen.insert(p.a.clone()) && seen.insert(p.b.clone()));
            }
        }
    }
}
