//! Bidirectional transformer encoder (pre-layer-norm, learned positions,
//! GELU feed-forward) with classification-slot pooling and a masked-token
//! prediction head. Forward and backward passes are hand written; all math
//! is `f64`.

mod checkpoint;
pub(crate) mod layers;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use params::{Grads, ParamId, ParamStore};

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use layers::{AttnCache, LnCache};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_heads: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// 4 layers, width 128, 4 heads: trains on a CPU in minutes.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 4,
            hidden_dim: 128,
            num_heads: 4,
            max_len: 128,
            vocab_size,
            seed: 42,
        }
    }

    /// 12 layers, width 768, 12 heads.
    pub fn backbone(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 12,
            hidden_dim: 768,
            num_heads: 12,
            max_len: 128,
            vocab_size,
            seed: 42,
        }
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if self.num_heads == 0 || self.hidden_dim == 0 || self.hidden_dim % self.num_heads != 0 {
            return bad(
                "hidden_dim",
                format!("{} is not divisible by num_heads {}", self.hidden_dim, self.num_heads),
            );
        }
        if self.max_len < 2 {
            return bad("max_len", format!("{} < 2", self.max_len));
        }
        if self.vocab_size == 0 {
            return bad("vocab_size", "must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
struct BlockIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    tok_emb: ParamId,
    pos_emb: ParamId,
    blocks: Vec<BlockIds>,
    lnf_g: ParamId,
    lnf_b: ParamId,
    mlm_w: ParamId,
    mlm_b: ParamId,
}

fn build_layout(cfg: &EncoderConfig, mut make: impl FnMut(&str, (usize, usize), Init) -> Array2<f64>) -> (ParamStore, Layout) {
    let mut store = ParamStore::new();
    let d = cfg.hidden_dim;
    let f = cfg.ffn_dim();
    let mut add = |name: String, shape: (usize, usize), init: Init| {
        let value = make(&name, shape, init);
        store.add(name, value)
    };
    let tok_emb = add("tok_emb".into(), (cfg.vocab_size, d), Init::Normal);
    let pos_emb = add("pos_emb".into(), (cfg.max_len, d), Init::Normal);
    let blocks = (0..cfg.num_layers)
        .map(|l| {
            let mut p = |n: &str, shape, init| add(format!("layer{l}.{n}"), shape, init);
            BlockIds {
                ln1_g: p("ln1_g", (1, d), Init::Ones),
                ln1_b: p("ln1_b", (1, d), Init::Zeros),
                wq: p("wq", (d, d), Init::Normal),
                bq: p("bq", (1, d), Init::Zeros),
                wk: p("wk", (d, d), Init::Normal),
                bk: p("bk", (1, d), Init::Zeros),
                wv: p("wv", (d, d), Init::Normal),
                bv: p("bv", (1, d), Init::Zeros),
                wo: p("wo", (d, d), Init::Normal),
                bo: p("bo", (1, d), Init::Zeros),
                ln2_g: p("ln2_g", (1, d), Init::Ones),
                ln2_b: p("ln2_b", (1, d), Init::Zeros),
                w1: p("w1", (d, f), Init::Normal),
                b1: p("b1", (1, f), Init::Zeros),
                w2: p("w2", (f, d), Init::Normal),
                b2: p("b2", (1, d), Init::Zeros),
            }
        })
        .collect();
    let lnf_g = add("lnf_g".into(), (1, d), Init::Ones);
    let lnf_b = add("lnf_b".into(), (1, d), Init::Zeros);
    let mlm_w = add("mlm_w".into(), (d, cfg.vocab_size), Init::Normal);
    let mlm_b = add("mlm_b".into(), (1, cfg.vocab_size), Init::Zeros);
    (
        store,
        Layout {
            tok_emb,
            pos_emb,
            blocks,
            lnf_g,
            lnf_b,
            mlm_w,
            mlm_b,
        },
    )
}

struct BlockCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: AttnCache,
    att: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
}

/// Activations of one sentence kept for the backward pass.
pub struct Trace {
    ids: Vec<usize>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    /// Final hidden states, one row per token.
    pub hidden: Array2<f64>,
}

/// Padded hidden states of a batch: `(batch, max_length, hidden_dim)`.
/// Rows past a sentence's length are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub states: Array3<f64>,
    pub lengths: Vec<usize>,
}

impl HiddenStates {
    /// `(length, hidden_dim)` view of sentence `i` without padding.
    pub fn sentence(&self, i: usize) -> ArrayView2<'_, f64> {
        self.states.slice(s![i, ..self.lengths[i], ..])
    }

    /// Attention mask: true at real token positions.
    pub fn mask(&self) -> Array2<bool> {
        let width = self.states.dim().1;
        Array2::from_shape_fn((self.lengths.len(), width), |(i, j)| j < self.lengths[i])
    }
}

/// Seam for swapping in another encoder: anything producing hidden states,
/// a pooled vector and masked-token logits with these shapes.
pub trait Backbone {
    fn hidden_dim(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn encode(&self, batch: &[Vec<usize>]) -> Result<HiddenStates>;
    fn mlm_logits(&self, hidden: ArrayView2<'_, f64>, positions: &[usize]) -> Result<Array2<f64>>;

    /// Classification-slot pooling: the hidden row at position 0.
    fn pool(&self, h: &HiddenStates) -> Array2<f64> {
        h.states.index_axis(Axis(1), 0).to_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    params: ParamStore,
    layout: Layout,
}

impl PartialEq for Layout {
    fn eq(&self, _: &Self) -> bool {
        // derived from the config
        true
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Encoder> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let (params, layout) = build_layout(&config, |_, shape, init| match init {
            Init::Normal => Array2::from_shape_simple_fn(shape, || normal.sample(&mut rng)),
            Init::Zeros => Array2::zeros(shape),
            Init::Ones => Array2::ones(shape),
        });
        Ok(Encoder { config, params, layout })
    }

    /// Rebuilds an encoder from named tensors (checkpoint loading).
    pub(crate) fn from_tensors(config: EncoderConfig, named: Vec<(String, Array2<f64>)>) -> Result<Encoder> {
        config.validate()?;
        let mut named = named.into_iter();
        let mut failure = None;
        let (params, layout) = build_layout(&config, |name, shape, _| match named.next() {
            Some((n, t)) if n == name && t.dim() == shape => t,
            other => {
                failure.get_or_insert_with(|| {
                    format!(
                        "expected tensor {name} {shape:?}, found {:?}",
                        other.map(|(n, t)| (n, t.dim()))
                    )
                });
                Array2::zeros(shape)
            }
        });
        if let Some(msg) = failure {
            return Err(Error::Checkpoint(msg));
        }
        if named.next().is_some() {
            return Err(Error::Checkpoint("unexpected extra tensors".into()));
        }
        Ok(Encoder { config, params, layout })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn mlm_weight(&self) -> ParamId {
        self.layout.mlm_w
    }

    pub fn mlm_bias(&self) -> ParamId {
        self.layout.mlm_b
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::invalid("empty token sequence"));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::invalid(format!(
                "sequence length {} exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::invalid(format!(
                "token id {bad} out of vocabulary range {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Full forward pass for one sentence, keeping activations.
    pub fn forward(&self, ids: &[usize]) -> Result<Trace> {
        self.check_ids(ids)?;
        let p = &self.params;
        let len = ids.len();
        let tok = p.get(self.layout.tok_emb);
        let mut x = p.get(self.layout.pos_emb).slice(s![..len, ..]).to_owned();
        for (mut row, &id) in x.rows_mut().into_iter().zip(ids) {
            row += &tok.row(id);
        }
        let heads = self.config.num_heads;
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for ids_b in &self.layout.blocks {
            let (a, ln1) = layers::layer_norm(&x, p.get(ids_b.ln1_g), p.get(ids_b.ln1_b));
            let q = layers::linear(&a, p.get(ids_b.wq), p.get(ids_b.bq));
            let k = layers::linear(&a, p.get(ids_b.wk), p.get(ids_b.bk));
            let v = layers::linear(&a, p.get(ids_b.wv), p.get(ids_b.bv));
            let (att, attn) = layers::attention(&q, &k, &v, heads);
            x += &layers::linear(&att, p.get(ids_b.wo), p.get(ids_b.bo));
            let (b, ln2) = layers::layer_norm(&x, p.get(ids_b.ln2_g), p.get(ids_b.ln2_b));
            let f1 = layers::linear(&b, p.get(ids_b.w1), p.get(ids_b.b1));
            let g = layers::gelu(&f1);
            x += &layers::linear(&g, p.get(ids_b.w2), p.get(ids_b.b2));
            blocks.push(BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                attn,
                att,
                ln2,
                b,
                f1,
                g,
            });
        }
        let (hidden, lnf) = layers::layer_norm(&x, p.get(self.layout.lnf_g), p.get(self.layout.lnf_b));
        Ok(Trace {
            ids: ids.to_vec(),
            blocks,
            lnf,
            hidden,
        })
    }

    /// Back-propagates `d_hidden` (gradient w.r.t. the final hidden states)
    /// through the encoder, accumulating into `grads`.
    pub fn backward(&self, trace: &Trace, d_hidden: &Array2<f64>, grads: &mut Grads) {
        let p = &self.params;
        let lo = &self.layout;
        let mut dx = {
            let (g, b) = two_mut(grads, lo.lnf_g, lo.lnf_b);
            layers::layer_norm_backward(d_hidden, &trace.lnf, p.get(lo.lnf_g), g, b)
        };
        for (ids_b, c) in lo.blocks.iter().zip(&trace.blocks).rev() {
            // feed-forward branch
            let dg = {
                let (w, b) = two_mut(grads, ids_b.w2, ids_b.b2);
                layers::linear_backward(&dx, &c.g, p.get(ids_b.w2), w, b)
            };
            let df1 = layers::gelu_backward(&dg, &c.f1);
            let db = {
                let (w, b) = two_mut(grads, ids_b.w1, ids_b.b1);
                layers::linear_backward(&df1, &c.b, p.get(ids_b.w1), w, b)
            };
            {
                let (g, b) = two_mut(grads, ids_b.ln2_g, ids_b.ln2_b);
                dx += &layers::layer_norm_backward(&db, &c.ln2, p.get(ids_b.ln2_g), g, b);
            }
            // attention branch
            let datt = {
                let (w, b) = two_mut(grads, ids_b.wo, ids_b.bo);
                layers::linear_backward(&dx, &c.att, p.get(ids_b.wo), w, b)
            };
            let (dq, dk, dv) = layers::attention_backward(&datt, &c.q, &c.k, &c.v, &c.attn);
            let mut da = {
                let (w, b) = two_mut(grads, ids_b.wq, ids_b.bq);
                layers::linear_backward(&dq, &c.a, p.get(ids_b.wq), w, b)
            };
            {
                let (w, b) = two_mut(grads, ids_b.wk, ids_b.bk);
                da += &layers::linear_backward(&dk, &c.a, p.get(ids_b.wk), w, b);
            }
            {
                let (w, b) = two_mut(grads, ids_b.wv, ids_b.bv);
                da += &layers::linear_backward(&dv, &c.a, p.get(ids_b.wv), w, b);
            }
            let (g, b) = two_mut(grads, ids_b.ln1_g, ids_b.ln1_b);
            dx += &layers::layer_norm_backward(&da, &c.ln1, p.get(ids_b.ln1_g), g, b);
        }
        let len = trace.ids.len();
        grads
            .get_mut(lo.pos_emb)
            .slice_mut(s![..len, ..])
            .scaled_add(1.0, &dx);
        let dtok = grads.get_mut(lo.tok_emb);
        for (row, &id) in dx.rows().into_iter().zip(&trace.ids) {
            dtok.row_mut(id).scaled_add(1.0, &row);
        }
    }

    /// Gradient of the masked-token head given `d_logits` for the rows at
    /// `positions`; returns the gradient w.r.t. the full hidden matrix.
    pub fn mlm_backward(
        &self,
        hidden: ArrayView2<'_, f64>,
        positions: &[usize],
        d_logits: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let rows = hidden.select(Axis(0), positions);
        let (w, b) = two_mut(grads, self.layout.mlm_w, self.layout.mlm_b);
        let d_rows = layers::linear_backward(d_logits, &rows, self.params.get(self.layout.mlm_w), w, b);
        let mut dh = Array2::zeros(hidden.raw_dim());
        for (r, &pos) in positions.iter().enumerate() {
            dh.row_mut(pos).scaled_add(1.0, &d_rows.row(r));
        }
        dh
    }

    /// Pooled sentence embeddings, one row per input sequence.
    pub fn embed(&self, batch: &[Vec<usize>]) -> Result<Array2<f64>> {
        let h = Backbone::encode(self, batch)?;
        Ok(self.pool(&h))
    }
}

impl Backbone for Encoder {
    fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    /// Each sentence attends only over its own true length, so results are
    /// unaffected by batch-mate lengths.
    fn encode(&self, batch: &[Vec<usize>]) -> Result<HiddenStates> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let hidden: Vec<Array2<f64>> = batch
            .par_iter()
            .map(|ids| self.forward(ids).map(|t| t.hidden))
            .collect::<Result<_>>()?;
        let width = hidden.iter().map(Array2::nrows).max().unwrap_or(0);
        let mut states = Array3::zeros((batch.len(), width, self.config.hidden_dim));
        let lengths = hidden.iter().map(Array2::nrows).collect();
        for (i, h) in hidden.iter().enumerate() {
            states.slice_mut(s![i, ..h.nrows(), ..]).assign(h);
        }
        Ok(HiddenStates { states, lengths })
    }

    fn mlm_logits(&self, hidden: ArrayView2<'_, f64>, positions: &[usize]) -> Result<Array2<f64>> {
        if let Some(&bad) = positions.iter().find(|&&p| p >= hidden.nrows()) {
            return Err(Error::invalid(format!(
                "position {bad} outside sequence of length {}",
                hidden.nrows()
            )));
        }
        let rows = hidden.select(Axis(0), positions);
        Ok(layers::linear(
            &rows,
            self.params.get(self.layout.mlm_w),
            self.params.get(self.layout.mlm_b),
        ))
    }
}

/// Sums per-item gradients over a fixed number of contiguous chunks, each
/// reduced sequentially and then combined in chunk order. The summation
/// order depends only on `items.len()`, never on thread scheduling.
pub fn accumulate_grads<T, F>(store: &ParamStore, items: &[T], f: F) -> Result<Grads>
where
    T: Sync,
    F: Fn(&T, &mut Grads) -> Result<()> + Sync,
{
    const CHUNKS: usize = 8;
    let size = items.len().div_ceil(CHUNKS).max(1);
    let parts: Vec<Grads> = items
        .par_chunks(size)
        .map(|chunk| {
            let mut g = store.zeros_like();
            for item in chunk {
                f(item, &mut g)?;
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    let mut parts = parts.into_iter();
    let mut total = parts.next().unwrap_or_else(|| store.zeros_like());
    for p in parts {
        total.add_assign(&p);
    }
    Ok(total)
}

fn two_mut(grads: &mut Grads, a: ParamId, b: ParamId) -> (&mut Array2<f64>, &mut Array2<f64>) {
    assert!(a.0 < b.0, "parameter ids registered in order");
    let (lo, hi) = grads.0.split_at_mut(b.0);
    (&mut lo[a.0], &mut hi[0])
}

/// Row-wise softmax of a logits matrix.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    layers::softmax_rows(&mut p);
    p
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny(seed: u64) -> Encoder {
        Encoder::new(EncoderConfig {
            num_layers: 2,
            hidden_dim: 16,
            num_heads: 4,
            max_len: 12,
            vocab_size: 30,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = EncoderConfig::desk(100);
        c.num_heads = 3;
        assert!(Encoder::new(c.clone()).is_err());
        c.num_heads = 4;
        c.max_len = 1;
        assert!(Encoder::new(c).is_err());
    }

    #[test]
    fn encode_shapes_and_mask() {
        let mut c = EncoderConfig::desk(50);
        c.hidden_dim = 64;
        let enc = Encoder::new(c).unwrap();
        let h = enc.encode(&[vec![2, 5, 6, 7, 8], vec![2, 5, 6, 7, 8, 9, 10]]).unwrap();
        assert_eq!(h.states.dim(), (2, 7, 64));
        assert_eq!(h.lengths, vec![5, 7]);
        assert_eq!(h.mask().row(0).iter().filter(|m| **m).count(), 5);
        assert!(h.states.slice(s![0, 5.., ..]).iter().all(|v| *v == 0.0));
        assert_eq!(enc.pool(&h).dim(), (2, 64));
    }

    #[test]
    fn encode_errors() {
        let enc = tiny(0);
        assert!(enc.encode(&[]).is_err());
        assert!(enc.encode(&[vec![2, 30]]).is_err());
        assert!(enc.encode(&[vec![2; 13]]).is_err());
    }

    #[test]
    fn deterministic_init_and_inference() {
        let a = tiny(7);
        let b = tiny(7);
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), tiny(8).params());
        let batch = vec![vec![2, 4, 9, 11]];
        assert_eq!(a.encode(&batch).unwrap(), a.encode(&batch).unwrap());
    }

    #[test]
    fn pool_takes_first_row() {
        let enc = tiny(1);
        let h = enc.encode(&[vec![2, 4, 5]]).unwrap();
        assert_eq!(enc.pool(&h).row(0), h.states.slice(s![0, 0, ..]));
    }

    #[test]
    fn mlm_logits_shape_and_softmax() {
        let mut c = EncoderConfig::desk(1000);
        c.hidden_dim = 32;
        let mut enc = Encoder::new(c).unwrap();
        let t = enc.forward(&[2, 5, 3, 9, 3]).unwrap();
        let logits = enc.mlm_logits(t.hidden.view(), &[2, 4]).unwrap();
        assert_eq!(logits.dim(), (2, 1000));
        for row in softmax(&logits).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        assert!(enc.mlm_logits(t.hidden.view(), &[5]).is_err());

        let w = enc.mlm_weight();
        let b = enc.mlm_bias();
        enc.params_mut().get_mut(w).fill(0.0);
        enc.params_mut().get_mut(b).fill(0.0);
        let probs = softmax(&enc.mlm_logits(t.hidden.view(), &[2]).unwrap());
        assert!(probs.iter().all(|p| (p - 1e-3).abs() < 1e-15));
        assert_eq!(argmax(probs.row(0)), 0);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(ndarray::arr1(&[0.1, 0.5, 0.5, 0.2]).view()), 1);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let enc = tiny(3);
        let ids = [2usize, 7, 3, 19, 4];
        let target = Array2::from_shape_fn((5, 16), |(i, j)| ((i * 16 + j) as f64 * 0.37).sin());
        let loss = |e: &Encoder| (&e.forward(&ids).unwrap().hidden * &target).sum();
        let mut grads = enc.params().zeros_like();
        enc.backward(&enc.forward(&ids).unwrap(), &target, &mut grads);
        let h = 1e-6;
        let total = enc.params().numel();
        for flat in (0..total).step_by(total / 97) {
            let (id, r, c) = enc.params().locate(flat).unwrap();
            let mut plus = enc.clone();
            plus.params_mut().get_mut(id)[[r, c]] += h;
            let mut minus = enc.clone();
            minus.params_mut().get_mut(id)[[r, c]] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let analytic = grads.get(id)[[r, c]];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()),
                "{}[{r},{c}]: {analytic} vs {numeric}",
                enc.params().names()[id.0]
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn finite_and_padding_invariant(
            a in proptest::collection::vec(0usize..30, 1..12),
            b in proptest::collection::vec(0usize..30, 1..12),
        ) {
            let enc = tiny(11);
            let alone = enc.embed(std::slice::from_ref(&a)).unwrap();
            let h = enc.encode(&[a.clone(), b]).unwrap();
            prop_assert!(h.states.iter().all(|v| v.is_finite()));
            let together = enc.pool(&h);
            for (x, y) in alone.row(0).iter().zip(together.row(0)) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
