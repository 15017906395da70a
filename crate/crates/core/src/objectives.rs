//! Training objectives: the lexicon-gated masked-word loss and the
//! quadruple contrastive loss, plus their combination and gradients.
//!
//! Sentence level, for a batch of `N` quadruples `(p, p+, n, n+)`:
//!
//! ```text
//! l_pos_i = -log( e^{s(p_i,p+_i)/t} / (e^{s(p_i,p+_i)/t} + sum_j a e^{s(p_i,n_j)/t}) )
//! l_neg_i = -log( e^{s(n_i,n+_i)/t} / (e^{s(n_i,n+_i)/t} + sum_j a e^{s(n_i,p+_j)/t}) )
//! l_s     = mean_i (l_pos_i + l_neg_i)
//! total   = lambda_w * l_w + l_s
//! ```
//!
//! with `s` the cosine similarity. The word loss sums the masked-token
//! cross-entropy over masked positions and sentences, gated to zero wherever
//! the argmax prediction has the same polarity as the original word.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::{argmax, softmax};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::masking::{MaskedSequence, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Temperature.
    pub tau: f64,
    /// Weight on repelled (opposite-polarity) samples.
    pub alpha: f64,
    /// Weight of the word-level loss.
    pub lambda_w: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            tau: 0.05,
            alpha: 1.0,
            lambda_w: 0.15,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", format!("{} must be > 0", self.tau));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("{} must be >= 0", self.alpha));
        }
        if !(self.lambda_w >= 0.0 && self.lambda_w.is_finite()) {
            return bad("lambda_w", format!("{} must be >= 0", self.lambda_w));
        }
        Ok(())
    }
}

/// Which loss terms take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSelection {
    pub use_word_loss: bool,
    pub use_pos_loss: bool,
    pub use_neg_loss: bool,
}

impl Default for LossSelection {
    fn default() -> Self {
        Ablation::Full.selection()
    }
}

/// The six loss configurations of the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    PosOnly,
    NegOnly,
    PosNeg,
    WordPos,
    WordNeg,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::PosOnly,
        Ablation::NegOnly,
        Ablation::PosNeg,
        Ablation::WordPos,
        Ablation::WordNeg,
        Ablation::Full,
    ];

    pub fn selection(self) -> LossSelection {
        let (w, p, n) = match self {
            Ablation::PosOnly => (false, true, false),
            Ablation::NegOnly => (false, false, true),
            Ablation::PosNeg => (false, true, true),
            Ablation::WordPos => (true, true, false),
            Ablation::WordNeg => (true, false, true),
            Ablation::Full => (true, true, true),
        };
        LossSelection {
            use_word_loss: w,
            use_pos_loss: p,
            use_neg_loss: n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::PosOnly => "L_pos",
            Ablation::NegOnly => "L_neg",
            Ablation::PosNeg => "L_pos+L_neg",
            Ablation::WordPos => "L_w+L_pos",
            Ablation::WordNeg => "L_w+L_neg",
            Ablation::Full => "L_w+L_pos+L_neg",
        }
    }
}

/// Loss values of one step. `l_pos` / `l_neg` are batch means, so
/// `l_s = l_pos + l_neg` over the enabled terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_w: f64,
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_s: f64,
    pub total: f64,
}

/// Polarity-mismatch indicator: 0 when the prediction keeps the original
/// word's (strict) polarity, 1 otherwise. Predictions that are multi-polar
/// or unknown to the lexicon count as mismatches.
pub fn delta(original: &str, predicted: &str, lexicon: &Lexicon) -> Result<u8> {
    let orig = lexicon.polarity(original);
    if !orig.is_polar() {
        return Err(Error::invalid(format!(
            "`{original}` is not a masking candidate (polarity {orig:?})"
        )));
    }
    Ok(u8::from(lexicon.polarity(predicted) != orig))
}

/// Word loss value and its gradient w.r.t. each sentence's logits.
#[derive(Debug, Clone)]
pub struct WordLoss {
    pub value: f64,
    pub d_logits: Vec<Array2<f64>>,
    /// Gate value per masked position, per sentence.
    pub gates: Vec<Vec<u8>>,
}

/// `logits[i]` holds one row per masked position of `masked[i]`.
/// The gate is recomputed from the current argmax and carries no gradient.
pub fn word_level_loss(
    masked: &[MaskedSequence],
    logits: &[Array2<f64>],
    vocab: &Vocabulary,
    lexicon: &Lexicon,
) -> Result<WordLoss> {
    if masked.len() != logits.len() {
        return Err(Error::invalid(format!(
            "{} masked sequences but {} logit blocks",
            masked.len(),
            logits.len()
        )));
    }
    let mut value = 0.0;
    let mut d_logits = Vec::with_capacity(masked.len());
    let mut gates = Vec::with_capacity(masked.len());
    for (m, z) in masked.iter().zip(logits) {
        if z.nrows() != m.mask_positions.len() {
            return Err(Error::invalid(format!(
                "{} masked positions but {} logit rows",
                m.mask_positions.len(),
                z.nrows()
            )));
        }
        let mut grad = Array2::zeros(z.raw_dim());
        let mut g = Vec::with_capacity(z.nrows());
        if z.nrows() > 0 {
            let probs = softmax(z);
            for (r, (&orig_id, orig_word)) in m.original_ids.iter().zip(&m.original_words).enumerate() {
                let predicted = argmax(z.row(r));
                let gate = delta(orig_word, vocab.token(predicted).unwrap_or(""), lexicon)?;
                g.push(gate);
                if gate == 0 {
                    continue;
                }
                value -= log_softmax_at(z.row(r), orig_id);
                let mut row = grad.row_mut(r);
                row.assign(&probs.row(r));
                row[orig_id] -= 1.0;
            }
        }
        d_logits.push(grad);
        gates.push(g);
    }
    Ok(WordLoss { value, d_logits, gates })
}

fn log_softmax_at(row: ArrayView1<'_, f64>, idx: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[idx] - lse
}

/// Cosine similarity with its gradients w.r.t. both inputs.
pub fn cosine_grad(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero-norm embedding"));
    }
    let s = a.dot(&b) / (na * nb);
    let da = &b / (na * nb) - &a * (s / (na * na));
    let db = &a / (na * nb) - &b * (s / (nb * nb));
    Ok((s, da, db))
}

/// Pooled embeddings of a quadruple batch, one row per quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadEmbeddings {
    pub p: Array2<f64>,
    pub p_plus: Array2<f64>,
    pub n: Array2<f64>,
    pub n_plus: Array2<f64>,
}

impl QuadEmbeddings {
    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    fn check(&self) -> Result<()> {
        let n = self.p.nrows();
        if n == 0 {
            return Err(Error::invalid("empty quadruple batch"));
        }
        if [&self.p_plus, &self.n, &self.n_plus].iter().any(|m| m.dim() != self.p.dim()) {
            return Err(Error::invalid("quadruple embedding blocks differ in shape"));
        }
        Ok(())
    }

    /// Positive and negative pairs exchanged as `(n+, n, p, p+)`. The pair
    /// order is chosen so that the negative-anchored term of the result sees
    /// exactly the anchor, partner and repelled set of the original
    /// positive-anchored term (the two terms repel different blocks, so the
    /// naive `(n, n+, p, p+)` exchange has no such property).
    pub fn swapped(&self) -> QuadEmbeddings {
        QuadEmbeddings {
            p: self.n_plus.clone(),
            p_plus: self.n.clone(),
            n: self.p.clone(),
            n_plus: self.p_plus.clone(),
        }
    }
}

struct AnchoredLoss {
    losses: Vec<f64>,
    d_anchor: Array2<f64>,
    d_partner: Array2<f64>,
    d_repelled: Array2<f64>,
}

/// Shared body of both contrastive terms: anchor `i` is attracted to
/// `partner[i]` and repelled from every row of `repelled`. Gradients are
/// those of `sum_i weight * loss_i`.
fn anchored_loss(
    anchor: &Array2<f64>,
    partner: &Array2<f64>,
    repelled: &Array2<f64>,
    hp: &HyperParams,
    weight: f64,
) -> Result<AnchoredLoss> {
    let n = anchor.nrows();
    let mut out = AnchoredLoss {
        losses: Vec::with_capacity(n),
        d_anchor: Array2::zeros(anchor.raw_dim()),
        d_partner: Array2::zeros(partner.raw_dim()),
        d_repelled: Array2::zeros(repelled.raw_dim()),
    };
    let log_alpha = hp.alpha.ln();
    for i in 0..n {
        let a = anchor.row(i);
        let (s_pos, da_pos, dpartner) = cosine_grad(a, partner.row(i))?;
        let mut logits = vec![s_pos / hp.tau];
        let mut rep_grads = Vec::new();
        if hp.alpha > 0.0 {
            for j in 0..repelled.nrows() {
                let (s, da, dr) = cosine_grad(a, repelled.row(j))?;
                logits.push(log_alpha + s / hp.tau);
                rep_grads.push((da, dr));
            }
        }
        // loss = lse(logits) - logits[0], evaluated relative to the max
        let (imax, &max) = logits
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
        let rest: f64 = logits
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != imax)
            .map(|(_, v)| (v - max).exp())
            .sum();
        let loss = (max - logits[0]) + rest.ln_1p();
        out.losses.push(loss);

        if weight != 0.0 {
            let denom = 1.0 + rest;
            let w: Vec<f64> = logits.iter().map(|v| (v - max).exp() / denom).collect();
            let g0 = weight * (w[0] - 1.0) / hp.tau;
            out.d_anchor.row_mut(i).scaled_add(g0, &da_pos);
            out.d_partner.row_mut(i).scaled_add(g0, &dpartner);
            for (j, (da, dr)) in rep_grads.iter().enumerate() {
                let gj = weight * w[j + 1] / hp.tau;
                out.d_anchor.row_mut(i).scaled_add(gj, da);
                out.d_repelled.row_mut(j).scaled_add(gj, dr);
            }
        }
    }
    Ok(out)
}

/// Per-quadruple positive-anchored losses.
pub fn contrastive_pos(emb: &QuadEmbeddings, hp: &HyperParams) -> Result<Vec<f64>> {
    emb.check()?;
    Ok(anchored_loss(&emb.p, &emb.p_plus, &emb.n, hp, 0.0)?.losses)
}

/// Per-quadruple negative-anchored losses; repelled set is `{p+_j}`.
pub fn contrastive_neg(emb: &QuadEmbeddings, hp: &HyperParams) -> Result<Vec<f64>> {
    emb.check()?;
    Ok(anchored_loss(&emb.n, &emb.n_plus, &emb.p_plus, hp, 0.0)?.losses)
}

pub fn sentence_loss(l_pos: &[f64], l_neg: &[f64]) -> Result<f64> {
    if l_pos.len() != l_neg.len() {
        return Err(Error::invalid(format!(
            "l_pos has {} entries, l_neg {}",
            l_pos.len(),
            l_neg.len()
        )));
    }
    if l_pos.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let sum: f64 = l_pos.iter().zip(l_neg).map(|(a, b)| a + b).sum();
    Ok(sum / l_pos.len() as f64)
}

pub fn total_loss(l_w: f64, l_s: f64, hp: &HyperParams) -> Result<f64> {
    if !l_w.is_finite() || !l_s.is_finite() {
        return Err(Error::invalid(format!("non-finite loss input (l_w={l_w}, l_s={l_s})")));
    }
    Ok(hp.lambda_w * l_w + l_s)
}

/// Sentence-level loss of a batch and the gradient of its contribution to
/// the total objective w.r.t. each embedding block.
#[derive(Debug, Clone)]
pub struct SentenceLossOutput {
    pub l_pos: f64,
    pub l_neg: f64,
    pub l_s: f64,
    pub grads: QuadEmbeddings,
}

pub fn sentence_objective(emb: &QuadEmbeddings, hp: &HyperParams, sel: &LossSelection) -> Result<SentenceLossOutput> {
    emb.check()?;
    hp.validate()?;
    let n = emb.len() as f64;
    let zeros = || Array2::zeros(emb.p.raw_dim());
    let mut grads = QuadEmbeddings {
        p: zeros(),
        p_plus: zeros(),
        n: zeros(),
        n_plus: zeros(),
    };
    let pos = anchored_loss(&emb.p, &emb.p_plus, &emb.n, hp, if sel.use_pos_loss { 1.0 / n } else { 0.0 })?;
    let neg = anchored_loss(&emb.n, &emb.n_plus, &emb.p_plus, hp, if sel.use_neg_loss { 1.0 / n } else { 0.0 })?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let l_pos = if sel.use_pos_loss { mean(&pos.losses) } else { 0.0 };
    let l_neg = if sel.use_neg_loss { mean(&neg.losses) } else { 0.0 };
    if sel.use_pos_loss {
        grads.p += &pos.d_anchor;
        grads.p_plus += &pos.d_partner;
        grads.n += &pos.d_repelled;
    }
    if sel.use_neg_loss {
        grads.n += &neg.d_anchor;
        grads.n_plus += &neg.d_partner;
        grads.p_plus += &neg.d_repelled;
    }
    let l_s = match (sel.use_pos_loss, sel.use_neg_loss) {
        (true, true) => sentence_loss(&pos.losses, &neg.losses)?,
        _ => l_pos + l_neg,
    };
    Ok(SentenceLossOutput { l_pos, l_neg, l_s, grads })
}

/// Row-normalizes a matrix (used by tests and evaluation helpers).
pub fn normalize_rows(m: &Array2<f64>) -> Array2<f64> {
    let norms = m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    m / &norms.insert_axis(Axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Polarity;
    use crate::masking::{Tokenizer, TokenizerMode};
    use ndarray::array;
    use proptest::prelude::*;

    fn lexicon() -> Lexicon {
        Lexicon::from_records([
            ("good", 0.5, 0.0),
            ("great", 0.75, 0.0),
            ("bad", 0.0, 0.5),
            ("odd", 0.25, 0.25),
        ])
        .unwrap()
    }

    fn quad(p: &[f64], pp: &[f64], n: &[f64], np: &[f64]) -> QuadEmbeddings {
        let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
        QuadEmbeddings {
            p: row(p),
            p_plus: row(pp),
            n: row(n),
            n_plus: row(np),
        }
    }

    #[test]
    fn delta_cases() {
        let l = lexicon();
        assert_eq!(delta("good", "great", &l).unwrap(), 0);
        assert_eq!(delta("good", "bad", &l).unwrap(), 1);
        assert_eq!(delta("good", "zebra", &l).unwrap(), 1);
        assert!(delta("odd", "good", &l).is_err());
        assert!(delta("zebra", "good", &l).is_err());
    }

    #[test]
    fn delta_enumeration_matches_indicator() {
        // Every (original, predicted) polarity pair: 0 iff same strict polarity.
        let l = lexicon();
        let by_polarity = [
            (Polarity::Positive, "good"),
            (Polarity::Negative, "bad"),
            (Polarity::Multi, "odd"),
            (Polarity::None, "zebra"),
        ];
        for (po, wo) in &by_polarity[..2] {
            for (pp, wp) in &by_polarity {
                let expected = u8::from(po != pp);
                assert_eq!(delta(wo, wp, &l).unwrap(), expected, "{po:?} -> {pp:?}");
            }
        }
    }

    #[test]
    fn log2_symmetric_case() {
        let hp = HyperParams::default();
        // cos(p,p+) = cos(p,n) = 0.6 and cos(n,n+) = cos(n,p+) = -0.28
        let e = quad(&[1.0, 0.0], &[0.6, 0.8], &[0.6, -0.8], &[0.6, 0.8]);
        let lp = contrastive_pos(&e, &hp).unwrap();
        let ln = contrastive_neg(&e, &hp).unwrap();
        assert!((lp[0] - 2f64.ln()).abs() < 1e-12);
        assert!((ln[0] - 2f64.ln()).abs() < 1e-12);
        assert!((sentence_loss(&lp, &ln).unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_case() {
        let hp = HyperParams::default();
        let e = quad(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        let lp = contrastive_pos(&e, &hp).unwrap();
        // log(1 + e^-20) ~= e^-20
        let expected = (-20f64).exp().ln_1p();
        assert!((lp[0] - expected).abs() < 1e-12, "{}", lp[0]);
        assert!((lp[0] - 2.061_153_620_314_381e-9).abs() < 1e-18);
    }

    #[test]
    fn alpha_zero_is_exactly_zero() {
        let hp = HyperParams {
            alpha: 0.0,
            ..Default::default()
        };
        let e = quad(&[0.3, -1.0], &[0.2, 0.9], &[-0.5, 0.1], &[0.7, 0.7]);
        assert_eq!(contrastive_pos(&e, &hp).unwrap(), vec![0.0]);
        assert_eq!(contrastive_neg(&e, &hp).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_norm_rejected() {
        let e = quad(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]);
        assert!(contrastive_pos(&e, &HyperParams::default()).is_err());
    }

    #[test]
    fn sentence_and_total_arithmetic() {
        assert_eq!(sentence_loss(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(sentence_loss(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(sentence_loss(&[1.0], &[]).is_err());
        let hp = HyperParams::default();
        assert!((total_loss(2.0, 0.5, &hp).unwrap() - 0.8).abs() < 1e-15);
        let no_w = HyperParams { lambda_w: 0.0, ..hp };
        assert_eq!(total_loss(3.0, 0.7, &no_w).unwrap(), 0.7);
        assert_eq!(total_loss(0.0, 0.0, &hp).unwrap(), 0.0);
        assert!(total_loss(f64::NAN, 0.0, &hp).is_err());
    }

    fn word_fixture() -> (Vocabulary, MaskedSequence) {
        let tok = Tokenizer::build(&["good great bad film"], TokenizerMode::Word, 16, 1);
        let seq = tok.tokenize("good film");
        let m = MaskedSequence {
            input_ids: vec![seq.ids[0], crate::masking::MASK, seq.ids[2]],
            mask_positions: vec![1],
            original_ids: vec![seq.ids[1]],
            original_words: vec!["good".into()],
            skipped: false,
        };
        (tok.vocab().clone(), m)
    }

    #[test]
    fn uniform_logits_give_log_v() {
        let (vocab, m) = word_fixture();
        let v = vocab.len();
        let z = Array2::zeros((1, v));
        // argmax ties to id 0 ([PAD], no polarity) -> gate open
        let wl = word_level_loss(&[m], &[z], &vocab, &lexicon()).unwrap();
        assert!((wl.value - (v as f64).ln()).abs() < 1e-12);
        assert_eq!(wl.gates, vec![vec![1]]);
    }

    #[test]
    fn matching_polarity_closes_gate() {
        let (vocab, m) = word_fixture();
        let mut z = Array2::zeros((1, vocab.len()));
        z[[0, vocab.id("great").unwrap()]] = 3.0;
        let wl = word_level_loss(&[m.clone()], &[z.clone()], &vocab, &lexicon()).unwrap();
        assert_eq!(wl.value, 0.0);
        assert!(wl.d_logits[0].iter().all(|g| *g == 0.0));
        z[[0, vocab.id("bad").unwrap()]] = 5.0;
        let wl = word_level_loss(&[m], &[z], &vocab, &lexicon()).unwrap();
        assert!(wl.value > 0.0);
    }

    #[test]
    fn unmasked_sentences_contribute_nothing() {
        let (vocab, m) = word_fixture();
        let empty = MaskedSequence::unmasked(&Tokenizer::build(&["x"], TokenizerMode::Word, 4, 1).tokenize("x"));
        let wl = word_level_loss(&[empty.clone(), empty], &[Array2::zeros((0, 9)), Array2::zeros((0, 9))], &vocab, &lexicon()).unwrap();
        assert_eq!(wl.value, 0.0);
        assert!(word_level_loss(&[m], &[Array2::zeros((2, vocab.len()))], &vocab, &lexicon()).is_err());
    }

    #[test]
    fn swapped_batch_symmetry() {
        let hp = HyperParams::default();
        let e = QuadEmbeddings {
            p: array![[0.2, 0.5, -0.1], [1.0, 0.3, 0.2]],
            p_plus: array![[0.4, 0.1, 0.3], [-0.2, 0.8, 0.5]],
            n: array![[-0.6, 0.2, 0.9], [0.3, -0.3, 0.3]],
            n_plus: array![[0.1, -0.9, 0.4], [0.5, 0.5, -0.5]],
        };
        assert_eq!(contrastive_neg(&e.swapped(), &hp).unwrap(), contrastive_pos(&e, &hp).unwrap());
    }

    #[test]
    fn sentence_objective_gradient_matches_finite_differences() {
        let hp = HyperParams { tau: 0.5, alpha: 1.3, lambda_w: 0.15 };
        let sel = LossSelection::default();
        let e = QuadEmbeddings {
            p: array![[0.2, 0.5, -0.1], [1.0, 0.3, 0.2]],
            p_plus: array![[0.4, 0.1, 0.3], [-0.2, 0.8, 0.5]],
            n: array![[-0.6, 0.2, 0.9], [0.3, -0.3, 0.3]],
            n_plus: array![[0.1, -0.9, 0.4], [0.5, 0.5, -0.5]],
        };
        let out = sentence_objective(&e, &hp, &sel).unwrap();
        let h = 1e-6;
        for block in 0..4 {
            for idx in 0..6 {
                let (r, c) = (idx / 3, idx % 3);
                let bump = |delta: f64| {
                    let mut x = e.clone();
                    let m = [&mut x.p, &mut x.p_plus, &mut x.n, &mut x.n_plus];
                    let target = m.into_iter().nth(block).unwrap();
                    target[[r, c]] += delta;
                    sentence_objective(&x, &hp, &sel).unwrap().l_s
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                let g = [&out.grads.p, &out.grads.p_plus, &out.grads.n, &out.grads.n_plus][block];
                assert!((numeric - g[[r, c]]).abs() < 1e-7, "block {block} [{r},{c}]");
            }
        }
    }

    fn arb_quads(n: usize) -> impl Strategy<Value = QuadEmbeddings> {
        let m = move || proptest::collection::vec(0.1f64..1.0, n * 4).prop_map(move |v| {
            // first coordinate strictly positive keeps norms away from 0
            Array2::from_shape_vec((n, 4), v).unwrap()
        });
        (m(), m(), m(), m()).prop_map(|(p, pp, nn, np)| QuadEmbeddings { p, p_plus: pp, n: nn, n_plus: np })
    }

    proptest! {
        #[test]
        fn losses_nonnegative_and_scale_invariant(e in arb_quads(3), k in 0.01f64..100.0, tau in 0.01f64..2.0, alpha in 0.0f64..3.0) {
            let hp = HyperParams { tau, alpha, lambda_w: 0.15 };
            let lp = contrastive_pos(&e, &hp).unwrap();
            let ln = contrastive_neg(&e, &hp).unwrap();
            for v in lp.iter().chain(&ln) {
                prop_assert!(v.is_finite() && *v >= 0.0);
            }
            let scaled = QuadEmbeddings { p: &e.p * k, p_plus: &e.p_plus * k, n: &e.n * k, n_plus: &e.n_plus * k };
            for (a, b) in lp.iter().zip(contrastive_pos(&scaled, &hp).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
            for (a, b) in ln.iter().zip(contrastive_neg(&scaled, &hp).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn repelled_similarity_is_monotone(theta in 0.05f64..1.4, step in 0.01f64..0.1) {
            // p at angle 0, n at angle theta; moving n towards p raises sim(p, n).
            let hp = HyperParams { tau: 0.5, ..Default::default() };
            let make = |t: f64| quad(&[1.0, 0.0], &[0.5, 0.5], &[t.cos(), t.sin()], &[0.0, 1.0]);
            let far = contrastive_pos(&make(theta + step), &hp).unwrap()[0];
            let near = contrastive_pos(&make(theta), &hp).unwrap()[0];
            prop_assert!(near > far);
        }
    }
}
