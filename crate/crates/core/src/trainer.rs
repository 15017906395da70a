//! Pre-training over quadruple batches with periodic sentiment-similarity
//! validation and best-checkpoint selection.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Quadruple, SgtsPair};
use crate::encoder::{accumulate_grads, save_checkpoint, Backbone, CheckpointMeta, Grads, Trace};
use crate::error::{Error, Result};
use crate::evaluation::sgts_score;
use crate::lexicon::Lexicon;
use crate::masking::{mask_sequence, MaskedSequence, DEFAULT_MASK_RATIO};
use crate::model::Model;
use crate::objectives::{
    sentence_objective, total_loss, word_level_loss, HyperParams, LossBreakdown, LossSelection, QuadEmbeddings,
};
use crate::optim::{AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Quadruples per step.
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_interval: usize,
    pub seed: u64,
    /// Where step checkpoints and the log go; `None` keeps everything in
    /// memory.
    pub output_dir: Option<PathBuf>,
    pub mask_ratio: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    pub losses: LossSelection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            batch_size: 64,
            max_steps: 20_000,
            eval_interval: 500,
            seed: 42,
            output_dir: None,
            mask_ratio: DEFAULT_MASK_RATIO,
            weight_decay: 0.01,
            clip_norm: Some(1.0),
            losses: LossSelection::default(),
        }
    }
}

impl TrainConfig {
    /// Small-scale profile for a from-scratch 4-layer encoder on a CPU.
    /// The learning rate is raised because nothing is pre-trained.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            batch_size: 16,
            max_steps: 1000,
            eval_interval: 50,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", format!("{} must be a finite value >= 0", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if self.eval_interval == 0 {
            return bad("eval_interval", "must be positive".into());
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return bad("mask_ratio", format!("{} not in (0,1]", self.mask_ratio));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", format!("{} must be >= 0", self.weight_decay));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm", format!("{c} must be > 0"));
            }
        }
        let l = self.losses;
        if !(l.use_word_loss || l.use_pos_loss || l.use_neg_loss) {
            return bad("losses", "at least one loss term must be enabled".into());
        }
        Ok(())
    }

    fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.learning_rate,
            weight_decay: self.weight_decay,
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub losses: LossBreakdown,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub sgts: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    /// `steps[i]` is the loss of update `i + 1`, measured before it.
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub best_step: usize,
    pub best_sgts: f64,
}

#[derive(Serialize)]
struct JsonlLine {
    step: usize,
    l_w: Option<f64>,
    l_s: Option<f64>,
    total: Option<f64>,
    sgts: Option<f64>,
}

impl TrainingLog {
    /// One line per step; evaluation scores ride on the line of the step
    /// they were measured at (step 0 is the untrained model).
    pub fn to_jsonl(&self) -> String {
        let mut lines = Vec::new();
        let mut evals = self.evals.iter().peekable();
        let mut emit = |step: usize, losses: Option<&LossBreakdown>, evals: &mut std::iter::Peekable<std::slice::Iter<'_, EvalRecord>>| {
            let sgts = evals.next_if(|e| e.step == step).map(|e| e.sgts);
            if losses.is_some() || sgts.is_some() {
                let line = JsonlLine {
                    step,
                    l_w: losses.map(|l| l.l_w),
                    l_s: losses.map(|l| l.l_s),
                    total: losses.map(|l| l.total),
                    sgts,
                };
                lines.push(serde_json::to_string(&line).expect("serializable"));
            }
        };
        emit(0, None, &mut evals);
        for rec in &self.steps {
            emit(rec.step, Some(&rec.losses), &mut evals);
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Token ids of one quadruple batch: the clean sentences in block order
/// `p, p+, n, n+`, and (when the word loss is on) a masked copy of each.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub clean: Vec<Vec<usize>>,
    pub masked: Vec<MaskedSequence>,
}

impl PreparedBatch {
    pub fn quadruples(&self) -> usize {
        self.clean.len() / 4
    }
}

pub fn prepare_batch(
    model: &Model,
    batch: &[Quadruple],
    lexicon: &Lexicon,
    mask_ratio: f64,
    with_masks: bool,
    rng: &mut ChaCha8Rng,
) -> Result<PreparedBatch> {
    if batch.is_empty() {
        return Err(Error::invalid("empty quadruple batch"));
    }
    let blocks: [fn(&Quadruple) -> &str; 4] = [|q| &q.p.text, |q| &q.p_plus.text, |q| &q.n.text, |q| &q.n_plus.text];
    let seqs: Vec<_> = blocks
        .iter()
        .flat_map(|f| batch.iter().map(move |q| model.tokenizer.tokenize(f(q))))
        .collect();
    let masked = if with_masks {
        seqs.iter()
            .map(|s| mask_sequence(s, lexicon, mask_ratio, rng))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    Ok(PreparedBatch {
        clean: seqs.into_iter().map(|s| s.ids).collect(),
        masked,
    })
}

enum Job<'a> {
    Clean(&'a Trace, Array2<f64>),
    Masked(&'a Trace, &'a [usize], Array2<f64>),
}

fn forward_all(model: &Model, ids: &[&[usize]]) -> Result<Vec<Trace>> {
    ids.par_iter().map(|ids| model.encoder.forward(ids)).collect()
}

/// Loss breakdown of a prepared batch and the gradient of `total` w.r.t.
/// every encoder parameter. Gates are evaluated at the current parameters
/// and treated as constants.
pub fn loss_and_grads(
    model: &Model,
    batch: &PreparedBatch,
    lexicon: &Lexicon,
    hp: &HyperParams,
    sel: &LossSelection,
) -> Result<(LossBreakdown, Grads)> {
    hp.validate()?;
    let n = batch.quadruples();
    if n == 0 || batch.clean.len() != 4 * n {
        return Err(Error::invalid("prepared batch must hold four blocks of equal size"));
    }
    let enc = &model.encoder;
    let mut out = LossBreakdown::default();
    let mut jobs: Vec<Job<'_>> = Vec::new();

    let contrastive = sel.use_pos_loss || sel.use_neg_loss;
    let clean_ids: Vec<&[usize]> = if contrastive { batch.clean.iter().map(Vec::as_slice).collect() } else { Vec::new() };
    let clean_traces = forward_all(model, &clean_ids)?;
    if contrastive {
        let pooled = Array2::from_shape_fn((4 * n, enc.config().hidden_dim), |(i, j)| clean_traces[i].hidden[[0, j]]);
        let block = |b: usize| pooled.slice(ndarray::s![b * n..(b + 1) * n, ..]).to_owned();
        let emb = QuadEmbeddings {
            p: block(0),
            p_plus: block(1),
            n: block(2),
            n_plus: block(3),
        };
        let s = sentence_objective(&emb, hp, sel)?;
        out.l_pos = s.l_pos;
        out.l_neg = s.l_neg;
        out.l_s = s.l_s;
        let grads = [&s.grads.p, &s.grads.p_plus, &s.grads.n, &s.grads.n_plus];
        for (i, t) in clean_traces.iter().enumerate() {
            let mut dh = Array2::zeros(t.hidden.raw_dim());
            dh.row_mut(0).assign(&grads[i / n].row(i % n));
            jobs.push(Job::Clean(t, dh));
        }
    }

    let active: Vec<&MaskedSequence> = if sel.use_word_loss {
        if batch.masked.len() != batch.clean.len() {
            return Err(Error::invalid("word loss enabled but the batch carries no masks"));
        }
        batch.masked.iter().filter(|m| !m.skipped).collect()
    } else {
        Vec::new()
    };
    let masked_ids: Vec<&[usize]> = active.iter().map(|m| m.input_ids.as_slice()).collect();
    let masked_traces = forward_all(model, &masked_ids)?;
    if sel.use_word_loss {
        let logits = masked_traces
            .iter()
            .zip(&active)
            .map(|(t, m)| enc.mlm_logits(t.hidden.view(), &m.mask_positions))
            .collect::<Result<Vec<_>>>()?;
        let owned: Vec<MaskedSequence> = active.iter().map(|m| (*m).clone()).collect();
        let w = word_level_loss(&owned, &logits, model.tokenizer.vocab(), lexicon)?;
        out.l_w = w.value;
        for ((t, m), d) in masked_traces.iter().zip(&active).zip(w.d_logits) {
            jobs.push(Job::Masked(t, &m.mask_positions, d * hp.lambda_w));
        }
    }
    out.total = total_loss(out.l_w, out.l_s, hp)?;

    let grads = accumulate_grads(enc.params(), &jobs, |job, g| {
        match job {
            Job::Clean(t, dh) => enc.backward(t, dh, g),
            Job::Masked(t, positions, d_logits) => {
                let dh = enc.mlm_backward(t.hidden.view(), positions, d_logits, g);
                enc.backward(t, &dh, g);
            }
        }
        Ok(())
    })?;
    Ok((out, grads))
}

/// Loss of a prepared batch (gradients discarded).
pub fn batch_loss(model: &Model, batch: &PreparedBatch, lexicon: &Lexicon, hp: &HyperParams, sel: &LossSelection) -> Result<LossBreakdown> {
    loss_and_grads(model, batch, lexicon, hp, sel).map(|(l, _)| l)
}

/// One optimizer update; returns the breakdown measured before it and the
/// pre-clipping gradient norm.
pub fn training_step(
    model: &mut Model,
    opt: &mut AdamW,
    batch: &PreparedBatch,
    lexicon: &Lexicon,
    hp: &HyperParams,
    sel: &LossSelection,
) -> Result<(LossBreakdown, f64)> {
    let (losses, grads) = loss_and_grads(model, batch, lexicon, hp, sel)?;
    if !grads.is_finite() {
        return Err(Error::invalid("non-finite gradient"));
    }
    let norm = opt.step(model.encoder.params_mut(), &grads);
    Ok((losses, norm))
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join("checkpoints").join(format!("step_{step:06}.smck"))
}

/// Runs `max_steps` updates over reshuffled quadruple batches. The model
/// is scored on `benchmark` before training, every `eval_interval` steps
/// and after the last step; the best-scoring state (first one on ties) is
/// returned with the log.
pub fn pretrain(
    mut model: Model,
    quads: &[Quadruple],
    benchmark: &[SgtsPair],
    lexicon: &Lexicon,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    hp.validate()?;
    if quads.is_empty() {
        return Err(Error::invalid("no training quadruples"));
    }
    if benchmark.is_empty() {
        return Err(Error::invalid("empty validation benchmark"));
    }
    let mut opt = AdamW::new(cfg.optimizer(), model.encoder.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..quads.len()).collect();
    let per_epoch = (quads.len() / cfg.batch_size).max(1);
    let mut log = TrainingLog::default();
    let mut best = model.clone();

    let evaluate = |model: &Model, step: usize, log: &mut TrainingLog, best: &mut Model| -> Result<()> {
        let sgts = sgts_score(model, benchmark)?.spearman_rho;
        if !sgts.is_finite() {
            return Err(Error::Divergence {
                step,
                what: "non-finite validation score".into(),
            });
        }
        if log.evals.is_empty() || sgts > log.best_sgts {
            log.best_sgts = sgts;
            log.best_step = step;
            *best = model.clone();
        }
        log.evals.push(EvalRecord { step, sgts });
        if let Some(dir) = &cfg.output_dir {
            let meta = CheckpointMeta {
                step: Some(step),
                sgts: Some(sgts),
            };
            save_checkpoint(model, &meta, checkpoint_path(dir, step))?;
        }
        Ok(())
    };

    evaluate(&model, 0, &mut log, &mut best)?;
    for step in 1..=cfg.max_steps {
        let slot = (step - 1) % per_epoch;
        if slot == 0 {
            order.shuffle(&mut rng);
        }
        let idx = &order[slot * cfg.batch_size..((slot + 1) * cfg.batch_size).min(order.len())];
        let batch: Vec<Quadruple> = idx.iter().map(|&i| quads[i].clone()).collect();
        let prepared = prepare_batch(&model, &batch, lexicon, cfg.mask_ratio, cfg.losses.use_word_loss, &mut rng)?;
        let (losses, grad_norm) = training_step(&mut model, &mut opt, &prepared, lexicon, hp, &cfg.losses).map_err(|e| {
            Error::Divergence {
                step,
                what: e.to_string(),
            }
        })?;
        if !losses.total.is_finite() {
            return Err(Error::Divergence {
                step,
                what: format!("non-finite loss {losses:?}"),
            });
        }
        log.steps.push(StepRecord { step, losses, grad_norm });
        if step % cfg.eval_interval == 0 || step == cfg.max_steps {
            evaluate(&model, step, &mut log, &mut best)?;
        }
    }
    if let Some(dir) = &cfg.output_dir {
        let path = dir.join("training_log.jsonl");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(log.to_jsonl().as_bytes()).map_err(|e| Error::io(&path, e))?;
        let meta = CheckpointMeta {
            step: Some(log.best_step),
            sgts: Some(log.best_sgts),
        };
        save_checkpoint(&best, &meta, dir.join("best.smck"))?;
    }
    Ok((best, log))
}

/// Mean pooled embedding norm; a cheap health signal for logs.
pub fn mean_embedding_norm(model: &Model, ids: &[Vec<usize>]) -> Result<f64> {
    let emb = model.encoder.embed(ids)?;
    Ok(emb.map_axis(Axis(1), |r| r.dot(&r).sqrt()).mean().unwrap_or(0.0))
}
