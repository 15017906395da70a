//! Few-shot fine-tuning: encoder plus a single-logit head trained on `k`
//! shots per class, early-stopped on a held-out validation sample.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_fewshot, Example, Label};
use crate::encoder::accumulate_grads;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::{AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotConfig {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub val_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub weight_decay: f64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        FewShotConfig {
            k: 1,
            seeds: (0..10).collect(),
            val_size: 500,
            batch_size: 16,
            learning_rate: 1e-5,
            max_epochs: 100,
            eval_every: 20,
            patience: 5,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub test_accuracy: f64,
    /// Validation accuracy of the untouched encoder with the initial head.
    pub initial_valid_accuracy: f64,
    pub best_valid_accuracy: f64,
    pub best_step: usize,
    pub steps_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    pub k: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub per_seed: Vec<SeedOutcome>,
}

#[derive(Clone)]
struct Head {
    /// `(d, 1)` so that weight decay applies to it.
    w: Array2<f64>,
    b: f64,
}

impl Head {
    /// Nearest-centroid classifier: the boundary is the perpendicular
    /// bisector of the two class means.
    fn from_centroids(pooled: &Array2<f64>, labels: &[Label]) -> Head {
        let d = pooled.ncols();
        let mut mu = [Array1::<f64>::zeros(d), Array1::zeros(d)];
        let mut count = [0.0f64; 2];
        for (row, l) in pooled.rows().into_iter().zip(labels) {
            mu[l.as_class()] += &row;
            count[l.as_class()] += 1.0;
        }
        for c in 0..2 {
            mu[c] /= count[c].max(1.0);
        }
        let w = &mu[1] - &mu[0];
        let b = -(mu[1].dot(&mu[1]) - mu[0].dot(&mu[0])) / 2.0;
        Head {
            w: w.insert_axis(Axis(1)),
            b,
        }
    }

    fn logits(&self, pooled: &Array2<f64>) -> Array1<f64> {
        pooled.dot(&self.w).column(0).mapv(|z| z + self.b)
    }
}

fn pooled(model: &Model, texts: &[&str]) -> Result<Array2<f64>> {
    model.encoder.embed(&model.token_ids(texts))
}

fn accuracy(model: &Model, head: &Head, ids: &[Vec<usize>], labels: &[Label]) -> Result<f64> {
    let pooled = model.encoder.embed(ids)?;
    let hits = head
        .logits(&pooled)
        .iter()
        .zip(labels)
        .filter(|(z, l)| Label::from_class(usize::from(**z > 0.0)) == **l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Encoded {
    ids: Vec<Vec<usize>>,
    labels: Vec<Label>,
}

impl Encoded {
    fn new(model: &Model, examples: &[Example]) -> Encoded {
        let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
        Encoded {
            ids: model.token_ids(&texts),
            labels: examples.iter().map(|e| e.label).collect(),
        }
    }
}

fn run_seed(model: &Model, train: &[Example], test: &Encoded, cfg: &FewShotConfig, seed: u64) -> Result<SeedOutcome> {
    let (shots, valid) = sample_fewshot(train, cfg.k, cfg.val_size, seed)?;
    let shots = Encoded::new(model, &shots);
    let valid = Encoded::new(model, &valid);
    let mut model = model.clone();
    let mut head = Head::from_centroids(&model.encoder.embed(&shots.ids)?, &shots.labels);

    let opt_cfg = AdamWConfig {
        lr: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..Default::default()
    };
    let mut opt = AdamW::new(opt_cfg, model.encoder.params());
    let mut head_store = crate::encoder::ParamStore::new();
    let w_id = head_store.add("head_w", head.w.clone());
    let b_id = head_store.add("head_b", Array2::from_elem((1, 1), head.b));
    let mut head_opt = AdamW::new(opt_cfg, &head_store);

    let initial = accuracy(&model, &head, &valid.ids, &valid.labels)?;
    let mut best = (initial, 0usize, model.clone(), head.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..shots.ids.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
    let mut step = 0;
    'epochs: for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let n = batch.len() as f64;
            let enc = &model.encoder;
            let traces = batch
                .par_iter()
                .map(|&i| enc.forward(&shots.ids[i]))
                .collect::<Result<Vec<_>>>()?;
            // d(mean BCE)/d(logit) = (sigmoid(z) - y) / n
            let dz: Vec<f64> = traces
                .iter()
                .zip(batch)
                .map(|(t, &i)| {
                    let z = t.hidden.row(0).dot(&head.w.column(0)) + head.b;
                    (sigmoid(z) - shots.labels[i].as_class() as f64) / n
                })
                .collect();
            let items: Vec<usize> = (0..batch.len()).collect();
            let grads = accumulate_grads(enc.params(), &items, |&j, g| {
                let mut dh = Array2::zeros(traces[j].hidden.raw_dim());
                dh.row_mut(0).scaled_add(dz[j], &head.w.column(0));
                enc.backward(&traces[j], &dh, g);
                Ok(())
            })?;
            let mut head_grads = head_store.zeros_like();
            for (t, &d) in traces.iter().zip(&dz) {
                head_grads.get_mut(w_id).column_mut(0).scaled_add(d, &t.hidden.row(0));
                head_grads.get_mut(b_id)[[0, 0]] += d;
            }
            if !grads.is_finite() || !head_grads.is_finite() {
                return Err(Error::Divergence {
                    step,
                    what: "non-finite few-shot gradient".into(),
                });
            }
            opt.step(model.encoder.params_mut(), &grads);
            head_opt.step(&mut head_store, &head_grads);
            head.w.assign(head_store.get(w_id));
            head.b = head_store.get(b_id)[[0, 0]];
            step += 1;
            if step % cfg.eval_every == 0 {
                let acc = accuracy(&model, &head, &valid.ids, &valid.labels)?;
                if acc > best.0 {
                    best = (acc, step, model.clone(), head.clone());
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        break 'epochs;
                    }
                }
            }
        }
    }
    let (best_acc, best_step, best_model, best_head) = best;
    Ok(SeedOutcome {
        seed,
        test_accuracy: accuracy(&best_model, &best_head, &test.ids, &test.labels)?,
        initial_valid_accuracy: initial,
        best_valid_accuracy: best_acc,
        best_step,
        steps_run: step,
    })
}

/// Runs one few-shot experiment per seed and aggregates test accuracy.
/// Seeds run one after another; parallelism is inside each run.
pub fn fewshot_eval(model: &Model, train: &[Example], test: &[Example], cfg: &FewShotConfig) -> Result<FewShotResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("few-shot needs at least one seed"));
    }
    if cfg.batch_size == 0 || cfg.eval_every == 0 || cfg.patience == 0 {
        return Err(Error::invalid("batch_size, eval_every and patience must be positive"));
    }
    if test.is_empty() {
        return Err(Error::invalid("few-shot test split is empty"));
    }
    let test = Encoded::new(model, test);
    let per_seed = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(model, train, &test, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let accuracies: Vec<f64> = per_seed.iter().map(|s| s.test_accuracy).collect();
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accuracies.len() as f64).sqrt();
    Ok(FewShotResult {
        k: cfg.k,
        accuracies,
        mean,
        std,
        per_seed,
    })
}

/// Test accuracy of the untouched encoder under the nearest-centroid head
/// fitted on the shots drawn for `seed`.
pub fn frozen_accuracy(model: &Model, train: &[Example], test: &[Example], k: usize, seed: u64) -> Result<f64> {
    let (shots, _) = sample_fewshot(train, k, 0, seed)?;
    let texts: Vec<&str> = shots.iter().map(|e| e.text.as_str()).collect();
    let labels: Vec<Label> = shots.iter().map(|e| e.label).collect();
    let head = Head::from_centroids(&pooled(model, &texts)?, &labels);
    let test = Encoded::new(model, test);
    accuracy(model, &head, &test.ids, &test.labels)
}
