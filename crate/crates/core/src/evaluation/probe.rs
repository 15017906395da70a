//! Linear probing of frozen embeddings with an L2-regularized logistic
//! classifier.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Embeddings with 0/1 labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSplit<'a> {
    pub x: &'a Array2<f64>,
    pub y: &'a [u8],
}

impl LabeledSplit<'_> {
    fn check(&self, name: &str) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::invalid(format!(
                "{name}: {} embeddings but {} labels",
                self.x.nrows(),
                self.y.len()
            )));
        }
        if self.y.is_empty() {
            return Err(Error::invalid(format!("{name} split is empty")));
        }
        if self.y.iter().any(|&l| l > 1) {
            return Err(Error::invalid(format!("{name}: labels must be 0 or 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Test accuracy of the selected classifier.
    pub accuracy: f64,
    pub regularization: f64,
    pub valid_accuracy: f64,
    /// `(regularization, validation accuracy)` for every grid value.
    pub grid: Vec<(f64, f64)>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

/// Fitted weights; `bias` is unregularized.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub weights: DVector<f64>,
    pub bias: f64,
}

impl LogisticModel {
    pub fn decision(&self, x: &Array2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| r.iter().zip(self.weights.iter()).map(|(a, b)| a * b).sum::<f64>() + self.bias)
            .collect()
    }

    pub fn accuracy(&self, split: LabeledSplit<'_>) -> f64 {
        let hits = self
            .decision(split.x)
            .iter()
            .zip(split.y)
            .filter(|(z, &y)| u8::from(**z > 0.0) == y)
            .count();
        hits as f64 / split.y.len() as f64
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Minimizes `mean log-loss + lambda/2 * |w|^2` by damped Newton steps.
pub fn fit_logistic(train: LabeledSplit<'_>, lambda: f64) -> Result<LogisticModel> {
    train.check("train")?;
    if !(lambda > 0.0) {
        return Err(Error::invalid("regularization must be positive"));
    }
    let ones = train.y.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == train.y.len() {
        return Err(Error::invalid("training set has a single class"));
    }
    let (n, d) = train.x.dim();
    // augmented design with a trailing bias column
    let xa = DMatrix::from_fn(n, d + 1, |i, j| if j < d { train.x[[i, j]] } else { 1.0 });
    let y = DVector::from_iterator(n, train.y.iter().map(|&l| f64::from(l)));
    let reg = DVector::from_fn(d + 1, |j, _| if j < d { lambda } else { 0.0 });
    let objective = |beta: &DVector<f64>| {
        let z = &xa * beta;
        let loss: f64 = z.iter().zip(y.iter()).map(|(z, y)| log1p_exp(*z) - y * z).sum::<f64>() / n as f64;
        loss + 0.5 * beta.iter().zip(reg.iter()).map(|(b, r)| r * b * b).sum::<f64>()
    };
    let mut beta = DVector::zeros(d + 1);
    let mut f = objective(&beta);
    for _ in 0..100 {
        let z = &xa * &beta;
        let p = z.map(sigmoid);
        let grad = xa.transpose() * (&p - &y) / n as f64 + reg.component_mul(&beta);
        if grad.norm() < 1e-10 {
            break;
        }
        let w = p.map(|p| (p * (1.0 - p)).max(1e-12) / n as f64);
        let mut hess = xa.transpose() * DMatrix::from_diagonal(&w) * &xa;
        for j in 0..=d {
            // tiny ridge on the bias keeps the system definite
            hess[(j, j)] += reg[j].max(1e-10);
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::invalid("probe Hessian not positive definite"))?
            .solve(&grad);
        let mut t = 1.0;
        let slope = grad.dot(&step);
        loop {
            let cand = &beta - &step * t;
            let fc = objective(&cand);
            if fc <= f - 1e-4 * t * slope || t < 1e-8 {
                beta = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(LogisticModel {
        weights: beta.rows(0, d).into_owned(),
        bias: beta[d],
    })
}

/// Fits one classifier per grid value on `train`, keeps the first with the
/// best validation accuracy, and only then touches the test split.
pub fn linear_probe(
    train: LabeledSplit<'_>,
    valid: LabeledSplit<'_>,
    test: LabeledSplit<'_>,
    grid: &[f64],
) -> Result<ProbeResult> {
    train.check("train")?;
    valid.check("valid")?;
    test.check("test")?;
    if grid.is_empty() {
        return Err(Error::invalid("empty regularization grid"));
    }
    let d = train.x.ncols();
    if valid.x.ncols() != d || test.x.ncols() != d {
        return Err(Error::invalid("splits have different embedding widths"));
    }
    let mut best: Option<(LogisticModel, f64, f64)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = fit_logistic(train, lambda)?;
        let acc = model.accuracy(valid);
        scores.push((lambda, acc));
        if best.as_ref().is_none_or(|b| acc > b.2) {
            best = Some((model, lambda, acc));
        }
    }
    let (model, regularization, valid_accuracy) = best.expect("non-empty grid");
    Ok(ProbeResult {
        accuracy: model.accuracy(test),
        regularization,
        valid_accuracy,
        grid: scores,
        n_train: train.y.len(),
        n_valid: valid.y.len(),
        n_test: test.y.len(),
    })
}
