//! Forward and backward kernels for the transformer blocks. Every kernel
//! works on one sentence (rows = token positions).

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, istd) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *istd = 1.0 / (var + LN_EPS).sqrt();
        row *= *istd;
    }
    let y = &xhat * &gain.row(0) + &bias.row(0);
    (y, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates into dgain / dbias.
pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    dgain.row_mut(0).scaled_add(1.0, &(dy * &cache.xhat).sum_axis(Axis(0)));
    dbias.row_mut(0).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    let dxhat = dy * &gain.row(0);
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let g = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        let istd = cache.inv_std[i];
        Zip::from(dx.row_mut(i))
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = istd * (gi - mean_g - xi * mean_gx));
    }
    dx
}

pub(crate) fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut y = x.dot(w);
    y += &b.row(0);
    y
}

/// Returns dx; accumulates into dw / db.
pub(crate) fn linear_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, dw);
    db.row_mut(0).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    dy.dot(&w.t())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()))
}

pub(crate) fn gelu_backward(dy: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let mut out = dy.clone();
    Zip::from(&mut out).and(x).for_each(|g, &v| {
        let t = (GELU_C * (v + GELU_K * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
        *g *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    out
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

pub(crate) struct AttnCache {
    probs: Vec<Array2<f64>>,
}

/// Multi-head scaled dot-product self attention over all positions of one
/// sentence (no padding exists at this level).
pub(crate) fn attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>, heads: usize) -> (Array2<f64>, AttnCache) {
    let (len, dim) = q.dim();
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = Array2::zeros((len, dim));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut p = q.slice(cols).dot(&k.slice(cols).t());
        p *= scale;
        softmax_rows(&mut p);
        out.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }
    (out, AttnCache { probs })
}

pub(crate) fn attention_backward(
    dout: &Array2<f64>,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    cache: &AttnCache,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (len, dim) = q.dim();
    let heads = cache.probs.len();
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((len, dim));
    let mut dk = Array2::zeros((len, dim));
    let mut dv = Array2::zeros((len, dim));
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dout_h: ArrayView2<f64> = dout.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&dout_h));
        let dp = dout_h.dot(&v.slice(cols).t());
        // softmax jacobian, row-wise
        let mut ds = &dp * p;
        let row_dot = ds.sum_axis(Axis(1));
        ds -= &(p * &row_dot.insert_axis(Axis(1)));
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&q.slice(cols)));
    }
    (dq, dk, dv)
}
