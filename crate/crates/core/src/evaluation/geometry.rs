//! Embedding-space geometry: alignment/uniformity, PCA projection and
//! cosine nearest neighbours.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::stats::cosine;
use crate::error::{Error, Result};

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean squared distance between paired rows of `a` and `b`. Inputs are
/// expected to be unit-normalized.
pub fn alignment(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Err(Error::invalid("alignment needs at least one pair"));
    }
    if a.dim() != b.dim() {
        return Err(Error::invalid("alignment pair blocks differ in shape"));
    }
    let total: f64 = a.rows().into_iter().zip(b.rows()).map(|(x, y)| sq_dist(x, y)).sum();
    Ok(total / a.nrows() as f64)
}

/// `log mean_{i<j} exp(-2 ||x_i - x_j||^2)` over distinct rows.
pub fn uniformity(emb: &Array2<f64>) -> Result<f64> {
    let n = emb.nrows();
    if n < 2 {
        return Err(Error::invalid("uniformity needs at least 2 embeddings"));
    }
    // log-sum-exp over pairs for stability
    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            terms.push(-2.0 * sq_dist(emb.row(i), emb.row(j)));
        }
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + (sum / terms.len() as f64).ln())
}

#[derive(Debug, Clone)]
pub struct PcaProjection {
    /// `(n, k)` coordinates.
    pub coords: Array2<f64>,
    /// Variance captured by each axis, descending.
    pub explained_variance: Vec<f64>,
    /// `(k, d)` unit principal directions.
    pub components: Array2<f64>,
    /// Mean removed before projection.
    pub mean: Array1<f64>,
    /// Set when the centered data has rank below `k`; the missing axes
    /// are zero-filled.
    pub rank_deficient: bool,
}

/// Mean-centered projection onto the top `k` principal directions.
pub fn pca_project(emb: &Array2<f64>, k: usize) -> Result<PcaProjection> {
    let (n, d) = emb.dim();
    if k == 0 || n < k + 1 {
        return Err(Error::invalid(format!("PCA to {k} axes needs at least {} points, got {n}", k + 1)));
    }
    let mean = emb.mean_axis(Axis(0)).expect("non-empty");
    let centered = emb - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-10 + 1e-300;
    let mut components = Array2::zeros((k, d));
    let mut explained = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for (axis, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if axis >= d || lambda <= tol {
            rank_deficient = true;
            explained.push(0.0);
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        // deterministic sign: largest-magnitude entry positive
        let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[axis, j]] = sign * v[j];
        }
        explained.push(lambda);
    }
    if k > d {
        rank_deficient = true;
    }
    let coords = centered.dot(&components.t());
    Ok(PcaProjection {
        coords,
        explained_variance: explained,
        components,
        mean,
        rank_deficient,
    })
}

/// Writes `x,y[,..],label` rows.
pub fn write_projection_csv(path: impl AsRef<Path>, coords: &Array2<f64>, labels: &[String]) -> Result<()> {
    let path = path.as_ref();
    let k = coords.ncols();
    let mut out = String::new();
    let header: Vec<String> = (0..k).map(|i| format!("pc{}", i + 1)).collect();
    writeln!(out, "{},label", header.join(",")).unwrap();
    for (row, label) in coords.rows().into_iter().zip(labels) {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{}", vals.join(","), label).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Minimal SVG scatter of the first two coordinates, one colour per label.
pub fn render_scatter_svg(coords: &Array2<f64>, labels: &[String]) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 24.0;
    const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut distinct: Vec<&str> = labels.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let xs = coords.column(0);
    let ys = if coords.ncols() > 1 { coords.column(1).to_owned() } else { Array1::zeros(coords.nrows()) };
    let range = |v: ArrayView1<'_, f64>| {
        let lo = v.fold(f64::INFINITY, |a, &b| a.min(b));
        let hi = v.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, xr) = range(xs);
    let (y0, yr) = range(ys.view());
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, label) in labels.iter().enumerate().take(coords.nrows()) {
        let c = distinct.iter().position(|d| d == label).unwrap_or(0);
        let px = PAD + (xs[i] - x0) / xr * (SIZE - 2.0 * PAD);
        let py = SIZE - PAD - (ys[i] - y0) / yr * (SIZE - 2.0 * PAD);
        writeln!(
            svg,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>",
            PALETTE[c % PALETTE.len()]
        )
        .unwrap();
    }
    for (c, label) in distinct.iter().enumerate() {
        writeln!(
            svg,
            "<text x=\"{PAD}\" y=\"{}\" font-size=\"12\" fill=\"{}\">{}</text>",
            PAD + 14.0 * c as f64,
            PALETTE[c % PALETTE.len()],
            label.replace('&', "&amp;").replace('<', "&lt;")
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Candidate indices ranked by descending cosine to `query`; ties keep
/// input order. Returns at most `k` `(index, score)` entries.
pub fn rank_by_cosine(query: ArrayView1<'_, f64>, candidates: &Array2<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if candidates.nrows() == 0 {
        return Err(Error::invalid("no candidates"));
    }
    let mut scored: Vec<(usize, f64)> = candidates
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, c)| cosine(query, c).map(|s| (i, s)))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn alignment_closed_forms() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(alignment(&a, &a).unwrap(), 0.0);
        let b = array![[0.0, 1.0], [1.0, 0.0]];
        assert!((alignment(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!((alignment(&a, &(-&a)).unwrap() - 4.0).abs() < 1e-12);
        assert!(alignment(&Array2::zeros((0, 2)), &Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn uniformity_closed_forms() {
        let anti = array![[1.0, 0.0], [-1.0, 0.0]];
        assert!((uniformity(&anti).unwrap() + 8.0).abs() < 1e-12);
        let ortho = array![[1.0, 0.0], [0.0, 1.0]];
        assert!((uniformity(&ortho).unwrap() + 4.0).abs() < 1e-12);
        let same = array![[0.6, 0.8], [0.6, 0.8], [0.6, 0.8]];
        assert_eq!(uniformity(&same).unwrap(), 0.0);
        assert!(uniformity(&array![[1.0, 0.0]]).is_err());
    }

    fn plane_cloud() -> Array2<f64> {
        // 40 points in span{u, v} inside R^12, offset by c
        let d = 12;
        let u = Array1::from_shape_fn(d, |i| ((i + 1) as f64).sin());
        let v = Array1::from_shape_fn(d, |i| ((2 * i + 3) as f64).cos());
        let c = Array1::from_shape_fn(d, |i| i as f64 * 0.1);
        Array2::from_shape_fn((40, d), |(r, j)| {
            let a = (r as f64 * 0.7).sin() * 3.0;
            let b = (r as f64 * 1.3).cos();
            c[j] + a * u[j] + b * v[j]
        })
    }

    #[test]
    fn pca_recovers_plane() {
        let x = plane_cloud();
        let p = pca_project(&x, 2).unwrap();
        assert!(!p.rank_deficient);
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
        let recon = p.coords.dot(&p.components) + &p.mean;
        let err = (&recon - &x).mapv(|v| v * v).sum().sqrt();
        assert!(err < 1e-8, "{err}");
        let var = p.coords.var_axis(Axis(0), 1.0);
        assert!(var[0] >= var[1]);
    }

    #[test]
    fn pca_translation_invariant_and_degenerate() {
        let x = plane_cloud();
        let shifted = &x + 5.0;
        let a = pca_project(&x, 2).unwrap();
        let b = pca_project(&shifted, 2).unwrap();
        for (p, q) in a.coords.iter().zip(b.coords.iter()) {
            assert!((p - q).abs() < 1e-8);
        }
        let line = Array2::from_shape_fn((5, 3), |(i, j)| (i * (j + 1)) as f64);
        let p = pca_project(&line, 2).unwrap();
        assert!(p.rank_deficient);
        assert!(p.coords.column(1).iter().all(|v| *v == 0.0));
        assert!(pca_project(&line.slice(ndarray::s![..2, ..]).to_owned(), 2).is_err());
    }

    #[test]
    fn nearest_neighbours() {
        let cands = array![[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]];
        let r = rank_by_cosine(array![1.0, 0.0].view(), &cands, 10).unwrap();
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 2, 1]);
        assert_eq!(r[0].1, 1.0);
        assert_eq!(rank_by_cosine(array![1.0, 0.0].view(), &cands, 1).unwrap().len(), 1);
        assert!(rank_by_cosine(array![1.0, 0.0].view(), &cands, 0).is_err());
    }

    #[test]
    fn svg_has_one_point_per_row() {
        let svg = render_scatter_svg(&array![[0.0, 1.0], [1.0, 0.0]], &["positive".into(), "negative".into()]);
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
