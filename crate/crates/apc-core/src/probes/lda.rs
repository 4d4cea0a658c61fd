//! Mean-pooled utterance embeddings, a supervised linear projection
//! (Fisher discriminant), and cosine scoring.
//!
//! The discriminant solves the generalized eigenproblem of the
//! between-class and within-class scatter matrices in f64: the
//! within-class scatter gets `1e-6 * trace / dim` added to its diagonal,
//! is Cholesky-factored, and the whitened between-class scatter is
//! diagonalized with cyclic Jacobi rotations. Projection columns come out
//! orthonormal under the within-class scatter metric.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::scalar::Scalar;

/// Mean over time of a frame sequence, in f64.
pub fn utterance_embed<F: Scalar>(features: &Matrix<F>) -> Result<Vec<f64>> {
    if features.rows() == 0 {
        return Err(Error::EmptyInput { what: "utterance frames" });
    }
    let mut mean = vec![0.0f64; features.cols()];
    for t in 0..features.rows() {
        for (m, &v) in mean.iter_mut().zip(features.row(t)) {
            *m += v.to_f64();
        }
    }
    let inv = 1.0 / features.rows() as f64;
    for m in &mut mean {
        *m *= inv;
    }
    Ok(mean)
}

/// Cosine similarity; either argument being the zero vector scores 0 by
/// convention. Lengths must match.
pub fn cosine_score(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine_score arguments must have equal length");
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// A fitted discriminant projection.
#[derive(Clone, Debug)]
pub struct LdaModel {
    /// Global mean of the training embeddings.
    pub mean: Vec<f64>,
    /// `(dim, p)`; columns orthonormal under the within-class scatter.
    pub projection: Matrix<f64>,
    /// Number of classes the projection was fitted on.
    pub classes: usize,
}

impl LdaModel {
    pub fn in_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.cols()
    }

    /// Centers by the training mean, then projects.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape {
                op: "lda_project",
                expected: (1, self.in_dim()),
                got: (1, x.len()),
            });
        }
        let mut out = vec![0.0f64; self.out_dim()];
        for (i, &v) in x.iter().enumerate() {
            let centered = v - self.mean[i];
            let row = self.projection.row(i);
            for (o, &p) in out.iter_mut().zip(row) {
                *o += centered * p;
            }
        }
        Ok(out)
    }
}

/// Lower-triangular Cholesky factor; fails on a non-positive pivot.
fn cholesky(a: &Matrix<f64>) -> Result<Matrix<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(Error::NonFinite {
                        context: String::from("within-class scatter factorization"),
                    });
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
fn forward_solve(l: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    let n = l.rows();
    let m = b.cols();
    let mut x = Matrix::zeros(n, m);
    for c in 0..m {
        for i in 0..n {
            let mut s = b.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Solves `L^T v = u` for lower-triangular `L`.
fn back_solve_t(l: &Matrix<f64>, u: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut v = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = u[i];
        for k in i + 1..n {
            s -= l.get(k, i) * v[k];
        }
        v[i] = s / l.get(i, i);
    }
    v
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors as columns)`, unordered.
fn jacobi_eigh(m: &Matrix<f64>) -> Result<(Vec<f64>, Matrix<f64>)> {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale: f64 = (0..n).map(|i| a.get(i, i).abs()).fold(1e-300, f64::max);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a.get(p, q).abs());
            }
        }
        if off <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !a.is_finite() {
        return Err(Error::NonFinite { context: String::from("eigendecomposition") });
    }
    Ok(((0..n).map(|i| a.get(i, i)).collect(), v))
}

/// Fits the discriminant. `labels` are class indices `0..classes`; every
/// class needs at least two samples, and `p` at most `classes - 1`.
pub fn fit_lda(embeds: &Matrix<f64>, labels: &[usize], p: usize) -> Result<LdaModel> {
    let n = embeds.rows();
    let dim = embeds.cols();
    if n == 0 {
        return Err(Error::EmptyInput { what: "embeddings" });
    }
    if labels.len() != n {
        return Err(Error::Shape { op: "fit_lda", expected: (n, 1), got: (labels.len(), 1) });
    }
    if !embeds.is_finite() {
        return Err(Error::NonFinite { context: String::from("embeddings") });
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut counts = vec![0usize; classes];
    for &c in labels {
        counts[c] += 1;
    }
    if classes < 2 {
        return Err(Error::Config { message: String::from("need at least 2 classes") });
    }
    if let Some(c) = counts.iter().position(|&k| k < 2) {
        return Err(Error::Config {
            message: format!("class {c} has {} samples, needs at least 2", counts[c]),
        });
    }
    if p < 1 || p > classes - 1 || p > dim {
        return Err(Error::Config {
            message: format!(
                "projection dim {p} outside [1, min(classes - 1, dim)] = [1, {}]",
                (classes - 1).min(dim)
            ),
        });
    }

    // Class and global means.
    let mut class_mean: Matrix<f64> = Matrix::zeros(classes, dim);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..dim {
            let m = class_mean.get(c, j) + embeds.get(i, j);
            class_mean.set(c, j, m);
        }
    }
    for c in 0..classes {
        for j in 0..dim {
            let m = class_mean.get(c, j) / counts[c] as f64;
            class_mean.set(c, j, m);
        }
    }
    let mut mean = vec![0.0f64; dim];
    for i in 0..n {
        for (m, &e) in mean.iter_mut().zip(embeds.row(i)) {
            *m += e;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Scatter matrices.
    let mut sw = Matrix::zeros(dim, dim);
    for (i, &c) in labels.iter().enumerate() {
        let d: Vec<f64> = (0..dim).map(|j| embeds.get(i, j) - class_mean.get(c, j)).collect();
        for a in 0..dim {
            let row = sw.row_mut(a);
            for b in 0..dim {
                row[b] += d[a] * d[b];
            }
        }
    }
    let mut sb = Matrix::zeros(dim, dim);
    for c in 0..classes {
        let d: Vec<f64> = (0..dim).map(|j| class_mean.get(c, j) - mean[j]).collect();
        let w = counts[c] as f64;
        for a in 0..dim {
            let row = sb.row_mut(a);
            for b in 0..dim {
                row[b] += w * d[a] * d[b];
            }
        }
    }
    let trace: f64 = (0..dim).map(|i| sw.get(i, i)).sum();
    let reg = 1e-6 * trace / dim as f64;
    for i in 0..dim {
        let v = sw.get(i, i) + reg;
        sw.set(i, i, v);
    }

    // Whiten: M = L^-1 Sb L^-T, then diagonalize.
    let l = cholesky(&sw)?;
    let y = forward_solve(&l, &sb);
    let mut m = forward_solve(&l, &y.transpose());
    for i in 0..dim {
        for j in i + 1..dim {
            let s = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    let (eigvals, eigvecs) = jacobi_eigh(&m)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap_or(core::cmp::Ordering::Equal));

    let mut projection = Matrix::zeros(dim, p);
    for (col, &e) in order.iter().take(p).enumerate() {
        let u: Vec<f64> = (0..dim).map(|i| eigvecs.get(i, e)).collect();
        // Back-substitution un-whitens; columns stay Sw-orthonormal.
        let mut v = back_solve_t(&l, &u);
        // Canonical sign: the largest-magnitude component is positive.
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap_or(core::cmp::Ordering::Equal))
            .map_or(0, |(i, _)| i);
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        for i in 0..dim {
            projection.set(i, col, v[i]);
        }
    }
    Ok(LdaModel { mean, projection, classes })
}
