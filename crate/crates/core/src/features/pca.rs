use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{FeatureError, RowMatrix};

/// Mean plus an orthonormal projection basis, one component per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: RowMatrix,
    /// Variance of the training sample along each component.
    pub explained_variance: Vec<f64>,
    /// Total variance of the training sample.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self
                .components
                .row(k)
                .iter()
                .zip(x.iter().zip(&self.mean))
                .map(|(c, (v, m))| c * (v - m))
                .sum();
        }
    }

    pub fn transform(&self, data: &RowMatrix) -> Result<RowMatrix, FeatureError> {
        if data.cols() != self.input_dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.input_dim(),
                actual: data.cols(),
            });
        }
        let mut out = RowMatrix::zeros(data.rows(), self.output_dim());
        for i in 0..data.rows() {
            self.project(data.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Map projected coordinates back into the input space.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (k, coef) in y.iter().enumerate() {
            for (xi, c) in x.iter_mut().zip(self.components.row(k)) {
                *xi += coef * c;
            }
        }
        x
    }
}

/// Principal components of `sample` (rows are observations).
///
/// Components are ordered by decreasing variance; each is sign-fixed so its
/// largest-magnitude entry is positive, which makes the basis a pure function
/// of the sample.
pub fn train_pca(sample: &RowMatrix, out_dim: usize) -> Result<PcaModel, FeatureError> {
    let (n, d) = (sample.rows(), sample.cols());
    if out_dim == 0 {
        return Err(FeatureError::InvalidParameter("out_dim must be >= 1".into()));
    }
    if n < out_dim || n == 0 {
        return Err(FeatureError::InsufficientSample {
            rows: n,
            needed: out_dim,
        });
    }
    if out_dim > d {
        return Err(FeatureError::InvalidParameter(format!(
            "out_dim {out_dim} exceeds input dimension {d}"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in sample.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in sample.iter_rows() {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let total_variance = cov.trace();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = RowMatrix::zeros(out_dim, d);
    let mut explained_variance = Vec::with_capacity(out_dim);
    for (k, &idx) in order.iter().take(out_dim).enumerate() {
        let col = eig.eigenvectors.column(idx);
        let norm = col.norm();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| {
                if v.abs() > best.1.abs() + 1e-12 {
                    (i, *v)
                } else {
                    best
                }
            })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (dst, v) in components.row_mut(k).iter_mut().zip(col.iter()) {
            *dst = sign * v / norm;
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        total_variance,
    })
}
