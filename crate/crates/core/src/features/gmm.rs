use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureError, RowMatrix};
use crate::cluster::kmeans_plus_plus;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the mean log-likelihood gains less than this per iteration.
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 8,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
            variance_floor: 1e-4,
        }
    }
}

/// How an EM run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitInfo {
    pub iterations: usize,
    pub converged: bool,
    /// Mean per-row log-likelihood of every parameter set visited, in order.
    pub log_likelihood_trace: Vec<f64>,
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: RowMatrix,
    pub variances: RowMatrix,
    pub train_seed: u64,
    pub variance_floor: f64,
    #[serde(default)]
    pub fit: FitInfo,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// `log w_k - 0.5 * sum_d log(2 pi v_kd)` for every component.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.components())
            .map(|k| {
                let logdet: f64 = self.variances.row(k).iter().map(|v| v.ln()).sum();
                self.weights[k].ln() - 0.5 * (self.dim() as f64 * LN_2PI + logdet)
            })
            .collect()
    }

    /// Per-component joint log densities of `x`, written into `out`; returns
    /// the log of the mixture density.
    pub(crate) fn log_joint(&self, x: &[f64], log_norms: &[f64], out: &mut [f64]) -> f64 {
        for (k, o) in out.iter_mut().enumerate() {
            let maha: f64 = x
                .iter()
                .zip(self.means.row(k).iter().zip(self.variances.row(k)))
                .map(|(xi, (m, v))| (xi - m) * (xi - m) / v)
                .sum();
            *o = log_norms[k] - 0.5 * maha;
        }
        log_sum_exp(out)
    }

    /// Posterior responsibilities for every row, plus the summed log-likelihood.
    pub(crate) fn posteriors(&self, data: &RowMatrix) -> (RowMatrix, f64) {
        let k = self.components();
        let norms = self.log_norms();
        let mut resp = RowMatrix::zeros(data.rows(), k);
        let mut total = 0.0;
        for i in 0..data.rows() {
            let row = resp.row_mut(i);
            let lse = self.log_joint(data.row(i), &norms, row);
            total += lse;
            row.iter_mut().for_each(|r| *r = (*r - lse).exp());
        }
        (resp, total)
    }

    fn check_dim(&self, data: &RowMatrix) -> Result<(), FeatureError> {
        if data.cols() != self.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                actual: data.cols(),
            });
        }
        Ok(())
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Sum over rows of the log mixture density.
pub fn gmm_log_likelihood(model: &GmmModel, data: &RowMatrix) -> Result<f64, FeatureError> {
    model.check_dim(data)?;
    let norms = model.log_norms();
    let mut scratch = vec![0.0; model.components()];
    Ok(data
        .iter_rows()
        .map(|x| model.log_joint(x, &norms, &mut scratch))
        .sum())
}

/// Fit a diagonal GMM by EM, starting from k-means++ centers.
///
/// Variances are floored at `variance_floor`, which is still the exact
/// constrained M-step, so the likelihood trace stays monotone. Running out of
/// iterations is not an error; it shows up as `fit.converged == false`.
pub fn train_gmm(data: &RowMatrix, config: &GmmConfig) -> Result<GmmModel, FeatureError> {
    let (n, d, k) = (data.rows(), data.cols(), config.components);
    if k == 0 {
        return Err(FeatureError::InvalidParameter(
            "component count must be >= 1".into(),
        ));
    }
    if config.variance_floor.is_nan() || config.variance_floor <= 0.0 {
        return Err(FeatureError::InvalidParameter(
            "variance_floor must be > 0".into(),
        ));
    }
    if n < k || d == 0 {
        return Err(FeatureError::InsufficientData {
            rows: n,
            components: k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points: Vec<&[f64]> = data.iter_rows().collect();
    let centers = kmeans_plus_plus(&points, k, &mut rng);

    let mut global_mean = vec![0.0; d];
    for row in &points {
        for (m, v) in global_mean.iter_mut().zip(row.iter()) {
            *m += v / n as f64;
        }
    }
    let mut global_var = vec![0.0; d];
    for row in &points {
        for ((g, v), m) in global_var.iter_mut().zip(row.iter()).zip(&global_mean) {
            *g += (v - m) * (v - m) / n as f64;
        }
    }
    let mut means = RowMatrix::zeros(k, d);
    let mut variances = RowMatrix::zeros(k, d);
    for (c, &idx) in centers.iter().enumerate() {
        means.row_mut(c).copy_from_slice(points[idx]);
        for (dst, g) in variances.row_mut(c).iter_mut().zip(&global_var) {
            *dst = g.max(config.variance_floor);
        }
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means,
        variances,
        train_seed: config.seed,
        variance_floor: config.variance_floor,
        fit: FitInfo::default(),
    };

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (resp, total) = model.posteriors(data);
        let ll = total / n as f64;
        if let Some(prev) = trace.last() {
            if ll - prev < config.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations == config.max_iter {
            break;
        }
        m_step(&mut model, data, &resp, config.variance_floor);
        iterations += 1;
    }

    model.fit = FitInfo {
        iterations,
        converged,
        log_likelihood_trace: trace,
    };
    Ok(model)
}

fn m_step(model: &mut GmmModel, data: &RowMatrix, resp: &RowMatrix, floor: f64) {
    let (n, d, k) = (data.rows(), data.cols(), model.components());
    let mut nk = vec![0.0; k];
    for i in 0..n {
        for (acc, r) in nk.iter_mut().zip(resp.row(i)) {
            *acc += r;
        }
    }
    for (c, &mass) in nk.iter().enumerate() {
        model.weights[c] = mass / n as f64;
        // A component with no mass keeps its old shape; its weight is zero.
        if mass <= 0.0 {
            continue;
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            let r = resp.row(i)[c];
            if r == 0.0 {
                continue;
            }
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += r * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        let mut var = vec![0.0; d];
        for i in 0..n {
            let r = resp.row(i)[c];
            if r == 0.0 {
                continue;
            }
            for ((v, x), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
                *v += r * (x - m) * (x - m);
            }
        }
        model.means.row_mut(c).copy_from_slice(&mean);
        for (dst, v) in model.variances.row_mut(c).iter_mut().zip(var) {
            *dst = (v / mass).max(floor);
        }
    }
}
