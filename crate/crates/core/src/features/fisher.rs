use serde::{Deserialize, Serialize};

use super::{DescriptorSet, FeatureError, GmmModel};

/// Fisher encoding of one image: `K*D` mean-gradient entries followed by
/// `K*D` variance-gradient entries, component-major within each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherVector {
    pub image_id: String,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl FisherVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Encode a descriptor set under `model`.
///
/// With `g_nk` the posterior of component k for descriptor n:
///
/// ```text
/// mean block:     1/(N sqrt(w_k))   * sum_n g_nk (x_nd - mu_kd) / sigma_kd
/// variance block: 1/(N sqrt(2 w_k)) * sum_n g_nk ((x_nd - mu_kd)^2 / sigma_kd^2 - 1)
/// ```
///
/// `normalize` applies the signed square root and then L2 normalization. An
/// all-zero raw vector is left as is and reported as not normalized.
pub fn encode_fisher(
    dset: &DescriptorSet,
    model: &GmmModel,
    normalize: bool,
) -> Result<FisherVector, FeatureError> {
    let data = &dset.descriptors;
    let (k, d) = (model.components(), model.dim());
    if data.cols() != d {
        return Err(FeatureError::DimensionMismatch {
            expected: d,
            actual: data.cols(),
        });
    }
    let n = data.rows();
    let mut values = vec![0.0; 2 * k * d];
    if n == 0 {
        return Ok(FisherVector {
            image_id: dset.image_id.clone(),
            values,
            normalized: false,
        });
    }

    let (resp, _) = model.posteriors(data);
    let (mean_block, var_block) = values.split_at_mut(k * d);
    for i in 0..n {
        let x = data.row(i);
        for c in 0..k {
            let g = resp.row(i)[c];
            if g == 0.0 {
                continue;
            }
            let mu = model.means.row(c);
            let var = model.variances.row(c);
            for j in 0..d {
                let z = (x[j] - mu[j]) / var[j].sqrt();
                mean_block[c * d + j] += g * z;
                var_block[c * d + j] += g * (z * z - 1.0);
            }
        }
    }
    for c in 0..k {
        let w = model.weights[c];
        let (sm, sv) = if w > 0.0 {
            (1.0 / (n as f64 * w.sqrt()), 1.0 / (n as f64 * (2.0 * w).sqrt()))
        } else {
            (0.0, 0.0)
        };
        for j in 0..d {
            mean_block[c * d + j] *= sm;
            var_block[c * d + j] *= sv;
        }
    }

    let mut normalized = false;
    if normalize {
        values.iter_mut().for_each(|v| *v = v.signum() * v.abs().sqrt());
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
            normalized = true;
        }
    }
    Ok(FisherVector {
        image_id: dset.image_id.clone(),
        values,
        normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FitInfo, PatchParams, RowMatrix};

    fn single_unit_model(d: usize) -> GmmModel {
        GmmModel {
            weights: vec![1.0],
            means: RowMatrix::from_vec(1, d, vec![0.5; d]).unwrap(),
            variances: RowMatrix::from_vec(1, d, vec![2.0; d]).unwrap(),
            train_seed: 0,
            variance_floor: 1e-4,
            fit: FitInfo::default(),
        }
    }

    fn dset(rows: RowMatrix) -> DescriptorSet {
        DescriptorSet {
            image_id: "img".into(),
            descriptors: rows,
            patch_params: PatchParams::default(),
        }
    }

    #[test]
    fn mean_block_vanishes_at_the_mean() {
        let fv = encode_fisher(
            &dset(RowMatrix::from_vec(5, 3, vec![0.5; 15]).unwrap()),
            &single_unit_model(3),
            false,
        )
        .unwrap();
        assert_eq!(fv.dim(), 6);
        assert!(fv.values[..3].iter().all(|v| *v == 0.0));
        // (0 - 1) / sqrt(2) per dimension in the variance block.
        for v in &fv.values[3..] {
            assert!((v + 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_gives_unit_norm() {
        let rows = RowMatrix::from_rows(&[[0.1, 3.0], [2.0, -1.0], [0.7, 0.7]]).unwrap();
        let fv = encode_fisher(&dset(rows), &single_unit_model(2), true).unwrap();
        let norm: f64 = fv.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!(fv.normalized);
    }

    #[test]
    fn zero_raw_vector_stays_zero() {
        // Every descriptor at the mean with unit variance: both blocks vanish.
        let mut model = single_unit_model(2);
        model.variances = RowMatrix::from_vec(1, 2, vec![1.0; 2]).unwrap();
        model.means = RowMatrix::from_vec(1, 2, vec![0.0; 2]).unwrap();
        let rows = RowMatrix::from_rows(&[[1.0, 1.0], [-1.0, -1.0]]).unwrap();
        let fv = encode_fisher(&dset(rows), &model, true).unwrap();
        assert!(fv.values.iter().all(|v| *v == 0.0));
        assert!(!fv.normalized);
    }

    #[test]
    fn dimension_mismatch() {
        let rows = RowMatrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(encode_fisher(&dset(rows), &single_unit_model(2), false).is_err());
    }
}
