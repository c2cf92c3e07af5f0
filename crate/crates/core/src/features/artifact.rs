use serde::{Deserialize, Serialize};

use super::{FeatureError, FisherVector, GmmModel, PatchParams, PcaModel};

pub const FEATURE_FORMAT_VERSION: u32 = 1;

/// On-disk form of a story's Fisher vectors (`features/fisher.json`).
///
/// The header fields describe every row: each `values` array has length
/// `2 * k_g * d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureArtifact {
    pub format_version: u32,
    pub k_g: usize,
    pub d: usize,
    pub normalized: bool,
    pub seed: u64,
    pub patch_params: PatchParams,
    pub vectors: Vec<FisherVector>,
}

impl FeatureArtifact {
    pub fn new(
        model: &GmmModel,
        patch_params: PatchParams,
        normalized: bool,
        vectors: Vec<FisherVector>,
    ) -> Self {
        Self {
            format_version: FEATURE_FORMAT_VERSION,
            k_g: model.components(),
            d: model.dim(),
            normalized,
            seed: model.train_seed,
            patch_params,
            vectors,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.format_version != FEATURE_FORMAT_VERSION {
            return Err(FeatureError::InvalidParameter(format!(
                "unsupported feature format version {}",
                self.format_version
            )));
        }
        let expected = 2 * self.k_g * self.d;
        for v in &self.vectors {
            if v.values.len() != expected {
                return Err(FeatureError::DimensionMismatch {
                    expected,
                    actual: v.values.len(),
                });
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::InvalidParameter(format!(
                    "non-finite value in {}",
                    v.image_id
                )));
            }
        }
        Ok(())
    }
}

/// The trained models behind a feature artifact (`features/models.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModels {
    pub format_version: u32,
    pub pca: PcaModel,
    pub gmm: GmmModel,
}
