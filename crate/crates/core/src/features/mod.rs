//! Fixed-length image encodings for clustering.
//!
//! Each image becomes a set of dense grayscale patch descriptors, reduced by
//! PCA. A diagonal-covariance GMM is fit by EM on the pooled descriptors of a
//! story, and every image is then encoded as a Fisher vector: the per-patch
//! averaged gradient of the GMM log-likelihood with respect to the component
//! means and variances, scaled by the closed-form diagonal Fisher information.

mod artifact;
mod descriptors;
mod fisher;
mod gmm;
mod matrix;
mod pca;

pub use artifact::{FeatureArtifact, FeatureModels, FEATURE_FORMAT_VERSION};
pub use descriptors::{analysis_raster, extract_descriptors, raw_patches, DescriptorSet, PatchParams};
pub use fisher::{encode_fisher, FisherVector};
pub use gmm::{gmm_log_likelihood, train_gmm, FitInfo, GmmConfig, GmmModel};
pub use matrix::RowMatrix;
pub use pca::{train_pca, PcaModel};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("insufficient sample: {rows} rows, need at least {needed}")]
    InsufficientSample { rows: usize, needed: usize },
    #[error("insufficient data: {rows} rows for {components} components")]
    InsufficientData { rows: usize, components: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
