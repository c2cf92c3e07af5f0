//! K-means over Fisher vectors and the cluster report activists inspect.

mod kmeans;
mod report;
mod silhouette;

pub use kmeans::{kmeans, kmeans_plus_plus, kmeans_points, lloyd_restart, ClusterAssignment, RestartResult};
pub use report::{build_clusters, ClusterReport, ImageCluster};
pub use silhouette::{choose_k, default_k_range, mean_silhouette, select_best_k};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("too few points: {points} vectors for K = {k}")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid K range [{k_min}, {k_max}] for {points} vectors")]
    RangeInvalid {
        k_min: usize,
        k_max: usize,
        points: usize,
    },
    #[error("invalid clustering parameters: {0}")]
    InvalidParams(String),
    #[error("vectors have inconsistent dimensions")]
    DimensionMismatch,
    #[error("duplicate image id {0}")]
    DuplicateImage(String),
    #[error("missing provenance for {0}")]
    ProvenanceMissing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
            restarts: 8,
        }
    }
}

impl ClusteringParams {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.k == 0 {
            return Err(ClusterError::InvalidParams("K must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(ClusterError::InvalidParams("restarts must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(ClusterError::InvalidParams("tol must be >= 0".into()));
        }
        Ok(())
    }
}
