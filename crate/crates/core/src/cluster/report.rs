use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{ClusterAssignment, ClusterError, ClusteringParams};
use crate::ingest::{ArticleImage, ArticleRecord};

/// A group of visually similar images from one story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCluster {
    pub cluster_id: usize,
    pub exemplar: String,
    /// Closest to the centroid first.
    pub members: Vec<String>,
    pub per_source_counts: BTreeMap<String, usize>,
}

/// The `clusters.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub story_id: String,
    pub params: ClusteringParams,
    pub clusters: Vec<ImageCluster>,
    pub inertia: f64,
}

impl ClusterReport {
    pub fn image_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }
}

/// Package an assignment for inspection: one entry per non-empty cluster,
/// largest first (ties by cluster id), members sorted by distance to their
/// centroid (ties by image id).
pub fn build_clusters(
    assignment: &ClusterAssignment,
    images: &[ArticleImage],
    articles: &[ArticleRecord],
) -> Result<Vec<ImageCluster>, ClusterError> {
    let article_of: HashMap<&str, &str> = images
        .iter()
        .map(|i| (i.image_id.as_str(), i.article_id.as_str()))
        .collect();
    let source_of: HashMap<&str, &str> = articles
        .iter()
        .map(|a| (a.article_id.as_str(), a.source_name.as_str()))
        .collect();

    let mut grouped: BTreeMap<usize, Vec<(f64, &str)>> = BTreeMap::new();
    for (image_id, &label) in &assignment.labels {
        let d = assignment.distances.get(image_id).copied().unwrap_or(0.0);
        grouped.entry(label).or_default().push((d, image_id.as_str()));
    }

    let mut clusters = Vec::with_capacity(grouped.len());
    for (cluster_id, mut members) in grouped {
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
        let mut per_source_counts = BTreeMap::new();
        for (_, id) in &members {
            let article = article_of
                .get(id)
                .ok_or_else(|| ClusterError::ProvenanceMissing(format!("image {id}")))?;
            let source = source_of
                .get(article)
                .ok_or_else(|| ClusterError::ProvenanceMissing(format!("article {article}")))?;
            *per_source_counts.entry(source.to_string()).or_insert(0) += 1;
        }
        clusters.push(ImageCluster {
            cluster_id,
            exemplar: members[0].1.to_string(),
            members: members.into_iter().map(|m| m.1.to_string()).collect(),
            per_source_counts,
        });
    }
    clusters.sort_by(|a, b| {
        b.members
            .len()
            .cmp(&a.members.len())
            .then(a.cluster_id.cmp(&b.cluster_id))
    });
    Ok(clusters)
}
