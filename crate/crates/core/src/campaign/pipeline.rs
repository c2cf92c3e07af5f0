use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DataStore, ServiceError, StoryBundle};
use crate::cluster::{build_clusters, choose_k, default_k_range, kmeans, ClusterReport, ClusteringParams};
use crate::compose::{
    compose_macro, macro_id_for, render_card_metadata, ImageMacro, LabelMode, MacroError, MacroInfo,
    MacroLayout,
};
use crate::features::{
    encode_fisher, extract_descriptors, raw_patches, train_gmm, train_pca, FeatureArtifact, FeatureError,
    FeatureModels, FisherVector, GmmConfig, PatchParams, RowMatrix, FEATURE_FORMAT_VERSION,
};
use crate::ingest::{
    dedupe_images, extract_images_concurrent, fetch_story_articles, ArticleImage, ArticleRecord,
    ArticleSource, IngestError, StoryQuery, DEFAULT_ARTICLE_LIMIT, DEFAULT_FETCH_CONCURRENCY,
    DEFAULT_MIN_HEIGHT, DEFAULT_MIN_WIDTH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KChoice {
    /// Best mean silhouette over `[2, min(8, n - 1)]`.
    Auto,
    Fixed(usize),
}

/// Knobs for one ingest-and-cluster run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub article_limit: usize,
    pub min_width: u32,
    pub min_height: u32,
    pub concurrency: usize,
    pub patch: PatchParams,
    pub gmm: GmmConfig,
    /// Pooled patches drawn (without replacement) to fit the PCA.
    pub pca_sample_rows: usize,
    /// Pooled descriptors drawn to fit the GMM.
    pub gmm_sample_rows: usize,
    pub normalize: bool,
    pub k: KChoice,
    pub clustering: ClusteringParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            article_limit: DEFAULT_ARTICLE_LIMIT,
            min_width: DEFAULT_MIN_WIDTH,
            min_height: DEFAULT_MIN_HEIGHT,
            concurrency: DEFAULT_FETCH_CONCURRENCY,
            patch: PatchParams::default(),
            gmm: GmmConfig::default(),
            pca_sample_rows: 20_000,
            gmm_sample_rows: 20_000,
            normalize: true,
            k: KChoice::Auto,
            clustering: ClusteringParams::default(),
        }
    }
}

/// `story.json`: what was ingested and how it clustered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryReport {
    pub query: StoryQuery,
    pub article_count: usize,
    pub publishers: Vec<String>,
    /// Images decoded before duplicate removal.
    pub extracted_image_count: usize,
    /// Distinct images kept; every one appears on the exploration page.
    pub image_count: usize,
    pub k: usize,
    /// Mean silhouette per candidate K when K was chosen automatically.
    pub k_scores: Vec<(usize, f64)>,
    pub config: PipelineConfig,
    pub clusters: ClusterReport,
}

fn subsample(m: &RowMatrix, max_rows: usize, seed: u64) -> RowMatrix {
    if m.rows() <= max_rows {
        return m.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m.rows(), max_rows).into_vec();
    idx.sort_unstable();
    m.select_rows(&idx)
}

fn stack(parts: &[RowMatrix], cols: usize) -> RowMatrix {
    let rows: usize = parts.iter().map(RowMatrix::rows).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for p in parts {
        data.extend_from_slice(p.as_slice());
    }
    RowMatrix::from_vec(rows, cols, data).expect("consistent columns")
}

/// PCA and GMM fitted on this story's pooled patches, then one Fisher vector
/// per image (in input order).
pub fn encode_story(
    images: &[ArticleImage],
    config: &PipelineConfig,
) -> Result<(FeatureArtifact, FeatureModels), FeatureError> {
    config.patch.validate()?;
    let seed = config.clustering.seed;
    let raw: Vec<RowMatrix> = images
        .par_iter()
        .map(|img| raw_patches(&img.raster, &config.patch))
        .collect();
    let pooled = stack(&raw, config.patch.raw_dim());
    let pca = train_pca(
        &subsample(&pooled, config.pca_sample_rows, seed ^ 0x5eed_0001),
        config.patch.reduced_dim,
    )?;

    let descriptors = images
        .par_iter()
        .map(|img| extract_descriptors(img, &config.patch, &pca))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled: Vec<RowMatrix> = descriptors.iter().map(|d| d.descriptors.clone()).collect();
    let pooled = stack(&pooled, config.patch.reduced_dim);
    let gmm_config = GmmConfig { seed, ..config.gmm };
    let gmm = train_gmm(
        &subsample(&pooled, config.gmm_sample_rows, seed ^ 0x5eed_0002),
        &gmm_config,
    )?;

    let vectors: Vec<FisherVector> = descriptors
        .par_iter()
        .map(|d| encode_fisher(d, &gmm, config.normalize))
        .collect::<Result<_, _>>()?;
    let artifact = FeatureArtifact::new(&gmm, config.patch, config.normalize, vectors);
    let models = FeatureModels {
        format_version: FEATURE_FORMAT_VERSION,
        pca,
        gmm,
    };
    Ok((artifact, models))
}

/// Pick K and cluster. Fewer than three images cannot be scored, so they
/// form a single cluster under automatic selection.
pub fn cluster_vectors(
    story_id: &str,
    vectors: &[FisherVector],
    images: &[ArticleImage],
    articles: &[ArticleRecord],
    k: KChoice,
    params: &ClusteringParams,
) -> Result<(ClusterReport, Vec<(usize, f64)>), ServiceError> {
    let (k, scores) = match k {
        KChoice::Fixed(k) => (k, Vec::new()),
        KChoice::Auto => match default_k_range(vectors.len()) {
            Some((lo, hi)) => choose_k(vectors, lo, hi, params)?,
            None => (1, Vec::new()),
        },
    };
    let params = ClusteringParams { k, ..*params };
    let assignment = kmeans(vectors, &params)?;
    let clusters = build_clusters(&assignment, images, articles)?;
    Ok((
        ClusterReport {
            story_id: story_id.to_string(),
            params,
            clusters,
            inertia: assignment.inertia,
        },
        scores,
    ))
}

/// Ingest a story, encode and cluster its images, and persist every
/// artifact. Nothing is written unless the whole run succeeds.
pub fn ingest_and_cluster(
    store: &DataStore,
    query: &StoryQuery,
    source: &dyn ArticleSource,
    config: &PipelineConfig,
    force: bool,
) -> Result<StoryReport, ServiceError> {
    query.validate()?;
    if store.story_exists(&query.story_id) && !force {
        return Err(ServiceError::Conflict(format!(
            "story {} is already ingested",
            query.story_id
        )));
    }
    let articles = fetch_story_articles(query, source, config.article_limit)?;
    let extracted = extract_images_concurrent(
        &articles,
        &query.story_id,
        source,
        config.min_width,
        config.min_height,
        config.concurrency,
    );
    let extracted_image_count = extracted.len();
    let images = dedupe_images(extracted);
    if images.is_empty() {
        return Err(IngestError::EmptyResult(format!("{} (no usable images)", query.story_id)).into());
    }
    info!(
        "story {}: {} articles, {} images ({} before dedupe)",
        query.story_id,
        articles.len(),
        images.len(),
        extracted_image_count
    );

    let (features, models) = encode_story(&images, config)?;
    let (clusters, k_scores) = cluster_vectors(
        &query.story_id,
        &features.vectors,
        &images,
        &articles,
        config.k,
        &config.clustering,
    )?;
    let publishers: Vec<String> = articles
        .iter()
        .map(|a| a.source_name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = StoryReport {
        query: query.clone(),
        article_count: articles.len(),
        publishers,
        extracted_image_count,
        image_count: images.len(),
        k: clusters.params.k,
        k_scores,
        config: config.clone(),
        clusters: clusters.clone(),
    };
    let bundle = StoryBundle {
        report: report.clone(),
        articles,
        images,
        features,
        models,
        clusters,
    };
    store.save_story(&bundle, force)?;
    Ok(report)
}

/// Re-run clustering on stored Fisher vectors and replace `clusters.json`.
pub fn recluster(
    store: &DataStore,
    story_id: &str,
    k: KChoice,
    seed: Option<u64>,
) -> Result<ClusterReport, ServiceError> {
    let report = store.load_report(story_id)?;
    let features = store.load_features(story_id)?;
    let images = store.load_image_records(story_id)?;
    let articles = store.load_articles(story_id)?;
    let mut params = report.config.clustering;
    if let Some(s) = seed {
        params.seed = s;
    }
    let (clusters, _) = cluster_vectors(story_id, &features.vectors, &images, &articles, k, &params)?;
    store.save_clusters(&clusters)?;
    Ok(clusters)
}

/// What an activist submits to build a macro.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeRequest {
    pub image_ids: Vec<String>,
    /// `RxC`, e.g. `2x3`.
    pub layout: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub created_by: String,
    #[serde(default)]
    pub label_mode: LabelMode,
}

/// Compose, render the card metadata, and store the macro. The id depends
/// only on the content, so repeating a request rewrites the same files.
pub fn compose_story_macro(
    store: &DataStore,
    story_id: &str,
    req: &ComposeRequest,
    public_base_url: &str,
    now: DateTime<Utc>,
) -> Result<ImageMacro, ServiceError> {
    let report = store.load_report(story_id)?;
    let mut layout: MacroLayout = req.layout.parse()?;
    layout.label_mode = req.label_mode;
    let all = store.load_images(story_id)?;
    let articles = store.load_articles(story_id)?;
    let source_of: HashMap<&str, &str> = articles
        .iter()
        .map(|a| (a.article_id.as_str(), a.source_name.as_str()))
        .collect();
    let by_id: BTreeMap<&str, &ArticleImage> = all.iter().map(|i| (i.image_id.as_str(), i)).collect();
    let mut selected = Vec::with_capacity(req.image_ids.len());
    let mut labels = Vec::with_capacity(req.image_ids.len());
    for id in &req.image_ids {
        let img = *by_id
            .get(id.as_str())
            .ok_or_else(|| MacroError::UnknownImage(id.clone()))?;
        labels.push(
            source_of
                .get(img.article_id.as_str())
                .copied()
                .unwrap_or("")
                .to_string(),
        );
        selected.push(img.clone());
    }
    let macro_id = macro_id_for(story_id, &req.image_ids, &layout, &req.caption);
    let info = MacroInfo {
        macro_id,
        story_id: story_id.to_string(),
        created_by: req.created_by.clone(),
        created_at: now,
        panel_labels: labels,
    };
    let image_macro = compose_macro(&selected, &layout, &req.caption, info)?;
    let explore = explore_url(public_base_url, story_id)?;
    let title = story_title(&report);
    let card = render_card_metadata(&image_macro, &explore, &title, &req.caption)?;
    store.save_macro(&image_macro, &card.html)?;
    Ok(image_macro)
}

/// Public exploration page of a story.
pub fn explore_url(public_base_url: &str, story_id: &str) -> Result<String, ServiceError> {
    let base = url::Url::parse(public_base_url)
        .map_err(|e| ServiceError::Invalid(format!("public base url {public_base_url}: {e}")))?;
    base.join(&format!("/s/{story_id}"))
        .map(|u| u.to_string())
        .map_err(|e| ServiceError::Invalid(e.to_string()))
}

pub(crate) fn story_title(report: &StoryReport) -> String {
    let q = report.query.query_text.trim();
    if q.is_empty() {
        report.query.story_id.clone()
    } else {
        q.to_string()
    }
}
