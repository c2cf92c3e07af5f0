//! Story ingestion: collect the articles that cover one story, pull every
//! candidate photo out of their HTML, and drop exact duplicates.
//!
//! Articles come from an [`ArticleSource`]. Two sources ship with the crate:
//! [`FixtureSource`] reads a directory of stored pages and is what every test
//! uses, and [`HttpSource`] fetches seed URLs over plain HTTP.

mod dedupe;
mod extract;
mod source;

pub use dedupe::dedupe_images;
pub use extract::{extract_images, extract_images_concurrent, image_references, ImageRef};
pub use source::{ArticleMeta, ArticleSource, FixtureSource, HttpSource, HttpSourceConfig};

use chrono::{DateTime, Utc};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

pub const DEFAULT_MIN_WIDTH: u32 = 120;
pub const DEFAULT_MIN_HEIGHT: u32 = 120;
pub const DEFAULT_ARTICLE_LIMIT: usize = 20;
pub const DEFAULT_FETCH_CONCURRENCY: usize = 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid story query: {0}")]
    InvalidQuery(String),
    #[error("article source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("no articles found for story {0}")]
    EmptyResult(String),
    #[error("undecodable image {url}: {reason}")]
    UndecodableImage { url: String, reason: String },
    #[error("image unavailable {url}: {reason}")]
    ImageUnavailable { url: String, reason: String },
    #[error("invalid article record {0}")]
    InvalidRecord(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The story an activist wants to investigate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryQuery {
    pub story_id: String,
    #[serde(default)]
    pub query_text: String,
    #[serde(default)]
    pub seed_urls: Vec<String>,
    #[serde(default = "default_language")]
    pub language: String,
}

fn default_language() -> String {
    "es".to_string()
}

impl StoryQuery {
    pub fn new(story_id: impl Into<String>, query_text: impl Into<String>) -> Self {
        Self {
            story_id: story_id.into(),
            query_text: query_text.into(),
            seed_urls: Vec::new(),
            language: default_language(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.story_id.trim().is_empty() {
            return Err(IngestError::InvalidQuery("story_id is empty".into()));
        }
        if !is_safe_id(&self.story_id) {
            return Err(IngestError::InvalidQuery(format!(
                "story_id {:?} may only contain letters, digits, '-', '_' and '.'",
                self.story_id
            )));
        }
        if self.query_text.trim().is_empty() && self.seed_urls.is_empty() {
            return Err(IngestError::InvalidQuery(
                "either query_text or seed_urls must be given".into(),
            ));
        }
        for u in &self.seed_urls {
            Url::parse(u).map_err(|e| IngestError::InvalidQuery(format!("seed url {u}: {e}")))?;
        }
        Ok(())
    }
}

/// Identifiers end up as path components, so they are restricted to a
/// conservative alphabet.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// One fetched news article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub article_id: String,
    pub url: Url,
    pub source_name: String,
    pub fetched_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub html: String,
    #[serde(default)]
    pub title: String,
}

/// A decoded photo harvested from an article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleImage {
    pub image_id: String,
    pub article_id: String,
    pub src_url: String,
    pub width: u32,
    pub height: u32,
    pub bytes_hash: String,
    #[serde(skip)]
    pub raster: RgbImage,
}

impl ArticleImage {
    pub fn new(image_id: String, article_id: String, src_url: String, raster: RgbImage) -> Self {
        Self {
            width: raster.width(),
            height: raster.height(),
            bytes_hash: raster_digest(&raster),
            image_id,
            article_id,
            src_url,
            raster,
        }
    }
}

/// SHA-256 over the dimensions and the RGB pixel bytes.
pub fn raster_digest(raster: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(raster.width().to_le_bytes());
    h.update(raster.height().to_le_bytes());
    h.update(raster.as_raw());
    hex::encode(h.finalize())
}

/// Fetch up to `limit` articles for the story, ordered by `article_id`.
///
/// An empty answer is reported as [`IngestError::EmptyResult`]; callers treat
/// it as a normal outcome rather than a failure of the source.
pub fn fetch_story_articles(
    query: &StoryQuery,
    source: &dyn ArticleSource,
    limit: usize,
) -> Result<Vec<ArticleRecord>, IngestError> {
    query.validate()?;
    if limit == 0 {
        return Err(IngestError::InvalidQuery("limit must be positive".into()));
    }
    let mut records: Vec<ArticleRecord> = source
        .fetch_articles(query)?
        .into_iter()
        .filter(|r| !r.html.trim().is_empty())
        .collect();
    records.sort_by(|a, b| a.article_id.cmp(&b.article_id));
    records.dedup_by(|a, b| a.article_id == b.article_id);
    records.truncate(limit);
    if records.is_empty() {
        return Err(IngestError::EmptyResult(query.story_id.clone()));
    }
    Ok(records)
}

/// Page title: `<title>`, falling back to `og:title`.
pub fn extract_title(html: &str) -> String {
    let doc = scraper::Html::parse_document(html);
    let title_sel = scraper::Selector::parse("title").expect("static selector");
    if let Some(t) = doc.select(&title_sel).next() {
        let text = t.text().collect::<String>();
        let text = text.trim();
        if !text.is_empty() {
            return text.to_string();
        }
    }
    let og = scraper::Selector::parse(r#"meta[property="og:title"]"#).expect("static selector");
    doc.select(&og)
        .filter_map(|m| m.value().attr("content"))
        .map(|s| s.trim().to_string())
        .next()
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_validation() {
        assert!(StoryQuery::new("s1", "energy reform").validate().is_ok());
        assert!(StoryQuery::new("", "x").validate().is_err());
        assert!(StoryQuery::new("s1", "  ").validate().is_err());
        assert!(StoryQuery::new("../etc", "x").validate().is_err());
        let mut q = StoryQuery::new("s1", "");
        q.seed_urls.push("https://news.example/a".into());
        assert!(q.validate().is_ok());
        q.seed_urls.push("not a url".into());
        assert!(q.validate().is_err());
    }

    #[test]
    fn digest_depends_on_pixels_and_shape() {
        let a = RgbImage::from_pixel(4, 2, image::Rgb([1, 2, 3]));
        let b = RgbImage::from_pixel(2, 4, image::Rgb([1, 2, 3]));
        assert_ne!(raster_digest(&a), raster_digest(&b));
        assert_eq!(raster_digest(&a), raster_digest(&a.clone()));
    }

    #[test]
    fn title_falls_back_to_og() {
        assert_eq!(extract_title("<title> Hola </title>"), "Hola");
        assert_eq!(
            extract_title(r#"<head><meta property="og:title" content="OG"></head>"#),
            "OG"
        );
        assert_eq!(extract_title("<p>x</p>"), "");
    }
}
