use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

use super::{extract_title, is_safe_id, ArticleRecord, IngestError, StoryQuery};

/// Where articles and their images come from.
pub trait ArticleSource: Send + Sync {
    /// All articles the source knows for this story, in any order.
    fn fetch_articles(&self, query: &StoryQuery) -> Result<Vec<ArticleRecord>, IngestError>;

    /// Raw encoded bytes of one image referenced by an article of the story.
    fn fetch_image(&self, story_id: &str, url: &Url) -> Result<Vec<u8>, IngestError>;
}

/// Sidecar metadata stored next to each fixture article as
/// `<article_id>.meta.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArticleMeta {
    pub url: Url,
    pub source_name: String,
    pub fetched_at: DateTime<Utc>,
}

/// Reads `<root>/<story_id>/articles/<article_id>.html` plus the matching
/// `.meta.json`. Images resolve to `<root>/<story_id>/images/<file name>`,
/// where the file name is the last path segment of the image URL.
#[derive(Debug, Clone)]
pub struct FixtureSource {
    root: PathBuf,
}

impl FixtureSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn story_dir(&self, story_id: &str) -> Result<PathBuf, IngestError> {
        if !is_safe_id(story_id) {
            return Err(IngestError::InvalidQuery(format!("bad story id {story_id:?}")));
        }
        Ok(self.root.join(story_id))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ArticleSource for FixtureSource {
    fn fetch_articles(&self, query: &StoryQuery) -> Result<Vec<ArticleRecord>, IngestError> {
        let dir = self.story_dir(&query.story_id)?.join("articles");
        if !dir.is_dir() {
            return Err(IngestError::SourceUnreachable(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".html").map(str::to_string)
            })
            .collect();
        ids.sort();

        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let html_path = dir.join(format!("{id}.html"));
            let meta_path = dir.join(format!("{id}.meta.json"));
            let html = fs::read_to_string(&html_path).map_err(io_err(&html_path))?;
            let meta_raw = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
            let meta: ArticleMeta = serde_json::from_str(&meta_raw)
                .map_err(|e| IngestError::InvalidRecord(format!("{}: {e}", meta_path.display())))?;
            out.push(ArticleRecord {
                title: extract_title(&html),
                article_id: id,
                url: meta.url,
                source_name: meta.source_name,
                fetched_at: meta.fetched_at,
                html,
            });
        }
        Ok(out)
    }

    fn fetch_image(&self, story_id: &str, url: &Url) -> Result<Vec<u8>, IngestError> {
        let name = url
            .path_segments()
            .and_then(|mut s| s.next_back())
            .filter(|n| is_safe_id(n))
            .ok_or_else(|| IngestError::ImageUnavailable {
                url: url.to_string(),
                reason: "no file name in url".into(),
            })?;
        let path = self.story_dir(story_id)?.join("images").join(name);
        fs::read(&path).map_err(|e| IngestError::ImageUnavailable {
            url: url.to_string(),
            reason: format!("{}: {e}", path.display()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpSourceConfig {
    pub user_agent: String,
    /// Minimum spacing between two requests to the same host.
    pub politeness: Duration,
    pub timeout: Duration,
}

impl Default for HttpSourceConfig {
    fn default() -> Self {
        Self {
            user_agent: concat!("visbias/", env!("CARGO_PKG_VERSION")).to_string(),
            politeness: Duration::from_millis(1000),
            timeout: Duration::from_secs(20),
        }
    }
}

/// Fetches the story's seed URLs directly with plain GET requests.
pub struct HttpSource {
    client: reqwest::blocking::Client,
    config: HttpSourceConfig,
    last_hit: Mutex<HashMap<String, Instant>>,
}

impl HttpSource {
    pub fn new(config: HttpSourceConfig) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(config.timeout)
            .build()
            .map_err(|e| IngestError::SourceUnreachable(e.to_string()))?;
        Ok(Self {
            client,
            config,
            last_hit: Mutex::new(HashMap::new()),
        })
    }

    fn wait_for_host(&self, url: &Url) {
        let host = url.host_str().unwrap_or_default().to_string();
        loop {
            let wait = {
                let mut map = self.last_hit.lock().expect("politeness map poisoned");
                let now = Instant::now();
                match map.get(&host) {
                    Some(prev) if now.duration_since(*prev) < self.config.politeness => {
                        self.config.politeness - now.duration_since(*prev)
                    }
                    _ => {
                        map.insert(host.clone(), now);
                        return;
                    }
                }
            };
            std::thread::sleep(wait);
        }
    }

    fn get(&self, url: &Url) -> Result<reqwest::blocking::Response, IngestError> {
        self.wait_for_host(url);
        debug!("GET {url}");
        let resp = self
            .client
            .get(url.clone())
            .send()
            .map_err(|e| IngestError::SourceUnreachable(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(IngestError::SourceUnreachable(format!(
                "{url}: status {}",
                resp.status()
            )));
        }
        Ok(resp)
    }
}

/// Publisher name for a URL: its host without a leading `www.`.
pub(crate) fn publisher_of(url: &Url) -> String {
    let host = url.host_str().unwrap_or("unknown");
    host.strip_prefix("www.").unwrap_or(host).to_string()
}

fn article_id_for(url: &Url) -> String {
    let digest = Sha256::digest(url.as_str().as_bytes());
    format!("a-{}", &hex::encode(digest)[..12])
}

impl ArticleSource for HttpSource {
    fn fetch_articles(&self, query: &StoryQuery) -> Result<Vec<ArticleRecord>, IngestError> {
        let mut out = Vec::new();
        let mut last_err = None;
        for raw in &query.seed_urls {
            let url = Url::parse(raw).map_err(|e| IngestError::InvalidQuery(e.to_string()))?;
            match self.get(&url).and_then(|r| {
                r.text()
                    .map_err(|e| IngestError::SourceUnreachable(format!("{url}: {e}")))
            }) {
                Ok(html) => out.push(ArticleRecord {
                    article_id: article_id_for(&url),
                    source_name: publisher_of(&url),
                    fetched_at: Utc::now(),
                    title: extract_title(&html),
                    url,
                    html,
                }),
                Err(e) => {
                    warn!("skipping article: {e}");
                    last_err = Some(e);
                }
            }
        }
        // Only a total failure counts as the source being unreachable.
        match (out.is_empty(), last_err) {
            (true, Some(e)) => Err(e),
            _ => Ok(out),
        }
    }

    fn fetch_image(&self, _story_id: &str, url: &Url) -> Result<Vec<u8>, IngestError> {
        let resp = self.get(url).map_err(|e| IngestError::ImageUnavailable {
            url: url.to_string(),
            reason: e.to_string(),
        })?;
        resp.bytes()
            .map(|b| b.to_vec())
            .map_err(|e| IngestError::ImageUnavailable {
                url: url.to_string(),
                reason: e.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn publisher_strips_www() {
        let u = Url::parse("https://www.diario.example/a/b").unwrap();
        assert_eq!(publisher_of(&u), "diario.example");
    }

    #[test]
    fn article_ids_are_stable() {
        let u = Url::parse("https://x.example/n/1").unwrap();
        assert_eq!(article_id_for(&u), article_id_for(&u.clone()));
        assert!(article_id_for(&u).starts_with("a-"));
    }

    #[test]
    fn missing_fixture_dir_is_unreachable() {
        let tmp = tempfile::tempdir().unwrap();
        let src = FixtureSource::new(tmp.path());
        let err = src.fetch_articles(&StoryQuery::new("nope", "x")).unwrap_err();
        assert!(matches!(err, IngestError::SourceUnreachable(_)));
    }
}
