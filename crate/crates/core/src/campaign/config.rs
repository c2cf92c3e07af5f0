use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, ServiceError};
use crate::bot::{
    ConversationPolicy, CueLexicon, HttpPlatform, MockPlatform, PlatformClient, RateCaps, TemplateSet,
};
use crate::ingest::{ArticleSource, FixtureSource, HttpSource, HttpSourceConfig, DEFAULT_FETCH_CONCURRENCY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlatformMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    /// Root of `<story_id>/articles/...` fixture trees. When unset, stories
    /// are fetched over HTTP from their seed URLs.
    pub stories_dir: Option<PathBuf>,
    /// Mock platform fixture used by campaigns in mock mode.
    pub platform: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub user_agent: String,
    pub politeness_ms: u64,
    pub timeout_ms: u64,
    pub concurrency: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            user_agent: concat!("visbias/", env!("CARGO_PKG_VERSION")).to_string(),
            politeness_ms: 1000,
            timeout_ms: 20_000,
            concurrency: DEFAULT_FETCH_CONCURRENCY,
        }
    }
}

impl IngestConfig {
    pub fn http_source_config(&self) -> HttpSourceConfig {
        HttpSourceConfig {
            user_agent: self.user_agent.clone(),
            politeness: Duration::from_millis(self.politeness_ms),
            timeout: Duration::from_millis(self.timeout_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub enabled: bool,
    pub base_url: String,
    pub token: String,
    pub timeout_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            base_url: String::new(),
            token: String::new(),
            timeout_ms: 20_000,
        }
    }
}

/// The TOML configuration file. Relative paths are resolved against the
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub data_dir: PathBuf,
    pub platform_mode: PlatformMode,
    pub public_base_url: String,
    pub listen: String,
    /// Shared bearer token for the activist API. Empty disables the API;
    /// public pages are still served.
    pub activist_token: String,
    pub caps: RateCaps,
    pub fixtures: FixtureConfig,
    pub ingest: IngestConfig,
    pub pipeline: PipelineConfig,
    pub live: LiveConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            platform_mode: PlatformMode::Mock,
            public_base_url: "http://127.0.0.1:8080".into(),
            listen: "127.0.0.1:8080".into(),
            activist_token: String::new(),
            caps: RateCaps::default(),
            fixtures: FixtureConfig::default(),
            ingest: IngestConfig::default(),
            pipeline: PipelineConfig::default(),
            live: LiveConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.data_dir);
        for p in [
            &mut self.fixtures.stories_dir,
            &mut self.fixtures.platform,
            &mut self.fixtures.lexicon,
            &mut self.fixtures.templates,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    /// Templates and lexicon from the configured files, else the shipped
    /// Spanish defaults.
    pub fn conversation_policy(&self) -> Result<ConversationPolicy, ServiceError> {
        let mut policy = ConversationPolicy::spanish_defaults();
        if let Some(p) = &self.fixtures.lexicon {
            policy.lexicon = CueLexicon::load(p)?;
        }
        if let Some(p) = &self.fixtures.templates {
            policy.templates = TemplateSet::load(p)?;
        }
        Ok(policy)
    }

    /// Fixture corpus when configured, else live HTTP fetching.
    pub fn article_source(&self) -> Result<Box<dyn ArticleSource>, ServiceError> {
        Ok(match &self.fixtures.stories_dir {
            Some(dir) => Box::new(FixtureSource::new(dir)),
            None => Box::new(HttpSource::new(self.ingest.http_source_config())?),
        })
    }

    /// A fresh platform client. Each call in mock mode starts a new mock
    /// session from the fixture file.
    pub fn platform(&self) -> Result<Box<dyn PlatformClient>, ServiceError> {
        match self.platform_mode {
            PlatformMode::Mock => {
                let path = self.fixtures.platform.as_ref().ok_or_else(|| {
                    ServiceError::Invalid("mock mode needs fixtures.platform in the config".into())
                })?;
                Ok(Box::new(MockPlatform::load(path)?))
            }
            PlatformMode::Live => Ok(Box::new(HttpPlatform::new(
                self.live.enabled,
                &self.live.base_url,
                &self.live.token,
                Duration::from_millis(self.live.timeout_ms),
            )?)),
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            concurrency: self.ingest.concurrency,
            ..self.pipeline.clone()
        }
    }
}
