//! File-backed persistence and the operations the HTTP service and the CLI
//! share: story ingestion, macro composition, campaigns, statistics, and the
//! public exploration page.
//!
//! Layout under the data directory:
//!
//! ```text
//! artifacts/<story_id>/story.json
//! artifacts/<story_id>/articles.json
//! artifacts/<story_id>/images.json
//! artifacts/<story_id>/images/<image_id>.png
//! artifacts/<story_id>/features/fisher.json
//! artifacts/<story_id>/features/models.json
//! artifacts/<story_id>/clusters.json
//! artifacts/<story_id>/macros/<macro_id>.{png,json,meta.html}
//! campaigns/<campaign_id>/campaign.json
//! campaigns/<campaign_id>/events.jsonl
//! ```

mod config;
mod explore;
mod ops;
mod pipeline;
mod stats;
mod store;

pub use config::{AppConfig, FixtureConfig, IngestConfig, LiveConfig, PlatformMode};
pub use explore::{render_exploration, EXPLORE_IMAGE_CLASS};
pub use ops::{
    campaign_stats, close_conversation, create_campaign, handoff_reply, set_campaign_status,
    supervision_queue, tick_campaign, MessageAuthor, NewCampaign, QueueItem, QueueMessage,
};
pub use pipeline::{
    cluster_vectors, compose_story_macro, encode_story, explore_url, ingest_and_cluster, recluster,
    ComposeRequest, KChoice, PipelineConfig, StoryReport,
};
pub use stats::{compute_stats, median, CampaignStats};
pub use store::{read_event_log, DataStore, StoryBundle};

use thiserror::Error;

use crate::bot::BotError;
use crate::cluster::ClusterError;
use crate::compose::MacroError;
use crate::features::FeatureError;
use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Macro(#[from] MacroError),
    #[error(transparent)]
    Bot(#[from] BotError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: String, reason: String },
}

impl ServiceError {
    /// Short machine-readable category used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Invalid(_) => "invalid_request",
            ServiceError::Ingest(IngestError::EmptyResult(_)) => "empty_result",
            ServiceError::Ingest(IngestError::InvalidQuery(_)) => "invalid_request",
            ServiceError::Ingest(IngestError::SourceUnreachable(_)) => "source_unreachable",
            ServiceError::Ingest(_) => "ingest_failed",
            ServiceError::Feature(_) => "feature_failed",
            ServiceError::Cluster(_) => "invalid_request",
            ServiceError::Macro(MacroError::UnknownImage(_)) => "not_found",
            ServiceError::Macro(_) => "invalid_request",
            ServiceError::Bot(BotError::CapExceeded(_)) => "cap_exceeded",
            ServiceError::Bot(BotError::PlatformUnavailable(_)) => "platform_unavailable",
            ServiceError::Bot(BotError::RateLimited { .. }) => "rate_limited",
            ServiceError::Bot(BotError::UnknownUser(_)) => "not_found",
            ServiceError::Bot(BotError::Config(_)) => "invalid_request",
            ServiceError::Bot(BotError::SendFailure { .. }) => "send_failed",
            ServiceError::Bot(_) => "conflict",
            ServiceError::Io { .. } | ServiceError::Corrupt { .. } => "internal",
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.display().to_string(),
        source,
    }
}
