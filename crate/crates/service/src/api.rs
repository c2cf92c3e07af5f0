use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use visbias_core::bot::{Campaign, CampaignStatus, EngagementEvent};
use visbias_core::campaign::{
    self as ops, explore_url, CampaignStats, ComposeRequest, KChoice, NewCampaign, QueueItem, ServiceError,
    StoryReport,
};
use visbias_core::cluster::ClusterReport;
use visbias_core::compose::{media_url, ImageMacro};
use visbias_core::ingest::StoryQuery;

use crate::{ApiError, AppState};

type ApiResult<T> = Result<Json<T>, ApiError>;
type Created<T> = Result<(StatusCode, Json<T>), ApiError>;

/// Bodies are parsed here rather than by axum's extractor so that malformed
/// JSON gets the same error shape as every other failure.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("request body: {e}")).into())
}

/// An empty body means all defaults.
fn parse_or_default<T: DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse(body)
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct ForceParam {
    #[serde(default)]
    force: bool,
}

pub async fn list_stories(State(state): State<AppState>) -> ApiResult<Vec<String>> {
    state.read(|s| s.store().list_stories()).await.map(Json)
}

pub async fn ingest_story(
    State(state): State<AppState>,
    Query(params): Query<ForceParam>,
    body: Bytes,
) -> Created<StoryReport> {
    let query: StoryQuery = parse(&body)?;
    let key = format!("story:{}", query.story_id);
    let report = state
        .write(key, move |s| {
            let source = s.config().article_source()?;
            ops::ingest_and_cluster(
                s.store(),
                &query,
                &*source,
                &s.config().pipeline_config(),
                params.force,
            )
        })
        .await?;
    Ok((StatusCode::CREATED, Json(report)))
}

pub async fn get_story(
    State(state): State<AppState>,
    Path(story_id): Path<String>,
) -> ApiResult<StoryReport> {
    state
        .read(move |s| s.store().load_report(&story_id))
        .await
        .map(Json)
}

pub async fn get_clusters(
    State(state): State<AppState>,
    Path(story_id): Path<String>,
) -> ApiResult<ClusterReport> {
    state
        .read(move |s| s.store().load_clusters(&story_id))
        .await
        .map(Json)
}

#[derive(Debug, Default, Deserialize)]
pub struct ReclusterRequest {
    #[serde(default)]
    k: Option<KChoice>,
    #[serde(default)]
    seed: Option<u64>,
}

pub async fn recluster_story(
    State(state): State<AppState>,
    Path(story_id): Path<String>,
    body: Bytes,
) -> ApiResult<ClusterReport> {
    let req: ReclusterRequest = parse_or_default(&body)?;
    let key = format!("story:{story_id}");
    state
        .write(key, move |s| {
            ops::recluster(s.store(), &story_id, req.k.unwrap_or(KChoice::Auto), req.seed)
        })
        .await
        .map(Json)
}

/// A macro record plus the public URLs it is reachable at.
#[derive(Debug, Serialize)]
pub struct MacroView {
    #[serde(flatten)]
    pub record: ImageMacro,
    pub png_url: String,
    pub explore_url: String,
}

fn macro_view(state: &AppState, record: ImageMacro) -> Result<MacroView, ServiceError> {
    let explore = explore_url(&state.config().public_base_url, &record.story_id)?;
    let png_url = media_url(&explore, &record.story_id, &record.macro_id)?;
    Ok(MacroView {
        record,
        png_url,
        explore_url: explore,
    })
}

pub async fn list_macros(
    State(state): State<AppState>,
    Path(story_id): Path<String>,
) -> ApiResult<Vec<MacroView>> {
    state
        .read(move |s| {
            s.store()
                .list_macros(&story_id)?
                .into_iter()
                .map(|m| macro_view(s, m))
                .collect()
        })
        .await
        .map(Json)
}

pub async fn compose_macro(
    State(state): State<AppState>,
    Path(story_id): Path<String>,
    body: Bytes,
) -> Created<MacroView> {
    let req: ComposeRequest = parse(&body)?;
    let key = format!("story:{story_id}");
    let view = state
        .write(key, move |s| {
            let m = ops::compose_story_macro(
                s.store(),
                &story_id,
                &req,
                &s.config().public_base_url,
                Utc::now(),
            )?;
            macro_view(s, m)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

pub async fn list_campaigns(State(state): State<AppState>) -> ApiResult<Vec<String>> {
    state.read(|s| s.store().list_campaigns()).await.map(Json)
}

pub async fn create_campaign(State(state): State<AppState>, body: Bytes) -> Created<Campaign> {
    let req: NewCampaign = parse(&body)?;
    // Generated ids depend on the campaign count, so creation is serialized.
    let campaign = state
        .write("campaigns".into(), move |s| {
            ops::create_campaign(s.store(), &req, s.config().caps, &s.config().public_base_url)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(campaign)))
}

pub async fn get_campaign(
    State(state): State<AppState>,
    Path(campaign_id): Path<String>,
) -> ApiResult<Campaign> {
    state
        .read(move |s| s.store().load_campaign(&campaign_id))
        .await
        .map(Json)
}

#[derive(Debug, Deserialize)]
pub struct StatusRequest {
    status: CampaignStatus,
}

pub async fn set_status(
    State(state): State<AppState>,
    Path(campaign_id): Path<String>,
    body: Bytes,
) -> ApiResult<Campaign> {
    let req: StatusRequest = parse(&body)?;
    let key = format!("campaign:{campaign_id}");
    state
        .write(key, move |s| {
            ops::set_campaign_status(s.store(), &campaign_id, req.status)
        })
        .await
        .map(Json)
}

#[derive(Debug, Default, Deserialize)]
pub struct TickRequest {
    /// Scheduler clock for this pass; defaults to the server clock.
    #[serde(default)]
    at: Option<DateTime<Utc>>,
}

#[derive(Debug, Serialize)]
pub struct TickResponse {
    pub events: Vec<EngagementEvent>,
}

pub async fn tick(
    State(state): State<AppState>,
    Path(campaign_id): Path<String>,
    body: Bytes,
) -> ApiResult<TickResponse> {
    let req: TickRequest = parse_or_default(&body)?;
    let now = req.at.unwrap_or_else(Utc::now);
    let key = format!("campaign:{campaign_id}");
    state
        .write(key, move |s| {
            if !s.store().campaign_exists(&campaign_id) {
                return Err(ServiceError::NotFound(format!("unknown campaign {campaign_id}")));
            }
            let platform = s.platform_for(&campaign_id)?;
            let events = ops::tick_campaign(s.store(), &campaign_id, &*platform, s.policy(), now)?;
            Ok(TickResponse { events })
        })
        .await
        .map(Json)
}

pub async fn stats(
    State(state): State<AppState>,
    Path(campaign_id): Path<String>,
) -> ApiResult<CampaignStats> {
    state
        .read(move |s| ops::campaign_stats(s.store(), &campaign_id))
        .await
        .map(Json)
}

pub async fn queue(
    State(state): State<AppState>,
    Path(campaign_id): Path<String>,
) -> ApiResult<Vec<QueueItem>> {
    state
        .read(move |s| ops::supervision_queue(s.store(), &campaign_id))
        .await
        .map(Json)
}

#[derive(Debug, Deserialize)]
pub struct HandoffRequest {
    activist_id: String,
    text: String,
}

pub async fn handoff_reply(
    State(state): State<AppState>,
    Path((campaign_id, conversation_id)): Path<(String, String)>,
    body: Bytes,
) -> Created<EngagementEvent> {
    let req: HandoffRequest = parse(&body)?;
    if req.text.trim().is_empty() {
        return Err(ServiceError::Invalid("reply text is empty".into()).into());
    }
    let key = format!("campaign:{campaign_id}");
    let ev = state
        .write(key, move |s| {
            if !s.store().campaign_exists(&campaign_id) {
                return Err(ServiceError::NotFound(format!("unknown campaign {campaign_id}")));
            }
            let platform = s.platform_for(&campaign_id)?;
            ops::handoff_reply(
                s.store(),
                &campaign_id,
                &conversation_id,
                &req.activist_id,
                &req.text,
                &*platform,
                &s.policy().retry,
                Utc::now(),
            )
        })
        .await?;
    Ok((StatusCode::CREATED, Json(ev)))
}

pub async fn close(
    State(state): State<AppState>,
    Path((campaign_id, conversation_id)): Path<(String, String)>,
) -> Created<EngagementEvent> {
    let key = format!("campaign:{campaign_id}");
    let ev = state
        .write(key, move |s| {
            ops::close_conversation(s.store(), &campaign_id, &conversation_id, Utc::now())
        })
        .await?;
    Ok((StatusCode::CREATED, Json(ev)))
}
