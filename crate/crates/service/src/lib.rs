//! HTTP front end: the activist JSON API under `/api/v1` and the public
//! exploration pages and media that shared macros link to.
//!
//! Handlers are thin. Every call into the core runs on the blocking pool,
//! and writes to one story or one campaign are serialized with a keyed lock,
//! so two ticks of a campaign never interleave while different campaigns
//! proceed in parallel.

mod api;
mod error;
mod public;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;

use visbias_core::bot::{ConversationPolicy, PlatformClient};
use visbias_core::campaign::{AppConfig, DataStore, ServiceError};

pub use error::{status_for, ApiError};

/// Shared handle passed to every handler.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: AppConfig,
    store: DataStore,
    policy: ConversationPolicy,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    platforms: Mutex<HashMap<String, Arc<dyn PlatformClient>>>,
}

impl AppState {
    pub fn new(config: AppConfig) -> Result<Self, ServiceError> {
        let store = DataStore::open(&config.data_dir)?;
        let policy = config.conversation_policy()?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                store,
                policy,
                locks: Mutex::default(),
                platforms: Mutex::default(),
            }),
        })
    }

    pub fn config(&self) -> &AppConfig {
        &self.inner.config
    }

    pub fn store(&self) -> &DataStore {
        &self.inner.store
    }

    pub fn policy(&self) -> &ConversationPolicy {
        &self.inner.policy
    }

    /// Lock serializing writes to one story or campaign, e.g. `campaign:c-1`.
    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.inner.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    /// Run `f` on the blocking pool while holding the write lock for `key`.
    async fn write<T, F>(&self, key: String, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&AppState) -> Result<T, ServiceError> + Send + 'static,
    {
        let state = self.clone();
        run_blocking(move || {
            let lock = state.lock_for(&key);
            let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
            f(&state)
        })
        .await
    }

    async fn read<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&AppState) -> Result<T, ServiceError> + Send + 'static,
    {
        let state = self.clone();
        run_blocking(move || f(&state)).await
    }

    /// The platform session of a campaign. In mock mode each campaign gets
    /// its own mock, kept for the life of the process.
    fn platform_for(&self, campaign_id: &str) -> Result<Arc<dyn PlatformClient>, ServiceError> {
        let mut platforms = self.inner.platforms.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = platforms.get(campaign_id) {
            return Ok(p.clone());
        }
        let p: Arc<dyn PlatformClient> = Arc::from(self.inner.config.platform()?);
        platforms.insert(campaign_id.to_string(), p.clone());
        Ok(p)
    }
}

async fn run_blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::Internal(format!("worker failed: {e}"))),
    }
}

/// Constant-time comparison, so response timing does not leak the token.
fn token_matches(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(
    State(state): State<AppState>,
    req: Request,
    next: Next,
) -> Result<Response, ApiError> {
    let expected = state.config().activist_token.as_bytes();
    let given = req
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match given {
        Some(t) if !expected.is_empty() && token_matches(t.as_bytes(), expected) => Ok(next.run(req).await),
        _ => Err(ApiError::Unauthorized),
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/stories", get(api::list_stories).post(api::ingest_story))
        .route("/stories/{story_id}", get(api::get_story))
        .route(
            "/stories/{story_id}/clusters",
            get(api::get_clusters).post(api::recluster_story),
        )
        .route(
            "/stories/{story_id}/macros",
            get(api::list_macros).post(api::compose_macro),
        )
        .route("/campaigns", get(api::list_campaigns).post(api::create_campaign))
        .route("/campaigns/{campaign_id}", get(api::get_campaign))
        .route("/campaigns/{campaign_id}/status", post(api::set_status))
        .route("/campaigns/{campaign_id}/tick", post(api::tick))
        .route("/campaigns/{campaign_id}/stats", get(api::stats))
        .route("/campaigns/{campaign_id}/queue", get(api::queue))
        .route(
            "/campaigns/{campaign_id}/queue/{conversation_id}/handoff-reply",
            post(api::handoff_reply),
        )
        .route(
            "/campaigns/{campaign_id}/queue/{conversation_id}/close",
            post(api::close),
        )
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));

    Router::new()
        .nest("/api/v1", api)
        .route("/s/{story_id}", get(public::exploration))
        .route("/media/{story_id}/images/{file}", get(public::image))
        .route("/media/{story_id}/macros/{file}", get(public::macro_png))
        .with_state(state)
}

/// Bind `config.listen` and serve until Ctrl-C.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let listen = state.config().listen.clone();
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    if state.config().activist_token.is_empty() {
        log::warn!("activist_token is empty; the /api/v1 routes will refuse every request");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
