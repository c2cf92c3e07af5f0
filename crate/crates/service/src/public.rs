use std::path::PathBuf;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};

use visbias_core::campaign::{render_exploration, ServiceError};

use crate::{status_for, AppState};

/// Unauthenticated routes answer in plain text rather than API JSON.
fn failure(e: ServiceError) -> Response {
    let status = status_for(e.code());
    let body = if status == StatusCode::NOT_FOUND {
        "not found".to_string()
    } else {
        log::error!("public route: {e}");
        "internal error".to_string()
    };
    (status, body).into_response()
}

pub async fn exploration(State(state): State<AppState>, Path(story_id): Path<String>) -> Response {
    let result = state
        .read(move |s| render_exploration(s.store(), &story_id, &s.config().public_base_url))
        .await;
    match result {
        Ok(html) => Html(html).into_response(),
        Err(crate::ApiError::Domain(e)) => failure(e),
        Err(e) => e.into_response(),
    }
}

async fn png(
    state: AppState,
    locate: impl FnOnce(&AppState) -> Result<PathBuf, ServiceError> + Send + 'static,
) -> Response {
    let result = state
        .read(move |s| {
            let path = locate(s)?;
            std::fs::read(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => ServiceError::NotFound(path.display().to_string()),
                _ => ServiceError::Io {
                    path: path.display().to_string(),
                    source: e,
                },
            })
        })
        .await;
    match result {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(crate::ApiError::Domain(e)) => failure(e),
        Err(e) => e.into_response(),
    }
}

fn png_stem(file: &str) -> Result<String, ServiceError> {
    file.strip_suffix(".png")
        .map(str::to_string)
        .ok_or_else(|| ServiceError::NotFound(file.to_string()))
}

pub async fn image(
    State(state): State<AppState>,
    Path((story_id, file)): Path<(String, String)>,
) -> Response {
    png(state, move |s| s.store().image_path(&story_id, &png_stem(&file)?)).await
}

pub async fn macro_png(
    State(state): State<AppState>,
    Path((story_id, file)): Path<(String, String)>,
) -> Response {
    png(state, move |s| {
        s.store().macro_path(&story_id, &png_stem(&file)?, "png")
    })
    .await
}
