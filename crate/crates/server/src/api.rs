//! The `/api/v1` HTTP surface.

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forge_core::cluster::ClusterConfig;
use forge_core::dialogue::{ChatSession, Dialogue, FeedbackMode, FeedbackRequest, Message, Phase, Retrieved};
use forge_core::distill::{DimensionValueSet, Value};
use forge_core::persona::{self, PersonaProfile, ValuePair};
use forge_core::pipeline::ProjectArtifacts;
use forge_core::Flag;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::jobs;
use crate::state::{new_id, AppState};
use crate::store::{FeedbackAnchorRecord, PipelineJob, ProjectSummary, StorylineRecord};

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/projects", post(create_project).get(list_projects))
        .route("/projects/:id", get(get_project))
        .route("/projects/:id/pipeline", post(start_pipeline))
        .route("/projects/:id/cluster", get(get_cluster))
        .route("/projects/:id/dimval", get(get_dimval))
        .route("/projects/:id/dimval/values", post(add_dimval_value))
        .route("/projects/:id/suggest_value", post(suggest_value))
        .route("/projects/:id/personas", get(list_personas).post(customize_persona))
        .route(
            "/projects/:id/storylines",
            get(list_storylines).post(create_storyline).patch(patch_project_storyline),
        )
        .route("/jobs/:id", get(get_job))
        .route("/personas/:id", get(get_persona))
        .route("/personas/:id/chat", post(chat))
        .route("/sessions/:id/transcript", get(transcript))
        .route("/storylines/:id", get(get_storyline).patch(patch_storyline))
        .route("/storylines/:id/review", post(review))
        .route("/storylines/:id/feedback", post(feedback))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }));
    let app = Router::new().nest("/api/v1", api).with_state(state.clone());
    match &state.config().server.static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.config().server.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let ok = given.is_some_and(|g| {
            g.len() == expected.len() && g.bytes().zip(expected.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
        });
        if !ok {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(req).await
}

/// Runs store and model work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

/// Accepts an absent body as the type's default.
fn parse_optional<T: DeserializeOwned + Default>(body: &[u8]) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        Ok(T::default())
    } else {
        parse_json(body)
    }
}

fn created<T: Serialize>(value: T) -> Response {
    (StatusCode::CREATED, Json(value)).into_response()
}

fn dialogue<'a>(state: &'a AppState, artifacts: &'a ProjectArtifacts) -> Dialogue<'a> {
    Dialogue {
        gw: state.gateway(),
        corpus: &artifacts.corpus,
        index: &artifacts.index,
        config: &state.config().dialogue,
    }
}

// Projects and jobs

async fn create_project(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::BadRequest("corpus is not UTF-8".into()))?;
    let doc: serde_json::Value = serde_json::from_str(text.trim_start_matches('\u{feff}'))
        .map_err(|e| ApiError::BadRequest(format!("corpus is not JSON: {e}")))?;
    let channel_name = doc
        .pointer("/channel/name")
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string();
    let text = text.to_string();
    let summary = blocking(move || {
        let id = new_id("project");
        state.store().create_project(&id, &channel_name, &text)?;
        state.store().project(&id)
    })
    .await?;
    Ok(created(summary))
}

async fn list_projects(State(state): State<AppState>) -> ApiResult<Json<Vec<ProjectSummary>>> {
    blocking(move || state.store().list_projects()).await.map(Json)
}

#[derive(Serialize)]
struct ProjectDetail {
    #[serde(flatten)]
    summary: ProjectSummary,
    latest_job: Option<PipelineJob>,
    flags: Vec<Flag>,
}

async fn get_project(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ProjectDetail>> {
    blocking(move || {
        let summary = state.store().project(&id)?;
        let latest_job = state.store().latest_job(&id)?;
        let flags = if summary.has_artifacts {
            state.artifacts(&id)?.flags.clone()
        } else {
            Vec::new()
        };
        Ok(Json(ProjectDetail {
            summary,
            latest_job,
            flags,
        }))
    })
    .await
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineBody {
    cluster: Option<ClusterConfig>,
}

async fn start_pipeline(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: PipelineBody = parse_optional(&body)?;
    let job = blocking(move || jobs::start_pipeline(&state, &id, body.cluster).map(|(job, _)| job)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PipelineJob>> {
    blocking(move || state.store().job(&id)).await.map(Json)
}

async fn get_cluster(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        let artifacts = state.artifacts(&id)?;
        Ok(Json(&artifacts.cluster).into_response())
    })
    .await
}

// Dimensions and values

async fn get_dimval(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DimensionValueSet>> {
    blocking(move || Ok(Json(state.artifacts(&id)?.dimval.clone()))).await
}

#[derive(Deserialize)]
struct SuggestBody {
    dimension: String,
}

async fn suggest_value(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: SuggestBody = parse_json(&body)?;
    blocking(move || {
        let artifacts = state.artifacts(&id)?;
        let value = persona::suggest_value(state.gateway(), &artifacts.corpus.name, &artifacts.dimval, &body.dimension)?;
        Ok(Json(json!({ "dimension": body.dimension, "value": value })).into_response())
    })
    .await
}

#[derive(Deserialize)]
struct AddValueBody {
    dimension: String,
    value: String,
    definition: String,
}

async fn add_dimval_value(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: AddValueBody = parse_json(&body)?;
    let set = blocking(move || {
        let lock = state.session_lock(&format!("project:{id}"));
        let _guard = lock.lock();
        let mut artifacts = (*state.artifacts(&id)?).clone();
        let value = Value {
            label: body.value.trim().to_string(),
            definition: body.definition.trim().to_string(),
        };
        if value.label.is_empty() || value.definition.is_empty() {
            return Err(ApiError::Validation("value and definition must be nonempty".into()));
        }
        persona::add_value(&mut artifacts.dimval, &body.dimension, value)?;
        state.store().update_artifacts(&id, &artifacts)?;
        let set = artifacts.dimval.clone();
        state.set_artifacts(&id, artifacts);
        Ok(set)
    })
    .await?;
    Ok(created(set))
}

// Personas

fn require_done(state: &AppState, project_id: &str) -> ApiResult<()> {
    if state.store().project(project_id)?.has_artifacts {
        Ok(())
    } else {
        Err(ApiError::PipelineNotDone(project_id.to_string()))
    }
}

async fn list_personas(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<PersonaProfile>>> {
    blocking(move || {
        require_done(&state, &id)?;
        state.store().personas(&id).map(Json)
    })
    .await
}

async fn get_persona(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PersonaProfile>> {
    blocking(move || state.store().persona(&id).map(|(_, p)| Json(p))).await
}

#[derive(Deserialize)]
struct CustomizeBody {
    chosen_values: Vec<ValuePair>,
}

async fn customize_persona(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: CustomizeBody = parse_json(&body)?;
    let profile = blocking(move || {
        let lock = state.session_lock(&format!("project:{id}"));
        let _guard = lock.lock();
        let artifacts = state.artifacts(&id)?;
        let existing = state.store().personas(&id)?;
        let mut profile = persona::create_custom_persona(
            state.gateway(),
            &body.chosen_values,
            &artifacts.dimval,
            &existing,
            &artifacts.observational_summary(),
        )?;
        profile.persona_id = new_id("persona");
        state.store().add_persona(&id, &profile)?;
        Ok(profile)
    })
    .await?;
    Ok(created(profile))
}

// Sessions

/// Loads the session, or starts one, and runs `turn` under the session lock.
/// Appended messages are persisted only if the turn succeeds; a new session
/// is only stored then too.
fn with_session<T>(
    state: &AppState,
    project_id: &str,
    session_id: Option<String>,
    phase: Phase,
    turn: impl FnOnce(&mut ChatSession) -> ApiResult<T>,
) -> ApiResult<(String, T)> {
    let (session_id, phase, fresh) = match session_id {
        Some(sid) => {
            let (owner, phase) = state.store().session(&sid)?;
            if owner != project_id {
                return Err(ApiError::BadRequest(format!("session `{sid}` belongs to another project")));
            }
            (sid, phase, false)
        }
        None => (new_id("session"), phase, true),
    };
    let lock = state.session_lock(&session_id);
    let _guard = lock.lock();
    let history = if fresh { Vec::new() } else { state.store().messages(&session_id)? };
    let mut session = ChatSession::restore(&session_id, phase, history);
    let before = session.history().len();
    let out = turn(&mut session)?;
    if fresh {
        state.store().create_session(&session_id, project_id, phase)?;
    }
    state
        .store()
        .append_messages(&session_id, before, &session.history()[before..])?;
    Ok((session_id, out))
}

#[derive(Deserialize)]
struct ChatBody {
    message: String,
    session_id: Option<String>,
}

#[derive(Serialize)]
struct ReplyBody {
    session_id: String,
    reply: Message,
    retrieved: Vec<Retrieved>,
    flags: Vec<Flag>,
}

async fn chat(State(state): State<AppState>, Path(persona_id): Path<String>, body: Bytes) -> ApiResult<Json<ReplyBody>> {
    let body: ChatBody = parse_json(&body)?;
    blocking(move || {
        let (project, persona) = state.store().persona(&persona_id)?;
        let artifacts = state.artifacts(&project)?;
        let d = dialogue(&state, &artifacts);
        let (session_id, reply) = with_session(&state, &project, body.session_id, Phase::Exploration, |s| {
            Ok(d.chat(s, &persona, &body.message)?)
        })?;
        Ok(Json(ReplyBody {
            session_id,
            reply: reply.message,
            retrieved: reply.retrieved,
            flags: reply.flags,
        }))
    })
    .await
}

#[derive(Deserialize)]
struct TranscriptQuery {
    format: Option<String>,
}

async fn transcript(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TranscriptQuery>,
) -> ApiResult<Response> {
    blocking(move || {
        let (project_id, phase) = state.store().session(&id)?;
        let messages = state.store().messages(&id)?;
        match q.format.as_deref() {
            None | Some("json") => Ok(Json(json!({
                "session_id": id,
                "project_id": project_id,
                "phase": phase,
                "messages": messages,
            }))
            .into_response()),
            Some("jsonl") => {
                let body = ChatSession::restore(&id, phase, messages).to_jsonl();
                Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
            }
            Some(other) => Err(ApiError::BadRequest(format!("unknown format `{other}`"))),
        }
    })
    .await
}

// Storylines

#[derive(Deserialize)]
struct CreateStorylineBody {
    topic: String,
    #[serde(default)]
    body: String,
}

async fn create_storyline(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let body: CreateStorylineBody = parse_json(&body)?;
    let record = blocking(move || {
        state.store().project(&id)?;
        state
            .store()
            .create_storyline(&new_id("storyline"), &id, body.topic.trim(), &body.body)
    })
    .await?;
    Ok(created(record))
}

async fn list_storylines(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<StorylineRecord>>> {
    blocking(move || {
        state.store().project(&id)?;
        state.store().storylines(&id).map(Json)
    })
    .await
}

#[derive(Serialize)]
struct StorylineDetail {
    #[serde(flatten)]
    record: StorylineRecord,
    feedback_anchors: Vec<FeedbackAnchorRecord>,
}

async fn get_storyline(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StorylineDetail>> {
    blocking(move || {
        let record = state.store().storyline(&id)?;
        let feedback_anchors = state.store().anchors(&id)?;
        Ok(Json(StorylineDetail {
            record,
            feedback_anchors,
        }))
    })
    .await
}

#[derive(Deserialize)]
struct PatchBody {
    storyline_id: Option<String>,
    expected_revision: u64,
    body: String,
    topic: Option<String>,
}

fn apply_patch(state: &AppState, id: &str, patch: &PatchBody) -> ApiResult<StorylineRecord> {
    state
        .store()
        .patch_storyline(id, patch.expected_revision, &patch.body, patch.topic.as_deref().map(str::trim))
}

async fn patch_storyline(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<StorylineRecord>> {
    let patch: PatchBody = parse_json(&body)?;
    blocking(move || apply_patch(&state, &id, &patch).map(Json)).await
}

/// Same write addressed through the project; the body names the storyline.
async fn patch_project_storyline(
    State(state): State<AppState>,
    Path(project_id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<StorylineRecord>> {
    let patch: PatchBody = parse_json(&body)?;
    let id = patch
        .storyline_id
        .clone()
        .ok_or_else(|| ApiError::BadRequest("storyline_id is required".into()))?;
    blocking(move || {
        if state.store().storyline(&id)?.project_id != project_id {
            return Err(ApiError::NotFound(format!("storyline `{id}` in project `{project_id}`")));
        }
        apply_patch(&state, &id, &patch).map(Json)
    })
    .await
}

fn project_persona(state: &AppState, project_id: &str, persona_id: &str) -> ApiResult<PersonaProfile> {
    let (owner, p) = state.store().persona(persona_id)?;
    if owner != project_id {
        return Err(ApiError::NotFound(format!("persona `{persona_id}` in project `{project_id}`")));
    }
    Ok(p)
}

#[derive(Default, Deserialize)]
struct ReviewBody {
    persona_ids: Option<Vec<String>>,
    session_id: Option<String>,
    message: Option<String>,
}

#[derive(Serialize)]
struct ReviewResponse {
    session_id: String,
    replies: Vec<Message>,
    flags: Vec<Flag>,
}

async fn review(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<ReviewResponse>> {
    let body: ReviewBody = parse_optional(&body)?;
    blocking(move || {
        let record = state.store().storyline(&id)?;
        let project = record.project_id.clone();
        let artifacts = state.artifacts(&project)?;
        let personas = match &body.persona_ids {
            Some(ids) => ids
                .iter()
                .map(|p| project_persona(&state, &project, p))
                .collect::<ApiResult<Vec<_>>>()?,
            None => state.store().personas(&project)?,
        };
        let d = dialogue(&state, &artifacts);
        let draft = record.draft();
        let (session_id, review) = with_session(&state, &project, body.session_id, Phase::Creation, |s| {
            Ok(d.plot_review(s, &personas, &draft, body.message.as_deref())?)
        })?;
        Ok(Json(ReviewResponse {
            session_id,
            replies: review.replies,
            flags: review.flags,
        }))
    })
    .await
}

#[derive(Deserialize)]
struct FeedbackBody {
    persona_id: String,
    revision: u64,
    start: usize,
    end: usize,
    mode: FeedbackMode,
    session_id: Option<String>,
}

async fn feedback(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<ReplyBody>> {
    let body: FeedbackBody = parse_json(&body)?;
    blocking(move || {
        let record = state.store().storyline(&id)?;
        let project = record.project_id.clone();
        let persona = project_persona(&state, &project, &body.persona_id)?;
        let artifacts = state.artifacts(&project)?;
        let request = FeedbackRequest {
            persona_id: body.persona_id.clone(),
            storyline_id: id.clone(),
            revision: body.revision,
            start: body.start,
            end: body.end,
            mode: body.mode,
        };
        let d = dialogue(&state, &artifacts);
        let draft = record.draft();
        let (session_id, reply) = with_session(&state, &project, body.session_id, Phase::Creation, |s| {
            Ok(d.inline_feedback(s, &persona, &draft, &request)?)
        })?;
        Ok(Json(ReplyBody {
            session_id,
            reply: reply.message,
            retrieved: reply.retrieved,
            flags: reply.flags,
        }))
    })
    .await
}
