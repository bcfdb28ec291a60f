//! Endpoints behind the admin token: catalog editing, the dashboard,
//! exports, simulation and topic modeling.

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use colloquy_core::analytics::{
    compute_dashboard, distribution, export_aggregate, export_session, summarize_conversation, survey_plot_data,
    turns_csv, ConversationSummary, DashboardStats, Histogram, Metric, SessionExport, SurveyPlotData, DEFAULT_BINS,
};
use colloquy_core::dialogue::SessionId;
use colloquy_core::domain::{
    CategoryId, FaqEntry, FaqId, Interview, InterviewId, LexiconCategory, SurveyQuestion, SurveyQuestionId, Topic,
    TopicId, ValidationError,
};
use colloquy_core::fixtures::FixtureDocument;
use colloquy_core::simulator::{coverage_check, simulate, CoverageWarning, RespondentModel, SimulationReport};
use colloquy_core::store::{
    CategoryDraft, CategoryPatch, FaqDraft, ImportReport, InterviewDraft, NewTopic, SurveyQuestionDraft, TopicPatch,
};
use colloquy_core::Catalog;
use colloquy_topics::jobs::{RunId, RunRequest, TopicModelRun};
use colloquy_topics::{relevance_view, turns_for_topic_word, turns_for_word, Document, RelevanceView, TopicModelResult};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::extract::{StrictJson, StrictPath, StrictQuery};
use crate::participant::{csv_response, ExportFormat};
use crate::state::AppState;

pub const MAX_SIMULATED_SESSIONS: u32 = 100_000;
pub const MAX_BINS: usize = 1000;

pub fn routes(state: AppState) -> Router<AppState> {
    Router::new()
        .route("/api/admin/catalog", get(export_catalog))
        .route("/api/admin/import", post(import_catalog))
        .route("/api/admin/topics", get(list_topics).post(create_topic))
        .route("/api/admin/topics/{id}", get(get_topic).patch(update_topic).delete(delete_topic))
        .route("/api/admin/topics/{id}/deactivate", post(deactivate))
        .route("/api/admin/topics/{id}/interviews", get(list_interviews).post(create_interview))
        .route("/api/admin/interviews/{id}", get(get_interview).put(update_interview).delete(delete_interview))
        .route("/api/admin/interviews/{id}/activate", post(activate))
        .route("/api/admin/interviews/{id}/coverage", get(coverage))
        .route("/api/admin/lexicons", get(list_lexicons).post(create_lexicon))
        .route("/api/admin/lexicons/{id}", get(get_lexicon).patch(update_lexicon).delete(delete_lexicon))
        .route("/api/admin/topics/{id}/lexicons", get(topic_lexicons))
        .route("/api/admin/topics/{id}/lexicons/{cid}", put(assign).delete(unassign))
        .route("/api/admin/topics/{id}/surveys", get(list_surveys).post(create_survey))
        .route("/api/admin/surveys/{id}", put(update_survey).delete(delete_survey))
        .route("/api/admin/topics/{id}/faqs", get(list_faqs).post(create_faq))
        .route("/api/admin/faqs/{id}", put(update_faq).delete(delete_faq))
        .route("/api/admin/topics/{id}/dashboard", get(dashboard))
        .route("/api/admin/topics/{id}/distributions/{metric}", get(distributions))
        .route("/api/admin/topics/{id}/survey-plots", get(survey_plots))
        .route("/api/admin/topics/{id}/summaries", get(summaries))
        .route("/api/admin/sessions/{sid}", get(admin_session))
        .route("/api/admin/topics/{id}/export", get(export_topic))
        .route("/api/admin/topics/{id}/simulate", post(run_simulation))
        .route("/api/admin/topics/{id}/topicmodel", get(list_runs).post(enqueue_run))
        .route("/api/admin/topics/{id}/topicmodel/{run}", get(run_status))
        .route("/api/admin/topics/{id}/topicmodel/{run}/result", get(run_result))
        .route("/api/admin/topics/{id}/topicmodel/{run}/relevance", get(run_relevance))
        .route("/api/admin/topics/{id}/topicmodel/{run}/turns", get(run_turns))
        .route_layer(middleware::from_fn_with_state(state, require_admin))
}

async fn require_admin(State(state): State<AppState>, req: Request, next: Next) -> Result<Response, ApiError> {
    let token = req.headers().get(AUTHORIZATION).and_then(|v| v.to_str().ok()).and_then(|v| v.strip_prefix("Bearer "));
    if !token.is_some_and(|t| state.token_matches(t.trim())) {
        return Err(ApiError::unauthorized());
    }
    Ok(next.run(req).await)
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn created<T: Serialize>(value: T) -> (StatusCode, Json<T>) {
    (StatusCode::CREATED, Json(value))
}

/// A saved interview plus checks that did not block saving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewSaved {
    pub interview: Interview,
    pub warnings: Vec<ValidationError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminTopic {
    #[serde(flatten)]
    pub topic: Topic,
    pub interview_count: usize,
    pub session_count: usize,
}

fn topic_row(state: &AppState, catalog: &Catalog, topic: &Topic) -> AdminTopic {
    AdminTopic {
        topic: topic.clone(),
        interview_count: catalog.interviews_for(topic.id).count(),
        session_count: state.store.sessions_for_topic(topic.id).len(),
    }
}

async fn export_catalog(State(state): State<AppState>) -> Json<FixtureDocument> {
    Json(state.store.export())
}

async fn import_catalog(
    State(state): State<AppState>,
    StrictJson(doc): StrictJson<FixtureDocument>,
) -> Result<(StatusCode, Json<ImportReport>), ApiError> {
    Ok(created(state.store.import(doc)?))
}

async fn list_topics(State(state): State<AppState>) -> Json<Vec<AdminTopic>> {
    let catalog = state.store.snapshot();
    Json(catalog.topics.values().map(|t| topic_row(&state, &catalog, t)).collect())
}

async fn create_topic(
    State(state): State<AppState>,
    StrictJson(new): StrictJson<NewTopic>,
) -> Result<(StatusCode, Json<Topic>), ApiError> {
    Ok(created(state.store.create_topic(new)?))
}

async fn get_topic(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<AdminTopic> {
    let catalog = state.store.snapshot();
    let topic = catalog.topic(TopicId(id))?;
    Ok(Json(topic_row(&state, &catalog, topic)))
}

async fn update_topic(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(patch): StrictJson<TopicPatch>,
) -> ApiResult<Topic> {
    Ok(Json(state.store.update_topic(TopicId(id), patch)?))
}

async fn delete_topic(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<StatusCode, ApiError> {
    state.store.delete_topic(TopicId(id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn deactivate(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Topic> {
    Ok(Json(state.store.clear_active_interview(TopicId(id))?))
}

async fn list_interviews(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<Interview>> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    Ok(Json(catalog.interviews_for(TopicId(id)).cloned().collect()))
}

async fn create_interview(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<InterviewDraft>,
) -> Result<(StatusCode, Json<InterviewSaved>), ApiError> {
    let (interview, warnings) = state.store.create_interview(TopicId(id), draft)?;
    Ok(created(InterviewSaved { interview, warnings }))
}

async fn get_interview(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Interview> {
    Ok(Json(state.store.snapshot().interview(InterviewId(id))?.clone()))
}

async fn update_interview(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<InterviewDraft>,
) -> ApiResult<InterviewSaved> {
    let (interview, warnings) = state.store.update_interview(InterviewId(id), draft)?;
    Ok(Json(InterviewSaved { interview, warnings }))
}

async fn delete_interview(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<StatusCode, ApiError> {
    state.store.delete_interview(InterviewId(id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn activate(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Topic> {
    let topic = state.store.snapshot().interview(InterviewId(id))?.topic_id;
    Ok(Json(state.store.set_active_interview(topic, InterviewId(id))?))
}

async fn coverage(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<CoverageWarning>> {
    let catalog = state.store.snapshot();
    let interview = catalog.interview(InterviewId(id))?;
    Ok(Json(coverage_check(&catalog, interview)))
}

async fn list_lexicons(State(state): State<AppState>) -> Json<Vec<LexiconCategory>> {
    Json(state.store.snapshot().lexicons.values().cloned().collect())
}

async fn create_lexicon(
    State(state): State<AppState>,
    StrictJson(draft): StrictJson<CategoryDraft>,
) -> Result<(StatusCode, Json<LexiconCategory>), ApiError> {
    Ok(created(state.store.create_category(draft)?))
}

async fn get_lexicon(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<LexiconCategory> {
    Ok(Json(state.store.snapshot().category(CategoryId(id))?.clone()))
}

async fn update_lexicon(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(patch): StrictJson<CategoryPatch>,
) -> ApiResult<LexiconCategory> {
    Ok(Json(state.store.update_category(CategoryId(id), patch)?))
}

async fn delete_lexicon(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<StatusCode, ApiError> {
    state.store.delete_category(CategoryId(id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn topic_lexicons(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
) -> ApiResult<Vec<LexiconCategory>> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    Ok(Json(catalog.assigned_categories(TopicId(id)).into_iter().cloned().collect()))
}

async fn assign(State(state): State<AppState>, StrictPath((id, cid)): StrictPath<(u64, u64)>) -> Result<StatusCode, ApiError> {
    state.store.assign_category(TopicId(id), CategoryId(cid))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn unassign(
    State(state): State<AppState>,
    StrictPath((id, cid)): StrictPath<(u64, u64)>,
) -> Result<StatusCode, ApiError> {
    state.store.unassign_category(TopicId(id), CategoryId(cid))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_surveys(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<SurveyQuestion>> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    Ok(Json(catalog.survey_questions(TopicId(id)).into_iter().cloned().collect()))
}

async fn create_survey(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<SurveyQuestionDraft>,
) -> Result<(StatusCode, Json<SurveyQuestion>), ApiError> {
    Ok(created(state.store.create_survey_question(TopicId(id), draft)?))
}

async fn update_survey(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<SurveyQuestionDraft>,
) -> ApiResult<SurveyQuestion> {
    Ok(Json(state.store.update_survey_question(SurveyQuestionId(id), draft)?))
}

async fn delete_survey(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<StatusCode, ApiError> {
    state.store.delete_survey_question(SurveyQuestionId(id))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_faqs(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<FaqEntry>> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    Ok(Json(catalog.faqs_for(TopicId(id)).into_iter().cloned().collect()))
}

async fn create_faq(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<FaqDraft>,
) -> Result<(StatusCode, Json<FaqEntry>), ApiError> {
    Ok(created(state.store.create_faq(TopicId(id), draft)?))
}

async fn update_faq(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(draft): StrictJson<FaqDraft>,
) -> ApiResult<FaqEntry> {
    Ok(Json(state.store.update_faq(FaqId(id), draft)?))
}

async fn delete_faq(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<StatusCode, ApiError> {
    state.store.delete_faq(FaqId(id))?;
    Ok(StatusCode::NO_CONTENT)
}

/// Catalog snapshot, category names and sessions of an existing topic.
fn topic_data(
    state: &AppState,
    id: u64,
) -> Result<(std::sync::Arc<Catalog>, Vec<String>, Vec<colloquy_core::ConversationSession>), ApiError> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    let categories = catalog.assigned_category_names(TopicId(id));
    Ok((catalog, categories, state.store.sessions_for_topic(TopicId(id))))
}

async fn dashboard(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<DashboardStats> {
    let (_, categories, sessions) = topic_data(&state, id)?;
    Ok(Json(compute_dashboard(&categories, &sessions)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BinsQuery {
    bins: Option<usize>,
}

async fn distributions(
    State(state): State<AppState>,
    StrictPath((id, metric)): StrictPath<(u64, String)>,
    StrictQuery(query): StrictQuery<BinsQuery>,
) -> ApiResult<Histogram> {
    let metric: Metric = metric.parse().map_err(ApiError::not_found)?;
    let bins = query.bins.unwrap_or(DEFAULT_BINS);
    if bins == 0 || bins > MAX_BINS {
        return Err(ApiError::validation("bins", format!("must be between 1 and {MAX_BINS}")));
    }
    let (_, _, sessions) = topic_data(&state, id)?;
    Ok(Json(distribution(metric, &sessions, bins)))
}

async fn survey_plots(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<SurveyPlotData>> {
    let (catalog, _, sessions) = topic_data(&state, id)?;
    Ok(Json(catalog.survey_questions(TopicId(id)).into_iter().map(|q| survey_plot_data(q, &sessions)).collect()))
}

async fn summaries(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<ConversationSummary>> {
    let (catalog, categories, sessions) = topic_data(&state, id)?;
    let questions: Vec<SurveyQuestion> = catalog.survey_questions(TopicId(id)).into_iter().cloned().collect();
    Ok(Json(sessions.iter().filter_map(|s| summarize_conversation(s, &categories, &questions).ok()).collect()))
}

/// Any session, finished or not, with its summary when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminSession {
    pub session: colloquy_core::ConversationSession,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<ConversationSummary>,
}

async fn admin_session(State(state): State<AppState>, StrictPath(sid): StrictPath<String>) -> ApiResult<AdminSession> {
    let session = state.store.session(&SessionId(sid))?;
    let catalog = state.store.snapshot();
    let categories = catalog.assigned_category_names(session.topic_id);
    let questions: Vec<SurveyQuestion> = catalog.survey_questions(session.topic_id).into_iter().cloned().collect();
    let summary = export_session(&session, &categories, &questions).ok().map(|e: SessionExport| e.summary);
    Ok(Json(AdminSession { session, summary }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormatQuery {
    #[serde(default)]
    format: ExportFormat,
}

async fn export_topic(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictQuery(query): StrictQuery<FormatQuery>,
) -> Result<Response, ApiError> {
    let (catalog, categories, sessions) = topic_data(&state, id)?;
    Ok(match query.format {
        ExportFormat::Json => {
            let questions: Vec<SurveyQuestion> = catalog.survey_questions(TopicId(id)).into_iter().cloned().collect();
            Json(export_aggregate(TopicId(id), &categories, &questions, &sessions)).into_response()
        }
        ExportFormat::Csv => {
            let complete: Vec<_> = sessions.into_iter().filter(|s| s.is_complete()).collect();
            csv_response(&format!("topic-{id}-conversations.csv"), turns_csv(&complete, &categories))
        }
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulationRequest {
    model: RespondentModel,
    sessions: u32,
    /// Defaults to the topic's active interview.
    #[serde(default)]
    interview_id: Option<InterviewId>,
}

async fn run_simulation(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(req): StrictJson<SimulationRequest>,
) -> ApiResult<SimulationReport> {
    if req.sessions > MAX_SIMULATED_SESSIONS {
        return Err(ApiError::validation("sessions", format!("at most {MAX_SIMULATED_SESSIONS}")));
    }
    let catalog = state.store.snapshot();
    let topic = catalog.topic(TopicId(id))?;
    let interview = match req.interview_id {
        Some(iid) => catalog.interview(iid)?,
        None => catalog.active_interview(topic.id).ok_or_else(|| ApiError::no_active_interview(topic.id))?,
    };
    if interview.topic_id != topic.id {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "topic_mismatch",
            format!("interview {} belongs to topic {}", interview.id, interview.topic_id),
        )
        .at("interview_id"));
    }
    let interview_id = interview.id;
    let report = tokio::task::spawn_blocking(move || simulate(&catalog, interview_id, &req.model, req.sessions))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(report))
}

async fn list_runs(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> ApiResult<Vec<TopicModelRun>> {
    state.store.snapshot().topic(TopicId(id))?;
    Ok(Json(state.runs.list(TopicId(id))))
}

async fn enqueue_run(
    State(state): State<AppState>,
    StrictPath(id): StrictPath<u64>,
    StrictJson(req): StrictJson<RunRequest>,
) -> Result<(StatusCode, Json<TopicModelRun>), ApiError> {
    state.store.snapshot().topic(TopicId(id))?;
    let run = state.runs.enqueue(TopicId(id), req).map_err(|e| ApiError::from(e).at_if_empty("k"))?;
    Ok((StatusCode::ACCEPTED, Json(run)))
}

fn topic_run(state: &AppState, id: u64, run: u64) -> Result<TopicModelRun, ApiError> {
    let found = state.runs.status(RunId(run))?;
    if found.topic_id != TopicId(id) {
        return Err(ApiError::not_found(format!("unknown topic-model run {run}")));
    }
    Ok(found)
}

async fn run_status(State(state): State<AppState>, StrictPath((id, run)): StrictPath<(u64, u64)>) -> ApiResult<TopicModelRun> {
    Ok(Json(topic_run(&state, id, run)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: TopicModelRun,
    pub result: TopicModelResult,
}

async fn run_result(State(state): State<AppState>, StrictPath((id, run)): StrictPath<(u64, u64)>) -> ApiResult<RunResult> {
    let found = topic_run(&state, id, run)?;
    let output = state.runs.output(found.id)?;
    Ok(Json(RunResult { run: found, result: output.result.clone() }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaQuery {
    #[serde(default = "default_lambda")]
    lambda: f64,
}

fn default_lambda() -> f64 {
    1.0
}

async fn run_relevance(
    State(state): State<AppState>,
    StrictPath((id, run)): StrictPath<(u64, u64)>,
    StrictQuery(query): StrictQuery<LambdaQuery>,
) -> ApiResult<RelevanceView> {
    let found = topic_run(&state, id, run)?;
    let output = state.runs.output(found.id)?;
    Ok(Json(relevance_view(&output.result, query.lambda)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnsQuery {
    topic: usize,
    word: Option<String>,
}

async fn run_turns(
    State(state): State<AppState>,
    StrictPath((id, run)): StrictPath<(u64, u64)>,
    StrictQuery(query): StrictQuery<TurnsQuery>,
) -> ApiResult<Vec<Document>> {
    let found = topic_run(&state, id, run)?;
    let output = state.runs.output(found.id)?;
    if query.topic >= output.result.k {
        return Err(ApiError::not_found(format!("run has no topic {}", query.topic)));
    }
    let docs = match &query.word {
        Some(word) => turns_for_word(&output.corpus, word),
        None => turns_for_topic_word(&output.result, &output.corpus, query.topic),
    };
    Ok(Json(docs.into_iter().cloned().collect()))
}
