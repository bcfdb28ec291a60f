//! Endpoints used by interview participants. A session id is an
//! unguessable token and is the only credential these routes need.

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use colloquy_core::analytics::{export_session, session_turns_csv, summarize_conversation, ConversationSummary};
use colloquy_core::dialogue::{
    abandon, enter_pre_survey, record_feedback, record_survey, BotKind, BotResponse, ConversationSession, SessionId,
    SessionState, Speaker, SurveyAnswer,
};
use colloquy_core::domain::{FaqEntry, SurveyKind, SurveyPhase, SurveyQuestion, SurveyQuestionId, Topic, TopicId};
use colloquy_core::Catalog;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::ApiError;
use crate::extract::{StrictJson, StrictPath, StrictQuery};
use crate::state::AppState;

pub const MAX_MESSAGE_CHARS: usize = 10_000;
pub const MAX_RETURN_CODE_CHARS: usize = 256;

pub fn routes() -> Router<AppState> {
    Router::new()
        .route("/api/topics", get(list_topics))
        .route("/api/topics/{id}", get(get_topic))
        .route("/api/topics/{id}/faq", get(topic_faq))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{sid}", get(session_status))
        .route("/api/sessions/{sid}/survey", get(get_survey).post(post_survey))
        .route("/api/sessions/{sid}/message", post(post_message))
        .route("/api/sessions/{sid}/reset", post(reset_session))
        .route("/api/sessions/{sid}/summary", get(summary))
        .route("/api/sessions/{sid}/export", get(export))
        .route("/api/sessions/{sid}/feedback", post(feedback))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCard {
    pub id: TopicId,
    pub name: String,
    pub icon: String,
    pub bot_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDetail {
    pub id: TopicId,
    pub name: String,
    pub icon: String,
    pub bot_name: String,
    pub intro_text: String,
    /// Whether a conversation can be started right now.
    pub active: bool,
    pub has_pre_survey: bool,
    pub has_post_survey: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyOption {
    pub value: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestionView {
    pub id: SurveyQuestionId,
    pub text: String,
    pub kind: SurveyKind,
    pub options: Vec<SurveyOption>,
}

impl From<&SurveyQuestion> for SurveyQuestionView {
    fn from(q: &SurveyQuestion) -> Self {
        SurveyQuestionView {
            id: q.id,
            text: q.text.clone(),
            kind: q.kind,
            options: q.kind.values().map(|value| SurveyOption { value, label: q.kind.label(value) }).collect(),
        }
    }
}

fn survey_views(questions: &[SurveyQuestion]) -> Vec<SurveyQuestionView> {
    questions.iter().map(SurveyQuestionView::from).collect()
}

/// A session as returned when it is created or reset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub topic_id: TopicId,
    pub state: String,
    /// Bot messages to show, in order. Empty while a pre-interview survey
    /// is pending.
    pub messages: Vec<BotResponse>,
    /// Questions of the survey the participant must answer next, if any.
    pub survey: Vec<SurveyQuestionView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BotKind>,
    pub sent_at: DateTime<Utc>,
}

/// Enough to rebuild the participant's screen after a reload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: SessionId,
    pub topic_id: TopicId,
    pub state: String,
    pub transcript: Vec<TranscriptLine>,
    pub survey: Vec<SurveyQuestionView>,
    pub expires_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub reply: BotResponse,
    pub state: String,
    /// Post-interview questions once the chat has ended.
    pub survey: Vec<SurveyQuestionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReply {
    pub state: String,
    /// The chat opening after the pre-interview survey.
    pub messages: Vec<BotResponse>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    topic_id: TopicId,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReturnCodeQuery {
    return_code: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseQuery {
    phase: SurveyPhase,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurveySubmission {
    answers: Vec<SurveyAnswer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TextBody {
    text: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormatQuery {
    #[serde(default)]
    format: ExportFormat,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Json,
    Csv,
}

fn session_id(raw: String) -> Result<SessionId, ApiError> {
    let id = SessionId(raw);
    if !id.is_well_formed() {
        return Err(ApiError::not_found("unknown session"));
    }
    Ok(id)
}

fn topic_detail(catalog: &Catalog, topic: &Topic) -> TopicDetail {
    let has = |phase| !catalog.survey_questions_for(topic.id, phase).is_empty();
    TopicDetail {
        id: topic.id,
        name: topic.name.clone(),
        icon: topic.icon.clone(),
        bot_name: topic.bot_name.clone(),
        intro_text: topic.intro_text.clone(),
        active: catalog.active_interview(topic.id).is_some(),
        has_pre_survey: has(SurveyPhase::Pre),
        has_post_survey: has(SurveyPhase::Post),
    }
}

fn current_survey(catalog: &Catalog, session: &ConversationSession) -> Vec<SurveyQuestionView> {
    let phase = match session.state {
        SessionState::PreSurvey => SurveyPhase::Pre,
        SessionState::PostSurvey => SurveyPhase::Post,
        _ => return Vec::new(),
    };
    survey_views(&catalog.survey_questions_for(session.topic_id, phase))
}

fn check_text(text: &str, limit: usize) -> Result<(), ApiError> {
    if text.trim().is_empty() {
        return Err(ApiError::validation("text", "must not be empty"));
    }
    if text.chars().count() > limit {
        return Err(ApiError::validation("text", format!("must be at most {limit} characters")));
    }
    Ok(())
}

async fn list_topics(State(state): State<AppState>) -> Json<Vec<TopicCard>> {
    let catalog = state.store.snapshot();
    Json(
        catalog
            .active_topics()
            .map(|t| TopicCard { id: t.id, name: t.name.clone(), icon: t.icon.clone(), bot_name: t.bot_name.clone() })
            .collect(),
    )
}

async fn get_topic(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<Json<TopicDetail>, ApiError> {
    let catalog = state.store.snapshot();
    let topic = catalog.topic(TopicId(id))?;
    Ok(Json(topic_detail(&catalog, topic)))
}

async fn topic_faq(State(state): State<AppState>, StrictPath(id): StrictPath<u64>) -> Result<Json<Vec<FaqEntry>>, ApiError> {
    let catalog = state.store.snapshot();
    catalog.topic(TopicId(id))?;
    Ok(Json(catalog.faqs_for(TopicId(id)).into_iter().cloned().collect()))
}

/// Starts a session on the topic's active interview. The chat opens at
/// once unless the topic has a pre-interview survey.
fn open_session(state: &AppState, topic_id: TopicId, return_code: Option<String>) -> Result<SessionView, ApiError> {
    if let Some(code) = &return_code {
        if code.chars().count() > MAX_RETURN_CODE_CHARS {
            return Err(ApiError::validation("return_code", "too long"));
        }
    }
    let now = state.now();
    let id = SessionId(Uuid::new_v4().simple().to_string());
    state.store.create_session(|catalog| {
        let topic = catalog.topic(topic_id)?;
        let interview = catalog.active_interview(topic.id).ok_or_else(|| ApiError::no_active_interview(topic.id))?;
        let mut session = ConversationSession::new(id, topic.id, interview.id, now);
        session.return_code = return_code;
        let messages = if catalog.survey_questions_for(topic.id, SurveyPhase::Pre).is_empty() {
            state.engine(catalog, &session)?.begin_chat(&mut session, now)?
        } else {
            enter_pre_survey(&mut session)?;
            Vec::new()
        };
        let view = SessionView {
            session_id: session.id.clone(),
            topic_id: topic.id,
            state: session.state.name().to_owned(),
            messages,
            survey: current_survey(catalog, &session),
            return_code: session.return_code.clone(),
        };
        Ok((session, view))
    })
}

async fn create_session(
    State(state): State<AppState>,
    StrictQuery(query): StrictQuery<ReturnCodeQuery>,
    StrictJson(body): StrictJson<NewSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    Ok((StatusCode::CREATED, Json(open_session(&state, body.topic_id, query.return_code)?)))
}

async fn session_status(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
) -> Result<Json<SessionStatus>, ApiError> {
    let session = state.store.session(&session_id(sid)?)?;
    state.ensure_live(&session)?;
    let catalog = state.store.snapshot();
    Ok(Json(SessionStatus {
        session_id: session.id.clone(),
        topic_id: session.topic_id,
        state: session.state.name().to_owned(),
        transcript: session
            .turns
            .iter()
            .map(|t| TranscriptLine { speaker: t.speaker, text: t.text.clone(), kind: t.bot_kind, sent_at: t.sent_at })
            .collect(),
        survey: current_survey(&catalog, &session),
        expires_at: state.expires_at(&session),
        return_code: session.return_code.clone(),
    }))
}

async fn get_survey(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
    StrictQuery(query): StrictQuery<PhaseQuery>,
) -> Result<Json<Vec<SurveyQuestionView>>, ApiError> {
    let session = state.store.session(&session_id(sid)?)?;
    state.ensure_live(&session)?;
    let catalog = state.store.snapshot();
    Ok(Json(survey_views(&catalog.survey_questions_for(session.topic_id, query.phase))))
}

async fn post_survey(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
    StrictJson(body): StrictJson<SurveySubmission>,
) -> Result<Json<SurveyReply>, ApiError> {
    let now = state.now();
    let reply = state.store.with_session(&session_id(sid)?, |catalog, session| {
        state.ensure_live(session)?;
        let phase = match session.state {
            SessionState::PreSurvey => SurveyPhase::Pre,
            SessionState::PostSurvey => SurveyPhase::Post,
            other => return Err(ApiError::state_violation("pre_survey or post_survey", other.name())),
        };
        let questions = catalog.survey_questions_for(session.topic_id, phase);
        record_survey(session, phase, &questions, &body.answers, now)?;
        let messages = match phase {
            SurveyPhase::Pre => state.engine(catalog, session)?.begin_chat(session, now)?,
            SurveyPhase::Post => Vec::new(),
        };
        Ok::<_, ApiError>(SurveyReply { state: session.state.name().to_owned(), messages })
    })?;
    Ok(Json(reply))
}

async fn post_message(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
    StrictJson(body): StrictJson<TextBody>,
) -> Result<Json<MessageReply>, ApiError> {
    check_text(&body.text, MAX_MESSAGE_CHARS)?;
    let now = state.now();
    let reply = state.store.with_session(&session_id(sid)?, |catalog, session| {
        state.ensure_live(session)?;
        let reply = state.engine(catalog, session)?.advance(session, &body.text, now)?;
        let mut survey = Vec::new();
        if session.state == SessionState::PostSurvey {
            let post = catalog.survey_questions_for(session.topic_id, SurveyPhase::Post);
            if post.is_empty() {
                record_survey(session, SurveyPhase::Post, &post, &[], now)?;
            } else {
                survey = survey_views(&post);
            }
        }
        Ok::<_, ApiError>(MessageReply { reply, state: session.state.name().to_owned(), survey })
    })?;
    Ok(Json(reply))
}

/// Abandons the session (unless it already finished its chat) and opens a
/// new one on the same topic.
async fn reset_session(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let now = state.now();
    let (topic_id, return_code) = state.store.with_session(&session_id(sid)?, |_, session| {
        abandon(session, now);
        Ok::<_, ApiError>((session.topic_id, session.return_code.clone()))
    })?;
    Ok((StatusCode::CREATED, Json(open_session(&state, topic_id, return_code)?)))
}

fn finished_session(state: &AppState, sid: String) -> Result<ConversationSession, ApiError> {
    let session = state.store.session(&session_id(sid)?)?;
    state.ensure_live(&session)?;
    if !matches!(session.state, SessionState::Summary | SessionState::Done) {
        return Err(ApiError::state_violation("summary", session.state.name()));
    }
    Ok(session)
}

fn owned_questions(catalog: &Catalog, topic: TopicId) -> Vec<SurveyQuestion> {
    catalog.survey_questions(topic).into_iter().cloned().collect()
}

async fn summary(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
) -> Result<Json<ConversationSummary>, ApiError> {
    let session = finished_session(&state, sid)?;
    let catalog = state.store.snapshot();
    let categories = catalog.assigned_category_names(session.topic_id);
    let questions = owned_questions(&catalog, session.topic_id);
    Ok(Json(summarize_conversation(&session, &categories, &questions)?))
}

pub fn csv_response(filename: &str, body: String) -> Response {
    (
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_owned()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\"")),
        ],
        body,
    )
        .into_response()
}

async fn export(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
    StrictQuery(query): StrictQuery<FormatQuery>,
) -> Result<Response, ApiError> {
    let session = finished_session(&state, sid)?;
    let catalog = state.store.snapshot();
    let categories = catalog.assigned_category_names(session.topic_id);
    Ok(match query.format {
        ExportFormat::Json => {
            let questions = owned_questions(&catalog, session.topic_id);
            Json(export_session(&session, &categories, &questions)?).into_response()
        }
        ExportFormat::Csv => csv_response(&format!("conversation-{}.csv", session.id), session_turns_csv(&session, &categories)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReply {
    pub state: String,
}

async fn feedback(
    State(state): State<AppState>,
    StrictPath(sid): StrictPath<String>,
    StrictJson(body): StrictJson<TextBody>,
) -> Result<Json<FeedbackReply>, ApiError> {
    check_text(&body.text, MAX_MESSAGE_CHARS)?;
    let now = state.now();
    let reply = state.store.with_session(&session_id(sid)?, |_, session| {
        state.ensure_live(session)?;
        record_feedback(session, &body.text, now)?;
        Ok::<_, ApiError>(FeedbackReply { state: session.state.name().to_owned() })
    })?;
    Ok(Json(reply))
}
