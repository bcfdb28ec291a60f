//! The per-participant conversation state machine.
//!
//! A session moves through `Intro → PreSurvey → AwaitingAnswer(..) →
//! PostSurvey → Summary → Done`. While awaiting answers it walks the
//! interview's main questions in order; after each answer to a main question
//! at most one follow-up is asked, either a defined reflection whose trigger
//! matches or (once per session) a generic reflection for short or hurried
//! answers. Messages containing `?` get an FAQ notice and leave the pending
//! prompt in place.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::analytics::SurveyResponse;
use crate::domain::{
    GenericReflection, Interview, LexiconCategory, PriorReflection, Reflection, SurveyKind, SurveyPhase,
    SurveyQuestion, SurveyQuestionId, Topic, TopicId, InterviewId,
};
use crate::lexicon::{dominant_category, tokenize, CategoryCounts, CategoryMatcher};
use crate::sentiment::{SentimentResult, ValenceLexicon};

/// Answers written faster than this trigger the generic reflection.
pub const GENERIC_MIN_SECONDS: f64 = 15.0;
/// Answers shorter than this many characters trigger the generic reflection.
pub const GENERIC_MIN_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub String);

impl SessionId {
    /// Session ids double as file names in the store.
    pub fn is_well_formed(&self) -> bool {
        !self.0.is_empty() && self.0.len() <= 128 && self.0.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SessionId {
    fn from(s: &str) -> Self {
        SessionId(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answering {
    Main,
    Reflection,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum SessionState {
    Intro,
    PreSurvey,
    AwaitingAnswer { question_index: usize, answering: Answering },
    PostSurvey,
    Summary,
    Done,
}

impl SessionState {
    pub fn name(&self) -> &'static str {
        match self {
            SessionState::Intro => "intro",
            SessionState::PreSurvey => "pre_survey",
            SessionState::AwaitingAnswer { .. } => "awaiting_answer",
            SessionState::PostSurvey => "post_survey",
            SessionState::Summary => "summary",
            SessionState::Done => "done",
        }
    }

    /// The interview itself is over.
    pub fn is_past_chat(&self) -> bool {
        matches!(self, SessionState::PostSurvey | SessionState::Summary | SessionState::Done)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Bot,
    Participant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotKind {
    Intro,
    MainQuestion,
    Reflection,
    GenericReflection,
    FaqNotice,
    Closing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotResponse {
    pub text: String,
    pub kind: BotKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faq_link: Option<String>,
}

/// What the engine measured about one participant message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantAnalysis {
    /// Seconds since the preceding bot turn, measured server side.
    pub elapsed_seconds: f64,
    /// Unicode code points in the raw message.
    pub char_count: usize,
    pub word_count: usize,
    pub category_counts: CategoryCounts,
    pub sentiment: SentimentResult,
    pub is_question: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub sent_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bot_kind: Option<BotKind>,
    /// For main questions the question index, for reflections the
    /// reflection order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<ParticipantAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub text: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSession {
    pub id: SessionId,
    pub topic_id: TopicId,
    /// Frozen when the session is created.
    pub interview_id: InterviewId,
    pub state: SessionState,
    pub turns: Vec<Turn>,
    pub fired_reflections: BTreeSet<u32>,
    pub generic_used: bool,
    pub created_at: DateTime<Utc>,
    /// When the chat began.
    pub started_at: Option<DateTime<Utc>>,
    /// When the closing message was sent.
    pub ended_at: Option<DateTime<Utc>>,
    pub last_activity: DateTime<Utc>,
    /// Set when the participant reset before finishing.
    pub abandoned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_code: Option<String>,
    #[serde(default)]
    pub survey_responses: Vec<SurveyResponse>,
    #[serde(default)]
    pub feedback: Vec<Feedback>,
}

impl ConversationSession {
    pub fn new(id: SessionId, topic_id: TopicId, interview_id: InterviewId, now: DateTime<Utc>) -> Self {
        ConversationSession {
            id,
            topic_id,
            interview_id,
            state: SessionState::Intro,
            turns: Vec::new(),
            fired_reflections: BTreeSet::new(),
            generic_used: false,
            created_at: now,
            started_at: None,
            ended_at: None,
            last_activity: now,
            abandoned: false,
            return_code: None,
            survey_responses: Vec::new(),
            feedback: Vec::new(),
        }
    }

    /// Finished the chat and was not abandoned; only these sessions feed
    /// aggregates.
    pub fn is_complete(&self) -> bool {
        !self.abandoned && self.state.is_past_chat()
    }

    pub fn participant_turns(&self) -> impl Iterator<Item = (&Turn, &ParticipantAnalysis)> {
        self.turns.iter().filter_map(|t| t.analysis.as_ref().map(|a| (t, a)))
    }

    pub fn bot_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::Bot)
    }

    pub fn interview_seconds(&self) -> Option<f64> {
        Some(seconds_between(self.started_at?, self.ended_at?))
    }

    fn push_bot(&mut self, response: &BotResponse, prompt_index: Option<usize>, at: DateTime<Utc>) {
        self.turns.push(Turn {
            speaker: Speaker::Bot,
            text: response.text.clone(),
            sent_at: at,
            bot_kind: Some(response.kind),
            prompt_index,
            analysis: None,
        });
        self.last_activity = at;
    }

    fn last_bot_time(&self) -> Option<DateTime<Utc>> {
        self.turns.iter().rev().find(|t| t.speaker == Speaker::Bot).map(|t| t.sent_at)
    }
}

pub fn seconds_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_milliseconds() as f64 / 1000.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DialogueError {
    #[error("session is in state {found}, expected {expected}")]
    WrongState { expected: &'static str, found: &'static str },
    #[error("session belongs to interview {session}, not {given}")]
    InterviewMismatch { session: InterviewId, given: InterviewId },
    #[error("survey: {0}")]
    Survey(String),
}

fn wrong_state(expected: &'static str, found: SessionState) -> DialogueError {
    DialogueError::WrongState { expected, found: found.name() }
}

/// True iff the message contains a question mark.
pub fn detect_question(text: &str) -> bool {
    text.contains('?')
}

/// Whether the fallback reflection should fire for this answer: it was
/// hurried (< 15 s) or short (< 100 characters) and no generic reflection
/// was used yet in the session.
pub fn should_generic_reflect(turn: &ParticipantAnalysis, session: &ConversationSession) -> bool {
    !session.generic_used
        && (turn.elapsed_seconds < GENERIC_MIN_SECONDS || turn.char_count < GENERIC_MIN_CHARS)
}

fn trigger_holds(reflection: &Reflection, turn: &ParticipantAnalysis, fired: &BTreeSet<u32>) -> bool {
    let trigger = &reflection.trigger;
    let category_ok = match &trigger.category {
        Some(category) => dominant_category(&turn.category_counts) == Some(category.as_str()),
        None => true,
    };
    let sentiment_ok = trigger.sentiment.is_none_or(|s| s == turn.sentiment.label);
    let prior_ok = match trigger.prior_reflection {
        PriorReflection::Unconstrained => true,
        PriorReflection::RequireNoneFired => fired.is_empty(),
        PriorReflection::RequireSomeFired => !fired.is_empty(),
    };
    category_ok && sentiment_ok && prior_ok
}

/// The unfired reflection with the lowest order whose whole trigger holds
/// for this answer. `turn.category_counts` must cover exactly the categories
/// assigned to the session's topic.
pub fn evaluate_triggers<'i>(
    turn: &ParticipantAnalysis,
    session: &ConversationSession,
    interview: &'i Interview,
) -> Option<&'i Reflection> {
    interview
        .reflections
        .iter()
        .filter(|r| !session.fired_reflections.contains(&r.order))
        .filter(|r| trigger_holds(r, turn, &session.fired_reflections))
        .min_by_key(|r| r.order)
}

/// Round-robin choice of generic reflection text, per topic.
#[derive(Debug, Default)]
pub struct GenericReflectionPicker {
    seed: u64,
    next: Mutex<HashMap<TopicId, u64>>,
}

impl GenericReflectionPicker {
    pub fn new(seed: u64) -> Self {
        GenericReflectionPicker { seed, next: Mutex::new(HashMap::new()) }
    }

    pub fn pick<'p>(&self, topic: TopicId, pool: &'p [GenericReflection]) -> Option<&'p GenericReflection> {
        if pool.is_empty() {
            return None;
        }
        let mut next = self.next.lock();
        let counter = next.entry(topic).or_insert(0);
        let index = (self.seed.wrapping_add(*counter) % pool.len() as u64) as usize;
        *counter += 1;
        Some(&pool[index])
    }
}

/// Bot phrasing that is not part of an interview definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DialogueConfig {
    /// `{bot_name}` is replaced by the topic's bot name.
    pub intro_template: String,
    pub closing_text: String,
    pub faq_notice_text: String,
    /// `{topic_id}` is replaced by the topic id.
    pub faq_link_template: String,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            intro_template: "Hi, I'm {bot_name}. I'm going to ask you a few questions. There are no right or wrong \
                             answers, so please take your time and write as much as you like."
                .to_owned(),
            closing_text: "Thank you for talking with me. That was my last question. Next there are a few short \
                           questions about how you feel now."
                .to_owned(),
            faq_notice_text: "This interview isn't designed for me to answer questions. You can find answers to \
                              common questions on the FAQ page. Please continue with your answer when you are ready."
                .to_owned(),
            faq_link_template: "/api/topics/{topic_id}/faq".to_owned(),
        }
    }
}

/// Everything the state machine needs to process turns for one topic.
pub struct DialogueEngine<'a> {
    pub topic: &'a Topic,
    pub interview: &'a Interview,
    matcher: CategoryMatcher,
    lexicon: &'a ValenceLexicon,
    generic_pool: &'a [GenericReflection],
    picker: &'a GenericReflectionPicker,
    config: &'a DialogueConfig,
}

impl<'a> DialogueEngine<'a> {
    pub fn new(
        topic: &'a Topic,
        interview: &'a Interview,
        active_categories: impl IntoIterator<Item = &'a LexiconCategory>,
        lexicon: &'a ValenceLexicon,
        generic_pool: &'a [GenericReflection],
        picker: &'a GenericReflectionPicker,
        config: &'a DialogueConfig,
    ) -> Self {
        DialogueEngine {
            topic,
            interview,
            matcher: CategoryMatcher::new(active_categories),
            lexicon,
            generic_pool,
            picker,
            config,
        }
    }

    pub fn analyze(&self, text: &str, elapsed_seconds: f64) -> ParticipantAnalysis {
        let tokens = tokenize(text);
        ParticipantAnalysis {
            elapsed_seconds: elapsed_seconds.max(0.0),
            char_count: text.chars().count(),
            word_count: tokens.len(),
            category_counts: self.matcher.count(tokens.iter()),
            sentiment: self.lexicon.classify(text),
            is_question: detect_question(text),
        }
    }

    fn check_interview(&self, session: &ConversationSession) -> Result<(), DialogueError> {
        if session.interview_id != self.interview.id {
            return Err(DialogueError::InterviewMismatch { session: session.interview_id, given: self.interview.id });
        }
        Ok(())
    }

    fn main_question(&self, index: usize) -> BotResponse {
        BotResponse {
            text: self.interview.main_questions[index].text.clone(),
            kind: BotKind::MainQuestion,
            faq_link: None,
        }
    }

    /// Opens the chat: introduction followed by the first main question.
    pub fn begin_chat(
        &self,
        session: &mut ConversationSession,
        now: DateTime<Utc>,
    ) -> Result<Vec<BotResponse>, DialogueError> {
        self.check_interview(session)?;
        if !matches!(session.state, SessionState::Intro | SessionState::PreSurvey) {
            return Err(wrong_state("intro or pre_survey", session.state));
        }
        let intro = BotResponse {
            text: self.config.intro_template.replace("{bot_name}", &self.topic.bot_name),
            kind: BotKind::Intro,
            faq_link: None,
        };
        let first = self.main_question(0);
        session.push_bot(&intro, None, now);
        session.push_bot(&first, Some(0), now);
        session.started_at = Some(now);
        session.state = SessionState::AwaitingAnswer { question_index: 0, answering: Answering::Main };
        Ok(vec![intro, first])
    }

    /// Records one participant message and produces the bot's reply.
    pub fn advance(
        &self,
        session: &mut ConversationSession,
        text: &str,
        received_at: DateTime<Utc>,
    ) -> Result<BotResponse, DialogueError> {
        self.check_interview(session)?;
        let SessionState::AwaitingAnswer { question_index, answering } = session.state else {
            return Err(wrong_state("awaiting_answer", session.state));
        };
        let since = session.last_bot_time().unwrap_or(received_at);
        let analysis = self.analyze(text, seconds_between(since, received_at));
        let is_question = analysis.is_question;
        session.turns.push(Turn {
            speaker: Speaker::Participant,
            text: text.to_owned(),
            sent_at: received_at,
            bot_kind: None,
            prompt_index: None,
            analysis: Some(analysis),
        });
        session.last_activity = received_at;

        if is_question {
            let notice = BotResponse {
                text: self.config.faq_notice_text.clone(),
                kind: BotKind::FaqNotice,
                faq_link: Some(self.config.faq_link_template.replace("{topic_id}", &self.topic.id.to_string())),
            };
            session.push_bot(&notice, None, received_at);
            return Ok(notice);
        }

        if answering == Answering::Main {
            let analysis = session.turns.last().and_then(|t| t.analysis.as_ref()).expect("just pushed");
            if let Some(reflection) = evaluate_triggers(analysis, session, self.interview) {
                let order = reflection.order;
                let response = BotResponse { text: reflection.text.clone(), kind: BotKind::Reflection, faq_link: None };
                session.fired_reflections.insert(order);
                session.state = SessionState::AwaitingAnswer { question_index, answering: Answering::Reflection };
                session.push_bot(&response, Some(order as usize), received_at);
                return Ok(response);
            }
            if should_generic_reflect(analysis, session) {
                if let Some(generic) = self.picker.pick(self.topic.id, self.generic_pool) {
                    let response =
                        BotResponse { text: generic.text.clone(), kind: BotKind::GenericReflection, faq_link: None };
                    session.generic_used = true;
                    session.state = SessionState::AwaitingAnswer { question_index, answering: Answering::Generic };
                    session.push_bot(&response, None, received_at);
                    return Ok(response);
                }
            }
        }

        let next = question_index + 1;
        if next < self.interview.main_questions.len() {
            let response = self.main_question(next);
            session.state = SessionState::AwaitingAnswer { question_index: next, answering: Answering::Main };
            session.push_bot(&response, Some(next), received_at);
            Ok(response)
        } else {
            let response = BotResponse { text: self.config.closing_text.clone(), kind: BotKind::Closing, faq_link: None };
            session.state = SessionState::PostSurvey;
            session.ended_at = Some(received_at);
            session.push_bot(&response, None, received_at);
            Ok(response)
        }
    }
}

/// Creates a session and opens the chat immediately, skipping any
/// pre-interview survey.
pub fn start_session(
    engine: &DialogueEngine<'_>,
    id: SessionId,
    now: DateTime<Utc>,
) -> (ConversationSession, Vec<BotResponse>) {
    let mut session = ConversationSession::new(id, engine.topic.id, engine.interview.id, now);
    let opening = engine.begin_chat(&mut session, now).expect("fresh session is in intro");
    (session, opening)
}

/// Marks an unfinished session abandoned. Finished sessions keep counting
/// toward aggregates. The caller starts the replacement session.
pub fn abandon(session: &mut ConversationSession, now: DateTime<Utc>) {
    if !session.state.is_past_chat() {
        session.abandoned = true;
    }
    session.last_activity = now;
}

/// Moves a new session to the pre-interview survey.
pub fn enter_pre_survey(session: &mut ConversationSession) -> Result<(), DialogueError> {
    match session.state {
        SessionState::Intro => {
            session.state = SessionState::PreSurvey;
            Ok(())
        }
        other => Err(wrong_state("intro", other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyAnswer {
    pub question_id: SurveyQuestionId,
    pub value: u8,
}

/// Validates one batch of survey answers against the phase's questions.
/// Every question must be answered exactly once, with a value in range.
pub fn validate_survey(
    phase: SurveyPhase,
    questions: &[SurveyQuestion],
    answers: &[SurveyAnswer],
) -> Result<(), DialogueError> {
    let expected: HashMap<SurveyQuestionId, SurveyKind> =
        questions.iter().filter(|q| q.asked_in(phase)).map(|q| (q.id, q.kind)).collect();
    let mut seen = BTreeSet::new();
    for answer in answers {
        let Some(kind) = expected.get(&answer.question_id) else {
            return Err(DialogueError::Survey(format!("question {} is not part of this survey", answer.question_id)));
        };
        if !kind.values().contains(&answer.value) {
            let range = kind.values();
            return Err(DialogueError::Survey(format!(
                "value {} for question {} is outside {}..={}",
                answer.value,
                answer.question_id,
                range.start(),
                range.end()
            )));
        }
        if !seen.insert(answer.question_id) {
            return Err(DialogueError::Survey(format!("question {} answered twice", answer.question_id)));
        }
    }
    if let Some(missing) = expected.keys().find(|id| !seen.contains(id)) {
        return Err(DialogueError::Survey(format!("question {missing} is unanswered")));
    }
    Ok(())
}

/// Stores a phase's survey answers. Pre-survey answers are accepted in
/// `PreSurvey` (the caller then opens the chat); post-survey answers in
/// `PostSurvey`, moving the session to `Summary`.
pub fn record_survey(
    session: &mut ConversationSession,
    phase: SurveyPhase,
    questions: &[SurveyQuestion],
    answers: &[SurveyAnswer],
    now: DateTime<Utc>,
) -> Result<(), DialogueError> {
    match (phase, session.state) {
        (SurveyPhase::Pre, SessionState::PreSurvey) | (SurveyPhase::Post, SessionState::PostSurvey) => {}
        (SurveyPhase::Pre, other) => return Err(wrong_state("pre_survey", other)),
        (SurveyPhase::Post, other) => return Err(wrong_state("post_survey", other)),
    }
    validate_survey(phase, questions, answers)?;
    session.survey_responses.extend(answers.iter().map(|a| SurveyResponse {
        session_id: session.id.clone(),
        question_id: a.question_id,
        phase,
        value: a.value,
    }));
    if phase == SurveyPhase::Post {
        session.state = SessionState::Summary;
    }
    session.last_activity = now;
    Ok(())
}

/// Attaches free-text feedback; allowed once the summary is reachable.
pub fn record_feedback(session: &mut ConversationSession, text: &str, now: DateTime<Utc>) -> Result<(), DialogueError> {
    match session.state {
        SessionState::Summary | SessionState::Done => {
            session.feedback.push(Feedback { text: text.to_owned(), at: now });
            session.state = SessionState::Done;
            session.last_activity = now;
            Ok(())
        }
        other => Err(wrong_state("summary", other)),
    }
}
