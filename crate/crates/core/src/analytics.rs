//! Participant summaries, dashboard aggregates, survey plots and exports.
//!
//! Only completed sessions (chat finished, not abandoned) contribute to any
//! aggregate.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dialogue::{ConversationSession, SessionId, Speaker};
use crate::domain::{InterviewId, SurveyKind, SurveyPhase, SurveyQuestion, SurveyQuestionId, TopicId};
use crate::lexicon::CategoryCounts;

pub const DEFAULT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyResponse {
    pub session_id: SessionId,
    pub question_id: SurveyQuestionId,
    pub phase: SurveyPhase,
    pub value: u8,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("session {0} has not completed the interview")]
    IncompleteSession(SessionId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyAnswerView {
    pub question_id: SurveyQuestionId,
    pub text: String,
    pub kind: SurveyKind,
    pub phase: SurveyPhase,
    pub value: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationSummary {
    pub session_id: SessionId,
    pub date: DateTime<Utc>,
    /// Participant tokens over the whole conversation.
    pub word_count: u32,
    pub char_count: u32,
    pub category_frequencies: BTreeMap<String, u32>,
    pub survey_answers: Vec<SurveyAnswerView>,
}

/// Sum of the per-turn category counts of every participant message.
pub fn participant_counts(session: &ConversationSession) -> CategoryCounts {
    let mut total = CategoryCounts::default();
    for (_, analysis) in session.participant_turns() {
        total.add(&analysis.category_counts);
    }
    total
}

/// The summary shown to a participant after the post-interview survey.
/// `categories` are the names assigned to the session's topic.
pub fn summarize_conversation(
    session: &ConversationSession,
    categories: &[String],
    questions: &[SurveyQuestion],
) -> Result<ConversationSummary, AnalyticsError> {
    if !session.is_complete() {
        return Err(AnalyticsError::IncompleteSession(session.id.clone()));
    }
    let counts = participant_counts(session).restricted_to(categories.iter().map(String::as_str));
    let (words, chars) = session
        .participant_turns()
        .fold((0u32, 0u32), |(w, c), (_, a)| (w + a.word_count as u32, c + a.char_count as u32));
    let survey_answers = session
        .survey_responses
        .iter()
        .filter_map(|r| {
            let q = questions.iter().find(|q| q.id == r.question_id)?;
            Some(SurveyAnswerView {
                question_id: q.id,
                text: q.text.clone(),
                kind: q.kind,
                phase: r.phase,
                value: r.value,
                label: q.kind.label(r.value),
            })
        })
        .collect();
    Ok(ConversationSummary {
        session_id: session.id.clone(),
        date: session.started_at.unwrap_or(session.created_at),
        word_count: words,
        char_count: chars,
        category_frequencies: counts.counts,
        survey_answers,
    })
}

/// Equal-width bins over `[min, max]`. The last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub bin_width: f64,
    pub counts: Vec<u32>,
}

impl Histogram {
    pub fn empty() -> Self {
        Histogram { min: 0.0, max: 0.0, bin_width: 0.0, counts: Vec::new() }
    }

    /// When every value is equal the histogram has a single bin.
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() || bins == 0 {
            return Histogram::empty();
        }
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Histogram { min, max, bin_width: 0.0, counts: vec![finite.len() as u32] };
        }
        let width = (max - min) / bins as f64;
        let mut counts = vec![0u32; bins];
        for v in finite {
            let i = (((v - min) / width).floor() as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { min, max, bin_width: width, counts }
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// Lower edge of each bin.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.min + i as f64 * self.bin_width).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub date: DateTime<Utc>,
    pub word_count: u32,
    pub session_id: SessionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardStats {
    pub total_conversations: u32,
    /// Mean words per participant message, pooled over conversations.
    pub avg_response_length_words: f64,
    pub avg_response_length_chars: f64,
    pub avg_interview_seconds: f64,
    /// Conversations with at least one match per category.
    pub category_conversation_counts: BTreeMap<String, u32>,
    pub category_frequency_distribution: BTreeMap<String, Histogram>,
    pub summaries: Vec<SummaryRow>,
}

fn mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Aggregates over the completed sessions among `sessions`.
pub fn compute_dashboard(categories: &[String], sessions: &[ConversationSession]) -> DashboardStats {
    let complete: Vec<&ConversationSession> = sessions.iter().filter(|s| s.is_complete()).collect();
    let (mut words, mut chars, mut messages) = (0u64, 0u64, 0usize);
    let mut seconds = Vec::new();
    let mut per_category: BTreeMap<String, Vec<f64>> = categories.iter().map(|c| (c.clone(), Vec::new())).collect();
    let mut summaries = Vec::new();
    for s in &complete {
        let mut session_words = 0u32;
        for (_, a) in s.participant_turns() {
            words += a.word_count as u64;
            chars += a.char_count as u64;
            messages += 1;
            session_words += a.word_count as u32;
        }
        if let Some(secs) = s.interview_seconds() {
            seconds.push(secs);
        }
        let counts = participant_counts(s);
        for (name, values) in per_category.iter_mut() {
            values.push(f64::from(counts.get(name)));
        }
        summaries.push(SummaryRow {
            date: s.started_at.unwrap_or(s.created_at),
            word_count: session_words,
            session_id: s.id.clone(),
        });
    }
    DashboardStats {
        total_conversations: complete.len() as u32,
        avg_response_length_words: mean(words as f64, messages),
        avg_response_length_chars: mean(chars as f64, messages),
        avg_interview_seconds: mean(seconds.iter().sum(), seconds.len()),
        category_conversation_counts: per_category
            .iter()
            .map(|(name, values)| (name.clone(), values.iter().filter(|&&v| v > 0.0).count() as u32))
            .collect(),
        category_frequency_distribution: per_category
            .iter()
            .map(|(name, values)| (name.clone(), Histogram::from_values(values, DEFAULT_BINS)))
            .collect(),
        summaries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ResponseLength,
    InterviewTime,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "response_length" => Ok(Metric::ResponseLength),
            "interview_time" => Ok(Metric::InterviewTime),
            other => Err(format!("unknown metric {other:?}; expected response_length or interview_time")),
        }
    }
}

/// One value per completed session: its mean words per message, or its
/// interview duration in seconds.
pub fn distribution(metric: Metric, sessions: &[ConversationSession], bins: usize) -> Histogram {
    let values: Vec<f64> = sessions
        .iter()
        .filter(|s| s.is_complete())
        .filter_map(|s| match metric {
            Metric::ResponseLength => {
                let (w, n) = s.participant_turns().fold((0usize, 0usize), |(w, n), (_, a)| (w + a.word_count, n + 1));
                (n > 0).then(|| w as f64 / n as f64)
            }
            Metric::InterviewTime => s.interview_seconds(),
        })
        .collect();
    Histogram::from_values(&values, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyOptionCount {
    pub value: u8,
    pub label: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySeries {
    pub phase: SurveyPhase,
    pub respondents: u32,
    pub counts: Vec<SurveyOptionCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyPlotData {
    pub question_id: SurveyQuestionId,
    pub text: String,
    pub kind: SurveyKind,
    pub series: Vec<SurveySeries>,
}

/// Answer counts per enabled phase, options in scale order.
pub fn survey_plot_data(question: &SurveyQuestion, sessions: &[ConversationSession]) -> SurveyPlotData {
    let series = question
        .phases()
        .into_iter()
        .map(|phase| {
            let mut counts: Vec<SurveyOptionCount> = question
                .kind
                .values()
                .map(|value| SurveyOptionCount { value, label: question.kind.label(value), count: 0 })
                .collect();
            let mut respondents = 0;
            for s in sessions.iter().filter(|s| s.is_complete()) {
                let answer = s.survey_responses.iter().find(|r| r.question_id == question.id && r.phase == phase);
                if let Some(r) = answer {
                    if let Some(slot) = counts.iter_mut().find(|c| c.value == r.value) {
                        slot.count += 1;
                        respondents += 1;
                    }
                }
            }
            SurveySeries { phase, respondents, counts }
        })
        .collect();
    SurveyPlotData { question_id: question.id, text: question.text.clone(), kind: question.kind, series }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub summary: ConversationSummary,
    pub session: ConversationSession,
}

pub fn export_session(
    session: &ConversationSession,
    categories: &[String],
    questions: &[SurveyQuestion],
) -> Result<SessionExport, AnalyticsError> {
    Ok(SessionExport { summary: summarize_conversation(session, categories, questions)?, session: session.clone() })
}

/// Flat CSV with one row per turn and one column per category.
pub fn session_turns_csv(session: &ConversationSession, categories: &[String]) -> String {
    turns_csv(std::slice::from_ref(session), categories)
}

/// [`session_turns_csv`] for several sessions under one header.
pub fn turns_csv(sessions: &[ConversationSession], categories: &[String]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "session_id",
        "turn",
        "speaker",
        "bot_kind",
        "sent_at",
        "text",
        "elapsed_seconds",
        "char_count",
        "word_count",
        "sentiment",
        "compound",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(categories.iter().cloned());
    writer.write_record(&header).expect("in-memory write");
    for (session, (i, turn)) in sessions.iter().flat_map(|s| s.turns.iter().enumerate().map(move |t| (s, t))) {
        let mut row = vec![
            session.id.to_string(),
            i.to_string(),
            match turn.speaker {
                Speaker::Bot => "bot".to_owned(),
                Speaker::Participant => "participant".to_owned(),
            },
            turn.bot_kind
                .map(|k| serde_json::to_value(k).expect("enum").as_str().unwrap_or_default().to_owned())
                .unwrap_or_default(),
            turn.sent_at.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            turn.text.clone(),
        ];
        match &turn.analysis {
            Some(a) => {
                row.push(format!("{:.3}", a.elapsed_seconds));
                row.push(a.char_count.to_string());
                row.push(a.word_count.to_string());
                row.push(a.sentiment.label.as_str().to_owned());
                row.push(format!("{:.4}", a.sentiment.compound));
                row.extend(categories.iter().map(|c| a.category_counts.get(c).to_string()));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 5 + categories.len())),
        }
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateExport {
    pub topic_id: TopicId,
    pub categories: Vec<String>,
    pub interviews: Vec<InterviewId>,
    pub sessions: Vec<SessionExport>,
    pub dashboard: DashboardStats,
}

pub fn export_aggregate(
    topic_id: TopicId,
    categories: &[String],
    questions: &[SurveyQuestion],
    sessions: &[ConversationSession],
) -> AggregateExport {
    let sessions: Vec<SessionExport> =
        sessions.iter().filter_map(|s| export_session(s, categories, questions).ok()).collect();
    let mut interviews: Vec<InterviewId> = sessions.iter().map(|s| s.session.interview_id).collect();
    interviews.sort();
    interviews.dedup();
    let raw: Vec<ConversationSession> = sessions.iter().map(|s| s.session.clone()).collect();
    AggregateExport {
        topic_id,
        categories: categories.to_vec(),
        interviews,
        dashboard: compute_dashboard(categories, &raw),
        sessions,
    }
}

/// Recomputes the dashboard from an exported document.
pub fn dashboard_from_export(export: &AggregateExport) -> DashboardStats {
    let sessions: Vec<ConversationSession> = export.sessions.iter().map(|s| s.session.clone()).collect();
    compute_dashboard(&export.categories, &sessions)
}
