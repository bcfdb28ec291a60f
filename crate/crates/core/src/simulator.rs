//! Simulated participants for checking interview configurations before
//! deployment.
//!
//! Respondents write text by sampling lexicon terms and filler words, so an
//! admin controls how often each category shows up. Sessions run through the
//! real dialogue engine on a virtual clock; identical seeds give identical
//! reports.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{
    start_session, Answering, BotKind, ConversationSession, DialogueConfig, DialogueEngine, GenericReflectionPicker,
    SessionId, SessionState, Speaker,
};
use crate::domain::{Interview, InterviewId, LexiconCategory, ValidationError};
use crate::sentiment::ValenceLexicon;
use crate::store::{Catalog, StoreError};

/// Vocabulary key for words that belong to no category.
pub const FILLER: &str = "filler";

const FILLER_WORDS: &[&str] = &[
    "the", "and", "it", "was", "of", "to", "in", "that", "with", "for", "on", "about", "this", "some", "my", "from",
    "at", "there", "time", "day", "people", "thing", "way", "around", "still", "much", "over", "into", "town", "week",
];

/// Messages stop after this many per session, whatever the model says.
const MAX_MESSAGES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondentModel {
    pub seed: u64,
    /// Message length in characters.
    pub response_length: Span,
    /// Seconds between the bot's prompt and the reply.
    pub response_delay: Span,
    /// Relative weights over category names and `"filler"`.
    pub vocabulary_mix: BTreeMap<String, f64>,
    /// Chance that a message is a question to the bot.
    #[serde(default)]
    pub question_rate: f64,
}

impl RespondentModel {
    pub fn validate(&self, lexicons: &[&LexiconCategory]) -> Result<(), ValidationError> {
        for (name, span) in [("response_length", self.response_length), ("response_delay", self.response_delay)] {
            if !(span.min.is_finite() && span.max.is_finite()) || span.min < 0.0 || span.min > span.max {
                return Err(ValidationError::new(name, "need 0 <= min <= max"));
            }
        }
        if !(0.0..1.0).contains(&self.question_rate) {
            return Err(ValidationError::new("question_rate", "must be in [0, 1)"));
        }
        if self.vocabulary_mix.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ValidationError::new("vocabulary_mix", "weights must be nonnegative"));
        }
        if self.vocabulary_mix.values().sum::<f64>() <= 0.0 {
            return Err(ValidationError::new("vocabulary_mix", "at least one weight must be positive"));
        }
        for name in self.vocabulary_mix.keys() {
            if name != FILLER && !lexicons.iter().any(|l| &l.name == name) {
                return Err(ValidationError::new(format!("vocabulary_mix.{name}"), "unknown lexicon category"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageKind {
    UnknownCategory,
    UnassignedCategory,
    Shadowed,
    EmptyLexicon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageWarning {
    pub kind: CoverageKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub message: String,
}

/// Static checks of an interview against the topic's lexicons.
pub fn coverage_check(catalog: &Catalog, interview: &Interview) -> Vec<CoverageWarning> {
    let assigned = catalog.assigned_categories(interview.topic_id);
    let mut warnings = Vec::new();
    let mut empty_reported = BTreeSet::new();
    for r in &interview.reflections {
        if let Some(name) = &r.trigger.category {
            match catalog.category_by_name(name) {
                None => warnings.push(CoverageWarning {
                    kind: CoverageKind::UnknownCategory,
                    reflection: Some(r.order),
                    category: Some(name.clone()),
                    message: format!("reflection {} names category {name:?}, which does not exist", r.order),
                }),
                Some(c) if !assigned.iter().any(|a| a.id == c.id) => warnings.push(CoverageWarning {
                    kind: CoverageKind::UnassignedCategory,
                    reflection: Some(r.order),
                    category: Some(name.clone()),
                    message: format!("reflection {} can never fire: {name:?} is not assigned to the topic", r.order),
                }),
                Some(_) => {}
            }
        }
        if let Some(earlier) = interview
            .reflections
            .iter()
            .filter(|e| e.order < r.order)
            .find(|e| e.trigger.is_at_most_as_strict_as(&r.trigger))
        {
            warnings.push(CoverageWarning {
                kind: CoverageKind::Shadowed,
                reflection: Some(r.order),
                category: None,
                message: format!(
                    "reflection {} is shadowed by reflection {}, whose trigger is no stricter",
                    r.order, earlier.order
                ),
            });
        }
    }
    let referenced = interview.reflections.iter().filter_map(|r| r.trigger.category.as_deref());
    let referenced: Vec<&LexiconCategory> = referenced.filter_map(|n| catalog.category_by_name(n)).collect();
    for c in assigned.iter().copied().chain(referenced) {
        if c.terms.is_empty() && empty_reported.insert(c.id) {
            warnings.push(CoverageWarning {
                kind: CoverageKind::EmptyLexicon,
                reflection: None,
                category: Some(c.name.clone()),
                message: format!("category {:?} has no terms", c.name),
            });
        }
    }
    warnings
}

/// Reflections whose trigger names a category the topic does not use.
pub fn unreachable_reflections(catalog: &Catalog, interview: &Interview) -> Vec<u32> {
    let assigned = catalog.assigned_category_names(interview.topic_id);
    interview
        .reflections
        .iter()
        .filter(|r| r.trigger.category.as_ref().is_some_and(|c| !assigned.contains(c)))
        .map(|r| r.order)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub interview_id: InterviewId,
    pub seed: u64,
    pub sessions_run: u32,
    /// Sessions in which each reflection fired, keyed by reflection order.
    pub reflection_fire_counts: BTreeMap<u32, u32>,
    /// Share of sessions that used the generic reflection.
    pub generic_reflection_rate: f64,
    /// Bot and participant turns.
    pub mean_turns_per_session: f64,
    pub mean_participant_messages: f64,
    pub faq_notices: u32,
    pub unreachable_reflections: Vec<u32>,
    pub never_fired: Vec<u32>,
    pub coverage_warnings: Vec<CoverageWarning>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid respondent model: {0}")]
    Model(ValidationError),
    #[error("need at least one session")]
    NoSessions,
}

struct Respondent<'a> {
    rng: ChaCha8Rng,
    model: &'a RespondentModel,
    pools: Vec<Vec<String>>,
    choose: WeightedIndex<f64>,
}

impl<'a> Respondent<'a> {
    fn new(model: &'a RespondentModel, lexicons: &[&LexiconCategory]) -> Self {
        let filler: Vec<String> = FILLER_WORDS
            .iter()
            .filter(|w| !lexicons.iter().any(|l| l.terms.iter().any(|t| t.matches(w))))
            .map(|w| (*w).to_owned())
            .collect();
        let mut pools = Vec::new();
        let mut weights = Vec::new();
        for (name, &weight) in &model.vocabulary_mix {
            let pool: Vec<String> = if name == FILLER {
                filler.clone()
            } else {
                lexicons
                    .iter()
                    .find(|l| &l.name == name)
                    .map(|l| l.terms.iter().map(|t| t.surface.clone()).collect())
                    .unwrap_or_default()
            };
            if !pool.is_empty() && weight > 0.0 {
                pools.push(pool);
                weights.push(weight);
            }
        }
        if pools.is_empty() {
            pools.push(filler);
            weights.push(1.0);
        }
        Respondent {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
            pools,
            choose: WeightedIndex::new(weights).expect("positive weights"),
        }
    }

    fn delay(&mut self) -> Duration {
        let Span { min, max } = self.model.response_delay;
        let seconds = if max > min { self.rng.random_range(min..=max) } else { min };
        Duration::milliseconds((seconds * 1000.0).round() as i64)
    }

    /// Text of exactly the sampled number of characters.
    fn message(&mut self) -> String {
        let Span { min, max } = self.model.response_length;
        let target = if max > min { self.rng.random_range(min..=max) } else { min }.round() as usize;
        let mut text = String::new();
        while text.chars().count() < target {
            let pool = &self.pools[self.choose.sample(&mut self.rng)];
            let word = &pool[self.rng.random_range(0..pool.len())];
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(word);
        }
        let cut_mid_word = text.chars().nth(target).is_some_and(|c| c != ' ');
        let mut text: String = text.chars().take(target).collect();
        if cut_mid_word {
            // a word fragment could match a stem or exact term; pad it out instead
            let keep = text.rfind(' ').map_or(0, |i| i + 1);
            let fragment = text[keep..].chars().count();
            text.truncate(keep);
            text.extend(std::iter::repeat_n('.', fragment));
        }
        if target > 0 && self.rng.random_bool(self.model.question_rate) {
            text.pop();
            text.push('?');
        }
        text
    }
}

fn virtual_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

/// Runs `n_sessions` simulated participants through `interview`.
pub fn simulate(
    catalog: &Catalog,
    interview_id: InterviewId,
    model: &RespondentModel,
    n_sessions: u32,
) -> Result<SimulationReport, SimulationError> {
    simulate_with(catalog, interview_id, model, n_sessions, |_| {})
}

/// As [`simulate`], handing every finished session to `visit`.
pub fn simulate_with(
    catalog: &Catalog,
    interview_id: InterviewId,
    model: &RespondentModel,
    n_sessions: u32,
    mut visit: impl FnMut(&ConversationSession),
) -> Result<SimulationReport, SimulationError> {
    if n_sessions == 0 {
        return Err(SimulationError::NoSessions);
    }
    let interview = catalog.interview(interview_id)?;
    let topic = catalog.topic(interview.topic_id)?;
    let all_lexicons: Vec<&LexiconCategory> = catalog.lexicons.values().collect();
    model.validate(&all_lexicons).map_err(SimulationError::Model)?;

    let picker = GenericReflectionPicker::new(model.seed);
    let config = DialogueConfig::default();
    let engine = DialogueEngine::new(
        topic,
        interview,
        catalog.assigned_categories(topic.id),
        ValenceLexicon::bundled(),
        &catalog.generic_reflections,
        &picker,
        &config,
    );
    let mut respondent = Respondent::new(model, &all_lexicons);

    let mut fire_counts: BTreeMap<u32, u32> = interview.reflections.iter().map(|r| (r.order, 0)).collect();
    let (mut generic_sessions, mut turns, mut messages, mut faq_notices) = (0u32, 0usize, 0usize, 0u32);
    for i in 0..n_sessions {
        let mut now = virtual_epoch() + Duration::days(i64::from(i));
        let (mut session, _) = start_session(&engine, SessionId(format!("sim-{}-{i}", model.seed)), now);
        let mut sent = 0;
        while matches!(session.state, SessionState::AwaitingAnswer { .. }) && sent < MAX_MESSAGES {
            now += respondent.delay();
            let text = respondent.message();
            let reply = engine.advance(&mut session, &text, now).expect("session awaits an answer");
            if reply.kind == BotKind::FaqNotice {
                faq_notices += 1;
            }
            sent += 1;
        }
        for order in &session.fired_reflections {
            *fire_counts.entry(*order).or_default() += 1;
        }
        generic_sessions += u32::from(session.generic_used);
        turns += session.turns.len();
        messages += sent;
        visit(&session);
    }

    let n = f64::from(n_sessions);
    Ok(SimulationReport {
        interview_id,
        seed: model.seed,
        sessions_run: n_sessions,
        never_fired: fire_counts.iter().filter(|(_, &c)| c == 0).map(|(&o, _)| o).collect(),
        reflection_fire_counts: fire_counts,
        generic_reflection_rate: f64::from(generic_sessions) / n,
        mean_turns_per_session: turns as f64 / n,
        mean_participant_messages: messages as f64 / n,
        faq_notices,
        unreachable_reflections: unreachable_reflections(catalog, interview),
        coverage_warnings: coverage_check(catalog, interview),
    })
}

/// Structural flow rules every finished session must satisfy. Returns a
/// description of each violation.
pub fn flow_violations(session: &ConversationSession, interview: &Interview) -> Vec<String> {
    let mut problems = Vec::new();
    if !session.state.is_past_chat() {
        problems.push(format!("session ended in state {}", session.state.name()));
    }
    let mut asked = Vec::new();
    let mut followups_since_question = 0;
    let mut generic = 0;
    for turn in session.bot_turns() {
        match turn.bot_kind {
            Some(BotKind::MainQuestion) => {
                asked.push(turn.prompt_index.unwrap_or(usize::MAX));
                followups_since_question = 0;
            }
            Some(BotKind::Reflection | BotKind::GenericReflection) => {
                followups_since_question += 1;
                if followups_since_question > 1 {
                    problems.push(format!("more than one follow-up after question {:?}", asked.last()));
                }
                if turn.bot_kind == Some(BotKind::GenericReflection) {
                    generic += 1;
                }
            }
            _ => {}
        }
    }
    let expected: Vec<usize> = (0..interview.main_questions.len()).collect();
    if asked != expected {
        problems.push(format!("main questions asked as {asked:?}, expected {expected:?}"));
    }
    if generic > 1 {
        problems.push(format!("{generic} generic reflections"));
    }
    let fired: Vec<u32> = session
        .bot_turns()
        .filter(|t| t.bot_kind == Some(BotKind::Reflection))
        .filter_map(|t| t.prompt_index.map(|i| i as u32))
        .collect();
    if fired.iter().collect::<BTreeSet<_>>().len() != fired.len() {
        problems.push(format!("a reflection fired twice: {fired:?}"));
    }
    if session.turns.first().map(|t| t.speaker) != Some(Speaker::Bot) {
        problems.push("conversation does not open with the bot".to_owned());
    }
    if let SessionState::AwaitingAnswer { answering: Answering::Generic, .. } = session.state {
        problems.push("stopped while awaiting a generic follow-up answer".to_owned());
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{parse_fixture, COVID_FIXTURE};
    use crate::store::Store;

    fn covid() -> (Store, InterviewId) {
        let store = Store::in_memory();
        store.import(parse_fixture(COVID_FIXTURE).unwrap()).unwrap();
        let id = store.snapshot().interviews.keys().next().copied().unwrap();
        (store, id)
    }

    fn model(mix: &[(&str, f64)], length: (f64, f64), delay: (f64, f64)) -> RespondentModel {
        RespondentModel {
            seed: 7,
            response_length: Span { min: length.0, max: length.1 },
            response_delay: Span { min: delay.0, max: delay.1 },
            vocabulary_mix: mix.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            question_rate: 0.0,
        }
    }

    #[test]
    fn health_heavy_model_fires_health_reflection() {
        let (store, id) = covid();
        let m = model(&[("health", 4.0), (FILLER, 1.0)], (120.0, 300.0), (20.0, 90.0));
        let report = simulate(&store.snapshot(), id, &m, 200).unwrap();
        assert!(report.reflection_fire_counts[&0] as f64 >= 0.95 * 200.0, "{report:?}");
    }

    #[test]
    fn long_slow_answers_never_get_generic() {
        let (store, id) = covid();
        let m = model(&[(FILLER, 1.0), ("work", 0.2)], (100.0, 400.0), (15.0, 120.0));
        let report = simulate(&store.snapshot(), id, &m, 200).unwrap();
        assert_eq!(report.generic_reflection_rate, 0.0);
    }

    #[test]
    fn short_answers_use_generic_once() {
        let (store, id) = covid();
        let m = model(&[(FILLER, 1.0)], (5.0, 40.0), (1.0, 5.0));
        let mut sessions = Vec::new();
        let report = simulate_with(&store.snapshot(), id, &m, 50, |s| sessions.push(s.clone())).unwrap();
        assert_eq!(report.generic_reflection_rate, 1.0);
        let interview = store.snapshot().interview(id).unwrap().clone();
        for s in &sessions {
            assert!(flow_violations(s, &interview).is_empty());
        }
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let (store, id) = covid();
        let mut m = model(&[("health", 1.0), ("money", 1.0), (FILLER, 3.0)], (20.0, 200.0), (3.0, 40.0));
        m.question_rate = 0.1;
        let a = simulate(&store.snapshot(), id, &m, 100).unwrap();
        let b = simulate(&store.snapshot(), id, &m, 100).unwrap();
        assert_eq!(a, b);
        assert!(a.faq_notices > 0);
        m.seed = 8;
        assert_ne!(simulate(&store.snapshot(), id, &m, 100).unwrap(), a);
    }

    #[test]
    fn unassigned_category_is_unreachable() {
        let (store, id) = covid();
        let snap = store.snapshot();
        let topic = snap.interview(id).unwrap().topic_id;
        let work = snap.category_by_name("work").unwrap().id;
        store.unassign_category(topic, work).unwrap();
        let m = model(&[("work", 1.0)], (100.0, 200.0), (20.0, 30.0));
        let report = simulate(&store.snapshot(), id, &m, 20).unwrap();
        assert_eq!(report.unreachable_reflections, vec![1]);
        assert_eq!(report.reflection_fire_counts[&1], 0);
        assert!(report.never_fired.contains(&1));
    }

    #[test]
    fn model_validation() {
        let (store, id) = covid();
        let bad = model(&[("astrology", 1.0)], (1.0, 2.0), (1.0, 2.0));
        assert!(matches!(simulate(&store.snapshot(), id, &bad, 1), Err(SimulationError::Model(_))));
        let bad = model(&[(FILLER, 1.0)], (5.0, 2.0), (1.0, 2.0));
        assert!(simulate(&store.snapshot(), id, &bad, 1).is_err());
        let ok = model(&[(FILLER, 1.0)], (5.0, 5.0), (1.0, 1.0));
        assert!(matches!(simulate(&store.snapshot(), id, &ok, 0), Err(SimulationError::NoSessions)));
    }

    #[test]
    fn coverage_examples() {
        use crate::domain::{MainQuestion, PriorReflection, Reflection, TriggerCondition};
        use crate::store::{CategoryDraft, InterviewDraft};
        let (store, id) = covid();
        let snap = store.snapshot();
        assert!(coverage_check(&snap, snap.interview(id).unwrap()).is_empty());

        let topic = snap.interview(id).unwrap().topic_id;
        let empty = store.create_category(CategoryDraft { name: "empty".into(), terms: vec![] }).unwrap();
        store.assign_category(topic, empty.id).unwrap();
        let trigger = TriggerCondition {
            category: Some("health".into()),
            sentiment: None,
            prior_reflection: PriorReflection::Unconstrained,
        };
        let reflections = (0..3)
            .map(|order| Reflection { order, text: "more?".into(), trigger: trigger.clone() })
            .collect();
        let draft = InterviewDraft {
            notes: String::new(),
            main_questions: vec![MainQuestion { order: 0, text: "q".into() }],
            reflections,
        };
        let (interview, _) = store.create_interview(topic, draft).unwrap();
        let warnings = coverage_check(&store.snapshot(), &interview);
        let shadowed: Vec<_> = warnings.iter().filter(|w| w.kind == CoverageKind::Shadowed).filter_map(|w| w.reflection).collect();
        assert_eq!(shadowed, vec![1, 2]);
        assert!(warnings.iter().any(|w| w.kind == CoverageKind::EmptyLexicon && w.category.as_deref() == Some("empty")));
    }

    #[test]
    fn message_lengths_are_exact() {
        let m = model(&[(FILLER, 1.0)], (37.0, 37.0), (1.0, 1.0));
        let mut r = Respondent::new(&m, &[]);
        for _ in 0..20 {
            assert_eq!(r.message().chars().count(), 37);
        }
    }

    #[test]
    fn truncated_filler_never_matches_a_category() {
        use crate::domain::{CategoryId, Term};
        use crate::lexicon::{tokenize, CategoryMatcher};
        let we = LexiconCategory { id: CategoryId(1), name: "we".into(), terms: vec![Term::exact("we"), Term::stem("th")] };
        let matcher = CategoryMatcher::new([&we]);
        let m = model(&[(FILLER, 1.0)], (1.0, 60.0), (1.0, 1.0));
        let mut r = Respondent::new(&m, &[&we]);
        for _ in 0..500 {
            let text = r.message();
            assert_eq!(matcher.count(tokenize(&text).iter()).get("we"), 0, "{text:?}");
        }
    }
}
