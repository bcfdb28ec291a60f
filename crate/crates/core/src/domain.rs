//! Admin-authored entities: topics, interviews, lexicons, surveys and FAQs.

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sentiment::SentimentLabel;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(TopicId);
id_type!(InterviewId);
id_type!(CategoryId);
id_type!(SurveyQuestionId);
id_type!(FaqId);
id_type!(GenericReflectionId);

/// A conversation topic. Participants pick a topic; the topic's active
/// interview decides what they are asked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub id: TopicId,
    pub name: String,
    /// Token naming an icon in the bundled icon set, e.g. `"virus"`.
    #[serde(default)]
    pub icon: String,
    #[serde(default)]
    pub bot_name: String,
    /// Disclosure / consent screen shown before any conversation starts.
    #[serde(default)]
    pub intro_text: String,
    #[serde(default)]
    pub active_interview_id: Option<InterviewId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interview {
    pub id: InterviewId,
    pub topic_id: TopicId,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub notes: String,
    pub main_questions: Vec<MainQuestion>,
    #[serde(default)]
    pub reflections: Vec<Reflection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainQuestion {
    pub order: u32,
    pub text: String,
}

/// A follow-up prompt fired between main questions. Reflections are scoped to
/// one interview, and their `order` doubles as their id within it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reflection {
    pub order: u32,
    pub text: String,
    pub trigger: TriggerCondition,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerCondition {
    /// Fires only when this category is the dominant one in the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<SentimentLabel>,
    #[serde(default)]
    pub prior_reflection: PriorReflection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorReflection {
    #[default]
    Unconstrained,
    RequireNoneFired,
    RequireSomeFired,
}

impl TriggerCondition {
    pub fn is_empty(&self) -> bool {
        self.category.is_none()
            && self.sentiment.is_none()
            && self.prior_reflection == PriorReflection::Unconstrained
    }

    /// True when every turn satisfying `other` also satisfies `self`.
    pub fn is_at_most_as_strict_as(&self, other: &TriggerCondition) -> bool {
        let category = self.category.is_none() || self.category == other.category;
        let sentiment = self.sentiment.is_none() || self.sentiment == other.sentiment;
        let prior = self.prior_reflection == PriorReflection::Unconstrained
            || self.prior_reflection == other.prior_reflection;
        category && sentiment && prior
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconCategory {
    pub id: CategoryId,
    pub name: String,
    #[serde(default)]
    pub terms: Vec<Term>,
}

/// A lexicon entry. Stems match any token they prefix; other terms match
/// whole tokens only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub surface: String,
    pub is_stem: bool,
}

impl Term {
    pub fn exact(surface: &str) -> Self {
        Term { surface: surface.to_lowercase(), is_stem: false }
    }

    pub fn stem(surface: &str) -> Self {
        Term { surface: surface.to_lowercase(), is_stem: true }
    }

    /// Parses one authored fragment such as `"Happ*"`. Returns `None` for
    /// fragments that are empty once whitespace and asterisks are removed.
    pub fn parse(fragment: &str) -> Option<Term> {
        let trimmed = fragment.trim();
        let is_stem = trimmed.ends_with('*');
        let surface: String = trimmed.chars().filter(|&c| c != '*').collect::<String>().trim().to_lowercase();
        if surface.is_empty() {
            None
        } else {
            Some(Term { surface, is_stem })
        }
    }

    pub fn matches(&self, token: &str) -> bool {
        if self.is_stem {
            token.starts_with(self.surface.as_str())
        } else {
            token == self.surface
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)?;
        if self.is_stem {
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Term::parse(&raw).ok_or_else(|| serde::de::Error::custom("empty lexicon term"))
    }
}

/// Splits an admin-entered, comma-separated term list. Fragments are trimmed
/// and lowercased, a trailing `*` marks a stem, empty fragments are dropped
/// and duplicates keep their first occurrence.
pub fn parse_term_list(csv_text: &str) -> Vec<Term> {
    dedup_terms(csv_text.split(',').filter_map(Term::parse))
}

pub fn format_term_list(terms: &[Term]) -> String {
    terms.iter().map(Term::to_string).collect::<Vec<_>>().join(", ")
}

pub(crate) fn dedup_terms(terms: impl IntoIterator<Item = Term>) -> Vec<Term> {
    let mut seen = HashSet::new();
    terms.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconAssignment {
    pub topic_id: TopicId,
    pub category_id: CategoryId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyKind {
    YesNo,
    Likert7,
}

impl SurveyKind {
    /// Allowed answer values, in display order. Yes/no answers are stored
    /// as 0 (no) and 1 (yes).
    pub fn values(self) -> std::ops::RangeInclusive<u8> {
        match self {
            SurveyKind::YesNo => 0..=1,
            SurveyKind::Likert7 => 1..=7,
        }
    }

    pub fn label(self, value: u8) -> String {
        match (self, value) {
            (SurveyKind::YesNo, 0) => "no".to_owned(),
            (SurveyKind::YesNo, 1) => "yes".to_owned(),
            (_, v) => v.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyPhase {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyQuestion {
    pub id: SurveyQuestionId,
    pub topic_id: TopicId,
    pub text: String,
    pub kind: SurveyKind,
    pub ask_pre: bool,
    pub ask_post: bool,
}

impl SurveyQuestion {
    pub fn asked_in(&self, phase: SurveyPhase) -> bool {
        match phase {
            SurveyPhase::Pre => self.ask_pre,
            SurveyPhase::Post => self.ask_post,
        }
    }

    pub fn phases(&self) -> Vec<SurveyPhase> {
        [SurveyPhase::Pre, SurveyPhase::Post].into_iter().filter(|&p| self.asked_in(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaqEntry {
    pub id: FaqId,
    pub topic_id: TopicId,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericReflection {
    pub id: GenericReflectionId,
    pub text: String,
}

pub const DEFAULT_GENERIC_REFLECTIONS: &[&str] = &[
    "Tell me a little more about that.",
    "Could you say a bit more about what you mean?",
    "What else comes to mind when you think about that?",
];

/// A violated invariant, located by a path into the offending document,
/// e.g. `interviews[0].main_questions[2].text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError { path: path.into(), message: message.into() }
    }
}

fn check_contiguous(orders: impl Iterator<Item = u32>, path: &str) -> Result<(), ValidationError> {
    for (i, order) in orders.enumerate() {
        if order as usize != i {
            return Err(ValidationError::new(
                format!("{path}[{i}].order"),
                format!("expected order {i}, found {order}; orders must be 0..n-1 in sequence"),
            ));
        }
    }
    Ok(())
}

impl Interview {
    /// Checks the structural invariants. Category references are checked
    /// by the store, which knows the lexicons.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.main_questions.is_empty() {
            return Err(ValidationError::new("main_questions", "an interview needs at least one main question"));
        }
        check_contiguous(self.main_questions.iter().map(|q| q.order), "main_questions")?;
        for (i, q) in self.main_questions.iter().enumerate() {
            if q.text.trim().is_empty() {
                return Err(ValidationError::new(format!("main_questions[{i}].text"), "must not be empty"));
            }
        }
        check_contiguous(self.reflections.iter().map(|r| r.order), "reflections")?;
        for (i, r) in self.reflections.iter().enumerate() {
            if r.text.trim().is_empty() {
                return Err(ValidationError::new(format!("reflections[{i}].text"), "must not be empty"));
            }
            if r.trigger.is_empty() {
                return Err(ValidationError::new(
                    format!("reflections[{i}].trigger"),
                    "set a category, a sentiment, or a prior-reflection constraint",
                ));
            }
            if r.trigger.category.as_deref().is_some_and(|c| c.trim().is_empty()) {
                return Err(ValidationError::new(format!("reflections[{i}].trigger.category"), "must not be empty"));
            }
        }
        Ok(())
    }

    pub fn reflection(&self, order: u32) -> Option<&Reflection> {
        self.reflections.iter().find(|r| r.order == order)
    }
}

impl LexiconCategory {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.name.trim().is_empty() {
            return Err(ValidationError::new("name", "must not be empty"));
        }
        let mut seen = HashSet::new();
        for (i, term) in self.terms.iter().enumerate() {
            if term.surface.is_empty() || term.surface.contains('*') {
                return Err(ValidationError::new(format!("terms[{i}]"), "invalid term"));
            }
            if !seen.insert((term.surface.to_lowercase(), term.is_stem)) {
                return Err(ValidationError::new(format!("terms[{i}]"), format!("duplicate term {term}")));
            }
        }
        Ok(())
    }
}

impl SurveyQuestion {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.text.trim().is_empty() {
            return Err(ValidationError::new("text", "must not be empty"));
        }
        if !self.ask_pre && !self.ask_post {
            return Err(ValidationError::new("ask_pre", "question is asked in neither the pre nor the post survey"));
        }
        Ok(())
    }
}

impl FaqEntry {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.question.trim().is_empty() {
            return Err(ValidationError::new("question", "must not be empty"));
        }
        if self.answer.trim().is_empty() {
            return Err(ValidationError::new("answer", "must not be empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_mixed_term_list() {
        assert_eq!(
            parse_term_list("happ*, joy,  SAD"),
            vec![Term::stem("happ"), Term::exact("joy"), Term::exact("sad")]
        );
    }

    #[test]
    fn empty_term_list() {
        assert!(parse_term_list("").is_empty());
        assert!(parse_term_list(" , ,* ,").is_empty());
    }

    #[test]
    fn duplicate_terms_collapse() {
        assert_eq!(parse_term_list("ill*,ill*"), vec![Term::stem("ill")]);
        assert_eq!(parse_term_list("Ill*, ill*, ill"), vec![Term::stem("ill"), Term::exact("ill")]);
    }

    #[test]
    fn term_serializes_with_asterisk() {
        let json = serde_json::to_string(&vec![Term::stem("happ"), Term::exact("joy")]).unwrap();
        assert_eq!(json, r#"["happ*","joy"]"#);
        let back: Vec<Term> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vec![Term::stem("happ"), Term::exact("joy")]);
    }

    #[test]
    fn interview_orders_must_be_contiguous() {
        let mut interview = Interview {
            id: InterviewId(1),
            topic_id: TopicId(1),
            created_at: Utc::now(),
            notes: String::new(),
            main_questions: vec![
                MainQuestion { order: 0, text: "a".into() },
                MainQuestion { order: 2, text: "b".into() },
            ],
            reflections: vec![],
        };
        let err = interview.validate().unwrap_err();
        assert_eq!(err.path, "main_questions[1].order");
        interview.main_questions[1].order = 1;
        interview.validate().unwrap();
        interview.main_questions.clear();
        assert_eq!(interview.validate().unwrap_err().path, "main_questions");
    }

    #[test]
    fn empty_trigger_rejected() {
        let interview = Interview {
            id: InterviewId(1),
            topic_id: TopicId(1),
            created_at: Utc::now(),
            notes: String::new(),
            main_questions: vec![MainQuestion { order: 0, text: "a".into() }],
            reflections: vec![Reflection { order: 0, text: "r".into(), trigger: TriggerCondition::default() }],
        };
        assert_eq!(interview.validate().unwrap_err().path, "reflections[0].trigger");
    }

    #[test]
    fn survey_question_needs_a_phase() {
        let q = SurveyQuestion {
            id: SurveyQuestionId(1),
            topic_id: TopicId(1),
            text: "Stress?".into(),
            kind: SurveyKind::Likert7,
            ask_pre: false,
            ask_post: false,
        };
        assert!(q.validate().is_err());
    }

    proptest! {
        #[test]
        fn term_list_parse_is_idempotent(raw in "[a-zA-Z*, ]{0,40}") {
            let once = parse_term_list(&raw);
            let twice = parse_term_list(&format_term_list(&once));
            prop_assert_eq!(once, twice);
        }
    }
}
