//! Embedded persistent store.
//!
//! Configuration entities live in one catalog that is replaced wholesale on
//! every mutation: writers are serialized behind a mutex, readers take an
//! `Arc` snapshot and never block writers. Sessions are stored one file per
//! session and each has its own lock, so distinct participants proceed in
//! parallel while one participant's messages are applied in order.
//!
//! On disk the layout is `catalog.json` plus `sessions/<id>.json`; every
//! write goes to a temporary file that is then renamed into place.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::dialogue::{ConversationSession, SessionId};
use crate::domain::{
    dedup_terms, CategoryId, FaqEntry, FaqId, GenericReflection, GenericReflectionId, Interview, InterviewId,
    LexiconAssignment, LexiconCategory, MainQuestion, Reflection, SurveyKind, SurveyPhase, SurveyQuestion,
    SurveyQuestionId, Term, Topic, TopicId, ValidationError, DEFAULT_GENERIC_REFLECTIONS,
};
use crate::fixtures::FixtureDocument;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown {kind} {id}")]
    NotFound { kind: &'static str, id: String },
    #[error("a {kind} named {name:?} already exists")]
    DuplicateName { kind: &'static str, name: String },
    #[error("invalid {0}")]
    Validation(ValidationError),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Conflict(String),
    #[error("storage failure: {0}")]
    Io(String),
}

impl StoreError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::NotFound { .. } => "not_found",
            StoreError::DuplicateName { .. } => "duplicate_name",
            StoreError::Validation(_) => "validation",
            StoreError::Mismatch(_) => "topic_mismatch",
            StoreError::Conflict(_) => "conflict",
            StoreError::Io(_) => "storage",
        }
    }

    fn not_found(kind: &'static str, id: impl ToString) -> Self {
        StoreError::NotFound { kind, id: id.to_string() }
    }

    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        StoreError::Validation(ValidationError::new(path, message))
    }
}

impl From<ValidationError> for StoreError {
    fn from(e: ValidationError) -> Self {
        StoreError::Validation(e)
    }
}

fn io_error(context: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io(format!("{}: {e}", context.display()))
}

/// Millisecond-resolution UTC now.
pub fn now_millis() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

/// All admin-authored configuration at one point in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub topics: BTreeMap<TopicId, Topic>,
    pub interviews: BTreeMap<InterviewId, Interview>,
    pub lexicons: BTreeMap<CategoryId, LexiconCategory>,
    pub assignments: BTreeSet<LexiconAssignment>,
    pub surveys: BTreeMap<SurveyQuestionId, SurveyQuestion>,
    pub faqs: BTreeMap<FaqId, FaqEntry>,
    pub generic_reflections: Vec<GenericReflection>,
    next_id: u64,
}

impl Catalog {
    fn seeded() -> Self {
        let generic_reflections: Vec<_> = DEFAULT_GENERIC_REFLECTIONS
            .iter()
            .enumerate()
            .map(|(i, text)| GenericReflection { id: GenericReflectionId(i as u64 + 1), text: (*text).to_owned() })
            .collect();
        Catalog { next_id: generic_reflections.len() as u64 + 1, generic_reflections, ..Catalog::default() }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        id
    }

    fn max_id(&self) -> u64 {
        let ids = self
            .topics
            .keys()
            .map(|i| i.0)
            .chain(self.interviews.keys().map(|i| i.0))
            .chain(self.lexicons.keys().map(|i| i.0))
            .chain(self.surveys.keys().map(|i| i.0))
            .chain(self.faqs.keys().map(|i| i.0))
            .chain(self.generic_reflections.iter().map(|g| g.id.0));
        ids.max().unwrap_or(0)
    }

    pub fn topic(&self, id: TopicId) -> Result<&Topic, StoreError> {
        self.topics.get(&id).ok_or_else(|| StoreError::not_found("topic", id))
    }

    pub fn interview(&self, id: InterviewId) -> Result<&Interview, StoreError> {
        self.interviews.get(&id).ok_or_else(|| StoreError::not_found("interview", id))
    }

    pub fn category(&self, id: CategoryId) -> Result<&LexiconCategory, StoreError> {
        self.lexicons.get(&id).ok_or_else(|| StoreError::not_found("lexicon category", id))
    }

    pub fn category_by_name(&self, name: &str) -> Option<&LexiconCategory> {
        self.lexicons.values().find(|c| c.name == name)
    }

    pub fn survey_question(&self, id: SurveyQuestionId) -> Result<&SurveyQuestion, StoreError> {
        self.surveys.get(&id).ok_or_else(|| StoreError::not_found("survey question", id))
    }

    pub fn faq(&self, id: FaqId) -> Result<&FaqEntry, StoreError> {
        self.faqs.get(&id).ok_or_else(|| StoreError::not_found("faq entry", id))
    }

    pub fn active_interview(&self, topic: TopicId) -> Option<&Interview> {
        self.topics.get(&topic)?.active_interview_id.and_then(|id| self.interviews.get(&id))
    }

    /// Topics participants can currently choose.
    pub fn active_topics(&self) -> impl Iterator<Item = &Topic> {
        self.topics.values().filter(|t| t.active_interview_id.is_some())
    }

    pub fn interviews_for(&self, topic: TopicId) -> impl Iterator<Item = &Interview> {
        self.interviews.values().filter(move |i| i.topic_id == topic)
    }

    /// Lexicon categories assigned to the topic, ordered by id.
    pub fn assigned_categories(&self, topic: TopicId) -> Vec<&LexiconCategory> {
        self.assignments
            .iter()
            .filter(|a| a.topic_id == topic)
            .filter_map(|a| self.lexicons.get(&a.category_id))
            .collect()
    }

    pub fn assigned_category_names(&self, topic: TopicId) -> Vec<String> {
        self.assigned_categories(topic).into_iter().map(|c| c.name.clone()).collect()
    }

    pub fn survey_questions(&self, topic: TopicId) -> Vec<&SurveyQuestion> {
        self.surveys.values().filter(|q| q.topic_id == topic).collect()
    }

    pub fn survey_questions_for(&self, topic: TopicId, phase: SurveyPhase) -> Vec<SurveyQuestion> {
        self.surveys.values().filter(|q| q.topic_id == topic && q.asked_in(phase)).cloned().collect()
    }

    pub fn faqs_for(&self, topic: TopicId) -> Vec<&FaqEntry> {
        self.faqs.values().filter(|f| f.topic_id == topic).collect()
    }

    /// Structural validation plus category references. Unknown categories
    /// are errors; categories not assigned to the topic are warnings.
    pub fn check_interview(&self, interview: &Interview) -> Result<Vec<ValidationError>, StoreError> {
        self.topic(interview.topic_id)?;
        interview.validate()?;
        let assigned: HashSet<String> = self.assigned_category_names(interview.topic_id).into_iter().collect();
        let mut warnings = Vec::new();
        for (i, r) in interview.reflections.iter().enumerate() {
            let Some(category) = &r.trigger.category else { continue };
            let path = format!("reflections[{i}].trigger.category");
            if self.category_by_name(category).is_none() {
                return Err(StoreError::invalid(path, format!("unknown category {category:?}")));
            }
            if !assigned.contains(category) {
                warnings.push(ValidationError::new(
                    path,
                    format!("category {category:?} is not assigned to the topic, so this reflection cannot fire"),
                ));
            }
        }
        Ok(warnings)
    }

    pub fn to_document(&self) -> FixtureDocument {
        FixtureDocument {
            topics: self.topics.values().cloned().collect(),
            interviews: self.interviews.values().cloned().collect(),
            lexicons: self.lexicons.values().cloned().collect(),
            assignments: self.assignments.iter().copied().collect(),
            surveys: self.surveys.values().cloned().collect(),
            faqs: self.faqs.values().cloned().collect(),
            generic_reflections: self.generic_reflections.clone(),
        }
    }

    /// The subset of the catalog that one topic uses.
    pub fn topic_document(&self, topic: TopicId) -> Result<FixtureDocument, StoreError> {
        let t = self.topic(topic)?.clone();
        let assignments: Vec<_> = self.assignments.iter().filter(|a| a.topic_id == topic).copied().collect();
        let interviews: Vec<_> = self.interviews_for(topic).cloned().collect();
        let mut wanted: BTreeSet<CategoryId> = assignments.iter().map(|a| a.category_id).collect();
        for interview in &interviews {
            for r in &interview.reflections {
                if let Some(c) = r.trigger.category.as_deref().and_then(|n| self.category_by_name(n)) {
                    wanted.insert(c.id);
                }
            }
        }
        Ok(FixtureDocument {
            topics: vec![t],
            interviews,
            lexicons: wanted.iter().filter_map(|id| self.lexicons.get(id)).cloned().collect(),
            assignments,
            surveys: self.survey_questions(topic).into_iter().cloned().collect(),
            faqs: self.faqs_for(topic).into_iter().cloned().collect(),
            generic_reflections: self.generic_reflections.clone(),
        })
    }

    fn from_document(doc: FixtureDocument) -> Result<Self, StoreError> {
        doc.validate()?;
        let mut catalog = Catalog {
            topics: doc.topics.into_iter().map(|t| (t.id, t)).collect(),
            interviews: doc.interviews.into_iter().map(|i| (i.id, i)).collect(),
            lexicons: doc.lexicons.into_iter().map(|l| (l.id, l)).collect(),
            assignments: doc.assignments.into_iter().collect(),
            surveys: doc.surveys.into_iter().map(|s| (s.id, s)).collect(),
            faqs: doc.faqs.into_iter().map(|f| (f.id, f)).collect(),
            generic_reflections: doc.generic_reflections,
            next_id: 0,
        };
        catalog.next_id = catalog.max_id() + 1;
        Ok(catalog)
    }

    fn check_topic_name(&self, name: &str, except: Option<TopicId>) -> Result<(), StoreError> {
        if name.trim().is_empty() {
            return Err(StoreError::invalid("name", "must not be empty"));
        }
        if self.topics.values().any(|t| t.name == name && Some(t.id) != except) {
            return Err(StoreError::DuplicateName { kind: "topic", name: name.to_owned() });
        }
        Ok(())
    }

    fn check_category_name(&self, name: &str, except: Option<CategoryId>) -> Result<(), StoreError> {
        if name.trim().is_empty() {
            return Err(StoreError::invalid("name", "must not be empty"));
        }
        if self.lexicons.values().any(|c| c.name == name && Some(c.id) != except) {
            return Err(StoreError::DuplicateName { kind: "lexicon category", name: name.to_owned() });
        }
        Ok(())
    }

    fn interviews_referencing(&self, category: &str) -> Vec<InterviewId> {
        self.interviews
            .values()
            .filter(|i| i.reflections.iter().any(|r| r.trigger.category.as_deref() == Some(category)))
            .map(|i| i.id)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewTopic {
    pub name: String,
    #[serde(default)]
    pub icon: String,
    #[serde(default)]
    pub bot_name: String,
    #[serde(default)]
    pub intro_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicPatch {
    pub name: Option<String>,
    pub icon: Option<String>,
    pub bot_name: Option<String>,
    pub intro_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterviewDraft {
    #[serde(default)]
    pub notes: String,
    pub main_questions: Vec<MainQuestion>,
    #[serde(default)]
    pub reflections: Vec<Reflection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryDraft {
    pub name: String,
    #[serde(default)]
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryPatch {
    pub name: Option<String>,
    pub terms: Option<Vec<Term>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyQuestionDraft {
    pub text: String,
    pub kind: SurveyKind,
    pub ask_pre: bool,
    pub ask_post: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaqDraft {
    pub question: String,
    pub answer: String,
}

/// How imported ids were mapped onto the store.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub topics: BTreeMap<u64, u64>,
    pub interviews: BTreeMap<u64, u64>,
    pub lexicons: BTreeMap<u64, u64>,
    pub surveys: BTreeMap<u64, u64>,
    pub faqs: BTreeMap<u64, u64>,
    pub warnings: Vec<ValidationError>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    next_id: u64,
    data: FixtureDocument,
}

struct SessionSlot {
    topic_id: TopicId,
    interview_id: InterviewId,
    session: Mutex<ConversationSession>,
}

pub struct Store {
    dir: Option<PathBuf>,
    catalog: RwLock<Arc<Catalog>>,
    writer: Mutex<()>,
    sessions: RwLock<HashMap<SessionId, Arc<SessionSlot>>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Store {
            dir: None,
            catalog: RwLock::new(Arc::new(Catalog::seeded())),
            writer: Mutex::new(()),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    /// Opens (or initializes) a store directory.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("sessions")).map_err(|e| io_error(&dir, e))?;
        let catalog_path = dir.join("catalog.json");
        let catalog = if catalog_path.exists() {
            let text = fs::read_to_string(&catalog_path).map_err(|e| io_error(&catalog_path, e))?;
            let file: CatalogFile = serde_json::from_str(&text).map_err(|e| io_error(&catalog_path, e))?;
            let mut catalog = Catalog::from_document(file.data)?;
            catalog.next_id = catalog.next_id.max(file.next_id);
            catalog
        } else {
            Catalog::seeded()
        };
        let mut sessions = HashMap::new();
        let entries = fs::read_dir(dir.join("sessions")).map_err(|e| io_error(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| io_error(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
            let session: ConversationSession = serde_json::from_str(&text).map_err(|e| io_error(&path, e))?;
            sessions.insert(session.id.clone(), Arc::new(SessionSlot::new(session)));
        }
        let store = Store {
            dir: Some(dir),
            catalog: RwLock::new(Arc::new(catalog)),
            writer: Mutex::new(()),
            sessions: RwLock::new(sessions),
        };
        store.persist_catalog(&store.snapshot())?;
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// A consistent read-only view of the configuration.
    pub fn snapshot(&self) -> Arc<Catalog> {
        self.catalog.read().clone()
    }

    fn persist_catalog(&self, catalog: &Catalog) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let file = CatalogFile { next_id: catalog.next_id, data: catalog.to_document() };
        let bytes = serde_json::to_vec_pretty(&file).map_err(|e| io_error(dir, e))?;
        write_atomic(&dir.join("catalog.json"), &bytes)
    }

    fn persist_session(&self, session: &ConversationSession) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let bytes = serde_json::to_vec(session).map_err(|e| io_error(dir, e))?;
        write_atomic(&dir.join("sessions").join(format!("{}.json", session.id)), &bytes)
    }

    /// Applies `f` to a private copy of the catalog and publishes it only
    /// if `f` succeeds and the copy is persisted.
    fn mutate<T>(&self, f: impl FnOnce(&mut Catalog) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let _writer = self.writer.lock();
        let mut next = Catalog::clone(&self.snapshot());
        let out = f(&mut next)?;
        self.persist_catalog(&next)?;
        *self.catalog.write() = Arc::new(next);
        Ok(out)
    }

    fn interview_has_sessions(&self, id: InterviewId) -> bool {
        self.sessions.read().values().any(|s| s.interview_id == id)
    }

    fn ensure_unlocked(&self, id: InterviewId) -> Result<(), StoreError> {
        if self.interview_has_sessions(id) {
            return Err(StoreError::Conflict(format!(
                "interview {id} already has conversations; create a new interview instead"
            )));
        }
        Ok(())
    }

    pub fn create_topic(&self, new: NewTopic) -> Result<Topic, StoreError> {
        self.mutate(|c| {
            c.check_topic_name(&new.name, None)?;
            let topic = Topic {
                id: TopicId(c.fresh_id()),
                name: new.name,
                icon: new.icon,
                bot_name: new.bot_name,
                intro_text: new.intro_text,
                active_interview_id: None,
            };
            c.topics.insert(topic.id, topic.clone());
            Ok(topic)
        })
    }

    pub fn update_topic(&self, id: TopicId, patch: TopicPatch) -> Result<Topic, StoreError> {
        self.mutate(|c| {
            if let Some(name) = &patch.name {
                c.check_topic_name(name, Some(id))?;
            }
            let topic = c.topics.get_mut(&id).ok_or_else(|| StoreError::not_found("topic", id))?;
            if let Some(v) = patch.name {
                topic.name = v;
            }
            if let Some(v) = patch.icon {
                topic.icon = v;
            }
            if let Some(v) = patch.bot_name {
                topic.bot_name = v;
            }
            if let Some(v) = patch.intro_text {
                topic.intro_text = v;
            }
            Ok(topic.clone())
        })
    }

    /// Removes a topic with its interviews, assignments, surveys and FAQs.
    /// Topics with recorded conversations cannot be deleted.
    pub fn delete_topic(&self, id: TopicId) -> Result<(), StoreError> {
        if self.sessions.read().values().any(|s| s.topic_id == id) {
            return Err(StoreError::Conflict(format!("topic {id} has conversations")));
        }
        self.mutate(|c| {
            c.topics.remove(&id).ok_or_else(|| StoreError::not_found("topic", id))?;
            c.interviews.retain(|_, i| i.topic_id != id);
            c.assignments.retain(|a| a.topic_id != id);
            c.surveys.retain(|_, q| q.topic_id != id);
            c.faqs.retain(|_, f| f.topic_id != id);
            Ok(())
        })
    }

    /// Saves a new interview and returns it with any validation warnings.
    pub fn create_interview(
        &self,
        topic_id: TopicId,
        draft: InterviewDraft,
    ) -> Result<(Interview, Vec<ValidationError>), StoreError> {
        self.mutate(|c| {
            let mut interview = Interview {
                id: InterviewId(0),
                topic_id,
                created_at: now_millis(),
                notes: draft.notes,
                main_questions: draft.main_questions,
                reflections: draft.reflections,
            };
            let warnings = c.check_interview(&interview)?;
            interview.id = InterviewId(c.fresh_id());
            c.interviews.insert(interview.id, interview.clone());
            Ok((interview, warnings))
        })
    }

    pub fn update_interview(
        &self,
        id: InterviewId,
        draft: InterviewDraft,
    ) -> Result<(Interview, Vec<ValidationError>), StoreError> {
        let _writer = self.writer.lock();
        self.ensure_unlocked(id)?;
        let mut next = Catalog::clone(&self.snapshot());
        let existing = next.interview(id)?.clone();
        let interview = Interview {
            notes: draft.notes,
            main_questions: draft.main_questions,
            reflections: draft.reflections,
            ..existing
        };
        let warnings = next.check_interview(&interview)?;
        next.interviews.insert(id, interview.clone());
        self.persist_catalog(&next)?;
        *self.catalog.write() = Arc::new(next);
        Ok((interview, warnings))
    }

    /// Deleting the active interview leaves its topic without one.
    pub fn delete_interview(&self, id: InterviewId) -> Result<(), StoreError> {
        let _writer = self.writer.lock();
        self.ensure_unlocked(id)?;
        let mut next = Catalog::clone(&self.snapshot());
        next.interviews.remove(&id).ok_or_else(|| StoreError::not_found("interview", id))?;
        for topic in next.topics.values_mut() {
            if topic.active_interview_id == Some(id) {
                topic.active_interview_id = None;
            }
        }
        self.persist_catalog(&next)?;
        *self.catalog.write() = Arc::new(next);
        Ok(())
    }

    pub fn set_active_interview(&self, topic_id: TopicId, interview_id: InterviewId) -> Result<Topic, StoreError> {
        self.mutate(|c| {
            c.topic(topic_id)?;
            let owner = c.interview(interview_id)?.topic_id;
            if owner != topic_id {
                return Err(StoreError::Mismatch(format!(
                    "interview {interview_id} belongs to topic {owner}, not {topic_id}"
                )));
            }
            let topic = c.topics.get_mut(&topic_id).expect("checked above");
            topic.active_interview_id = Some(interview_id);
            Ok(topic.clone())
        })
    }

    pub fn clear_active_interview(&self, topic_id: TopicId) -> Result<Topic, StoreError> {
        self.mutate(|c| {
            let topic = c.topics.get_mut(&topic_id).ok_or_else(|| StoreError::not_found("topic", topic_id))?;
            topic.active_interview_id = None;
            Ok(topic.clone())
        })
    }

    pub fn create_category(&self, draft: CategoryDraft) -> Result<LexiconCategory, StoreError> {
        self.mutate(|c| {
            c.check_category_name(&draft.name, None)?;
            let mut category = LexiconCategory { id: CategoryId(0), name: draft.name, terms: dedup_terms(draft.terms) };
            category.validate()?;
            category.id = CategoryId(c.fresh_id());
            c.lexicons.insert(category.id, category.clone());
            Ok(category)
        })
    }

    /// Renaming a category that interview triggers refer to is rejected.
    pub fn update_category(&self, id: CategoryId, patch: CategoryPatch) -> Result<LexiconCategory, StoreError> {
        self.mutate(|c| {
            let mut category = c.category(id)?.clone();
            if let Some(name) = patch.name {
                if name != category.name {
                    c.check_category_name(&name, Some(id))?;
                    let users = c.interviews_referencing(&category.name);
                    if !users.is_empty() {
                        return Err(StoreError::Conflict(format!(
                            "category {:?} is used by triggers in interviews {users:?}",
                            category.name
                        )));
                    }
                    category.name = name;
                }
            }
            if let Some(terms) = patch.terms {
                category.terms = dedup_terms(terms);
            }
            category.validate()?;
            c.lexicons.insert(id, category.clone());
            Ok(category)
        })
    }

    /// Also removes the category's topic assignments. Categories still
    /// named by a reflection trigger cannot be deleted.
    pub fn delete_category(&self, id: CategoryId) -> Result<(), StoreError> {
        self.mutate(|c| {
            let name = c.category(id)?.name.clone();
            let users = c.interviews_referencing(&name);
            if !users.is_empty() {
                return Err(StoreError::Conflict(format!(
                    "category {name:?} is used by triggers in interviews {users:?}"
                )));
            }
            c.lexicons.remove(&id);
            c.assignments.retain(|a| a.category_id != id);
            Ok(())
        })
    }

    /// Idempotent.
    pub fn assign_category(&self, topic_id: TopicId, category_id: CategoryId) -> Result<(), StoreError> {
        self.mutate(|c| {
            c.topic(topic_id)?;
            c.category(category_id)?;
            c.assignments.insert(LexiconAssignment { topic_id, category_id });
            Ok(())
        })
    }

    pub fn unassign_category(&self, topic_id: TopicId, category_id: CategoryId) -> Result<(), StoreError> {
        self.mutate(|c| {
            if !c.assignments.remove(&LexiconAssignment { topic_id, category_id }) {
                return Err(StoreError::not_found("assignment", format!("{topic_id}/{category_id}")));
            }
            Ok(())
        })
    }

    pub fn create_survey_question(
        &self,
        topic_id: TopicId,
        draft: SurveyQuestionDraft,
    ) -> Result<SurveyQuestion, StoreError> {
        self.mutate(|c| {
            c.topic(topic_id)?;
            let mut q = SurveyQuestion {
                id: SurveyQuestionId(0),
                topic_id,
                text: draft.text,
                kind: draft.kind,
                ask_pre: draft.ask_pre,
                ask_post: draft.ask_post,
            };
            q.validate()?;
            q.id = SurveyQuestionId(c.fresh_id());
            c.surveys.insert(q.id, q.clone());
            Ok(q)
        })
    }

    pub fn update_survey_question(
        &self,
        id: SurveyQuestionId,
        draft: SurveyQuestionDraft,
    ) -> Result<SurveyQuestion, StoreError> {
        self.mutate(|c| {
            let existing = c.survey_question(id)?;
            let q = SurveyQuestion {
                id,
                topic_id: existing.topic_id,
                text: draft.text,
                kind: draft.kind,
                ask_pre: draft.ask_pre,
                ask_post: draft.ask_post,
            };
            q.validate()?;
            c.surveys.insert(id, q.clone());
            Ok(q)
        })
    }

    pub fn delete_survey_question(&self, id: SurveyQuestionId) -> Result<(), StoreError> {
        self.mutate(|c| {
            c.surveys.remove(&id).map(|_| ()).ok_or_else(|| StoreError::not_found("survey question", id))
        })
    }

    pub fn create_faq(&self, topic_id: TopicId, draft: FaqDraft) -> Result<FaqEntry, StoreError> {
        self.mutate(|c| {
            c.topic(topic_id)?;
            let mut faq = FaqEntry { id: FaqId(0), topic_id, question: draft.question, answer: draft.answer };
            faq.validate()?;
            faq.id = FaqId(c.fresh_id());
            c.faqs.insert(faq.id, faq.clone());
            Ok(faq)
        })
    }

    pub fn update_faq(&self, id: FaqId, draft: FaqDraft) -> Result<FaqEntry, StoreError> {
        self.mutate(|c| {
            let topic_id = c.faq(id)?.topic_id;
            let faq = FaqEntry { id, topic_id, question: draft.question, answer: draft.answer };
            faq.validate()?;
            c.faqs.insert(id, faq.clone());
            Ok(faq)
        })
    }

    pub fn delete_faq(&self, id: FaqId) -> Result<(), StoreError> {
        self.mutate(|c| c.faqs.remove(&id).map(|_| ()).ok_or_else(|| StoreError::not_found("faq entry", id)))
    }

    /// Merges an interchange document into the store. Ids are kept when
    /// free and reassigned otherwise; lexicon categories with an existing
    /// name are merged by taking the union of terms.
    pub fn import(&self, doc: FixtureDocument) -> Result<ImportReport, StoreError> {
        let warnings = doc.validate()?;
        self.mutate(|c| {
            for (i, topic) in doc.topics.iter().enumerate() {
                if c.topics.values().any(|t| t.name == topic.name) {
                    return Err(StoreError::DuplicateName { kind: "topic", name: doc.topics[i].name.clone() });
                }
            }
            let mut report = ImportReport { warnings, ..ImportReport::default() };
            let mut reserve = c.max_id().max(doc_max_id(&doc)) + 1;
            let mut pick = |taken: bool, wanted: u64| {
                if taken {
                    let id = reserve;
                    reserve += 1;
                    id
                } else {
                    wanted
                }
            };

            for lexicon in &doc.lexicons {
                if let Some(existing) = c.lexicons.values_mut().find(|l| l.name == lexicon.name) {
                    existing.terms = dedup_terms(existing.terms.iter().chain(&lexicon.terms).cloned());
                    report.lexicons.insert(lexicon.id.0, existing.id.0);
                } else {
                    let id = pick(c.lexicons.contains_key(&lexicon.id), lexicon.id.0);
                    c.lexicons.insert(CategoryId(id), LexiconCategory { id: CategoryId(id), ..lexicon.clone() });
                    report.lexicons.insert(lexicon.id.0, id);
                }
            }
            for topic in &doc.topics {
                let id = pick(c.topics.contains_key(&topic.id), topic.id.0);
                report.topics.insert(topic.id.0, id);
            }
            for interview in &doc.interviews {
                let id = pick(c.interviews.contains_key(&interview.id), interview.id.0);
                report.interviews.insert(interview.id.0, id);
                let topic_id = TopicId(report.topics[&interview.topic_id.0]);
                c.interviews.insert(InterviewId(id), Interview { id: InterviewId(id), topic_id, ..interview.clone() });
            }
            for topic in &doc.topics {
                let id = TopicId(report.topics[&topic.id.0]);
                let active_interview_id = topic.active_interview_id.map(|i| InterviewId(report.interviews[&i.0]));
                c.topics.insert(id, Topic { id, active_interview_id, ..topic.clone() });
            }
            for a in &doc.assignments {
                c.assignments.insert(LexiconAssignment {
                    topic_id: TopicId(report.topics[&a.topic_id.0]),
                    category_id: CategoryId(report.lexicons[&a.category_id.0]),
                });
            }
            for q in &doc.surveys {
                let id = pick(c.surveys.contains_key(&q.id), q.id.0);
                report.surveys.insert(q.id.0, id);
                let topic_id = TopicId(report.topics[&q.topic_id.0]);
                c.surveys.insert(SurveyQuestionId(id), SurveyQuestion { id: SurveyQuestionId(id), topic_id, ..q.clone() });
            }
            for f in &doc.faqs {
                let id = pick(c.faqs.contains_key(&f.id), f.id.0);
                report.faqs.insert(f.id.0, id);
                let topic_id = TopicId(report.topics[&f.topic_id.0]);
                c.faqs.insert(FaqId(id), FaqEntry { id: FaqId(id), topic_id, ..f.clone() });
            }
            for g in &doc.generic_reflections {
                if c.generic_reflections.iter().any(|e| e.text == g.text) {
                    continue;
                }
                let taken = c.generic_reflections.iter().any(|e| e.id == g.id);
                let id = pick(taken, g.id.0);
                c.generic_reflections.push(GenericReflection { id: GenericReflectionId(id), text: g.text.clone() });
            }
            c.next_id = c.next_id.max(c.max_id() + 1);
            c.to_document().validate()?;
            Ok(report)
        })
    }

    pub fn export(&self) -> FixtureDocument {
        self.snapshot().to_document()
    }

    /// Creates a session under the writer lock, so no interview edit can
    /// slip between reading the configuration and recording the session.
    pub fn create_session<R, E: From<StoreError>>(
        &self,
        f: impl FnOnce(&Catalog) -> Result<(ConversationSession, R), E>,
    ) -> Result<R, E> {
        let _writer = self.writer.lock();
        let catalog = self.snapshot();
        let (session, out) = f(&catalog)?;
        if !session.id.is_well_formed() {
            return Err(StoreError::invalid("session_id", "malformed session id").into());
        }
        catalog.interview(session.interview_id)?;
        let mut sessions = self.sessions.write();
        if sessions.contains_key(&session.id) {
            return Err(StoreError::Conflict(format!("session {} already exists", session.id)).into());
        }
        self.persist_session(&session)?;
        sessions.insert(session.id.clone(), Arc::new(SessionSlot::new(session)));
        Ok(out)
    }

    /// Runs `f` on one session while holding that session's lock. Changes
    /// are committed only when `f` succeeds.
    pub fn with_session<R, E: From<StoreError>>(
        &self,
        id: &SessionId,
        f: impl FnOnce(&Catalog, &mut ConversationSession) -> Result<R, E>,
    ) -> Result<R, E> {
        let slot = self.slot(id)?;
        let mut guard = slot.session.lock();
        let catalog = self.snapshot();
        let mut working = guard.clone();
        let out = f(&catalog, &mut working)?;
        if working != *guard {
            self.persist_session(&working)?;
            *guard = working;
        }
        Ok(out)
    }

    fn slot(&self, id: &SessionId) -> Result<Arc<SessionSlot>, StoreError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| StoreError::not_found("session", id))
    }

    pub fn session(&self, id: &SessionId) -> Result<ConversationSession, StoreError> {
        Ok(self.slot(id)?.session.lock().clone())
    }

    /// All sessions of a topic, oldest first.
    pub fn sessions_for_topic(&self, topic: TopicId) -> Vec<ConversationSession> {
        let slots: Vec<_> = self.sessions.read().values().filter(|s| s.topic_id == topic).cloned().collect();
        let mut sessions: Vec<_> = slots.iter().map(|s| s.session.lock().clone()).collect();
        sessions.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        sessions
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }
}

fn doc_max_id(doc: &FixtureDocument) -> u64 {
    let ids = doc
        .topics
        .iter()
        .map(|t| t.id.0)
        .chain(doc.interviews.iter().map(|i| i.id.0))
        .chain(doc.lexicons.iter().map(|l| l.id.0))
        .chain(doc.surveys.iter().map(|s| s.id.0))
        .chain(doc.faqs.iter().map(|f| f.id.0))
        .chain(doc.generic_reflections.iter().map(|g| g.id.0));
    ids.max().unwrap_or(0)
}

impl SessionSlot {
    fn new(session: ConversationSession) -> Self {
        SessionSlot { topic_id: session.topic_id, interview_id: session.interview_id, session: Mutex::new(session) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_term_list, PriorReflection, TriggerCondition};
    use crate::fixtures::{parse_fixture, COVID_FIXTURE, ORGANOID_FIXTURE};

    fn topic(store: &Store, name: &str) -> Topic {
        store
            .create_topic(NewTopic { name: name.into(), icon: "virus".into(), bot_name: "Mira".into(), intro_text: "hi".into() })
            .unwrap()
    }

    fn draft(category: Option<&str>) -> InterviewDraft {
        InterviewDraft {
            notes: String::new(),
            main_questions: vec![MainQuestion { order: 0, text: "How are you?".into() }],
            reflections: category
                .map(|c| Reflection {
                    order: 0,
                    text: "Tell me more about that.".into(),
                    trigger: TriggerCondition {
                        category: Some(c.into()),
                        sentiment: None,
                        prior_reflection: PriorReflection::Unconstrained,
                    },
                })
                .into_iter()
                .collect(),
        }
    }

    fn dummy_session(id: &str, topic: TopicId, interview: InterviewId) -> ConversationSession {
        ConversationSession::new(id.into(), topic, interview, now_millis())
    }

    #[test]
    fn topic_names_are_unique_and_nonempty() {
        let store = Store::in_memory();
        let t = topic(&store, "COVID-19");
        assert_eq!(t.active_interview_id, None);
        assert!(matches!(
            store.create_topic(NewTopic { name: "COVID-19".into(), icon: String::new(), bot_name: String::new(), intro_text: String::new() }),
            Err(StoreError::DuplicateName { .. })
        ));
        assert!(matches!(
            store.create_topic(NewTopic { name: "".into(), icon: String::new(), bot_name: String::new(), intro_text: String::new() }),
            Err(StoreError::Validation(_))
        ));
    }

    #[test]
    fn one_active_interview_per_topic() {
        let store = Store::in_memory();
        let a = topic(&store, "a");
        let b = topic(&store, "b");
        let (i1, _) = store.create_interview(a.id, draft(None)).unwrap();
        let (i2, _) = store.create_interview(a.id, draft(None)).unwrap();
        let (other, _) = store.create_interview(b.id, draft(None)).unwrap();
        store.set_active_interview(a.id, i1.id).unwrap();
        let t = store.set_active_interview(a.id, i2.id).unwrap();
        assert_eq!(t.active_interview_id, Some(i2.id));
        assert_eq!(store.set_active_interview(a.id, i2.id).unwrap().active_interview_id, Some(i2.id));
        assert!(matches!(store.set_active_interview(a.id, other.id), Err(StoreError::Mismatch(_))));
        assert!(matches!(store.set_active_interview(a.id, InterviewId(999)), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn trigger_categories_checked() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        assert!(matches!(store.create_interview(t.id, draft(Some("health"))), Err(StoreError::Validation(_))));
        let health = store.create_category(CategoryDraft { name: "health".into(), terms: parse_term_list("sick, ill*") }).unwrap();
        let (_, warnings) = store.create_interview(t.id, draft(Some("health"))).unwrap();
        assert_eq!(warnings.len(), 1);
        store.assign_category(t.id, health.id).unwrap();
        let (_, warnings) = store.create_interview(t.id, draft(Some("health"))).unwrap();
        assert!(warnings.is_empty());
    }

    #[test]
    fn deleting_category_removes_assignments() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let c = store.create_category(CategoryDraft { name: "work".into(), terms: parse_term_list("job*") }).unwrap();
        store.assign_category(t.id, c.id).unwrap();
        store.assign_category(t.id, c.id).unwrap();
        assert_eq!(store.snapshot().assignments.len(), 1);
        store.delete_category(c.id).unwrap();
        assert!(store.snapshot().assignments.is_empty());
        assert!(matches!(store.delete_category(c.id), Err(StoreError::NotFound { .. })));
    }

    #[test]
    fn referenced_category_cannot_be_deleted_or_renamed() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let c = store.create_category(CategoryDraft { name: "work".into(), terms: vec![] }).unwrap();
        store.create_interview(t.id, draft(Some("work"))).unwrap();
        assert!(matches!(store.delete_category(c.id), Err(StoreError::Conflict(_))));
        let rename = CategoryPatch { name: Some("jobs".into()), terms: None };
        assert!(matches!(store.update_category(c.id, rename), Err(StoreError::Conflict(_))));
        let terms = CategoryPatch { name: None, terms: Some(parse_term_list("job*, job*")) };
        assert_eq!(store.update_category(c.id, terms).unwrap().terms.len(), 1);
    }

    #[test]
    fn deleting_active_interview_clears_pointer() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let (i, _) = store.create_interview(t.id, draft(None)).unwrap();
        store.set_active_interview(t.id, i.id).unwrap();
        store.delete_interview(i.id).unwrap();
        assert_eq!(store.snapshot().topic(t.id).unwrap().active_interview_id, None);
    }

    #[test]
    fn interviews_with_sessions_are_frozen() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let (i, _) = store.create_interview(t.id, draft(None)).unwrap();
        store.create_session(|_| Ok::<_, StoreError>((dummy_session("s1", t.id, i.id), ()))).unwrap();
        assert!(matches!(store.update_interview(i.id, draft(None)), Err(StoreError::Conflict(_))));
        assert!(matches!(store.delete_interview(i.id), Err(StoreError::Conflict(_))));
        assert!(matches!(store.delete_topic(t.id), Err(StoreError::Conflict(_))));
    }

    #[test]
    fn faq_update_visible_immediately() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let f = store.create_faq(t.id, FaqDraft { question: "Q?".into(), answer: "old".into() }).unwrap();
        store.update_faq(f.id, FaqDraft { question: "Q?".into(), answer: "new".into() }).unwrap();
        assert_eq!(store.snapshot().faqs_for(t.id)[0].answer, "new");
        assert!(store.create_faq(t.id, FaqDraft { question: " ".into(), answer: "a".into() }).is_err());
    }

    #[test]
    fn survey_question_needs_a_phase() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let bad = SurveyQuestionDraft { text: "Stress?".into(), kind: SurveyKind::Likert7, ask_pre: false, ask_post: false };
        assert!(matches!(store.create_survey_question(t.id, bad), Err(StoreError::Validation(_))));
    }

    #[test]
    fn import_export_round_trip() {
        for json in [COVID_FIXTURE, ORGANOID_FIXTURE] {
            let doc = parse_fixture(json).unwrap();
            let store = Store::in_memory();
            let report = store.import(doc.clone()).unwrap();
            assert!(report.topics.iter().all(|(a, b)| a == b));
            let exported = store.export();
            assert_eq!(exported, doc);
            let again = Store::in_memory();
            again.import(parse_fixture(&exported.to_json_pretty()).unwrap()).unwrap();
            assert_eq!(again.export(), exported);
        }
    }

    #[test]
    fn importing_both_fixtures_remaps_and_merges() {
        let store = Store::in_memory();
        store.import(parse_fixture(COVID_FIXTURE).unwrap()).unwrap();
        let report = store.import(parse_fixture(ORGANOID_FIXTURE).unwrap()).unwrap();
        let snap = store.snapshot();
        assert_eq!(snap.topics.len(), 2);
        assert_eq!(snap.lexicons.values().filter(|l| l.name == "money").count(), 1);
        let organoid = snap.topics.values().find(|t| t.name != "COVID-19").unwrap();
        let active = snap.active_interview(organoid.id).unwrap();
        assert_eq!(active.main_questions.len(), 8);
        assert_eq!(report.topics.len(), 1);
        assert!(snap.assigned_category_names(organoid.id).contains(&"money".to_string()));
        assert_eq!(snap.generic_reflections.len(), 3);
        assert!(matches!(store.import(parse_fixture(COVID_FIXTURE).unwrap()), Err(StoreError::DuplicateName { .. })));
    }

    #[test]
    fn persistence_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (topic_id, interview_id) = {
            let store = Store::open(dir.path()).unwrap();
            store.import(parse_fixture(COVID_FIXTURE).unwrap()).unwrap();
            let t = topic(&store, "extra");
            let (i, _) = store.create_interview(t.id, draft(None)).unwrap();
            store.create_session(|_| Ok::<_, StoreError>((dummy_session("abc", t.id, i.id), ()))).unwrap();
            store
                .with_session(&"abc".into(), |_, s| {
                    s.abandoned = true;
                    Ok::<_, StoreError>(())
                })
                .unwrap();
            (t.id, i.id)
        };
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.snapshot().topics.len(), 2);
        let s = store.session(&"abc".into()).unwrap();
        assert!(s.abandoned);
        assert_eq!((s.topic_id, s.interview_id), (topic_id, interview_id));
        let t2 = topic(&store, "fresh");
        assert!(t2.id.0 > interview_id.0);
    }

    #[test]
    fn failed_session_update_is_not_committed() {
        let store = Store::in_memory();
        let t = topic(&store, "a");
        let (i, _) = store.create_interview(t.id, draft(None)).unwrap();
        store.create_session(|_| Ok::<_, StoreError>((dummy_session("s", t.id, i.id), ()))).unwrap();
        let r: Result<(), StoreError> = store.with_session(&"s".into(), |_, s| {
            s.abandoned = true;
            Err(StoreError::Conflict("nope".into()))
        });
        assert!(r.is_err());
        assert!(!store.session(&"s".into()).unwrap().abandoned);
        let dup = store.create_session(|_| Ok::<_, StoreError>((dummy_session("s", t.id, i.id), ())));
        assert!(matches!(dup, Err(StoreError::Conflict(_))));
        let bad = store.create_session(|_| Ok::<_, StoreError>((dummy_session("../x", t.id, i.id), ())));
        assert!(matches!(bad, Err(StoreError::Validation(_))));
    }
}
