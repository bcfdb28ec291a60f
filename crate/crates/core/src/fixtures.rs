//! The JSON interchange document used for seed data, import and export.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    FaqEntry, GenericReflection, Interview, LexiconAssignment, LexiconCategory, SurveyQuestion, Topic,
    ValidationError,
};

/// Bundled COVID-19 expressive-interviewing configuration.
pub const COVID_FIXTURE: &str = include_str!("../fixtures/covid.json");
/// Bundled brain-organoid ethics configuration.
pub const ORGANOID_FIXTURE: &str = include_str!("../fixtures/organoid.json");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDocument {
    pub topics: Vec<Topic>,
    pub interviews: Vec<Interview>,
    pub lexicons: Vec<LexiconCategory>,
    #[serde(default)]
    pub assignments: Vec<LexiconAssignment>,
    #[serde(default)]
    pub surveys: Vec<SurveyQuestion>,
    #[serde(default)]
    pub faqs: Vec<FaqEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generic_reflections: Vec<GenericReflection>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema violation at {0}")]
    Schema(ValidationError),
}

impl From<ValidationError> for FixtureError {
    fn from(e: ValidationError) -> Self {
        FixtureError::Schema(e)
    }
}

/// Parses a document and reports the path of the first offending field.
pub fn parse_fixture(json: &str) -> Result<FixtureDocument, FixtureError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let doc: FixtureDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ValidationError::new(path, e.into_inner().to_string())
    })?;
    doc.validate()?;
    Ok(doc)
}

/// Reads, parses and validates a fixture file.
pub fn load_fixtures(path: impl AsRef<Path>) -> Result<FixtureDocument, FixtureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
    parse_fixture(&text)
}

pub fn bundled_fixtures() -> Vec<FixtureDocument> {
    [COVID_FIXTURE, ORGANOID_FIXTURE]
        .into_iter()
        .map(|json| parse_fixture(json).expect("bundled fixtures are valid"))
        .collect()
}

fn prefixed(prefix: String, e: ValidationError) -> ValidationError {
    let path = if e.path.is_empty() { prefix } else { format!("{prefix}.{}", e.path) };
    ValidationError::new(path, e.message)
}

fn unique_ids<I: std::hash::Hash + Eq + std::fmt::Display>(
    ids: impl Iterator<Item = I>,
    key: &str,
) -> Result<(), ValidationError> {
    let mut seen = HashSet::new();
    for (i, id) in ids.enumerate() {
        if !seen.insert(id) {
            return Err(ValidationError::new(format!("{key}[{i}].id"), "duplicate id"));
        }
    }
    Ok(())
}

impl FixtureDocument {
    /// Checks every entity and every cross reference. Returns warnings for
    /// trigger categories that exist but are not assigned to the topic.
    pub fn validate(&self) -> Result<Vec<ValidationError>, ValidationError> {
        unique_ids(self.topics.iter().map(|t| t.id), "topics")?;
        unique_ids(self.interviews.iter().map(|i| i.id), "interviews")?;
        unique_ids(self.lexicons.iter().map(|l| l.id), "lexicons")?;
        unique_ids(self.surveys.iter().map(|s| s.id), "surveys")?;
        unique_ids(self.faqs.iter().map(|f| f.id), "faqs")?;
        unique_ids(self.generic_reflections.iter().map(|g| g.id), "generic_reflections")?;

        let mut names = HashSet::new();
        for (i, topic) in self.topics.iter().enumerate() {
            if topic.name.trim().is_empty() {
                return Err(ValidationError::new(format!("topics[{i}].name"), "must not be empty"));
            }
            if !names.insert(topic.name.as_str()) {
                return Err(ValidationError::new(format!("topics[{i}].name"), "duplicate topic name"));
            }
        }
        let topic_ids: HashSet<_> = self.topics.iter().map(|t| t.id).collect();
        let interview_topics: HashMap<_, _> = self.interviews.iter().map(|i| (i.id, i.topic_id)).collect();
        for (i, topic) in self.topics.iter().enumerate() {
            if let Some(active) = topic.active_interview_id {
                match interview_topics.get(&active) {
                    None => {
                        return Err(ValidationError::new(
                            format!("topics[{i}].active_interview_id"),
                            format!("unknown interview {active}"),
                        ))
                    }
                    Some(&owner) if owner != topic.id => {
                        return Err(ValidationError::new(
                            format!("topics[{i}].active_interview_id"),
                            format!("interview {active} belongs to topic {owner}"),
                        ))
                    }
                    Some(_) => {}
                }
            }
        }

        let mut category_names = HashSet::new();
        for (i, lexicon) in self.lexicons.iter().enumerate() {
            lexicon.validate().map_err(|e| prefixed(format!("lexicons[{i}]"), e))?;
            if !category_names.insert(lexicon.name.as_str()) {
                return Err(ValidationError::new(format!("lexicons[{i}].name"), "duplicate category name"));
            }
        }
        let category_ids: HashMap<_, _> = self.lexicons.iter().map(|l| (l.id, l.name.as_str())).collect();

        let mut pairs = BTreeSet::new();
        for (i, a) in self.assignments.iter().enumerate() {
            if !topic_ids.contains(&a.topic_id) {
                return Err(ValidationError::new(format!("assignments[{i}].topic_id"), "unknown topic"));
            }
            if !category_ids.contains_key(&a.category_id) {
                return Err(ValidationError::new(format!("assignments[{i}].category_id"), "unknown category"));
            }
            if !pairs.insert(*a) {
                return Err(ValidationError::new(format!("assignments[{i}]"), "duplicate assignment"));
            }
        }

        let mut warnings = Vec::new();
        for (i, interview) in self.interviews.iter().enumerate() {
            if !topic_ids.contains(&interview.topic_id) {
                return Err(ValidationError::new(format!("interviews[{i}].topic_id"), "unknown topic"));
            }
            interview.validate().map_err(|e| prefixed(format!("interviews[{i}]"), e))?;
            let assigned: HashSet<&str> = pairs
                .iter()
                .filter(|a| a.topic_id == interview.topic_id)
                .filter_map(|a| category_ids.get(&a.category_id).copied())
                .collect();
            for (j, r) in interview.reflections.iter().enumerate() {
                let Some(category) = &r.trigger.category else { continue };
                let path = format!("interviews[{i}].reflections[{j}].trigger.category");
                if !category_names.contains(category.as_str()) {
                    return Err(ValidationError::new(path, format!("unknown category {category:?}")));
                }
                if !assigned.contains(category.as_str()) {
                    warnings.push(ValidationError::new(
                        path,
                        format!("category {category:?} is not assigned to the topic, so this reflection cannot fire"),
                    ));
                }
            }
        }

        for (i, q) in self.surveys.iter().enumerate() {
            if !topic_ids.contains(&q.topic_id) {
                return Err(ValidationError::new(format!("surveys[{i}].topic_id"), "unknown topic"));
            }
            q.validate().map_err(|e| prefixed(format!("surveys[{i}]"), e))?;
        }
        for (i, f) in self.faqs.iter().enumerate() {
            if !topic_ids.contains(&f.topic_id) {
                return Err(ValidationError::new(format!("faqs[{i}].topic_id"), "unknown topic"));
            }
            f.validate().map_err(|e| prefixed(format!("faqs[{i}]"), e))?;
        }
        for (i, g) in self.generic_reflections.iter().enumerate() {
            if g.text.trim().is_empty() {
                return Err(ValidationError::new(format!("generic_reflections[{i}].text"), "must not be empty"));
            }
        }
        Ok(warnings)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixture documents always serialize")
    }
}
