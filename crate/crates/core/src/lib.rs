//! Core engines for scripted chat interviews.
//!
//! Admins author topics, interviews (main questions plus rule-triggered
//! reflections), lexicon categories, surveys and FAQs. Participants answer
//! the interview in a guided chat; each message is tokenized, matched
//! against the topic's lexicons and scored for sentiment, and those results
//! decide which follow-up, if any, the bot asks next.
//!
//! ```
//! use colloquy_core::{dominant_category, match_categories, parse_term_list, tokenize};
//! use colloquy_core::domain::{CategoryId, LexiconCategory};
//!
//! let health = LexiconCategory { id: CategoryId(1), name: "health".into(), terms: parse_term_list("sick, ill*") };
//! let work = LexiconCategory { id: CategoryId(2), name: "work".into(), terms: parse_term_list("job*") };
//! let counts = match_categories(&tokenize("Being ill and sick made my job harder"), &[health, work]);
//! assert_eq!(counts.get("health"), 2);
//! assert_eq!(dominant_category(&counts), Some("health"));
//! ```

pub mod analytics;
pub mod dialogue;
pub mod domain;
pub mod fixtures;
pub mod lexicon;
pub mod sentiment;
pub mod simulator;
pub mod store;

pub use analytics::{compute_dashboard, summarize_conversation, survey_plot_data, ConversationSummary, DashboardStats};
pub use dialogue::{
    detect_question, evaluate_triggers, should_generic_reflect, start_session, BotResponse, ConversationSession,
    DialogueEngine, SessionId, SessionState,
};
pub use domain::parse_term_list;
pub use fixtures::{load_fixtures, FixtureDocument};
pub use lexicon::{dominant_category, match_categories, tokenize, CategoryCounts};
pub use sentiment::{classify_sentiment, SentimentLabel, SentimentResult, ValenceLexicon};
pub use simulator::{coverage_check, simulate, RespondentModel, SimulationReport};
pub use store::{Catalog, Store, StoreError};
