//! Dialogue-flow properties checked over simulated and generated sessions.

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use colloquy_core::dialogue::{
    should_generic_reflect, BotKind, ConversationSession, DialogueConfig, DialogueEngine, GenericReflectionPicker,
    ParticipantAnalysis, SessionId, Speaker,
};
use colloquy_core::domain::{CategoryId, InterviewId, LexiconCategory, Term, TopicId};
use colloquy_core::fixtures::{parse_fixture, COVID_FIXTURE, ORGANOID_FIXTURE};
use colloquy_core::lexicon::{dominant_category, match_categories, tokenize, CategoryCounts};
use colloquy_core::sentiment::{SentimentResult, ValenceLexicon};
use colloquy_core::simulator::{flow_violations, simulate_with, RespondentModel, Span, FILLER};
use colloquy_core::store::Store;
use proptest::prelude::*;

fn store_with(json: &str) -> (Store, InterviewId) {
    let store = Store::in_memory();
    store.import(parse_fixture(json).unwrap()).unwrap();
    let id = *store.snapshot().interviews.keys().next().unwrap();
    (store, id)
}

fn model_strategy() -> impl Strategy<Value = RespondentModel> {
    (
        any::<u64>(),
        0.0f64..300.0,
        0.0f64..200.0,
        0.0f64..60.0,
        0.0f64..60.0,
        proptest::collection::vec(0.0f64..3.0, 4),
        0.0f64..0.3,
    )
        .prop_map(|(seed, len_min, len_extra, delay_min, delay_extra, w, q)| RespondentModel {
            seed,
            response_length: Span { min: len_min, max: len_min + len_extra },
            response_delay: Span { min: delay_min, max: delay_min + delay_extra },
            vocabulary_mix: BTreeMap::from([
                (FILLER.to_owned(), w[0] + 0.1),
                ("health".to_owned(), w[1]),
                ("money".to_owned(), w[2]),
                ("work".to_owned(), w[3]),
            ]),
            question_rate: q,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_sessions_follow_the_flow_rules(model in model_strategy()) {
        let (store, id) = store_with(COVID_FIXTURE);
        let snap = store.snapshot();
        let interview = snap.interview(id).unwrap().clone();
        let mut problems = Vec::new();
        simulate_with(&snap, id, &model, 8, |s| problems.extend(flow_violations(s, &interview))).unwrap();
        prop_assert!(problems.is_empty(), "{problems:?}");
    }

    #[test]
    fn reflections_fire_at_most_once(model in model_strategy()) {
        let (store, id) = store_with(COVID_FIXTURE);
        let report = simulate_with(&store.snapshot(), id, &model, 8, |s: &ConversationSession| {
            let reflections = s.bot_turns().filter(|t| t.bot_kind == Some(BotKind::Reflection)).count();
            assert_eq!(reflections, s.fired_reflections.len());
        }).unwrap();
        for count in report.reflection_fire_counts.values() {
            prop_assert!(*count <= report.sessions_run);
        }
    }
}

#[test]
fn replaying_participant_turns_reproduces_bot_turns() {
    let (store, id) = store_with(ORGANOID_FIXTURE);
    let snap = store.snapshot();
    let model = RespondentModel {
        seed: 11,
        response_length: Span { min: 20.0, max: 250.0 },
        response_delay: Span { min: 5.0, max: 40.0 },
        vocabulary_mix: BTreeMap::from([(FILLER.to_owned(), 2.0), ("religion".to_owned(), 1.0), ("money".to_owned(), 1.0)]),
        question_rate: 0.1,
    };
    let mut recorded = Vec::new();
    simulate_with(&snap, id, &model, 1, |s| recorded.push(s.clone())).unwrap();
    let original = &recorded[0];

    let interview = snap.interview(id).unwrap();
    let topic = snap.topic(interview.topic_id).unwrap();
    let picker = GenericReflectionPicker::new(model.seed);
    let config = DialogueConfig::default();
    let engine = DialogueEngine::new(
        topic,
        interview,
        snap.assigned_categories(topic.id),
        ValenceLexicon::bundled(),
        &snap.generic_reflections,
        &picker,
        &config,
    );
    let started = original.started_at.unwrap();
    let (mut replay, _) = colloquy_core::start_session(&engine, original.id.clone(), started);
    for turn in original.turns.iter().filter(|t| t.speaker == Speaker::Participant) {
        engine.advance(&mut replay, &turn.text, turn.sent_at).unwrap();
    }
    assert_eq!(replay.turns, original.turns);
    assert_eq!(replay.state, original.state);
}

fn analysis(elapsed: f64, chars: usize) -> ParticipantAnalysis {
    ParticipantAnalysis {
        elapsed_seconds: elapsed,
        char_count: chars,
        word_count: 1,
        category_counts: CategoryCounts::default(),
        sentiment: SentimentResult::from_compound(0.0),
        is_question: false,
    }
}

#[test]
fn generic_boundary_table() {
    let fresh = ConversationSession::new(SessionId("b".into()), TopicId(1), InterviewId(1), Utc::now());
    let mut used = fresh.clone();
    used.generic_used = true;
    let table = [
        (14.999, 500, true),
        (14.999, 100, true),
        (0.0, 100, true),
        (15.0, 99, true),
        (600.0, 99, true),
        (15.0, 0, true),
        (15.0, 100, false),
        (15.001, 100, false),
        (600.0, 5000, false),
    ];
    for (elapsed, chars, fires) in table {
        assert_eq!(should_generic_reflect(&analysis(elapsed, chars), &fresh), fires, "({elapsed}, {chars})");
        assert!(!should_generic_reflect(&analysis(elapsed, chars), &used), "second ({elapsed}, {chars})");
    }
}

#[test]
fn generic_fires_through_the_engine_on_measured_timing() {
    let (store, id) = store_with(COVID_FIXTURE);
    let snap = store.snapshot();
    let interview = snap.interview(id).unwrap();
    let topic = snap.topic(interview.topic_id).unwrap();
    let picker = GenericReflectionPicker::new(0);
    let config = DialogueConfig::default();
    let engine = DialogueEngine::new(
        topic,
        interview,
        snap.assigned_categories(topic.id),
        ValenceLexicon::bundled(),
        &snap.generic_reflections,
        &picker,
        &config,
    );
    let long_neutral = "x".repeat(100);
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    for (millis, text, generic) in [(14_999, long_neutral.as_str(), true), (15_000, long_neutral.as_str(), false)] {
        let (mut s, _) = colloquy_core::start_session(&engine, SessionId("g".into()), t0);
        let reply = engine.advance(&mut s, text, t0 + Duration::milliseconds(millis)).unwrap();
        assert_eq!(reply.kind == BotKind::GenericReflection, generic, "{millis} ms");
    }
}

fn brute_force_dominant(counts: &BTreeMap<String, u32>) -> Option<String> {
    let mut sorted: Vec<(&String, &u32)> = counts.iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(a.1));
    let (name, &c1) = *sorted.first()?;
    let c2 = sorted.get(1).map(|(_, &c)| c).unwrap_or(0);
    (c1 > 0 && f64::from(c1) > 1.5 * f64::from(c2)).then(|| name.clone())
}

fn naive_counts(text: &str, categories: &[LexiconCategory]) -> BTreeMap<String, u32> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    categories
        .iter()
        .map(|cat| {
            let mut n = 0;
            for w in &words {
                let mut hit = false;
                for t in &cat.terms {
                    let surface = &t.surface;
                    if (t.is_stem && w.len() >= surface.len() && &w[..surface.len()] == surface) || (!t.is_stem && w == surface) {
                        hit = true;
                    }
                }
                n += u32::from(hit);
            }
            (cat.name.clone(), n)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn dominance_matches_brute_force(counts in proptest::collection::btree_map("[a-f]{1,3}", 0u32..12, 0..6)) {
        let c = CategoryCounts { counts: counts.clone(), total_tokens: 0 };
        prop_assert_eq!(dominant_category(&c).map(str::to_owned), brute_force_dominant(&counts));
    }

    #[test]
    fn lexicon_matches_naive_scan(
        words in proptest::collection::vec("[a-d]{1,5}", 0..25),
        seps in proptest::collection::vec(prop_oneof![Just(" "), Just(", "), Just(". "), Just("\n"), Just("-")], 25),
        lexicons in proptest::collection::vec(proptest::collection::vec(("[a-d]{1,3}", any::<bool>()), 0..5), 1..4),
    ) {
        let text: String = words.iter().zip(&seps).map(|(w, s)| format!("{w}{s}")).collect();
        let categories: Vec<LexiconCategory> = lexicons
            .iter()
            .enumerate()
            .map(|(i, terms)| LexiconCategory {
                id: CategoryId(i as u64),
                name: format!("c{i}"),
                terms: terms.iter().map(|(s, stem)| if *stem { Term::stem(s) } else { Term::exact(s) }).collect(),
            })
            .collect();
        let got = match_categories(&tokenize(&text), &categories);
        prop_assert_eq!(got.counts, naive_counts(&text, &categories));
    }
}
