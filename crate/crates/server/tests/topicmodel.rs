mod common;

use std::time::Duration;

use axum::http::{Method, StatusCode};
use colloquy_topics::synthetic::{HALF_A, HALF_B};
use common::Api;
use serde_json::{json, Value};

async fn topic_with_answers(api: &Api, answers: &[String]) -> u64 {
    let topic = api.ok(Method::POST, "/api/admin/topics", Some(json!({"name": "Words"})), true, StatusCode::CREATED).await;
    let id = topic["id"].as_u64().unwrap();
    let saved = api
        .ok(Method::POST, &format!("/api/admin/topics/{id}/interviews"), Some(json!({"main_questions": [{"order": 0, "text": "Tell me."}]})), true, StatusCode::CREATED)
        .await;
    let iid = saved["interview"]["id"].as_u64().unwrap();
    api.ok(Method::POST, &format!("/api/admin/interviews/{iid}/activate"), None, true, StatusCode::OK).await;
    for text in answers {
        let s = api.ok(Method::POST, "/api/sessions", Some(json!({"topic_id": id})), false, StatusCode::CREATED).await;
        let sid = s["session_id"].as_str().unwrap();
        api.advance(60);
        let padded = format!("{text} {}", "x".repeat(100));
        api.ok(Method::POST, &format!("/api/sessions/{sid}/message"), Some(json!({"text": padded})), false, StatusCode::OK).await;
    }
    id
}

async fn wait_for(api: &Api, topic: u64, run: u64) -> Value {
    for _ in 0..600 {
        let status = api.admin_get(&format!("/api/admin/topics/{topic}/topicmodel/{run}")).await.json();
        if status["status"] == "finished" || status["status"] == "failed" {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("run {run} did not finish");
}

#[tokio::test]
async fn small_corpus_run_fails_with_message() {
    let api = Api::new();
    let answers: Vec<String> = ["virus mask", "rent salary", "doctor nurse"].iter().map(|s| s.to_string()).collect();
    let topic = topic_with_answers(&api, &answers).await;
    let run = api
        .ok(Method::POST, &format!("/api/admin/topics/{topic}/topicmodel"), Some(json!({"method": "lda", "k": 5})), true, StatusCode::ACCEPTED)
        .await;
    assert!(run["status"] == "queued" || run["status"] == "running");
    let done = wait_for(&api, topic, run["id"].as_u64().unwrap()).await;
    assert_eq!(done["status"], "failed");
    assert!(done["error"].as_str().unwrap().contains("corpus too small"));
    let r = api.admin_get(&format!("/api/admin/topics/{topic}/topicmodel/{}/result", run["id"])).await;
    assert_eq!(r.code(), "run_not_finished");

    let bad = api.admin(Method::POST, &format!("/api/admin/topics/{topic}/topicmodel"), Some(json!({"method": "lda", "k": 1}))).await;
    assert_eq!((bad.status, bad.code().as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "validation"));
}

#[tokio::test]
async fn two_runs_then_result_relevance_and_turns() {
    let api = Api::new();
    let answers: Vec<String> = (0..24)
        .map(|i| {
            let half = if i % 2 == 0 { &HALF_A } else { &HALF_B };
            (0..8).map(|j| half[(i + j * 3) % 10]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let topic = topic_with_answers(&api, &answers).await;
    let base = format!("/api/admin/topics/{topic}/topicmodel");
    let a = api.ok(Method::POST, &base, Some(json!({"method": "cluster", "k": 2, "seed": 1})), true, StatusCode::ACCEPTED).await;
    let b = api
        .ok(Method::POST, &base, Some(json!({"method": "lda", "k": 2, "seed": 1, "iterations": 200})), true, StatusCode::ACCEPTED)
        .await;
    for run in [&a, &b] {
        assert_eq!(wait_for(&api, topic, run["id"].as_u64().unwrap()).await["status"], "finished");
    }
    let runs = api.admin_get(&base).await.json();
    let runs = runs.as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| r["coherence"].is_f64() && r["duration_seconds"].is_f64()));

    let result = api.admin_get(&format!("{base}/{}/result", a["id"])).await.json();
    assert_eq!(result["result"]["k"], json!(2));
    let top: Vec<Vec<String>> = serde_json::from_value(result["result"]["top_words"].clone()).unwrap();
    assert!(top.iter().all(|t| t.iter().all(|w| HALF_A.contains(&w.as_str())) || t.iter().all(|w| HALF_B.contains(&w.as_str()))));

    let view = api.admin_get(&format!("{base}/{}/relevance?lambda=0.5", a["id"])).await.json();
    assert_eq!(view["topics"].as_array().unwrap().len(), 2);
    assert_eq!(view["coordinates"].as_array().unwrap().len(), 2);
    let r = api.admin_get(&format!("{base}/{}/relevance?lambda=1.5", a["id"])).await;
    assert_eq!(r.json()["field_path"], "lambda");

    let turns = api.admin_get(&format!("{base}/{}/turns?topic=0", a["id"])).await.json();
    assert_eq!(turns.as_array().unwrap().len(), 12);
    let word = &top[0][0];
    let turns = api.admin_get(&format!("{base}/{}/turns?topic=0&word={word}", a["id"])).await.json();
    assert!(turns.as_array().unwrap().iter().all(|d| d["text"].as_str().unwrap().contains(word.as_str())));
    let r = api.admin_get(&format!("{base}/{}/turns?topic=7", a["id"])).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}
