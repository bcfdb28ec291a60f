#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Duration, TimeZone, Utc};
use colloquy_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const TOKEN: &str = "test-admin-token";

/// In-process client with a hand-driven clock.
pub struct Api {
    pub app: Router,
    pub state: AppState,
    clock: Arc<Mutex<DateTime<Utc>>>,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub text: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.text))
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_owned()
    }
}

impl Api {
    pub fn new() -> Self {
        Self::with_dir(None)
    }

    pub fn with_dir(dir: Option<&std::path::Path>) -> Self {
        let clock = Arc::new(Mutex::new(Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()));
        let reader = Arc::clone(&clock);
        let mut config = ServerConfig::new(TOKEN);
        config.clock = Arc::new(move || *reader.lock().unwrap());
        config.data_dir = dir.map(|d| d.to_path_buf());
        let state = AppState::new(config).unwrap();
        Api { app: router(state.clone()), state, clock }
    }

    pub fn advance(&self, seconds: i64) {
        *self.clock.lock().unwrap() += Duration::seconds(seconds);
    }

    pub async fn send(&self, method: Method, path: &str, body: Option<Value>, admin: bool) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if admin {
            req = req.header(header::AUTHORIZATION, format!("Bearer {TOKEN}"));
        }
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let res = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = res.status();
        let content_type =
            res.headers().get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or_default().to_owned();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        Reply { status, content_type, text: String::from_utf8(bytes.to_vec()).unwrap() }
    }

    pub async fn get(&self, path: &str) -> Reply {
        self.send(Method::GET, path, None, false).await
    }

    pub async fn post(&self, path: &str, body: Value) -> Reply {
        self.send(Method::POST, path, Some(body), false).await
    }

    pub async fn admin_get(&self, path: &str) -> Reply {
        self.send(Method::GET, path, None, true).await
    }

    pub async fn admin(&self, method: Method, path: &str, body: Option<Value>) -> Reply {
        self.send(method, path, body, true).await
    }

    /// Posts and asserts the status.
    pub async fn ok(&self, method: Method, path: &str, body: Option<Value>, admin: bool, status: StatusCode) -> Value {
        let reply = self.send(method, path, body, admin).await;
        assert_eq!(reply.status, status, "{path}: {}", reply.text);
        if reply.text.is_empty() {
            Value::Null
        } else {
            reply.json()
        }
    }
}

/// A sentence over 100 characters that matches no lexicon category.
pub const LONG_NEUTRAL: &str = "The afternoon went by slowly and I spent most of it reading by the window while the kettle boiled.";

pub fn long_neutral() -> String {
    format!("{LONG_NEUTRAL} {LONG_NEUTRAL}")
}
