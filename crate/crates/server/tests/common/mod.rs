#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use forge_core::gateway::Gateway;
use forge_server::{router, AppState, Config};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const FIXTURE: &str = include_str!("../fixtures/balcony_greens.json");

pub struct TestApp {
    pub state: AppState,
    pub app: Router,
    pub db: PathBuf,
    _dir: Option<tempfile::TempDir>,
}

pub fn config_for(db: &Path) -> Config {
    let mut config = Config::default();
    config.database = db.to_path_buf();
    config
}

impl TestApp {
    pub fn new() -> TestApp {
        TestApp::with_gateway(Gateway::stub())
    }

    pub fn with_gateway(gw: Gateway) -> TestApp {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("forge.db");
        let mut app = TestApp::open_with(config_for(&db), gw);
        app._dir = Some(dir);
        app
    }

    pub fn open_with(config: Config, gw: Gateway) -> TestApp {
        let db = config.database.clone();
        let state = AppState::open(config, gw).unwrap();
        TestApp {
            app: router(state.clone()),
            state,
            db,
            _dir: None,
        }
    }

    pub async fn send(&self, method: Method, uri: &str, body: Option<String>, token: Option<&str>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.send(method, uri, body.map(|b| b.to_string()), None).await;
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    pub async fn patch(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::PATCH, uri, Some(body)).await
    }

    pub async fn create_project(&self, corpus: &str) -> String {
        let (status, bytes) = self.send(Method::POST, "/api/v1/projects", Some(corpus.to_string()), None).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        v["project_id"].as_str().unwrap().to_string()
    }

    /// Polls the job until it leaves the running stages.
    pub async fn wait_for_job(&self, job_id: &str, limit: Duration) -> Value {
        let start = Instant::now();
        loop {
            let (status, job) = self.get(&format!("/api/v1/jobs/{job_id}")).await;
            assert_eq!(status, StatusCode::OK);
            if job["stage"] == "DONE" || job["stage"] == "FAILED" {
                return job;
            }
            assert!(start.elapsed() < limit, "job still at {} after {limit:?}", job["stage"]);
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    pub async fn start_job(&self, project_id: &str) -> String {
        let (status, bytes) = self.send(Method::POST, &format!("/api/v1/projects/{project_id}/pipeline"), None, None).await;
        let job: Value = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(status, StatusCode::ACCEPTED, "{job}");
        job["job_id"].as_str().unwrap().to_string()
    }

    /// Uploads the fixture and runs it to DONE.
    pub async fn ready_project(&self) -> String {
        let id = self.create_project(FIXTURE).await;
        let job_id = self.start_job(&id).await;
        let job = self.wait_for_job(&job_id, Duration::from_secs(10)).await;
        assert_eq!(job["stage"], "DONE", "{job}");
        id
    }

    pub async fn personas(&self, project_id: &str) -> Vec<Value> {
        let (status, v) = self.get(&format!("/api/v1/projects/{project_id}/personas")).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        v.as_array().unwrap().clone()
    }
}
