use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lrqa_annotate::router;
use lrqa_core::annotation::{create_annotation_batch, AnnotationStore, AnnotationTask, KappaMode};
use lrqa_core::assembly::DatasetRecord;
use lrqa_core::item::Lang;
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(id: &str) -> DatasetRecord {
    DatasetRecord {
        item_id: id.into(),
        pair_id: format!("p-{id}"),
        paragraph: format!("Paragraph for {id}."),
        question: format!("Question {id}?"),
        options: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        correct_index: 2,
        language: Lang::new("hy").unwrap(),
    }
}

fn setup(n_test: usize, n_flagged: usize) -> (tempfile::TempDir, Router, Vec<AnnotationTask>) {
    let dir = tempfile::tempdir().unwrap();
    let store = AnnotationStore::open(dir.path()).unwrap();
    let test: Vec<_> = (0..n_test).map(|i| record(&format!("t{i}"))).collect();
    let rejects: Vec<_> = (0..n_flagged + 2).map(|i| record(&format!("r{i}"))).collect();
    let tasks = create_annotation_batch("b1", &test, &rejects, n_flagged, 5).unwrap();
    store.add_batch(&tasks).unwrap();
    (dir, router(Arc::new(store), KappaMode::FiveWay), tasks)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn keys_anywhere(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                keys_anywhere(x, out);
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys_anywhere(x, out)),
        _ => {}
    }
}

fn assert_blind(v: &Value) {
    let mut keys = Vec::new();
    keys_anywhere(v, &mut keys);
    for banned in ["hidden_flag", "correct_index", "item_id", "pair_id"] {
        assert!(!keys.iter().any(|k| k == banned), "payload exposes {banned}: {v}");
    }
    assert!(!v.to_string().contains("flagged\""), "{v}");
}

fn answer(task: &str, who: &str, verdict: Value, reasons: &[&str]) -> Value {
    json!({"task_id": task, "annotator_id": who, "verdict": verdict, "reasons": reasons})
}

#[tokio::test]
async fn next_payload_has_exact_blinded_schema() {
    let (_d, app, tasks) = setup(4, 2);
    let (s, v) = call(&app, "GET", "/batches/b1/next?annotator=ann1", None).await;
    assert_eq!(s, StatusCode::OK);
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["batch_id", "options", "paragraph", "progress", "question", "task_id"]);
    assert_eq!(v["task_id"], tasks[0].task_id);
    assert_eq!(v["progress"], json!({"done": 0, "total": 6}));
    assert_blind(&v);
}

#[tokio::test]
async fn every_endpoint_is_blind() {
    let (_d, app, tasks) = setup(3, 2);
    let (_, v) = call(&app, "GET", "/batches", None).await;
    assert_eq!(v, json!(["b1"]));
    for who in ["ann1", "ann2"] {
        for t in &tasks {
            let (s, v) = call(&app, "GET", &format!("/batches/b1/next?annotator={who}"), None).await;
            assert_eq!(s, StatusCode::OK);
            assert_blind(&v);
            let (s, v) = call(&app, "POST", "/annotations", Some(answer(&t.task_id, who, json!(2), &[]))).await;
            assert_eq!(s, StatusCode::CREATED);
            assert_blind(&v);
        }
        let (s, _) = call(&app, "GET", &format!("/batches/b1/next?annotator={who}"), None).await;
        assert_eq!(s, StatusCode::NO_CONTENT);
    }
    let (s, v) = call(&app, "GET", "/batches/b1/report", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_blind(&v);
}

#[tokio::test]
async fn report_is_conflict_until_complete() {
    let (_d, app, tasks) = setup(2, 1);
    for t in &tasks {
        call(&app, "POST", "/annotations", Some(answer(&t.task_id, "ann1", json!(2), &[]))).await;
    }
    let (s, v) = call(&app, "GET", "/batches/b1/report", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("0 of 3"), "{v}");
    for t in &tasks {
        let verdict = if t.task_id.ends_with('0') { json!("unanswerable") } else { json!(2) };
        let reasons: &[&str] = if t.task_id.ends_with('0') { &["bad_translation"] } else { &[] };
        call(&app, "POST", "/annotations", Some(answer(&t.task_id, "ann2", verdict, reasons))).await;
    }
    let (s, v) = call(&app, "GET", "/batches/b1/report?mode=binary", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["kappa_mode"], "binary");
}

#[tokio::test]
async fn invalid_and_unknown_submissions() {
    let (_d, app, tasks) = setup(2, 1);
    let t = &tasks[0].task_id;
    let cases = [
        (answer(t, "ann1", json!("unanswerable"), &[]), StatusCode::UNPROCESSABLE_ENTITY),
        (answer(t, "ann1", json!(1), &["other"]), StatusCode::UNPROCESSABLE_ENTITY),
        (answer(t, "ann1", json!(4), &[]), StatusCode::UNPROCESSABLE_ENTITY),
        (answer(t, "", json!(1), &[]), StatusCode::UNPROCESSABLE_ENTITY),
        (answer("b1:9999", "ann1", json!(1), &[]), StatusCode::NOT_FOUND),
    ];
    for (body, want) in cases {
        let (s, v) = call(&app, "POST", "/annotations", Some(body.clone())).await;
        assert_eq!(s, want, "{body} -> {v}");
    }
    let (s, _) = call(&app, "POST", "/annotations", Some(json!({"task_id": t}))).await;
    assert!(s.is_client_error());

    let (s, _) = call(&app, "POST", "/annotations", Some(answer(t, "ann1", json!(1), &[]))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = call(&app, "POST", "/annotations", Some(answer(t, "ann1", json!("unanswerable"), &["other", "date_mismatch"]))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["verdict"], "unanswerable");
}

#[tokio::test]
async fn unknown_batch_and_missing_annotator() {
    let (_d, app, _) = setup(1, 1);
    let (s, _) = call(&app, "GET", "/batches/nope/next?annotator=a", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/batches/b1/next", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/batches/nope/report", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn records_survive_restart() {
    let (dir, app, tasks) = setup(1, 1);
    call(&app, "POST", "/annotations", Some(answer(&tasks[0].task_id, "ann1", json!(0), &[]))).await;
    let reopened = router(Arc::new(AnnotationStore::open(dir.path()).unwrap()), KappaMode::FiveWay);
    let (_, v) = call(&reopened, "GET", "/batches/b1/next?annotator=ann1", None).await;
    assert_eq!(v["task_id"], tasks[1].task_id);
    assert_eq!(v["progress"]["done"], 1);
}
