mod common;

use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{copy_run, parked_run, schema_dir, validate};
use hamlet_core::colearn::{Run, RunStatus};
use hamlet_service::payload::EXPERT_HEADER;
use hamlet_service::{router, ServiceState};
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

#[derive(Debug, Clone)]
enum Op {
    Submit(usize),
    SubmitUnknown,
    Resume,
    Read,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => (0usize..5).prop_map(Op::Submit),
        1 => Just(Op::SubmitUnknown),
        2 => Just(Op::Resume),
        1 => Just(Op::Read),
    ]
}

async fn send(root: &Path, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header(EXPERT_HEADER, "prop");
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(ServiceState::new(root)).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn status_of(v: &Value) -> RunStatus {
    serde_json::from_value(v["status"].clone()).unwrap()
}

async fn settle(root: &Path, id: &str) -> Value {
    for _ in 0..600 {
        let (_, v) = send(root, "GET", &format!("/runs/{id}"), None).await;
        if v["status"] != "TRAINING" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("training never finished");
}

async fn walk(ops: Vec<Op>) -> Result<(), TestCaseError> {
    let dir = copy_run(parked_run());
    let root = dir.path();
    let id = Run::open(root).unwrap().config.run_id;
    let mut trace = vec![RunStatus::AwaitingReview];
    for op in ops {
        let (_, session) = send(root, "GET", &format!("/runs/{id}"), None).await;
        let before = status_of(&session);
        let pending: Vec<String> = serde_json::from_value(session["pending"].clone()).unwrap();
        let round = session["round"].as_u64().unwrap();
        match op {
            Op::Submit(i) => {
                let queue = if before.accepts_decisions() {
                    Run::open(root).unwrap().suggestions(round as usize).unwrap()
                } else {
                    Vec::new()
                };
                let Some(s) = queue.get(i % queue.len().max(1)) else {
                    let (code, _) = send(
                        root,
                        "POST",
                        &format!("/runs/{id}/decisions"),
                        Some(json!({"sequence_id": "P001-00000", "decision": "keep_current"})),
                    )
                    .await;
                    prop_assert!(code == StatusCode::CONFLICT || code == StatusCode::NOT_FOUND);
                    continue;
                };
                let (code, _) = send(
                    root,
                    "POST",
                    &format!("/runs/{id}/decisions"),
                    Some(json!({"sequence_id": s.sequence_id, "decision": "accept_proposed"})),
                )
                .await;
                prop_assert_eq!(code, StatusCode::OK);
            }
            Op::SubmitUnknown => {
                let (code, _) = send(
                    root,
                    "POST",
                    &format!("/runs/{id}/decisions"),
                    Some(json!({"sequence_id": "nope", "decision": "keep_current"})),
                )
                .await;
                let expected = if before.accepts_decisions() {
                    StatusCode::NOT_FOUND
                } else {
                    StatusCode::CONFLICT
                };
                prop_assert_eq!(code, expected);
            }
            Op::Resume => {
                let (code, body) = send(root, "POST", &format!("/runs/{id}/resume"), None).await;
                if !before.accepts_decisions() {
                    prop_assert_eq!(code, StatusCode::CONFLICT);
                } else if !pending.is_empty() {
                    prop_assert_eq!(code, StatusCode::PRECONDITION_FAILED);
                    let listed: Vec<String> = serde_json::from_value(body["pending"].clone()).unwrap();
                    prop_assert_eq!(listed, pending);
                } else {
                    prop_assert_eq!(code, StatusCode::ACCEPTED);
                    trace.push(status_of(&body));
                    let settled = settle(root, &id).await;
                    trace.push(status_of(&settled));
                    continue;
                }
            }
            Op::Read => {}
        }
        let (_, after) = send(root, "GET", &format!("/runs/{id}"), None).await;
        trace.push(status_of(&after));
    }
    for w in trace.windows(2) {
        prop_assert!(
            w[0] == w[1] || w[0].can_move_to(w[1]),
            "illegal transition {:?} -> {:?}",
            w[0],
            w[1]
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn random_sessions_follow_declared_edges(ops in prop::collection::vec(op(), 4..28)) {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(walk(ops))?;
    }
}

#[test]
fn every_schema_compiles_and_is_versioned() {
    for entry in std::fs::read_dir(schema_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .trim_end_matches(".schema.json")
            .to_string();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        if name == "common" || name == "decision_request" {
            continue;
        }
        assert_eq!(doc["properties"]["schema_version"]["const"], 1, "{name}");
        assert!(
            doc["required"].as_array().unwrap().contains(&json!("schema_version")),
            "{name}"
        );
    }
}

#[test]
#[should_panic(expected = "payload invalid")]
fn schema_rejects_unknown_label() {
    validate(
        "decision_ack",
        &json!({
            "schema_version": 1, "run_id": "r", "round": 1, "sequence_id": "s", "label": "SPIKES",
            "expert_id": "e", "decided": 1, "total": 1
        }),
    );
}
