use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;
use wordtrust::evalgt::{resolve, GroundTruthRecord, HumanLabel, Resolution};
use wordtrust::oracle::TrustVerdict;
use wordtrust_annotate::server::{read_events, router, AppState, EVENT_LOG};
use wordtrust_annotate::{PoolItem, Workflow};

fn pool() -> Vec<PoolItem> {
    (0..10)
        .map(|i| PoolItem {
            id: format!("task{i}"),
            text: format!("the striker scored goal number {i} for the team"),
            classes: vec!["food".into(), "sport".into()],
            predicted: "sport".into(),
            explanation: vec![("goal".into(), 0.4125 + i as f64), ("team".into(), 0.2375), ("the".into(), 0.0125)],
            oracle: TrustVerdict::ALL[i % 3],
        })
        .collect()
}

/// What each annotator answers on each task: `None` = wrong class guess.
fn script() -> BTreeMap<(&'static str, usize), Option<&'static str>> {
    use Answer::*;
    let plan: [(usize, [Option<Answer>; 3]); 10] = [
        (0, [Some(T), Some(T), None]),
        (1, [Some(U), Some(U), None]),
        (2, [Some(D), Some(D), None]),
        (3, [Some(T), Some(U), Some(U)]),
        (4, [Some(D), Some(T), Some(D)]),
        (5, [Some(T), Some(U), Some(D)]),
        (6, [Some(T), Some(T), None]),
        (7, [Some(U), Some(U), None]),
        (8, [Some(T), Some(U), Some(T)]),
        (9, [Some(D), Some(D), None]),
    ];
    let mut out = BTreeMap::new();
    for (task, answers) in plan {
        for (who, a) in ["ann", "bob", "cat"].into_iter().zip(answers) {
            if let Some(a) = a {
                out.insert((who, task), a.label());
            }
        }
    }
    // wrong class guesses
    out.insert(("ann", 7), None);
    out.insert(("bob", 6), None);
    out
}

#[derive(Clone, Copy)]
enum Answer {
    T,
    U,
    D,
}

impl Answer {
    fn label(self) -> Option<&'static str> {
        Some(match self {
            Answer::T => "trustworthy",
            Answer::U => "untrustworthy",
            Answer::D => "undefined",
        })
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<serde_json::Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn task_index(id: &str) -> usize {
    id.trim_start_matches("task").parse().unwrap()
}

/// Explanation fragments that must not leak before a correct guess.
fn secrets(i: usize) -> Vec<String> {
    vec!["explanation".into(), format!("{}", 0.4125 + i as f64), "0.2375".into(), "offsets".into()]
}

async fn work(app: &Router, who: &'static str, plan: &BTreeMap<(&str, usize), Option<&str>>) -> usize {
    let mut done = 0;
    loop {
        let (status, body) = call(app, "GET", &format!("/tasks/next?annotator={who}"), None).await;
        if status == StatusCode::NO_CONTENT {
            return done;
        }
        assert_eq!(status, StatusCode::OK);
        let view: serde_json::Value = serde_json::from_str(&body).unwrap();
        let id = view["task_id"].as_str().unwrap().to_string();
        let i = task_index(&id);
        assert_eq!(view["phase"], "guess");
        for s in secrets(i) {
            assert!(!body.contains(&s), "{who} saw {s:?} before guessing on {id}: {body}");
        }
        let answer = plan.get(&(who, i)).unwrap_or_else(|| panic!("{who} was not meant to see {id}"));
        let guess = if answer.is_some() { "sport" } else { "food" };
        let (status, body) = call(
            app,
            "POST",
            &format!("/tasks/{id}/class"),
            Some(serde_json::json!({ "annotator": who, "guess": guess })),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let (status, again) = call(
            app,
            "POST",
            &format!("/tasks/{id}/class"),
            Some(serde_json::json!({ "annotator": who, "guess": guess })),
        )
        .await;
        assert_eq!(status, StatusCode::CONFLICT, "{again}");
        match answer {
            None => {
                assert_eq!(body, r#"{"status":"next"}"#);
            }
            Some(label) => {
                let resp: serde_json::Value = serde_json::from_str(&body).unwrap();
                let words = resp["explanation"].as_array().unwrap();
                assert!(words.len() <= 10 && !words.is_empty());
                assert_eq!(words[0]["word"], "goal");
                let (status, body) = call(
                    app,
                    "POST",
                    &format!("/tasks/{id}/label"),
                    Some(serde_json::json!({ "annotator": who, "label": label })),
                )
                .await;
                assert_eq!(status, StatusCode::OK, "{body}");
            }
        }
        done += 1;
    }
}

fn expected_dataset(plan: &BTreeMap<(&str, usize), Option<&str>>) -> Vec<GroundTruthRecord> {
    let pool = pool();
    let mut out = Vec::new();
    for (i, item) in pool.iter().enumerate() {
        let mut labels = Vec::new();
        for who in ["ann", "bob", "cat"] {
            if let Some(a) = plan.get(&(who, i)) {
                labels.push(match a {
                    None => HumanLabel::ClassMispredicted,
                    Some(l) => l.parse().unwrap(),
                });
            }
            if matches!(resolve(&labels), Resolution::Final(_) | Resolution::Discarded) {
                break;
            }
        }
        if let Resolution::Final(label) = resolve(&labels) {
            out.push(GroundTruthRecord {
                id: item.id.clone(),
                oracle: item.oracle,
                label,
            });
        }
    }
    out
}

#[tokio::test]
async fn two_annotator_session_matches_resolution_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::open(pool(), 60_000, dir.path()).unwrap();
    let app = router(state.clone());
    let plan = script();

    // Invalid requests first.
    let (status, _) = call(&app, "POST", "/tasks/task0/label", Some(serde_json::json!({"annotator": "ann", "label": "trustworthy"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", "/tasks/nope/class", Some(serde_json::json!({"annotator": "ann", "guess": "sport"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    assert_eq!(work(&app, "ann", &plan).await, 10);
    assert_eq!(work(&app, "bob", &plan).await, 9);
    assert_eq!(work(&app, "cat", &plan).await, 4);
    assert_eq!(work(&app, "ann", &plan).await, 0);

    let (status, body) = call(&app, "GET", "/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let exported: Vec<GroundTruthRecord> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let expected = expected_dataset(&plan);
    assert_eq!(exported, expected);
    let ids: Vec<&str> = exported.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["task0", "task1", "task2", "task3", "task4", "task8", "task9"]);

    let events = read_events(&dir.path().join(EVENT_LOG)).unwrap();
    let replayed = Workflow::replay(pool(), 60_000, &events).unwrap();
    assert_eq!(replayed.dataset(), expected);
    let snapshot = std::fs::read_to_string(dir.path().join("dataset.jsonl")).unwrap();
    assert_eq!(snapshot, body);

    // A restarted service resumes from the log.
    let resumed = AppState::open(pool(), 60_000, dir.path()).unwrap();
    assert_eq!(resumed.dataset(), expected);
}

#[tokio::test]
async fn invalid_label_is_rejected() {
    let app = router(AppState::ephemeral(Workflow::new(pool(), 60_000).unwrap()));
    let (_, body) = call(&app, "GET", "/tasks/next?annotator=ann", None).await;
    let id = serde_json::from_str::<serde_json::Value>(&body).unwrap()["task_id"].as_str().unwrap().to_string();
    call(&app, "POST", &format!("/tasks/{id}/class"), Some(serde_json::json!({"annotator": "ann", "guess": "sport"}))).await;
    let (status, _) = call(&app, "POST", &format!("/tasks/{id}/label"), Some(serde_json::json!({"annotator": "ann", "label": "maybe"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
