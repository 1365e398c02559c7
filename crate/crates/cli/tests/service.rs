use std::sync::Arc;

use acf_cli::service::{router, AppState};
use acf_core::attraction::{pull_at, AttractionTarget, FieldConfig, Vec2};
use acf_core::config::Settings;
use acf_core::corpus::{records_from_events, write_actions, ActionRecord, EncodedCorpus};
use acf_core::geom::Rect;
use acf_core::model::{train, Checkpoint, TrainingConfig};
use acf_core::patch::{ClickResolver, MatchConfig, PatchDb, PatchId, SharedPatchDb};
use acf_core::synth::{benchmark_profile, generate_corpus, render_scene, SceneDetector};
use acf_core::tokenizer::{ActionKind, UserAction};
use acf_core::vocab::{build_vocabulary, ActionVocabulary};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    checkpoint: Checkpoint,
    vocab: ActionVocabulary,
    patches: PatchDb,
    actions: String,
    _dir: tempfile::TempDir,
    screenshot: String,
}

fn fixture() -> Fixture {
    let sessions = generate_corpus(&benchmark_profile(), 3, 300, 40).unwrap();
    let db = SharedPatchDb::default();
    let mut records: Vec<Vec<ActionRecord>> = Vec::new();
    for s in &sessions {
        let shot = render_scene(&s.scene);
        let resolver = ClickResolver::new(SceneDetector::exact(&s.scene), &db, MatchConfig::default());
        records.push(records_from_events(&s.events, |ev| resolver.resolve(&shot, ev.cursor, ev.timestamp_ms)).unwrap());
    }
    // a chord the what-if tests insert
    let ctx = records[0][0].context.clone();
    let chord: ActionKind = "CTRL+C".parse().unwrap();
    let extra = (0..3).map(|t| ActionRecord { action: UserAction::new(chord.clone(), t), context: ctx.clone() }).collect();
    let mut vocab_src = records.clone();
    vocab_src.push(extra);
    let patches = db.into_inner();
    let vocab = build_vocabulary(vocab_src.iter().flatten().map(|r| &r.action), &patches.click_counts(), 6)
        .with_apps(vocab_src.iter().flatten().map(|r| r.context.app.clone()));
    let corpus = EncodedCorpus::encode(&records, &vocab);
    let cfg = TrainingConfig { hidden_size: 16, epochs: 2, learning_rate: 0.01, seed: 3, ..Default::default() };
    let run = train(&corpus, &corpus, &vocab, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let shot_path = dir.path().join("shot.ppm");
    std::fs::write(&shot_path, render_scene(&sessions[2].scene).to_ppm()).unwrap();
    Fixture {
        checkpoint: run.best,
        vocab,
        patches,
        actions: write_actions(&records[2..]),
        screenshot: shot_path.to_string_lossy().into_owned(),
        _dir: dir,
    }
}

fn app(f: &Fixture) -> Router {
    let state = AppState::new(Settings::default(), f.checkpoint.clone(), f.vocab.clone(), f.patches.clone()).unwrap();
    router(Arc::new(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body).await;
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
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
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn open(app: &Router, f: &Fixture) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(json!({ "actions": f.actions, "screenshot": f.screenshot }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn step(app: &Router, id: &str) -> Value {
    let (status, v) = call(app, "POST", &format!("/v1/sessions/{id}/step"), None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v
}

fn probs(v: &Value) -> Vec<f64> {
    v["predictions"].as_array().unwrap().iter().map(|p| p["prob"].as_f64().unwrap()).collect()
}

#[tokio::test]
async fn predict_top5_descending_and_filtered() {
    let f = fixture();
    let app = app(&f);
    let id = open(&app, &f).await;
    for _ in 0..7 {
        step(&app, &id).await;
    }
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k=5"), None).await;
    assert_eq!(status, StatusCode::OK);
    let p = probs(&v);
    assert_eq!(p.len(), 5);
    assert!(p.windows(2).all(|w| w[0] >= w[1]));
    assert!(p.iter().sum::<f64>() <= 1.0 + 1e-12);

    let all = f.vocab.len();
    let (_, full) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k={all}"), None).await;
    let (_, top1) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k=1"), None).await;
    assert_eq!(top1["predictions"][0], full["predictions"][0]);

    let (status, buttons) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k={all}&filter=buttons"), None).await;
    assert_eq!(status, StatusCode::OK);
    let entries = buttons["predictions"].as_array().unwrap();
    assert!(!entries.is_empty());
    assert!(entries.iter().all(|e| e["kind"] == "button" && e["patch_ref"].is_string()));
    assert!((probs(&buttons).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let raw: Vec<(&Value, f64)> = full["predictions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["kind"] == "button")
        .map(|e| (&e["index"], e["prob"].as_f64().unwrap()))
        .collect();
    let mass: f64 = raw.iter().map(|r| r.1).sum();
    for (e, (idx, p)) in entries.iter().zip(&raw) {
        assert_eq!(&e["index"], *idx);
        assert!((e["prob"].as_f64().unwrap() - p / mass).abs() < 1e-12);
    }
}

#[tokio::test]
async fn error_objects() {
    let f = fixture();
    let app = app(&f);
    let (status, v) = call(&app, "GET", "/v1/sessions/nope/predict", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");
    let id = open(&app, &f).await;
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?filter=idx:"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "filter_empty");
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?filter=weird"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "bad_filter");
    let (status, _) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k=0"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = call(&app, "POST", &format!("/v1/sessions/{id}/whatif/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "nothing_to_undo");
    let (status, _) = call(&app, "POST", "/v1/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stepping_past_the_end_reports_eof() {
    let f = fixture();
    let app = app(&f);
    let tiny: String = f.actions.lines().take(4).map(|l| format!("{l}\n")).collect();
    let (_, v) = call(&app, "POST", "/v1/sessions", Some(json!({ "actions": tiny }))).await;
    let id = v["session_id"].as_str().unwrap().to_string();
    for i in 1..=4 {
        let v = step(&app, &id).await;
        assert_eq!(v["cursor"], i);
        assert_eq!(v["eof"], false);
    }
    let v = step(&app, &id).await;
    assert_eq!(v["eof"], true);
    assert_eq!(v["cursor"], 4);
    assert_eq!(v["timeline"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn whatif_window_undo_and_reset() {
    let f = fixture();
    let app = app(&f);
    let id = open(&app, &f).await;
    let (_, initial) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    for _ in 0..6 {
        step(&app, &id).await;
    }
    let (_, before) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let (status, after) = call(&app, "POST", &format!("/v1/sessions/{id}/whatif"), Some(json!({ "action": "CTRL+C" }))).await;
    assert_eq!(status, StatusCode::OK, "{after}");
    assert_eq!(after["window"].as_array().unwrap().last().unwrap(), "CTRL+C");
    assert_eq!(after["timeline"].as_array().unwrap().last().unwrap()["synthetic"], true);
    let (_, pred) = call(&app, "GET", &format!("/v1/sessions/{id}/predict"), None).await;
    assert_eq!(pred["window"].as_array().unwrap().last().unwrap(), "CTRL+C");
    assert_ne!(pred["predictions"], before["predictions"]);

    let (_, undone) = call(&app, "POST", &format!("/v1/sessions/{id}/whatif/undo"), None).await;
    assert_eq!(undone, before);

    let (_, via_step) = call(&app, "POST", &format!("/v1/sessions/{id}/step"), Some(json!({ "action": "CTRL+C" }))).await;
    assert_eq!(via_step, after);

    let (_, reset) = call(&app, "POST", &format!("/v1/sessions/{id}/reset"), None).await;
    assert_eq!(reset, initial);
    assert_eq!(reset["cursor"], 0);

    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/whatif"), Some(json!({ "action": "CTRL+" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn replay_is_deterministic_across_restarts() {
    let f = fixture();
    let mut transcripts = Vec::new();
    for _ in 0..2 {
        let app = app(&f);
        let id = open(&app, &f).await;
        let mut t = Vec::new();
        for i in 0..15 {
            step(&app, &id).await;
            if i == 9 {
                call(&app, "POST", &format!("/v1/sessions/{id}/whatif"), Some(json!({ "action": "CTRL+C" }))).await;
            }
            t.push(call(&app, "GET", &format!("/v1/sessions/{id}/predict?k=5"), None).await.1);
        }
        transcripts.push(t);
    }
    assert_eq!(transcripts[0], transcripts[1]);
}

#[tokio::test]
async fn field_samples_match_direct_pull() {
    let f = fixture();
    let app = app(&f);
    let id = open(&app, &f).await;
    let mut single = None;
    for _ in 0..60 {
        step(&app, &id).await;
        let (_, v) = call(&app, "GET", &format!("/v1/sessions/{id}/predict?k=1"), None).await;
        if v["predictions"][0]["kind"] == "button" {
            let (status, field) = call(&app, "GET", &format!("/v1/sessions/{id}/field?k=1&step=25"), None).await;
            assert_eq!(status, StatusCode::OK);
            single = Some(field);
            break;
        }
    }
    let field = single.expect("a button becomes the top prediction");
    let targets: Vec<AttractionTarget> = field["targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let r: Rect = serde_json::from_value(t["rect"].clone()).unwrap();
            AttractionTarget::from_rect(r, t["confidence"].as_f64().unwrap())
        })
        .collect();
    assert_eq!(targets.len(), 1, "{}", field["targets"]);
    let t = targets[0];
    let samples = field["samples"].as_array().unwrap();
    assert!(!samples.is_empty());
    for s in samples {
        let s: Vec<f64> = s.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let p = Vec2::new(s[0], s[1]);
        let direct = pull_at(p, &targets, &FieldConfig::default());
        assert!((direct.x - s[2]).abs() < 1e-9 && (direct.y - s[3]).abs() < 1e-9);
        let to_center = t.center.sub(p);
        let v = Vec2::new(s[2], s[3]);
        // toward the center: parallel and same direction
        assert!((v.x * to_center.y - v.y * to_center.x).abs() < 1e-9 * to_center.norm().max(1.0));
        assert!(v.x * to_center.x + v.y * to_center.y >= 0.0);
    }

    // the located rect is the button's true position on the screenshot
    let pid = field["targets"][0]["patch_id"].as_u64().unwrap();
    let stored = f.patches.get(PatchId(pid)).unwrap();
    assert_eq!(t.rect.w as usize, stored.patch.width());

    let (_, v) = call(&app, "POST", "/v1/sessions", Some(json!({ "actions": f.actions }))).await;
    let bare = v["session_id"].as_str().unwrap();
    let (status, v) = call(&app, "GET", &format!("/v1/sessions/{bare}/field?cols=4&rows=4"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["reason"], "no_screenshot");
    assert!(v["samples"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn patches_screenshots_and_vocab() {
    let f = fixture();
    let app = app(&f);
    let (id, entry) = f.patches.iter().next().unwrap();
    let (status, bytes) = call_raw(&app, "GET", &format!("/v1/patches/{}.ppm", id.0), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, entry.patch.to_ppm());
    let (status, _) = call_raw(&app, "GET", "/v1/patches/99999.ppm", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let sid = open(&app, &f).await;
    let (status, bytes) = call_raw(&app, "GET", &format!("/v1/sessions/{sid}/screenshot.ppm"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, std::fs::read(&f.screenshot).unwrap());

    let (_, v) = call(&app, "GET", "/v1/vocab", None).await;
    let actions = v["actions"].as_array().unwrap();
    assert_eq!(actions.len(), f.vocab.len() - 2);
    assert!(actions.iter().all(|a| !a["action"].as_str().unwrap().starts_with('<')));
    assert_eq!(v["hash"], f.vocab.hash());
}

#[tokio::test]
async fn vocabulary_mismatch_is_rejected() {
    let f = fixture();
    let other = f.vocab.clone().with_apps(["elsewhere".to_string()]);
    assert!(AppState::new(Settings::default(), f.checkpoint.clone(), other, PatchDb::new()).is_err());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_steps_are_serialized() {
    let f = fixture();
    let app = app(&f);
    let id = open(&app, &f).await;
    let handles: Vec<_> = (0..40)
        .map(|_| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move { step(&app, &id).await })
        })
        .collect();
    for h in handles {
        h.await.unwrap();
    }
    let (_, v) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(v["cursor"], 40);
    assert_eq!(v["timeline"].as_array().unwrap().len(), 40);
}
