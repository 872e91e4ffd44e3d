use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use accident_pipeline::backend::{
    BackendProfile, HttpBackend, InferenceRequest, RequestTag, VisionBackend,
};
use accident_pipeline::domain::{ClipMeta, CollisionType, FrameSource, SceneLayout};
use accident_pipeline::error::BackendError;
use accident_pipeline::overlay::render_flat_frames;
use accident_pipeline::pipeline::{refine_time, run_pipeline, StageConfig};
use accident_pipeline::plan::Stage;

#[derive(Clone)]
enum Reply {
    Status(u16),
    Hang(Duration),
    Content(String),
    Raw(String),
    /// Answer according to which stage prompt was sent.
    ByStage,
}

struct MockServer {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

fn read_request(stream: &mut TcpStream) -> (Option<String>, Value) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if lower.starts_with("authorization:") {
            auth = Some(line["authorization:".len()..].trim().to_string());
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    (auth, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn respond(stream: &mut TcpStream, code: u16, body: &str) {
    let msg = format!(
        "HTTP/1.1 {code} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(msg.as_bytes());
}

fn completion(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn prompt_text(body: &Value) -> String {
    body["messages"][0]["content"]
        .as_array()
        .and_then(|parts| parts.iter().find(|p| p["type"] == "text"))
        .and_then(|p| p["text"].as_str())
        .unwrap_or_default()
        .to_string()
}

fn by_stage(body: &Value) -> String {
    let text = prompt_text(body);
    if text.contains("0 to 1000") {
        r#"{"x": 250, "y": 750}"#.into()
    } else if text.contains("previous estimate") {
        "The contact happens at {\"time_s\": 10.5}.".into()
    } else {
        "```json\n{\"time_s\": 10.0, \"x\": 0.4, \"y\": 0.6, \"type\": \"head-on\"}\n```".into()
    }
}

/// Serves the scripted replies in order; the last one repeats.
fn start(script: Vec<Reply>) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let (h, b, a) = (hits.clone(), bodies.clone(), auth.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = h.fetch_add(1, Ordering::SeqCst);
            let reply = script[n.min(script.len() - 1)].clone();
            let (b, a) = (b.clone(), a.clone());
            thread::spawn(move || {
                let (auth, body) = read_request(&mut stream);
                a.lock().unwrap().push(auth);
                b.lock().unwrap().push(body.clone());
                match reply {
                    Reply::Status(code) => respond(&mut stream, code, "{}"),
                    Reply::Hang(d) => thread::sleep(d),
                    Reply::Content(c) => respond(&mut stream, 200, &completion(&c)),
                    Reply::Raw(r) => respond(&mut stream, 200, &r),
                    Reply::ByStage => respond(&mut stream, 200, &completion(&by_stage(&body))),
                }
            });
        }
    });
    MockServer {
        url,
        hits,
        bodies,
        auth,
    }
}

fn profile(url: &str, retries: u32) -> BackendProfile {
    BackendProfile {
        retries,
        backoff_ms: 1,
        timeout_s: 5.0,
        api_key_env: "ACCIDENT_PIPELINE_TEST_UNSET_KEY".into(),
        ..BackendProfile::http("test", url, "test-vl")
    }
}

fn request() -> InferenceRequest {
    InferenceRequest {
        tag: RequestTag {
            clip_id: "c1".into(),
            stage: Stage::Stage2,
            pass: 0,
            window: None,
            frame_times: vec![],
            attempt: 0,
        },
        prompt_text: "hello".into(),
        frames: vec![],
        decode: Default::default(),
        max_tokens: 64,
    }
}

#[test]
fn retries_through_transient_server_errors() {
    let server = start(vec![
        Reply::Status(503),
        Reply::Status(503),
        Reply::Content("{\"time_s\": 1}".into()),
    ]);
    let backend = HttpBackend::new(profile(&server.url, 3)).unwrap();
    let out = backend.complete(&request()).unwrap();
    assert_eq!(out, "{\"time_s\": 1}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn rate_limit_is_transient() {
    let server = start(vec![Reply::Status(429), Reply::Content("ok".into())]);
    let backend = HttpBackend::new(profile(&server.url, 1)).unwrap();
    assert_eq!(backend.complete(&request()).unwrap(), "ok");
}

#[test]
fn persistent_timeouts_exhaust_retries() {
    let server = start(vec![Reply::Hang(Duration::from_millis(1500))]);
    let p = BackendProfile {
        timeout_s: 0.2,
        ..profile(&server.url, 2)
    };
    let backend = HttpBackend::new(p).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(
        matches!(err, BackendError::Timeout { ref clip_id, attempts: 3 } if clip_id == "c1"),
        "{err:?}"
    );
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = start(vec![Reply::Status(400), Reply::Content("late".into())]);
    let backend = HttpBackend::new(profile(&server.url, 3)).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(
        matches!(err, BackendError::HttpStatus { code: 400, .. }),
        "{err:?}"
    );
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_payload_is_typed_error() {
    let server = start(vec![Reply::Raw("{\"choices\": []}".into())]);
    let backend = HttpBackend::new(profile(&server.url, 3)).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(matches!(err, BackendError::BadPayload { .. }), "{err:?}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend = HttpBackend::new(profile(&format!("http://127.0.0.1:{port}/v1"), 1)).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(err.is_transient(), "{err:?}");
}

#[test]
fn request_shape_auth_and_audit() {
    let server = start(vec![Reply::Content("{}".into())]);
    let audit = tempfile::tempdir().unwrap();
    let p = BackendProfile {
        api_key: Some("secret-token".into()),
        audit_dir: Some(audit.path().to_path_buf()),
        ..profile(&server.url, 0)
    };
    let backend = HttpBackend::new(p).unwrap();
    backend.complete(&request()).unwrap();
    let body = server.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "test-vl");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(prompt_text(&body), "hello");
    assert_eq!(
        server.auth.lock().unwrap()[0].as_deref(),
        Some("Bearer secret-token")
    );
    let log = std::fs::read_to_string(audit.path().join("test.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(rec["tag"]["clip_id"], "c1");
    assert_eq!(rec["response"], "{}");
}

#[test]
fn full_pipeline_over_http_with_images() {
    let server = start(vec![Reply::ByStage]);
    let dir = tempfile::tempdir().unwrap();
    render_flat_frames(dir.path(), 81, 64, 36).unwrap();
    let clip = ClipMeta::new("c1", 20.0, 30.0, SceneLayout::new("urban street"))
        .unwrap()
        .with_frame_source(FrameSource {
            dir: dir.path().to_path_buf(),
            fps: 4.0,
            extension: "png".into(),
        });
    let backend = HttpBackend::new(profile(&server.url, 0)).unwrap();
    let cfg = StageConfig::default();
    let (pred, trace) = run_pipeline(&clip, &backend, &cfg).unwrap();

    let expected_t = refine_time(10.0, 10.5, &cfg.refinement());
    assert!((expected_t - 10.175).abs() < 1e-12);
    assert_eq!(pred.time_s(), expected_t);
    assert_eq!(pred.centroid().x(), 0.25);
    assert_eq!(pred.centroid().y(), 0.75);
    assert_eq!(pred.collision_type(), CollisionType::HeadOn);
    assert_eq!(trace.replay(), pred);

    let bodies = server.bodies.lock().unwrap().clone();
    assert_eq!(bodies.len(), 3);
    let images = |b: &Value| {
        b["messages"][0]["content"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|p| p["type"] == "image_url")
            .count()
    };
    let first_is_image = |b: &Value| b["messages"][0]["content"][0]["type"] == "image_url";
    let by = |needle: &str| {
        bodies
            .iter()
            .find(|b| prompt_text(b).contains(needle))
            .unwrap()
            .clone()
    };
    let s1 = by("impact centroid");
    let s2 = by("previous estimate");
    let s3 = by("0 to 1000");
    assert_eq!(images(&s1), 80);
    assert!(images(&s2) >= 12 && images(&s2) <= 16);
    assert_eq!(images(&s3), 1);
    assert!(first_is_image(&s1) && first_is_image(&s3));
    assert!(prompt_text(&s1).contains("urban street"));
    assert!(prompt_text(&s2).contains("10.00"));
    let url = s3["messages"][0]["content"][0]["image_url"]["url"]
        .as_str()
        .unwrap();
    assert!(url.starts_with("data:image/png;base64,"));
}
