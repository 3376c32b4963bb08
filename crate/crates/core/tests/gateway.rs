mod support {
    pub mod fixture;
    pub mod stub_server;
}

use std::sync::Arc;
use std::time::Duration;

use sketchlab_core::llm::{
    ChatRequest, FeedbackKey, Gateway, GatewayError, HttpProvider, ProviderConfig,
};
use sketchlab_core::pipeline::{Run, Stage};
use sketchlab_core::prompt::{build_prompt, PromptStrategy};
use sketchlab_core::render::LabeledImage;
use support::stub_server::{StubServer, REPLY};

fn config(server: &StubServer, key_env: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint_url: server.chat_url(),
        embedding_url: server.embeddings_url(),
        api_key_env: key_env.into(),
        backoff_base_ms: 5,
        timeout_secs: 10,
        ..Default::default()
    }
}

fn gateway(
    server: &StubServer,
    key_env: &str,
    key: &str,
    tweak: impl FnOnce(&mut ProviderConfig),
) -> Gateway {
    std::env::set_var(key_env, key);
    let mut cfg = config(server, key_env);
    tweak(&mut cfg);
    let provider = HttpProvider::new(cfg.clone()).unwrap();
    Gateway::new(Arc::new(provider), cfg).with_secret(key)
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let server = StubServer::start(&[429, 429, 200], Duration::ZERO);
    let gw = gateway(&server, "SKETCHLAB_T_KEY1", "k1", |c| c.max_retries = 3);
    let done = gw.chat(&ChatRequest::user("hello")).unwrap();
    assert_eq!(done.attempts, 3);
    assert_eq!(done.response.text, REPLY);
    assert_eq!(done.response.model, "stub-model");
    assert_eq!(server.seen().len(), 3);
    let auth = server.seen()[0]
        .headers
        .iter()
        .find(|(k, _)| k == "authorization")
        .map(|(_, v)| v.clone());
    assert_eq!(auth.as_deref(), Some("Bearer k1"));
}

#[test]
fn server_error_without_retries_is_exhausted() {
    let server = StubServer::start(&[500], Duration::ZERO);
    let gw = gateway(&server, "SKETCHLAB_T_KEY2", "k2", |c| c.max_retries = 0);
    match gw.chat(&ChatRequest::user("hello")) {
        Err(GatewayError::ExhaustedRetries { attempts, .. }) => assert_eq!(attempts, 1),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("expected failure"),
    }
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(&[400], Duration::ZERO);
    let gw = gateway(&server, "SKETCHLAB_T_KEY3", "k3", |c| c.max_retries = 3);
    assert!(matches!(
        gw.chat(&ChatRequest::user("hello")),
        Err(GatewayError::Rejected { status: 400, .. })
    ));
    assert_eq!(server.seen().len(), 1);
}

#[test]
fn in_flight_requests_respect_max_parallel() {
    let server = StubServer::start(&[], Duration::from_millis(40));
    let gw = Arc::new(gateway(&server, "SKETCHLAB_T_KEY4", "k4", |c| {
        c.max_parallel = 2
    }));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let gw = gw.clone();
            std::thread::spawn(move || gw.chat(&ChatRequest::user(format!("q{i}"))).unwrap())
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.seen().len(), 8);
    let peak = server.max_in_flight();
    assert!((1..=2).contains(&peak), "peak in flight {peak}");
}

#[test]
fn missing_key_fails_before_any_request() {
    let server = StubServer::start(&[], Duration::ZERO);
    let cfg = config(&server, "SKETCHLAB_T_KEY_UNSET_ANYWHERE");
    assert!(matches!(
        HttpProvider::new(cfg),
        Err(GatewayError::MissingKey { .. })
    ));
    assert!(server.seen().is_empty());
}

#[test]
fn exchange_log_redacts_the_key() {
    let secret = "sk-test-7f3a9c1e55d0b2";
    let server = StubServer::start(&[], Duration::ZERO);
    let gw = gateway(&server, "SKETCHLAB_T_KEY5", secret, |_| {});
    let dir = tempfile::tempdir().unwrap();
    let gw = gw.with_log_dir(dir.path());
    let img = LabeledImage {
        pixels: image::RgbImage::new(4, 4),
        image_id: "a".into(),
        object_id: 0,
        stroke_width: 3,
        clipped_points: 0,
    };
    let bundle = build_prompt(PromptStrategy::ZeroShotRubric, &img, None).unwrap();
    let key = FeedbackKey {
        image_id: "a".into(),
        object_id: 0,
        strategy: PromptStrategy::ZeroShotRubric,
    };
    let rec = gw.send_chat(&key, &bundle).unwrap();
    assert_eq!(rec.feedback_text, REPLY);
    assert!(rec.timestamp > 0);
    let log = std::fs::read_to_string(dir.path().join(format!("{}.json", key.stem()))).unwrap();
    assert!(!log.contains(secret));
    assert!(log.contains("[REDACTED]"));
    // the image travels as a data URI but is logged only by hash
    assert!(server.seen()[0].body.contains("data:image/png;base64,"));
    assert!(!log.contains("base64"));
}

#[test]
fn pipeline_against_http_never_persists_the_key() {
    let secret = "sk-test-0d9e8f7a6b5c4d3e";
    let server = StubServer::start(&[], Duration::ZERO);
    std::env::set_var("SKETCHLAB_T_KEY6", secret);
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = support::fixture::write_dataset(tmp.path(), 2);
    cfg.mock = false;
    cfg.provider = config(&server, "SKETCHLAB_T_KEY6");
    let mut run = Run::open(cfg, Some("http")).unwrap();
    run.run_all().unwrap();
    assert!(run.manifest().is_complete(Stage::Analyze.as_str()));
    assert!(!server.seen().is_empty());

    let mut stack = vec![run.dir.clone()];
    let mut files = 0;
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files += 1;
                let bytes = std::fs::read(&p).unwrap();
                let found = bytes.windows(secret.len()).any(|w| w == secret.as_bytes());
                assert!(!found, "key leaked into {}", p.display());
            }
        }
    }
    assert!(files > 10);
}
