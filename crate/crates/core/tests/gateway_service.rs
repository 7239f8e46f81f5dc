mod common;

use std::sync::Arc;
use std::time::Duration;

use common::http::{chat_reply, dead_url, serve};
use grag::casestudy;
use grag::embedding::{Embedder, ServiceEmbeddings};
use grag::gateway::{
    extract_rationale, extraction_prompts, AnchorKind, FixtureStore, Gateway, GatewayError, RetryPolicy,
};
use grag::transport::{CountingTransport, HttpTransport};

fn fast() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 5,
        base_delay: Duration::from_millis(1),
    }
}

fn http() -> Arc<HttpTransport> {
    Arc::new(HttpTransport::new(Duration::from_secs(5)))
}

#[test]
fn service_mode_speaks_chat_completions() {
    let server = serve(|_, path, _| {
        assert_eq!(path, "/v1/chat/completions");
        (200, chat_reply("Relevant"))
    });
    let gw = Gateway::service(&server.base_url, Some("k".into()), http()).with_retry(fast());
    assert_eq!(gw.complete("hello").unwrap(), "Relevant");
    let (_, body) = server.requests.lock().unwrap()[0].clone();
    let body: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["model"], gw.params().model.as_str());
}

#[test]
fn cassette_replays_identically_offline() {
    let server = serve(|n, _, body| {
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        let prompt = v["messages"][0]["content"].as_str().unwrap().to_string();
        (200, chat_reply(&format!("reply {n} to {prompt}")))
    });
    let dir = tempfile::tempdir().unwrap();
    let live = Gateway::service(&server.base_url, None, http())
        .with_retry(fast())
        .recording_to(dir.path());
    let recorded: Vec<String> = ["a", "b"].iter().map(|p| live.complete(p).unwrap()).collect();

    let replay = Gateway::fixture(dir.path());
    for _ in 0..2 {
        let again: Vec<String> = ["a", "b"].iter().map(|p| replay.complete(p).unwrap()).collect();
        assert_eq!(again, recorded);
    }
    assert_eq!(server.hits(), 2);
}

#[test]
fn rate_limits_are_retried_then_surfaced() {
    let server = serve(|n, _, _| if n < 4 { (429, "{}".into()) } else { (200, chat_reply("ok")) });
    let gw = Gateway::service(&server.base_url, None, http()).with_retry(fast());
    assert_eq!(gw.complete("p").unwrap(), "ok");
    assert_eq!(server.hits(), 5);

    let always = serve(|_, _, _| (429, "{}".into()));
    let gw = Gateway::service(&always.base_url, None, http()).with_retry(fast());
    assert_eq!(gw.complete("p").unwrap_err(), GatewayError::RateLimited { attempts: 5 });
    assert_eq!(always.hits(), 5);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(|_, _, _| (400, "bad".into()));
    let gw = Gateway::service(&server.base_url, None, http()).with_retry(fast());
    assert_eq!(
        gw.complete("p").unwrap_err(),
        GatewayError::Rejected { status: 400, body: "bad".into() }
    );
    assert_eq!(server.hits(), 1);
}

#[test]
fn unreachable_endpoint_is_provider_unavailable() {
    let counting = Arc::new(CountingTransport::new(HttpTransport::new(Duration::from_secs(2))));
    let gw = Gateway::service(dead_url(), None, counting.clone()).with_retry(fast());
    assert!(matches!(gw.complete("p"), Err(GatewayError::ProviderUnavailable(_))));
    assert_eq!(counting.calls(), 5);
}

#[test]
fn case_study_anchors_ground_to_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    casestudy::record_extraction(dir.path()).unwrap();
    let g = casestudy::graph();
    let gw = Gateway::fixture(dir.path());
    let bundle = extract_rationale(casestudy::QUESTION, &[casestudy::ANSWER.into()], &g, &gw).unwrap();
    let rowling = bundle.anchors.iter().find(|a| a.span == "j. k. rowling").unwrap();
    assert_eq!((rowling.kind, rowling.nodes.clone()), (AnchorKind::Entity, vec![3]));
    let rel = bundle
        .anchors
        .iter()
        .find(|a| a.kind == AnchorKind::Relation)
        .unwrap();
    assert_eq!(rel.span, "book.author.works_written");
    assert_eq!(rel.edges, vec![4]);
    let stone = &bundle.anchors[0];
    assert_eq!(stone.nodes, vec![1]);
    assert_eq!(
        bundle.anchor_text(),
        "harry potter and the philosopher's stone; j. k. rowling; book.author.works_written"
    );
}

#[test]
fn reprompts_then_parse_failure() {
    let g = casestudy::graph();
    let answers = vec![casestudy::ANSWER.to_string()];
    let prompts = extraction_prompts(casestudy::QUESTION, &answers, &g).unwrap();
    assert_eq!(prompts.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    let store = FixtureStore::new(dir.path());
    for p in &prompts {
        store.record(p, "RationaleChain:\n1. a\n2. b\n3. c\n").unwrap();
    }
    let gw = Gateway::fixture(dir.path());
    assert!(matches!(
        extract_rationale(casestudy::QUESTION, &answers, &g, &gw),
        Err(GatewayError::ParseFailure { attempts: 3, .. })
    ));

    // second re-prompt succeeds
    store.record(&prompts[2], casestudy::EXTRACTION_REPLY).unwrap();
    assert_eq!(extract_rationale(casestudy::QUESTION, &answers, &g, &gw).unwrap().anchors.len(), 3);

    store
        .record(&prompts[0], "RationaleChain:\n1. a\nAnchors:\n- entity: hogwarts express\n")
        .unwrap();
    assert_eq!(
        extract_rationale(casestudy::QUESTION, &answers, &g, &gw).unwrap_err(),
        GatewayError::NoGroundedAnchors
    );
}

#[test]
fn embedding_service_round_trip_returns_recorded_vectors() {
    let recorded = include_str!("fixtures/embed_reply.json");
    let server = serve(move |_, path, body| {
        assert_eq!(path, "/embed");
        let v: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(v["texts"].as_array().unwrap().len(), 2);
        (200, recorded.to_string())
    });
    let embedder = Embedder::new(ServiceEmbeddings::new(&server.base_url, None, 4, http()));
    let out = embedder.embed_many(&["alpha".into(), "beta".into()]).unwrap();
    let want: serde_json::Value = serde_json::from_str(recorded).unwrap();
    let want: Vec<Vec<f64>> = serde_json::from_value(want["vectors"].clone()).unwrap();
    assert_eq!(out, want);
    // cached: no second request
    assert_eq!(embedder.embed_text("beta").unwrap(), want[1]);
    assert_eq!(server.hits(), 1);
}
