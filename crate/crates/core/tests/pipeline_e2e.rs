mod common;

use std::process::Command;
use std::sync::Arc;

use grag::pipeline::{Pipeline, PipelineError, Stage, LOCK_FILE};
use grag::transport::{CountingTransport, Offline};
use grag::toy::ScriptedLlm;
use serde_json::Value;

fn grag(args: &[&str]) -> (i32, Value, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_grag")).args(args).output().unwrap();
    let parse = |b: &[u8]| serde_json::from_slice(b).unwrap_or(Value::Null);
    (out.status.code().unwrap(), parse(&out.stdout), parse(&out.stderr))
}

#[test]
fn retrieve_before_ingest_is_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = common::toy::config_path();
    let (code, _, err) = grag(&["retrieve", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(err["error"], "MissingArtifact");
    assert_eq!(err["run_first"], "ingest");
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = common::toy::config_path();
    let (code, plan, _) = grag(&["ingest", "--dry-run", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(plan["stage"], "ingest");
    assert_eq!(plan["config_hash"].as_str().unwrap().len(), 64);
    assert!(!out.exists());
}

#[test]
fn usage_and_config_errors_are_json() {
    let (code, _, err) = grag(&["frobnicate"]);
    assert_eq!((code, err["error"].as_str()), (2, Some("Usage")));
    let (code, _, err) = grag(&["ingest", "-c", "/definitely/not/here.json"]);
    assert_eq!((code, err["error"].as_str()), (2, Some("ConfigInvalid")));
}

#[test]
fn cli_stage_then_stale_after_config_change() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = common::toy::config_path();
    let (code, report, _) = grag(&["ingest", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{report}");
    assert_eq!(report["stage"], "ingest");

    let mut changed = common::toy::config();
    changed.retrieval.k = 3;
    let p = Pipeline::new(changed).unwrap().with_output(&out);
    let err = p.run(Stage::Retrieve).unwrap_err();
    assert!(matches!(err, PipelineError::StaleArtifact { .. }), "{err}");
}

#[test]
fn held_lock_refuses_second_run() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join(LOCK_FILE), "").unwrap();
    let p = Pipeline::new(common::toy::config()).unwrap().with_output(tmp.path());
    assert!(matches!(p.run(Stage::Ingest), Err(PipelineError::Locked(_))));
}

#[test]
fn offline_run_is_reproducible_and_makes_no_calls() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let transport = Arc::new(CountingTransport::new(Offline));
    let counter = transport.counter();
    let p = |dir: &std::path::Path| {
        Pipeline::new(common::toy::config()).unwrap().with_transport(transport.clone()).with_output(dir)
    };
    let reports = p(a.path()).run_all().unwrap();
    assert_eq!(reports.len(), Stage::CHAIN.len());
    p(b.path()).run_all().unwrap();
    assert_eq!(counter.load(std::sync::atomic::Ordering::SeqCst), 0);

    let ta = common::toy::tree(a.path());
    let tb = common::toy::tree(b.path());
    assert!(!ta.contains_key(LOCK_FILE));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs between runs");
    }

    // rerunning a stage in place reproduces it
    let prune_before = ta.iter().filter(|(k, _)| k.starts_with("prune/")).count();
    p(a.path()).run(Stage::Prune).unwrap();
    let again = common::toy::tree(a.path());
    assert_eq!(again.iter().filter(|(k, _)| k.starts_with("prune/")).count(), prune_before);
    assert_eq!(again, ta);
}

#[test]
fn fixtures_match_a_fresh_recording() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("toy");
    std::fs::create_dir_all(dir.join("fixtures")).unwrap();
    grag::toy::write_corpus(&dir, 0).unwrap();
    std::fs::copy(common::toy::config_path(), dir.join("config.json")).unwrap();
    let mut cfg = grag::config::PipelineConfig::load(&dir.join("config.json")).unwrap();
    cfg.gateway.offline = false;
    cfg.gateway.base_url = Some("http://scripted.invalid".into());
    cfg.gateway.record = true;
    let p = Pipeline::new(cfg).unwrap().with_transport(Arc::new(ScriptedLlm)).with_output(tmp.path().join("out"));
    p.run_all().unwrap();
    p.run(Stage::AnalyzeAlignment).unwrap();
    p.run(Stage::Sweep).unwrap();

    let shipped = common::toy::tree(&common::toy::dir().join("fixtures"));
    let fresh = common::toy::tree(&dir.join("fixtures"));
    assert_eq!(shipped.keys().collect::<Vec<_>>(), fresh.keys().collect::<Vec<_>>());
    assert_eq!(shipped, fresh);
    for name in ["questions.json"] {
        assert_eq!(std::fs::read(dir.join(name)).unwrap(), std::fs::read(common::toy::dir().join(name)).unwrap());
    }
}
