//! Regenerates the bundled toy corpus and records its chat fixtures.
//!
//! ```text
//! cargo run --release --example toy_corpus -- crates/core/toy
//! ```
//!
//! The graphs and questions are rewritten from the corpus seed, then every
//! pipeline stage (plus the sweep and alignment analysis) runs once against
//! the scripted responder with recording on. Afterwards the pipeline replays
//! entirely from `fixtures/`.

use std::path::PathBuf;
use std::sync::Arc;

use grag::config::PipelineConfig;
use grag::pipeline::{Pipeline, Stage};
use grag::toy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/toy".into()));
    toy::write_corpus(&dir, 0)?;
    let fixtures = dir.join("fixtures");
    if fixtures.exists() {
        std::fs::remove_dir_all(&fixtures)?;
    }
    std::fs::create_dir_all(&fixtures)?;

    let mut cfg = PipelineConfig::load(&dir.join("config.json"))?;
    cfg.gateway.offline = false;
    cfg.gateway.base_url = Some("http://scripted.invalid".into());
    cfg.gateway.record = true;
    let scratch = tempfile::tempdir()?;
    let p = Pipeline::new(cfg)?.with_transport(Arc::new(toy::ScriptedLlm)).with_output(scratch.path());
    for report in p.run_all()? {
        println!("{} {}", report.stage.name(), report.summary);
    }
    for stage in [Stage::AnalyzeAlignment, Stage::Sweep] {
        let report = p.run(stage)?;
        println!("{} {}", stage.name(), report.summary);
    }
    let n = std::fs::read_dir(&fixtures)?.count();
    println!("{n} fixtures in {}", fixtures.display());
    Ok(())
}
