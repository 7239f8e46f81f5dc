//! Runs the bundled toy pipeline offline, stage by stage, and prints each
//! stage report.
//!
//! ```text
//! cargo run --release --example run_pipeline -- /tmp/grag-out
//! ```

use grag::config::PipelineConfig;
use grag::pipeline::{Pipeline, Stage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/grag-toy".into());
    let cfg = PipelineConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("toy/config.json"))?;
    let p = Pipeline::new(cfg)?.with_output(&out);
    println!("config hash {}", p.config_hash());
    for stage in Stage::ALL {
        let report = p.run(stage).map_err(|e| e.to_json().to_string())?;
        println!("{:<18} {} files  {}", stage.name(), report.files, report.summary);
    }
    Ok(())
}
