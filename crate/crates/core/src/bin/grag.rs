//! `grag`: run one pipeline stage against a config file.
//!
//! Success prints a JSON report on stdout and exits 0. Failure prints
//! `{"error": <kind>, "message": ...}` on stderr and exits 1 (2 for usage
//! and config errors).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grag::config::PipelineConfig;
use grag::pipeline::{Pipeline, PipelineError, Stage};
use serde_json::json;

#[derive(Parser)]
#[command(name = "grag", version, about = "Graph retrieval, alignment and pruning pipeline")]
struct Cli {
    /// Pipeline config (JSON, `${VAR}` interpolated).
    #[arg(long, short, global = true, default_value = "grag.json")]
    config: PathBuf,
    /// Output directory, overriding `paths.output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate the config and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load graphs and questions, embed node and edge texts.
    Ingest,
    /// Top-k prizes and PCST subgraph per question.
    Retrieve,
    /// Ask the LLM for rationale chains and anchors.
    Extract,
    /// Train the graph aligner on the extracted rationales.
    TrainAligner,
    /// Keep the top n_seed nodes and their neighbors.
    Prune,
    /// Build generation bundles and ask for answers.
    Generate,
    /// Score answers against gold.
    Eval,
    /// Graph/text similarity before and after alignment.
    AnalyzeAlignment,
    /// Grid over n_seed, align steps and top_k.
    Sweep,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Ingest => Stage::Ingest,
            Command::Retrieve => Stage::Retrieve,
            Command::Extract => Stage::Extract,
            Command::TrainAligner => Stage::TrainAligner,
            Command::Prune => Stage::Prune,
            Command::Generate => Stage::Generate,
            Command::Eval => Stage::Eval,
            Command::AnalyzeAlignment => Stage::AnalyzeAlignment,
            Command::Sweep => Stage::Sweep,
        }
    }
}

fn fail(err: serde_json::Value, code: u8) -> ExitCode {
    eprintln!("{err}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(json!({ "error": "Usage", "message": e.to_string().trim() }), 2),
    };
    let stage = cli.command.stage();
    let pipeline = PipelineConfig::load(&cli.config)
        .map_err(PipelineError::from)
        .and_then(Pipeline::new)
        .map(|p| match &cli.out {
            Some(dir) => p.with_output(dir),
            None => p,
        });
    let pipeline = match pipeline {
        Ok(p) => p,
        Err(e) => return fail(e.to_json(), 2),
    };
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&pipeline.plan(stage)).expect("plan serializes"));
        return ExitCode::SUCCESS;
    }
    match pipeline.run(stage) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.to_json(), 1),
    }
}
