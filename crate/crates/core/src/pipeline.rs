//! Staged pipeline over a question set, with file artifacts.
//!
//! Output layout, one directory per stage under the output dir:
//!
//! ```text
//! ingest/    <id>.nodes.csv <id>.edges.csv <id>.emb      manifest.json
//! retrieve/  <id>.json                                    manifest.json
//! extract/   <id>.json                                    manifest.json
//! train/     initial.ckpt aligner.ckpt loss_log.csv       manifest.json
//! prune/     <id>.json                                    manifest.json
//! generate/  <id>.bundle.json <id>.json                   manifest.json
//! eval/      records.csv summary.json                     manifest.json
//! analysis/  similarity.csv similarity_plot.csv similarity_summary.json manifest.json
//! sweep/     sweep.csv sweep.json heatmap_<metric>_k<k>.csv manifest.json
//! ```
//!
//! Every manifest holds the config hash and the SHA-256 of each file the
//! stage wrote. JSON artifacts carry a `config_hash` field, CSV artifacts a
//! leading `# config_hash=<hash>` line and checkpoints a `config_hash` entry
//! in their header. A stage refuses to run until the manifests of the stages
//! it reads exist and were produced under the same config hash.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aligner::{train_aligner, AlignTrainExample, AlignerError, AlignerModel, loss_log_csv};
use crate::config::{ConfigInvalid, EmbeddingProviderKind, PipelineConfig};
use crate::embedding::{Embedder, EmbeddingError, EmbeddingTable, FixtureEmbeddings, HashingEmbeddings, ServiceEmbeddings};
use crate::evalkit::{self, alignment_analysis, exact_metrics, AnalysisItem, EvalError, EvalRecord, QAExample, SweepGrid};
use crate::gateway::{extract_rationale, judge, Gateway, GatewayError, JudgeKind, RationaleBundle};
use crate::graph::{GraphError, NodeId, TextualGraph};
use crate::refine::{self, count_tokens, generate_answer, generator_prompt, inference_example, make_bundle, GenerationBundle, PrunedSubgraph, RefineError};
use crate::retrieval::{retrieve, RetrievalError, RetrievalParams};
use crate::transport::{HttpTransport, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Retrieve,
    Extract,
    TrainAligner,
    Prune,
    Generate,
    Eval,
    AnalyzeAlignment,
    Sweep,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Retrieve,
        Stage::Extract,
        Stage::TrainAligner,
        Stage::Prune,
        Stage::Generate,
        Stage::Eval,
        Stage::AnalyzeAlignment,
        Stage::Sweep,
    ];

    /// The stages a full run executes, in order.
    pub const CHAIN: [Stage; 7] = [
        Stage::Ingest,
        Stage::Retrieve,
        Stage::Extract,
        Stage::TrainAligner,
        Stage::Prune,
        Stage::Generate,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Retrieve => "retrieve",
            Stage::Extract => "extract",
            Stage::TrainAligner => "train-aligner",
            Stage::Prune => "prune",
            Stage::Generate => "generate",
            Stage::Eval => "eval",
            Stage::AnalyzeAlignment => "analyze-alignment",
            Stage::Sweep => "sweep",
        }
    }

    pub fn dir(self) -> &'static str {
        match self {
            Stage::TrainAligner => "train",
            Stage::AnalyzeAlignment => "analysis",
            other => other.name(),
        }
    }

    fn reads(self, external_checkpoint: bool) -> Vec<Stage> {
        match self {
            Stage::Ingest => vec![],
            Stage::Retrieve | Stage::Sweep => vec![Stage::Ingest],
            Stage::Extract => vec![Stage::Ingest, Stage::Retrieve],
            Stage::TrainAligner => vec![Stage::Ingest, Stage::Retrieve, Stage::Extract],
            Stage::Prune if external_checkpoint => vec![Stage::Ingest, Stage::Retrieve],
            Stage::Prune => vec![Stage::Ingest, Stage::Retrieve, Stage::TrainAligner],
            Stage::Generate => vec![Stage::Ingest, Stage::Prune],
            Stage::Eval => vec![Stage::Ingest, Stage::Extract, Stage::Generate],
            Stage::AnalyzeAlignment => vec![Stage::Ingest, Stage::Retrieve, Stage::Extract, Stage::TrainAligner],
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(#[from] ConfigInvalid),
    #[error("{stage} needs {path}, which does not exist; run `{needs}` first")]
    MissingArtifact { stage: &'static str, needs: &'static str, path: String },
    #[error("{path} was produced under config {found}, current config is {expected}")]
    StaleArtifact { path: String, found: String, expected: String },
    #[error("output directory is locked by {0}")]
    Locked(String),
    #[error("no example has a grounded rationale to train on")]
    NoTrainingData,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::ConfigInvalid(_) => "ConfigInvalid",
            PipelineError::MissingArtifact { .. } => "MissingArtifact",
            PipelineError::StaleArtifact { .. } => "StaleArtifact",
            PipelineError::Locked(_) => "Locked",
            PipelineError::NoTrainingData => "NoTrainingData",
            PipelineError::Io { .. } => "Io",
            PipelineError::Graph(_) => "GraphError",
            PipelineError::Embedding(_) => "EmbeddingError",
            PipelineError::Retrieval(_) => "RetrievalError",
            PipelineError::Gateway(GatewayError::FixtureMiss(_)) => "FixtureMiss",
            PipelineError::Gateway(GatewayError::ProviderUnavailable(_)) => "ProviderUnavailable",
            PipelineError::Gateway(_) => "GatewayError",
            PipelineError::Aligner(_) => "AlignerError",
            PipelineError::Refine(_) => "RefineError",
            PipelineError::Eval(_) => "EvalError",
        }
    }

    /// `{"error": kind, "message": ..., ...}` for machine consumers.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        if let PipelineError::MissingArtifact { path, needs, .. } = self {
            v["artifact"] = json!(path);
            v["run_first"] = json!(needs);
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Exclusive claim on an output directory for one invocation.
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".grag.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path.display().to_string())),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stage: Stage,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub config_hash: String,
    pub output: String,
    pub files: usize,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: Stage,
    pub config_hash: String,
    pub output: String,
    /// Required manifests and whether each is present.
    pub reads: BTreeMap<String, bool>,
    pub writes: String,
}

#[derive(Serialize, Deserialize)]
struct RetrievedArtifact {
    config_hash: String,
    id: String,
    nodes: Vec<NodeId>,
    edge_indices: Vec<usize>,
    objective: f64,
    graph: TextualGraph,
}

#[derive(Serialize, Deserialize)]
struct ExtractArtifact {
    config_hash: String,
    id: String,
    rationale: Option<RationaleBundle>,
    skipped: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PruneArtifact {
    config_hash: String,
    id: String,
    seeds: Vec<NodeId>,
    scores: Vec<f64>,
    graph: TextualGraph,
    unpruned_tokens: usize,
    pruned_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct AnswerArtifact {
    config_hash: String,
    id: String,
    answer: String,
}

struct StageWriter {
    dir: PathBuf,
    hash: String,
    files: BTreeMap<String, String>,
}

impl StageWriter {
    fn new(out: &Path, stage: Stage, hash: &str) -> Result<Self> {
        let dir = out.join(stage.dir());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(StageWriter { dir, hash: hash.to_string(), files: BTreeMap::new() })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|e| io_err(&path, e))?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(data)));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("artifact serializes") + "\n";
        self.bytes(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_hash={}\n{body}", self.hash);
        self.bytes(name, text.as_bytes())
    }

    fn finish(self, stage: Stage, out: &Path, summary: Value) -> Result<StageReport> {
        let manifest = Manifest { config_hash: self.hash.clone(), stage, files: self.files, summary: summary.clone() };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(StageReport {
            stage,
            config_hash: self.hash,
            output: out.display().to_string(),
            files: manifest.files.len() + 1,
            summary,
        })
    }
}

/// Retrieved subgraph and question for one example, as later stages see it.
struct Retrieved {
    qa: QAExample,
    graph: TextualGraph,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    hash: String,
    out: PathBuf,
    transport: Arc<dyn Transport>,
    embedder: Embedder,
}

impl Pipeline {
    /// Validates the config. Nothing is written.
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let transport: Arc<dyn Transport> = Arc::new(HttpTransport::default());
        let out = cfg.resolve(&cfg.paths.output);
        let embedder = build_embedder(&cfg, Arc::clone(&transport));
        Ok(Pipeline { hash: cfg.hash(), cfg, out, transport, embedder })
    }

    /// Sends gateway and embedding-service traffic through `t`.
    pub fn with_transport(mut self, t: Arc<dyn Transport>) -> Self {
        self.embedder = build_embedder(&self.cfg, Arc::clone(&t));
        self.transport = t;
        self
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out = dir.into();
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn output(&self) -> &Path {
        &self.out
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir()).join("manifest.json")
    }

    pub fn plan(&self, stage: Stage) -> StagePlan {
        let reads = stage
            .reads(self.cfg.paths.checkpoint.is_some())
            .into_iter()
            .map(|s| {
                let p = self.manifest_path(s);
                (p.display().to_string(), p.exists())
            })
            .collect();
        StagePlan {
            stage,
            config_hash: self.hash.clone(),
            output: self.out.display().to_string(),
            reads,
            writes: self.out.join(stage.dir()).display().to_string(),
        }
    }

    fn check_inputs(&self, stage: Stage) -> Result<()> {
        for dep in stage.reads(self.cfg.paths.checkpoint.is_some()) {
            let path = self.manifest_path(dep);
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(_) => {
                    return Err(PipelineError::MissingArtifact {
                        stage: stage.name(),
                        needs: dep.name(),
                        path: path.display().to_string(),
                    })
                }
            };
            let m: Manifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            if m.config_hash != self.hash {
                return Err(PipelineError::StaleArtifact {
                    path: path.display().to_string(),
                    found: m.config_hash,
                    expected: self.hash.clone(),
                });
            }
        }
        Ok(())
    }

    /// Runs one stage under the output lock.
    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        let _lock = OutputLock::acquire(&self.out)?;
        self.run_unlocked(stage)
    }

    /// Ingest through eval, under one lock.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        let _lock = OutputLock::acquire(&self.out)?;
        Stage::CHAIN.iter().map(|&s| self.run_unlocked(s)).collect()
    }

    fn run_unlocked(&self, stage: Stage) -> Result<StageReport> {
        self.check_inputs(stage)?;
        log::info!("running {}", stage.name());
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Retrieve => self.retrieve(),
            Stage::Extract => self.extract(),
            Stage::TrainAligner => self.train(),
            Stage::Prune => self.prune(),
            Stage::Generate => self.generate(),
            Stage::Eval => self.eval(),
            Stage::AnalyzeAlignment => self.analyze(),
            Stage::Sweep => self.sweep(),
        }
    }

    fn gateway(&self) -> Gateway {
        let g = &self.cfg.gateway;
        let fixtures = self.cfg.resolve(&self.cfg.paths.fixtures);
        let gw = if g.offline {
            Gateway::fixture(fixtures)
        } else {
            let gw = Gateway::service(g.base_url.clone().unwrap_or_default(), g.api_key.clone(), Arc::clone(&self.transport));
            if g.record {
                gw.recording_to(fixtures)
            } else {
                gw
            }
        };
        gw.with_params(self.cfg.completion_params())
    }

    fn read<T: DeserializeOwned>(&self, stage: Stage, name: &str) -> Result<T> {
        let path = self.out.join(stage.dir()).join(name);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    }

    fn questions(&self) -> Result<Vec<QAExample>> {
        let m: Manifest = self.read(Stage::Ingest, "manifest.json")?;
        serde_json::from_value(m.summary["questions"].clone()).map_err(|e| io_err(&self.manifest_path(Stage::Ingest), e))
    }

    fn ingested(&self, qa: &QAExample) -> Result<(TextualGraph, EmbeddingTable)> {
        let dir = self.out.join(Stage::Ingest.dir());
        let g = TextualGraph::load_files(&dir.join(format!("{}.nodes.csv", qa.id)), &dir.join(format!("{}.edges.csv", qa.id)))?;
        let table = EmbeddingTable::load(&dir.join(format!("{}.emb", qa.id)))?;
        Ok((g, table))
    }

    fn retrieved(&self) -> Result<Vec<Retrieved>> {
        self.questions()?
            .into_iter()
            .map(|qa| {
                let a: RetrievedArtifact = self.read(Stage::Retrieve, &format!("{}.json", qa.id))?;
                Ok(Retrieved { qa, graph: a.graph })
            })
            .collect()
    }

    fn rationales(&self) -> Result<BTreeMap<String, RationaleBundle>> {
        let mut out = BTreeMap::new();
        for qa in self.questions()? {
            let a: ExtractArtifact = self.read(Stage::Extract, &format!("{}.json", qa.id))?;
            if let Some(r) = a.rationale {
                out.insert(qa.id, r);
            }
        }
        Ok(out)
    }

    fn training_set(&self, items: &[Retrieved], rationales: &BTreeMap<String, RationaleBundle>) -> Result<Vec<AlignTrainExample>> {
        let mut data = Vec::new();
        for r in items {
            if let Some(b) = rationales.get(&r.qa.id) {
                data.push(AlignTrainExample::embed(
                    r.qa.id.clone(),
                    r.graph.clone(),
                    &self.embedder,
                    &r.qa.question,
                    &b.anchor_text(),
                    &b.rationale_text(),
                )?);
            }
        }
        Ok(data)
    }

    fn trained_model(&self) -> Result<AlignerModel> {
        let path = match &self.cfg.paths.checkpoint {
            Some(p) => self.cfg.resolve(p),
            None => self.out.join(Stage::TrainAligner.dir()).join("aligner.ckpt"),
        };
        Ok(AlignerModel::load(&path)?)
    }

    fn ingest(&self) -> Result<StageReport> {
        let qpath = self.cfg.resolve(&self.cfg.paths.questions);
        let text = fs::read_to_string(&qpath).map_err(|e| io_err(&qpath, e))?;
        let mut questions: Vec<QAExample> = serde_json::from_str(&text).map_err(|e| io_err(&qpath, e))?;
        questions.sort_by(|a, b| a.id.cmp(&b.id));
        for qa in &questions {
            if qa.gold_answers.is_empty() {
                return Err(EvalError::EmptyGold.into());
            }
        }
        let graphs = self.cfg.resolve(&self.cfg.paths.graphs);
        let mut w = StageWriter::new(&self.out, Stage::Ingest, &self.hash)?;
        let mut sizes = BTreeMap::new();
        for qa in &questions {
            let g = TextualGraph::load_files(
                &graphs.join(format!("{}.nodes.csv", qa.graph)),
                &graphs.join(format!("{}.edges.csv", qa.graph)),
            )?;
            let mut table = EmbeddingTable::for_graph(&g, &self.embedder)?;
            table.insert_text(&qa.question, self.embedder.embed_text(&qa.question)?)?;
            w.bytes(&format!("{}.nodes.csv", qa.id), g.nodes_table().as_bytes())?;
            w.bytes(&format!("{}.edges.csv", qa.id), g.edges_table().as_bytes())?;
            w.bytes(&format!("{}.emb", qa.id), &table.to_bytes())?;
            sizes.insert(qa.id.clone(), json!({ "nodes": g.node_count(), "edges": g.edge_count() }));
        }
        w.finish(Stage::Ingest, &self.out, json!({ "questions": questions, "graphs": sizes }))
    }

    fn retrieve_one(&self, qa: &QAExample, params: &RetrievalParams) -> Result<RetrievedArtifact> {
        let (g, table) = self.ingested(qa)?;
        let query = table
            .text(&qa.question)
            .ok_or_else(|| EmbeddingError::MissingVector { kind: "question", id: qa.id.clone() })?
            .to_vec();
        let (sub, _) = retrieve(&g, &table, &query, params)?;
        Ok(RetrievedArtifact {
            config_hash: self.hash.clone(),
            id: qa.id.clone(),
            graph: sub.to_graph(&g)?,
            nodes: sub.nodes.to_vec(),
            edge_indices: sub.edge_indices.iter().copied().collect(),
            objective: sub.objective,
        })
    }

    fn retrieve(&self) -> Result<StageReport> {
        let params = self.cfg.retrieval_params();
        let mut w = StageWriter::new(&self.out, Stage::Retrieve, &self.hash)?;
        let mut sizes = BTreeMap::new();
        for qa in self.questions()? {
            let a = self.retrieve_one(&qa, &params)?;
            sizes.insert(qa.id.clone(), a.graph.node_count());
            w.json(&format!("{}.json", qa.id), &a)?;
        }
        w.finish(Stage::Retrieve, &self.out, json!({ "retrieved_nodes": sizes }))
    }

    fn extract_one(&self, qa: &QAExample, g: &TextualGraph, gw: &Gateway) -> Result<ExtractArtifact> {
        let (rationale, skipped) = match extract_rationale(&qa.question, &qa.gold_answers, g, gw) {
            Ok(b) => (Some(b), None),
            Err(e @ (GatewayError::NoGroundedAnchors | GatewayError::ParseFailure { .. })) => {
                log::warn!("{}: {e}", qa.id);
                (None, Some(e.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(ExtractArtifact { config_hash: self.hash.clone(), id: qa.id.clone(), rationale, skipped })
    }

    fn extract(&self) -> Result<StageReport> {
        let gw = self.gateway();
        let mut w = StageWriter::new(&self.out, Stage::Extract, &self.hash)?;
        let mut skipped = Vec::new();
        for r in self.retrieved()? {
            let a = self.extract_one(&r.qa, &r.graph, &gw)?;
            if a.skipped.is_some() {
                skipped.push(r.qa.id.clone());
            }
            w.json(&format!("{}.json", r.qa.id), &a)?;
        }
        w.finish(Stage::Extract, &self.out, json!({ "skipped": skipped }))
    }

    fn save_model(&self, w: &mut StageWriter, name: &str, model: &AlignerModel) -> Result<()> {
        let bytes = model.to_bytes_tagged(&self.hash)?;
        w.bytes(name, &bytes)
    }

    fn train(&self) -> Result<StageReport> {
        let items = self.retrieved()?;
        let data = self.training_set(&items, &self.rationales()?)?;
        if data.is_empty() {
            return Err(PipelineError::NoTrainingData);
        }
        let mut model = AlignerModel::new(self.cfg.aligner_hyper())?;
        let mut w = StageWriter::new(&self.out, Stage::TrainAligner, &self.hash)?;
        self.save_model(&mut w, "initial.ckpt", &model)?;
        let log = train_aligner(&mut model, &data, &self.cfg.train_config())?;
        self.save_model(&mut w, "aligner.ckpt", &model)?;
        w.csv("loss_log.csv", &loss_log_csv(&log))?;
        let first = log.first().map(|r| r.total);
        let last = log.last().map(|r| r.total);
        w.finish(
            Stage::TrainAligner,
            &self.out,
            json!({ "examples": data.len(), "steps": log.len(), "first_loss": first, "final_loss": last }),
        )
    }

    fn prune_one(&self, model: &AlignerModel, r: &Retrieved, n_seed: usize) -> Result<PruneArtifact> {
        let ex = inference_example(&r.qa.id, &r.graph, &self.embedder, &r.qa.question)?;
        let scores = model.predict(&ex)?;
        let pruned = refine::prune(&r.graph, &scores, n_seed)?;
        Ok(PruneArtifact {
            config_hash: self.hash.clone(),
            id: r.qa.id.clone(),
            seeds: pruned.seeds,
            unpruned_tokens: count_tokens(&generator_prompt(&r.graph, &r.qa.question)?),
            pruned_tokens: count_tokens(&generator_prompt(&pruned.graph, &r.qa.question)?),
            graph: pruned.graph,
            scores: scores.probs,
        })
    }

    fn prune(&self) -> Result<StageReport> {
        let model = self.trained_model()?;
        let mut w = StageWriter::new(&self.out, Stage::Prune, &self.hash)?;
        let (mut before, mut after) = (0usize, 0usize);
        for r in self.retrieved()? {
            let a = self.prune_one(&model, &r, self.cfg.prune.n_seed)?;
            before += a.unpruned_tokens;
            after += a.pruned_tokens;
            w.json(&format!("{}.json", r.qa.id), &a)?;
        }
        w.finish(Stage::Prune, &self.out, json!({ "unpruned_tokens": before, "pruned_tokens": after }))
    }

    fn generate(&self) -> Result<StageReport> {
        let model = self.trained_model()?;
        let gw = self.gateway();
        let mut w = StageWriter::new(&self.out, Stage::Generate, &self.hash)?;
        for qa in self.questions()? {
            let p: PruneArtifact = self.read(Stage::Prune, &format!("{}.json", qa.id))?;
            let pruned = PrunedSubgraph { seeds: p.seeds, graph: p.graph };
            let bundle = make_bundle(&model, &pruned, &self.embedder, &qa.question)?;
            // the bundle is on disk before the gateway is asked, so a failed
            // call can be retried from it
            w.bytes(&format!("{}.bundle.json", qa.id), bundle.to_json_tagged(Some(&self.hash)).as_bytes())?;
            let answer = generate_answer(&bundle, &gw)?;
            w.json(&format!("{}.json", qa.id), &AnswerArtifact { config_hash: self.hash.clone(), id: qa.id.clone(), answer })?;
        }
        w.finish(Stage::Generate, &self.out, json!({}))
    }

    fn eval(&self) -> Result<StageReport> {
        let rationales = if self.cfg.eval.judge { self.rationales()? } else { BTreeMap::new() };
        let gw = self.gateway();
        let mut records = Vec::new();
        for qa in self.questions()? {
            let a: AnswerArtifact = self.read(Stage::Generate, &format!("{}.json", qa.id))?;
            let bundle = GenerationBundle::load(&self.out.join(Stage::Generate.dir()).join(format!("{}.bundle.json", qa.id)))?;
            let m = exact_metrics(&a.answer, &qa.gold_answers)?;
            let mut labels = BTreeMap::new();
            if let Some(r) = rationales.get(&qa.id) {
                for kind in [JudgeKind::Relevance, JudgeKind::Faithfulness] {
                    let name = serde_json::to_value(kind).expect("kind serializes");
                    labels.insert(name.as_str().unwrap_or_default().to_string(), judge(&qa.question, r, kind, &gw)?.to_string());
                }
            }
            records.push(EvalRecord {
                id: qa.id.clone(),
                prediction: a.answer,
                hit1: m.hit1,
                f1: m.f1,
                accuracy: m.accuracy,
                token_count: bundle.token_count,
                judge: labels,
            });
        }
        let summary = evalkit::summarize(&records);
        let mut w = StageWriter::new(&self.out, Stage::Eval, &self.hash)?;
        w.csv("records.csv", &evalkit::records_csv(&records)?)?;
        w.json("summary.json", &json!({ "config_hash": self.hash, "summary": summary, "records": records }))?;
        w.finish(Stage::Eval, &self.out, serde_json::to_value(summary).expect("summary serializes"))
    }

    fn analyze(&self) -> Result<StageReport> {
        let dir = self.out.join(Stage::TrainAligner.dir());
        let before = AlignerModel::load(&dir.join("initial.ckpt"))?;
        let after = AlignerModel::load(&dir.join("aligner.ckpt"))?;
        let items = self.retrieved()?;
        let data = self.training_set(&items, &self.rationales()?)?;
        let analysis: Vec<AnalysisItem> = data
            .into_iter()
            .map(|ex| {
                let v = self.embedder.embed_text(&ex.graph.linearize())?;
                Ok(AnalysisItem { example: ex, graph_text_vec: v })
            })
            .collect::<Result<_>>()?;
        let table = alignment_analysis(&before, &after, &analysis)?;
        let means: BTreeMap<&str, Value> = table
            .means()
            .into_iter()
            .map(|(t, (u, a))| (t.name(), json!({ "unaligned": u, "aligned": a })))
            .collect();
        let mut w = StageWriter::new(&self.out, Stage::AnalyzeAlignment, &self.hash)?;
        w.csv("similarity.csv", &table.to_csv())?;
        w.csv("similarity_plot.csv", &table.plot_data())?;
        w.json("similarity_summary.json", &json!({ "config_hash": self.hash, "means": means }))?;
        w.finish(Stage::AnalyzeAlignment, &self.out, json!({ "rows": table.rows.len(), "means": means }))
    }

    fn sweep(&self) -> Result<StageReport> {
        let grid: SweepGrid = self
            .cfg
            .sweep
            .clone()
            .ok_or_else(|| ConfigInvalid("sweep needs a `sweep` grid in the config".into()))?;
        let gw = self.gateway();
        let questions = self.questions()?;
        let mut per_k: BTreeMap<usize, std::result::Result<(Vec<Retrieved>, BTreeMap<String, RationaleBundle>), String>> = BTreeMap::new();
        let mut models: BTreeMap<(usize, usize), std::result::Result<AlignerModel, String>> = BTreeMap::new();
        let table = evalkit::sweep(&grid, |cell| -> std::result::Result<Vec<EvalRecord>, String> {
            let inputs = per_k
                .entry(cell.top_k)
                .or_insert_with(|| self.sweep_inputs(&questions, cell.top_k, &gw).map_err(|e| e.to_string()))
                .as_ref()
                .map_err(Clone::clone)?;
            let model = models
                .entry((cell.top_k, cell.align_steps))
                .or_insert_with(|| self.sweep_model(inputs, cell.align_steps).map_err(|e| e.to_string()))
                .as_ref()
                .map_err(Clone::clone)?;
            inputs
                .0
                .iter()
                .map(|r| self.sweep_answer(model, r, cell.n_seed, &gw))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.to_string())
        })?;
        let mut w = StageWriter::new(&self.out, Stage::Sweep, &self.hash)?;
        w.csv("sweep.csv", &table.to_csv())?;
        let metrics: [(&str, fn(&evalkit::Summary) -> f64); 3] =
            [("hit1", |s| s.hit1), ("f1", |s| s.f1), ("tokens", |s| s.mean_tokens)];
        for (name, f) in metrics {
            for (k, text) in table.heatmaps(f) {
                w.csv(&format!("heatmap_{name}_k{k}.csv"), &text)?;
            }
        }
        w.json("sweep.json", &json!({ "config_hash": self.hash, "grid": grid, "rows": table.rows }))?;
        let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
        w.finish(Stage::Sweep, &self.out, json!({ "cells": table.rows.len(), "failed": failed }))
    }

    fn sweep_inputs(&self, questions: &[QAExample], top_k: usize, gw: &Gateway) -> Result<(Vec<Retrieved>, BTreeMap<String, RationaleBundle>)> {
        let params = RetrievalParams { k: top_k, ..self.cfg.retrieval_params() };
        let mut items = Vec::new();
        let mut rationales = BTreeMap::new();
        for qa in questions {
            let a = self.retrieve_one(qa, &params)?;
            let e = self.extract_one(qa, &a.graph, gw)?;
            if let Some(r) = e.rationale {
                rationales.insert(qa.id.clone(), r);
            }
            items.push(Retrieved { qa: qa.clone(), graph: a.graph });
        }
        Ok((items, rationales))
    }

    fn sweep_model(&self, inputs: &(Vec<Retrieved>, BTreeMap<String, RationaleBundle>), steps: usize) -> Result<AlignerModel> {
        let data = self.training_set(&inputs.0, &inputs.1)?;
        if data.is_empty() {
            return Err(PipelineError::NoTrainingData);
        }
        let mut model = AlignerModel::new(self.cfg.aligner_hyper())?;
        train_aligner(&mut model, &data, &crate::aligner::TrainConfig { steps, ..self.cfg.train_config() })?;
        Ok(model)
    }

    fn sweep_answer(&self, model: &AlignerModel, r: &Retrieved, n_seed: usize, gw: &Gateway) -> Result<EvalRecord> {
        let p = self.prune_one(model, r, n_seed)?;
        let pruned = PrunedSubgraph { seeds: p.seeds, graph: p.graph };
        let bundle = make_bundle(model, &pruned, &self.embedder, &r.qa.question)?;
        let answer = generate_answer(&bundle, gw)?;
        let m = exact_metrics(&answer, &r.qa.gold_answers)?;
        Ok(EvalRecord {
            id: r.qa.id.clone(),
            prediction: answer,
            hit1: m.hit1,
            f1: m.f1,
            accuracy: m.accuracy,
            token_count: bundle.token_count,
            judge: BTreeMap::new(),
        })
    }
}

fn build_embedder(cfg: &PipelineConfig, transport: Arc<dyn Transport>) -> Embedder {
    let e = &cfg.embedding;
    match e.provider {
        EmbeddingProviderKind::Hashing => Embedder::new(HashingEmbeddings::new(e.dim)),
        EmbeddingProviderKind::Fixture => {
            let dir = cfg.paths.embeddings.as_deref().map(|p| cfg.resolve(p)).unwrap_or_default();
            Embedder::new(FixtureEmbeddings::new(dir, e.dim))
        }
        EmbeddingProviderKind::Service => Embedder::new(ServiceEmbeddings::new(
            e.base_url.clone().unwrap_or_default(),
            e.api_key.clone(),
            e.dim,
            transport,
        )),
    }
}
