//! Aligner-guided pruning of a retrieved subgraph and the generation bundle.
//!
//! The pruned graph keeps the `n_seed` highest-scoring nodes plus their
//! first-order neighbors, with every edge induced on that set. The bundle
//! carries the filled generator prompt together with the projected graph
//! token; a text-only chat endpoint receives the prompt alone.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{AlignTrainExample, AlignerError, AlignerModel, NodeScores};
use crate::embedding::Embedder;
use crate::gateway::{render_prompt, slots, Gateway, GatewayError, TemplateId};
use crate::graph::{GraphError, NodeId, NodeSet, TextualGraph};

pub const DEFAULT_N_SEED: usize = 25;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("{scores} scores for a graph with {nodes} nodes")]
    ScoreLengthMismatch { scores: usize, nodes: usize },
    #[error("n_seed must be at least 1")]
    ZeroSeeds,
    #[error("pruned graph is empty")]
    EmptyGraph,
    #[error("bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RefineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedSubgraph {
    /// Seed ids by descending score, ties by ascending id.
    pub seeds: Vec<NodeId>,
    pub graph: TextualGraph,
}

/// Keeps the top `n_seed` nodes and their neighbors. `scores` follow the
/// ascending node ids of `g_r`.
pub fn prune(g_r: &TextualGraph, scores: &NodeScores, n_seed: usize) -> Result<PrunedSubgraph> {
    if n_seed == 0 {
        return Err(RefineError::ZeroSeeds);
    }
    let ids = g_r.node_ids();
    if scores.probs.len() != ids.len() {
        return Err(RefineError::ScoreLengthMismatch {
            scores: scores.probs.len(),
            nodes: ids.len(),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores.probs[b].total_cmp(&scores.probs[a]).then(ids[a].cmp(&ids[b])));
    let seeds: Vec<NodeId> = order.iter().take(n_seed).map(|&i| ids[i]).collect();
    let mut keep = NodeSet::new();
    for &s in &seeds {
        keep.insert(s);
        keep.extend(g_r.neighbors(s)?.iter());
    }
    Ok(PrunedSubgraph {
        seeds,
        graph: g_r.induced_subgraph(&keep)?,
    })
}

/// Word and punctuation-cluster count: each maximal alphanumeric run is one
/// token, and so is each maximal run of other non-space characters.
pub fn count_tokens(text: &str) -> usize {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Space,
        Word,
        Punct,
    }
    let class = |c: char| {
        if c.is_whitespace() {
            Class::Space
        } else if c.is_alphanumeric() {
            Class::Word
        } else {
            Class::Punct
        }
    };
    let mut count = 0;
    let mut prev = Class::Space;
    for c in text.chars() {
        let k = class(c);
        if k != Class::Space && k != prev {
            count += 1;
        }
        prev = k;
    }
    count
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBundle {
    pub prompt: String,
    pub linearized_graph: String,
    pub token_count: usize,
    pub graph_token: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    prompt: String,
    linearized_graph: String,
    token_count: usize,
    graph_token: String,
    d_t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl GenerationBundle {
    pub fn d_t(&self) -> usize {
        self.graph_token.len()
    }

    /// JSON with the graph token as base64 little-endian f64.
    pub fn to_json(&self) -> String {
        self.to_json_tagged(None)
    }

    /// [`Self::to_json`] plus a `config_hash` field.
    pub fn to_json_tagged(&self, config_hash: Option<&str>) -> String {
        let bytes: Vec<u8> = self.graph_token.iter().flat_map(|x| x.to_le_bytes()).collect();
        let file = BundleFile {
            prompt: self.prompt.clone(),
            linearized_graph: self.linearized_graph.clone(),
            token_count: self.token_count,
            graph_token: STANDARD.encode(bytes),
            d_t: self.d_t(),
            config_hash: config_hash.map(String::from),
        };
        serde_json::to_string_pretty(&file).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BundleFile = serde_json::from_str(text).map_err(|e| RefineError::Bundle(e.to_string()))?;
        let bytes = STANDARD
            .decode(&file.graph_token)
            .map_err(|e| RefineError::Bundle(e.to_string()))?;
        if bytes.len() != file.d_t * 8 {
            return Err(RefineError::Bundle(format!(
                "graph token holds {} bytes, d_t {} needs {}",
                bytes.len(),
                file.d_t,
                file.d_t * 8
            )));
        }
        let graph_token = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(GenerationBundle {
            prompt: file.prompt,
            linearized_graph: file.linearized_graph,
            token_count: file.token_count,
            graph_token,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Generator prompt for a graph and question.
pub fn generator_prompt(graph: &TextualGraph, question: &str) -> Result<String> {
    let linear = graph.linearize();
    Ok(render_prompt(
        TemplateId::GeneratorQa,
        &slots([("graph", linear.as_str()), ("question", question)]),
    )?)
}

/// Embeds the pruned graph and question for the aligner. Anchor and
/// rationale slots are unused at inference and hold the query vector.
pub fn inference_example(id: &str, graph: &TextualGraph, embedder: &Embedder, question: &str) -> Result<AlignTrainExample> {
    Ok(AlignTrainExample::embed(id, graph.clone(), embedder, question, question, question)?)
}

pub fn make_bundle(
    model: &AlignerModel,
    pruned: &PrunedSubgraph,
    embedder: &Embedder,
    question: &str,
) -> Result<GenerationBundle> {
    if pruned.graph.is_empty() {
        return Err(RefineError::EmptyGraph);
    }
    let ex = inference_example("bundle", &pruned.graph, embedder, question)?;
    let graph_token = model.graph_token(&ex)?;
    let prompt = generator_prompt(&pruned.graph, question)?;
    Ok(GenerationBundle {
        token_count: count_tokens(&prompt),
        linearized_graph: pruned.graph.linearize(),
        prompt,
        graph_token,
    })
}

/// Sends the bundle's prompt. The graph token stays in the bundle.
pub fn generate_answer(bundle: &GenerationBundle, gateway: &Gateway) -> Result<String> {
    Ok(gateway.complete(&bundle.prompt)?)
}
