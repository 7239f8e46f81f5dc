//! The graph aligner: an edge-aware message-passing encoder, a node scorer
//! conditioned on the query, and a projection shared by graph and text
//! vectors, trained with a node-level KL loss plus a symmetric contrastive
//! loss.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, Embedder, EmbeddingError};
use crate::graph::TextualGraph;
use crate::optim::{AdamConfig, Bound, CheckpointError, ParamStore};
use crate::tensor::{softmax, NumericError, Tape, Tensor, Var};

/// Floor applied to predicted probabilities inside the KL logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AlignerError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("distributions have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("batches have sizes {0} and {1}")]
    BatchMismatch(usize, usize),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("{0} must be at least 1")]
    ZeroHyper(&'static str),
    #[error("checkpoint hyperparameters differ")]
    CheckpointMismatch,
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, AlignerError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignerHyper {
    /// Dimension of text embeddings (node, edge, query, anchor, rationale).
    pub d_s: usize,
    /// Hidden width of the encoder and scorer.
    pub d: usize,
    /// Message-passing rounds.
    pub layers: usize,
    /// Output width of the shared projection.
    pub d_t: usize,
    pub tau: f64,
    pub seed: u64,
}

impl AlignerHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_s", self.d_s), ("d", self.d), ("layers", self.layers), ("d_t", self.d_t)] {
            if v == 0 {
                return Err(AlignerError::ZeroHyper(name));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(AlignerError::NonPositiveTemperature(self.tau));
        }
        Ok(())
    }

    /// Input width of the shared projection.
    pub fn proj_in(&self) -> usize {
        self.d.max(self.d_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 60,
            batch: 8,
            lr: 1e-5,
            seed: 0,
        }
    }
}

/// One training subgraph with its text features. Feature rows follow the
/// graph's ascending node ids and edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignTrainExample {
    pub id: String,
    pub graph: TextualGraph,
    pub node_feats: Vec<Vec<f64>>,
    pub edge_feats: Vec<Vec<f64>>,
    pub query_vec: Vec<f64>,
    pub anchor_vec: Vec<f64>,
    pub rationale_vec: Vec<f64>,
}

impl AlignTrainExample {
    /// Embeds node texts, edge texts, query, anchor spans and rationale.
    pub fn embed(
        id: impl Into<String>,
        graph: TextualGraph,
        embedder: &Embedder,
        query: &str,
        anchors: &str,
        rationale: &str,
    ) -> Result<Self> {
        let node_texts: Vec<String> = graph.nodes().map(|(_, t)| t.to_string()).collect();
        let edge_texts: Vec<String> = graph.edges().iter().map(|e| e.text.clone()).collect();
        let mut fixed = embedder.embed_many(&[query.to_string(), anchors.to_string(), rationale.to_string()])?;
        let rationale_vec = fixed.pop().expect("three texts");
        let anchor_vec = fixed.pop().expect("three texts");
        let query_vec = fixed.pop().expect("three texts");
        Ok(AlignTrainExample {
            id: id.into(),
            node_feats: embedder.embed_many(&node_texts)?,
            edge_feats: embedder.embed_many(&edge_texts)?,
            graph,
            query_vec,
            anchor_vec,
            rationale_vec,
        })
    }

    pub fn validate(&self, d_s: usize) -> Result<()> {
        if self.graph.is_empty() {
            return Err(AlignerError::EmptyGraph);
        }
        let counts = [
            ("node features", self.graph.node_count(), self.node_feats.len()),
            ("edge features", self.graph.edge_count(), self.edge_feats.len()),
        ];
        for (what, want, got) in counts {
            if want != got {
                return Err(AlignerError::DimMismatch {
                    what: format!("{} rows of {what}", self.id),
                    expected: want,
                    got,
                });
            }
        }
        let vectors = self
            .node_feats
            .iter()
            .chain(&self.edge_feats)
            .chain([&self.query_vec, &self.anchor_vec, &self.rationale_vec]);
        for v in vectors {
            if v.len() != d_s {
                return Err(AlignerError::DimMismatch {
                    what: format!("feature vector of {}", self.id),
                    expected: d_s,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// A probability vector over a subgraph's nodes in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeScores {
    pub probs: Vec<f64>,
}

impl NodeScores {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Per-step losses recorded during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub node_alignment: f64,
    pub graph_alignment: f64,
    pub total: f64,
}

/// Row-normalised aggregation matrices for mean message passing. Row `v`
/// averages over one self-message plus one message per incident edge.
struct Aggregation {
    nodes: Tensor,
    edges: Option<Tensor>,
}

impl Aggregation {
    fn of(g: &TextualGraph) -> Aggregation {
        let n = g.node_count();
        let m = g.edge_count();
        let index: BTreeMap<u64, usize> = g.node_ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut nodes = Tensor::identity(n);
        let mut edges = Tensor::zeros(n, m.max(1));
        let mut count = vec![1.0; n];
        for (e, edge) in g.edges().iter().enumerate() {
            let (s, d) = (index[&edge.src], index[&edge.dst]);
            let ends: &[(usize, usize)] = if s == d { &[(s, s)] } else { &[(s, d), (d, s)] };
            for &(v, u) in ends {
                nodes.data_mut()[v * n + u] += 1.0;
                edges.data_mut()[v * m + e] += 1.0;
                count[v] += 1.0;
            }
        }
        for v in 0..n {
            nodes.data_mut()[v * n..(v + 1) * n].iter_mut().for_each(|x| *x /= count[v]);
            if m > 0 {
                edges.data_mut()[v * m..(v + 1) * m].iter_mut().for_each(|x| *x /= count[v]);
            }
        }
        Aggregation {
            nodes,
            edges: (m > 0).then_some(edges),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignerModel {
    hyper: AlignerHyper,
    params: ParamStore,
}

fn layer_name(l: usize, part: &str) -> String {
    format!("gnn.{l}.{part}")
}

impl AlignerModel {
    /// Xavier-initialised weights and zero biases from `hyper.seed`.
    pub fn new(hyper: AlignerHyper) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut p = ParamStore::new();
        for l in 0..hyper.layers {
            let fan_in = if l == 0 { hyper.d_s } else { hyper.d };
            p.insert_xavier(&layer_name(l, "w_node"), fan_in, hyper.d, &mut rng);
            p.insert_xavier(&layer_name(l, "w_edge"), hyper.d_s, hyper.d, &mut rng);
            p.insert_zeros(&layer_name(l, "bias"), 1, hyper.d);
        }
        p.insert_xavier("score.w1", hyper.d + hyper.d_s, hyper.d, &mut rng);
        p.insert_zeros("score.b1", 1, hyper.d);
        p.insert_xavier("score.w2", hyper.d, 1, &mut rng);
        p.insert_zeros("score.b2", 1, 1);
        p.insert_xavier("proj.w", hyper.proj_in(), hyper.d_t, &mut rng);
        p.insert_zeros("proj.b", 1, hyper.d_t);
        Ok(AlignerModel { hyper, params: p })
    }

    pub fn hyper(&self) -> &AlignerHyper {
        &self.hyper
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path, self.meta())?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(self.params.to_bytes(self.meta())?)
    }

    /// Checkpoint bytes with `config_hash` recorded in the header.
    pub fn to_bytes_tagged(&self, config_hash: &str) -> Result<Vec<u8>> {
        let mut meta = self.meta();
        meta["config_hash"] = serde_json::Value::from(config_hash);
        Ok(self.params.to_bytes(meta)?)
    }

    fn meta(&self) -> serde_json::Value {
        serde_json::json!({ "aligner": self.hyper })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (params, meta) = ParamStore::load(path)?;
        Self::from_parts(params, meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = ParamStore::from_bytes(bytes)?;
        Self::from_parts(params, meta)
    }

    fn from_parts(params: ParamStore, meta: serde_json::Value) -> Result<Self> {
        let hyper: AlignerHyper = serde_json::from_value(meta["aligner"].clone())
            .map_err(CheckpointError::Header)?;
        let fresh = AlignerModel::new(hyper)?;
        let same_layout = fresh.params.names().eq(params.names())
            && fresh
                .params
                .names()
                .all(|n| fresh.params.get(n).map(Tensor::shape) == params.get(n).map(Tensor::shape));
        if !same_layout {
            return Err(AlignerError::CheckpointMismatch);
        }
        Ok(AlignerModel { hyper, params })
    }

    fn check_dim(&self, what: &str, got: usize) -> Result<()> {
        if got != self.hyper.d_s {
            return Err(AlignerError::DimMismatch {
                what: what.to_string(),
                expected: self.hyper.d_s,
                got,
            });
        }
        Ok(())
    }

    fn encode_var<'t>(&self, tape: &'t Tape, b: &Bound<'t>, ex: &AlignTrainExample) -> Result<Var<'t>> {
        ex.validate(self.hyper.d_s)?;
        let agg = Aggregation::of(&ex.graph);
        let agg_nodes = tape.constant(agg.nodes);
        let edge_term = match agg.edges {
            Some(a) => Some((tape.constant(a), tape.constant(Tensor::from_rows(&ex.edge_feats)?))),
            None => None,
        };
        let mut h = tape.constant(Tensor::from_rows(&ex.node_feats)?);
        for l in 0..self.hyper.layers {
            let msg = h.matmul(b.var(&layer_name(l, "w_node")))?;
            let mut pre = agg_nodes.matmul(msg)?;
            if let Some((agg_edges, feats)) = edge_term {
                let em = feats.matmul(b.var(&layer_name(l, "w_edge")))?;
                pre = pre.add(agg_edges.matmul(em)?)?;
            }
            h = pre.add_row(b.var(&layer_name(l, "bias")))?.relu()?;
        }
        Ok(h)
    }

    fn score_var<'t>(&self, tape: &'t Tape, b: &Bound<'t>, n_g: Var<'t>, query: &[f64]) -> Result<Var<'t>> {
        self.check_dim("query vector", query.len())?;
        let n = n_g.shape()[0];
        let q = Tensor::new(n, query.len(), query.repeat(n))?;
        let x = n_g.concat_rows(tape.constant(q))?;
        let hidden = x.matmul(b.var("score.w1"))?.add_row(b.var("score.b1"))?.relu()?;
        let logits = hidden.matmul(b.var("score.w2"))?.add_row(b.var("score.b2"))?;
        Ok(logits.softmax()?)
    }

    fn project_var<'t>(&self, b: &Bound<'t>, r: Var<'t>) -> Result<Var<'t>> {
        let padded = r.pad_cols(self.hyper.proj_in())?;
        Ok(padded.matmul(b.var("proj.w"))?.add_row(b.var("proj.b"))?)
    }

    /// Node embeddings `n_g`, one row per node in ascending id order.
    pub fn encode(&self, ex: &AlignTrainExample) -> Result<Tensor> {
        let tape = Tape::new();
        let b = self.params.bind(&tape);
        Ok(self.encode_var(&tape, &b, ex)?.value())
    }

    /// Softmax over nodes of the scorer applied to `[n_g(v), query]`.
    pub fn score_nodes(&self, n_g: &Tensor, query: &[f64]) -> Result<NodeScores> {
        if n_g.cols() != self.hyper.d {
            return Err(AlignerError::DimMismatch {
                what: "node embeddings".into(),
                expected: self.hyper.d,
                got: n_g.cols(),
            });
        }
        let tape = Tape::new();
        let b = self.params.bind(&tape);
        let p = self.score_var(&tape, &b, tape.constant(n_g.clone()), query)?;
        Ok(NodeScores {
            probs: p.value().into_data(),
        })
    }

    /// Shared projection of a graph vector (width `d`) or a text vector
    /// (width `d_s`), zero-padded to the wider of the two.
    pub fn project(&self, r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.hyper.d && r.len() != self.hyper.d_s {
            return Err(AlignerError::DimMismatch {
                what: "projection input".into(),
                expected: self.hyper.proj_in(),
                got: r.len(),
            });
        }
        let tape = Tape::new();
        let b = self.params.bind(&tape);
        let out = self.project_var(&b, tape.constant(Tensor::row(r)?))?;
        Ok(out.value().into_data())
    }

    /// `project(pool(encode(ex)))`.
    pub fn graph_token(&self, ex: &AlignTrainExample) -> Result<Vec<f64>> {
        self.project(&pool_graph(&self.encode(ex)?)?)
    }

    /// Predicted node distribution for an example.
    pub fn predict(&self, ex: &AlignTrainExample) -> Result<NodeScores> {
        self.score_nodes(&self.encode(ex)?, &ex.query_vec)
    }

    /// Losses on `batch`, recorded on `tape`: (mean node loss, contrastive loss).
    fn batch_loss<'t>(
        &self,
        tape: &'t Tape,
        b: &Bound<'t>,
        batch: &[&AlignTrainExample],
    ) -> Result<(Var<'t>, Var<'t>)> {
        if batch.is_empty() {
            return Err(AlignerError::EmptyDataset);
        }
        let mut node_losses = Vec::with_capacity(batch.len());
        let mut graph_rows = Vec::with_capacity(batch.len());
        let mut text_rows = Vec::with_capacity(batch.len());
        for ex in batch {
            let n_g = self.encode_var(tape, b, ex)?;
            let p_pred = self.score_var(tape, b, n_g, &ex.query_vec)?;
            let p_anchor = anchor_distribution(&ex.node_feats, &ex.anchor_vec)?;
            node_losses.push(kl_var(tape, &p_anchor.probs, p_pred)?);
            graph_rows.push(self.project_var(b, n_g.row_mean()?)?);
            text_rows.push(self.project_var(b, tape.constant(Tensor::row(&ex.rationale_vec)?))?);
        }
        let l_na = Var::stack(&node_losses)?.mean()?;
        let l_ga = info_nce_var(Var::stack(&graph_rows)?, Var::stack(&text_rows)?, self.hyper.tau)?;
        Ok((l_na, l_ga))
    }

    /// Node, graph, and total loss on a batch without touching parameters.
    pub fn losses(&self, batch: &[&AlignTrainExample]) -> Result<LossRecord> {
        let tape = Tape::new();
        let b = self.params.bind(&tape);
        let (na, ga) = self.batch_loss(&tape, &b, batch)?;
        let (na, ga) = (na.value().get(0, 0), ga.value().get(0, 0));
        Ok(LossRecord {
            step: 0,
            node_alignment: na,
            graph_alignment: ga,
            total: na + ga,
        })
    }

    /// Value and parameter gradients of `w_na * L_NA + w_ga * L_GA`.
    pub fn loss_gradients(
        &self,
        batch: &[&AlignTrainExample],
        w_na: f64,
        w_ga: f64,
    ) -> Result<(LossRecord, BTreeMap<String, Tensor>)> {
        let tape = Tape::new();
        let b = self.params.bind(&tape);
        let (na, ga) = self.batch_loss(&tape, &b, batch)?;
        let (vna, vga) = (na.value().get(0, 0), ga.value().get(0, 0));
        let total = na.scale(w_na)?.add(ga.scale(w_ga)?)?;
        let record = LossRecord {
            step: 0,
            node_alignment: vna,
            graph_alignment: vga,
            total: total.value().get(0, 0),
        };
        let grads = total.backward()?;
        Ok((record, b.collect(&grads)))
    }
}

fn kl_var<'t>(tape: &'t Tape, p_anchor: &[f64], p_pred: Var<'t>) -> Result<Var<'t>> {
    let n = p_anchor.len();
    if p_pred.shape() != [n, 1] {
        return Err(AlignerError::LengthMismatch(n, p_pred.shape()[0] * p_pred.shape()[1]));
    }
    // sum p ln p is constant; zero-probability terms contribute nothing
    let entropy_term: f64 = p_anchor.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
    let pa = tape.constant(Tensor::column(p_anchor)?);
    let cross = p_pred.clamp_min(PROB_FLOOR)?.ln()?.mul(pa)?.sum()?;
    Ok(cross.scale(-1.0)?.add_scalar(entropy_term)?.scale(1.0 / n as f64)?)
}

fn info_nce_var<'t>(g: Var<'t>, s: Var<'t>, tau: f64) -> Result<Var<'t>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AlignerError::NonPositiveTemperature(tau));
    }
    let (gs, ss) = (g.shape(), s.shape());
    if gs[0] != ss[0] {
        return Err(AlignerError::BatchMismatch(gs[0], ss[0]));
    }
    if gs[1] != ss[1] {
        return Err(AlignerError::DimMismatch {
            what: "contrastive batch".into(),
            expected: gs[1],
            got: ss[1],
        });
    }
    let gn = g.normalize_rows()?;
    let sn = s.normalize_rows()?;
    let g_to_s = gn.matmul(sn.transpose()?)?.scale(1.0 / tau)?;
    let s_to_g = sn.matmul(gn.transpose()?)?.scale(1.0 / tau)?;
    let a = g_to_s.log_softmax_rows()?.diag()?.mean()?;
    let b = s_to_g.log_softmax_rows()?.diag()?.mean()?;
    Ok(a.add(b)?.scale(-0.5)?)
}

/// Softmax over nodes of `cos(n_t(v), anchor)`.
pub fn anchor_distribution(node_feats: &[Vec<f64>], anchor: &[f64]) -> Result<NodeScores> {
    if node_feats.is_empty() {
        return Err(AlignerError::EmptyGraph);
    }
    let mut sims = Vec::with_capacity(node_feats.len());
    for f in node_feats {
        if f.len() != anchor.len() {
            return Err(AlignerError::DimMismatch {
                what: "anchor vector".into(),
                expected: f.len(),
                got: anchor.len(),
            });
        }
        sims.push(cosine(f, anchor));
    }
    Ok(NodeScores { probs: softmax(&sims)? })
}

/// `(1/|V|) Σ p_a ln(p_a / max(p_p, 1e-12))`.
pub fn node_alignment_loss(p_anchor: &NodeScores, p_pred: &NodeScores) -> Result<f64> {
    let (a, p) = (&p_anchor.probs, &p_pred.probs);
    if a.len() != p.len() {
        return Err(AlignerError::LengthMismatch(a.len(), p.len()));
    }
    if a.is_empty() {
        return Err(AlignerError::EmptyGraph);
    }
    let tape = Tape::new();
    let pp = tape.constant(Tensor::column(p)?);
    Ok(kl_var(&tape, a, pp)?.value().get(0, 0))
}

/// Arithmetic mean of the node rows.
pub fn pool_graph(n_g: &Tensor) -> Result<Vec<f64>> {
    if n_g.rows() == 0 {
        return Err(AlignerError::EmptyGraph);
    }
    let tape = Tape::new();
    Ok(tape.constant(n_g.clone()).row_mean()?.value().into_data())
}

/// Symmetric in-batch InfoNCE over cosine similarities scaled by `1/tau`.
pub fn graph_alignment_loss(batch_g: &[Vec<f64>], batch_s: &[Vec<f64>], tau: f64) -> Result<f64> {
    if batch_g.len() != batch_s.len() {
        return Err(AlignerError::BatchMismatch(batch_g.len(), batch_s.len()));
    }
    if batch_g.is_empty() {
        return Err(AlignerError::EmptyDataset);
    }
    let tape = Tape::new();
    let g = tape.constant(Tensor::from_rows(batch_g)?);
    let s = tape.constant(Tensor::from_rows(batch_s)?);
    Ok(info_nce_var(g, s, tau)?.value().get(0, 0))
}

/// Minimises `L_NA + L_GA` with Adam over seeded, reshuffled batches.
/// One step consumes one batch; the data is reshuffled whenever it runs out.
pub fn train_aligner(
    model: &mut AlignerModel,
    dataset: &[AlignTrainExample],
    cfg: &TrainConfig,
) -> Result<Vec<LossRecord>> {
    if dataset.is_empty() {
        return Err(AlignerError::EmptyDataset);
    }
    if cfg.steps == 0 {
        return Err(AlignerError::ZeroHyper("steps"));
    }
    if cfg.batch == 0 {
        return Err(AlignerError::ZeroHyper("batch"));
    }
    for ex in dataset {
        ex.validate(model.hyper.d_s)?;
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch.min(dataset.len()) {
            if order.is_empty() {
                order = (0..dataset.len()).collect();
                order.shuffle(&mut rng);
            }
            let i = order.pop().expect("refilled");
            batch.push(&dataset[i]);
        }
        let (mut rec, grads) = model.loss_gradients(&batch, 1.0, 1.0)?;
        model.params.adam_step(&grads, &adam)?;
        rec.step = step;
        log::debug!("step {step}: L_NA {:.6} L_GA {:.6}", rec.node_alignment, rec.graph_alignment);
        log.push(rec);
    }
    Ok(log)
}

/// Training log as `step,node_alignment,graph_alignment,total` rows.
pub fn loss_log_csv(log: &[LossRecord]) -> String {
    let mut out = String::from("step,node_alignment,graph_alignment,total\n");
    for r in log {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.node_alignment, r.graph_alignment, r.total));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn hyper(d_s: usize, d: usize, layers: usize) -> AlignerHyper {
        AlignerHyper {
            d_s,
            d,
            layers,
            d_t: 5,
            tau: 0.07,
            seed: 7,
        }
    }

    fn scores(p: &[f64]) -> NodeScores {
        NodeScores { probs: p.to_vec() }
    }

    fn example(g: TextualGraph, d_s: usize) -> AlignTrainExample {
        let n = g.node_count();
        let m = g.edge_count();
        let f = |i: usize, salt: f64| (0..d_s).map(|j| ((i * 7 + j * 3) as f64 * 0.37 + salt).sin()).collect();
        AlignTrainExample {
            id: "t".into(),
            node_feats: (0..n).map(|i| f(i, 0.1)).collect(),
            edge_feats: (0..m).map(|i| f(i, 1.3)).collect(),
            query_vec: f(99, 0.5),
            anchor_vec: f(0, 0.1),
            rationale_vec: f(5, 2.0),
            graph: g,
        }
    }

    #[test]
    fn kl_examples() {
        let a = node_alignment_loss(&scores(&[0.5, 0.5]), &scores(&[0.25, 0.75])).unwrap();
        let want = 0.5 * (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln());
        assert!((a - want).abs() < 1e-12);
        assert!((a - 0.0719).abs() < 1e-4);
        let b = node_alignment_loss(&scores(&[1.0, 0.0]), &scores(&[0.5, 0.5])).unwrap();
        assert!((b - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((b - 0.3466).abs() < 1e-4);
        assert_eq!(node_alignment_loss(&scores(&[0.3, 0.7]), &scores(&[0.3, 0.7])).unwrap(), 0.0);
        assert!(matches!(
            node_alignment_loss(&scores(&[1.0]), &scores(&[0.5, 0.5])),
            Err(AlignerError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn info_nce_examples() {
        let e = 1f64.exp();
        let l = graph_alignment_loss(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        assert!((l + (e / (e + 1.0)).ln()).abs() < 1e-12);
        assert!((l - 0.3133).abs() < 1e-4);
        assert_eq!(graph_alignment_loss(&[vec![0.3, 2.0]], &[vec![-1.0, 0.5]], 0.07).unwrap(), 0.0);
        assert!(matches!(
            graph_alignment_loss(&[vec![1.0]], &[vec![1.0]], 0.0),
            Err(AlignerError::NonPositiveTemperature(_))
        ));
        assert!(matches!(
            graph_alignment_loss(&[vec![1.0]], &[vec![1.0], vec![2.0]], 1.0),
            Err(AlignerError::BatchMismatch(1, 2))
        ));
    }

    #[test]
    fn anchor_distribution_examples() {
        let feats = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let p = anchor_distribution(&feats, &[2.0, 0.0, 0.0]).unwrap();
        let e = 1f64.exp();
        let want = [e / (e + 2.0), 1.0 / (e + 2.0), 1.0 / (e + 2.0)];
        for (a, b) in p.probs.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.probs[0] - 0.576).abs() < 1e-3 && (p.probs[1] - 0.212).abs() < 1e-3);
        let same = anchor_distribution(&vec![vec![1.0, 1.0]; 4], &[0.2, 0.9]).unwrap();
        assert!(same.probs.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn pooling() {
        let t = Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(pool_graph(&t).unwrap(), vec![2.0, 4.0]);
        let one = Tensor::row(&[4.0, -1.0]).unwrap();
        assert_eq!(pool_graph(&one).unwrap(), vec![4.0, -1.0]);
    }

    #[test]
    fn single_node_single_layer_closed_form() {
        let g = TextualGraph::new([(0, "x".into())], vec![]).unwrap();
        let mut model = AlignerModel::new(hyper(3, 4, 1)).unwrap();
        model
            .params_mut()
            .get_mut("gnn.0.bias")
            .unwrap()
            .data_mut()
            .copy_from_slice(&[0.1, -0.2, 0.3, -5.0]);
        let ex = example(g, 3);
        let h = model.encode(&ex).unwrap();
        let w = model.params().get("gnn.0.w_node").unwrap();
        let b = model.params().get("gnn.0.bias").unwrap();
        let x = Tensor::row(&ex.node_feats[0]).unwrap().matmul(w).unwrap();
        for j in 0..4 {
            assert!((h.get(0, j) - (x.get(0, j) + b.get(0, j)).max(0.0)).abs() < 1e-12);
        }
        assert_eq!(model.predict(&ex).unwrap().probs, vec![1.0]);
    }

    #[test]
    fn identical_embeddings_score_uniformly() {
        let model = AlignerModel::new(hyper(3, 4, 2)).unwrap();
        let n_g = Tensor::from_rows(&vec![vec![0.5, 1.0, -1.0, 2.0]; 5]).unwrap();
        let s = model.score_nodes(&n_g, &[0.1, 0.2, 0.3]).unwrap();
        assert!(s.probs.iter().all(|&p| (p - 0.2).abs() < 1e-12));
        assert!(matches!(
            model.score_nodes(&n_g, &[0.1]),
            Err(AlignerError::DimMismatch { .. })
        ));
    }

    #[test]
    fn projection_is_shared_and_sized() {
        let model = AlignerModel::new(hyper(3, 4, 1)).unwrap();
        let graph_side = model.project(&[1.0, 2.0, 3.0, 0.0]).unwrap();
        let text_side = model.project(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(graph_side, text_side);
        assert_eq!(graph_side.len(), 5);
        assert!(model.project(&[1.0; 6]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let g = TextualGraph::new((0..3).map(|i| (i, String::new())), vec![Edge::new(0, "r", 1)]).unwrap();
        let ex = example(g, 3);
        let model = AlignerModel::new(hyper(3, 4, 2)).unwrap();
        let back = AlignerModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.graph_token(&ex).unwrap(), model.graph_token(&ex).unwrap());

        let other = AlignerModel::new(AlignerHyper { d: 6, ..hyper(3, 4, 2) }).unwrap();
        let mut bytes = other.to_bytes().unwrap();
        // swap the header to claim d = 4
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let first = text.find('\n').unwrap();
        let header = text[..first].replace("\"d\":6", "\"d\":4");
        bytes.splice(..first, header.into_bytes());
        assert!(matches!(AlignerModel::from_bytes(&bytes), Err(AlignerError::CheckpointMismatch)));
    }

    #[test]
    fn training_preconditions() {
        let mut model = AlignerModel::new(hyper(3, 4, 1)).unwrap();
        assert!(matches!(
            train_aligner(&mut model, &[], &TrainConfig::default()),
            Err(AlignerError::EmptyDataset)
        ));
        let g = TextualGraph::new([(0, "x".into())], vec![]).unwrap();
        let cfg = TrainConfig { steps: 0, ..TrainConfig::default() };
        assert!(matches!(
            train_aligner(&mut model, &[example(g, 3)], &cfg),
            Err(AlignerError::ZeroHyper("steps"))
        ));
        assert!(AlignerModel::new(AlignerHyper { tau: 0.0, ..hyper(3, 4, 1) }).is_err());
    }

    #[test]
    fn table_defaults() {
        let t = TrainConfig::default();
        assert_eq!((t.steps, t.batch, t.lr), (60, 8, 1e-5));
    }

    #[test]
    fn loss_log_layout() {
        let rec = LossRecord { step: 1, node_alignment: 0.5, graph_alignment: 0.25, total: 0.75 };
        assert_eq!(loss_log_csv(&[rec]), "step,node_alignment,graph_alignment,total\n1,0.5,0.25,0.75\n");
    }
}
