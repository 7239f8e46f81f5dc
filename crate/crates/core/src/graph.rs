//! Textual graphs: nodes and edges that carry free text.
//!
//! Graphs are read from two comma-separated tables with the headers
//! `node_id,node_attr` and `src,edge_attr,dst`, and written back in the same
//! layout by [`TextualGraph::linearize`]. Edges are stored directed; adjacency
//! ([`TextualGraph::neighbors`]) ignores direction.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u64;

pub const NODES_HEADER: [&str; 2] = ["node_id", "node_attr"];
pub const EDGES_HEADER: [&str; 3] = ["src", "edge_attr", "dst"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("{table} table, line {line}: {reason}")]
    MalformedRow {
        table: &'static str,
        line: u64,
        reason: String,
    },
    #[error("edge {edge} references missing node {node}")]
    DanglingEdge { edge: usize, node: NodeId },
    #[error("node id {0} appears more than once")]
    DuplicateNodeId(NodeId),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub text: String,
    pub dst: NodeId,
}

impl Edge {
    pub fn new(src: NodeId, text: impl Into<String>, dst: NodeId) -> Self {
        Edge {
            src,
            text: text.into(),
            dst,
        }
    }

    /// The endpoint opposite `v`, if `v` is an endpoint.
    pub fn other(&self, v: NodeId) -> Option<NodeId> {
        if self.src == v {
            Some(self.dst)
        } else if self.dst == v {
            Some(self.src)
        } else {
            None
        }
    }
}

/// Sorted set of node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeSet(BTreeSet<NodeId>);

impl NodeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: NodeId) -> bool {
        self.0.insert(id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.contains(&id)
    }

    pub fn remove(&mut self, id: NodeId) -> bool {
        self.0.remove(&id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn extend(&mut self, ids: impl IntoIterator<Item = NodeId>) {
        self.0.extend(ids);
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.0.iter().copied().collect()
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        NodeSet(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a NodeSet {
    type Item = &'a NodeId;
    type IntoIter = std::collections::btree_set::Iter<'a, NodeId>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GraphRepr", try_from = "GraphRepr")]
pub struct TextualGraph {
    nodes: BTreeMap<NodeId, String>,
    edges: Vec<Edge>,
    // node -> (neighbor, edge index), one entry per incident edge
    adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    nodes: Vec<(NodeId, String)>,
    edges: Vec<Edge>,
}

impl From<TextualGraph> for GraphRepr {
    fn from(g: TextualGraph) -> Self {
        GraphRepr {
            nodes: g.nodes.into_iter().collect(),
            edges: g.edges,
        }
    }
}

impl TryFrom<GraphRepr> for TextualGraph {
    type Error = GraphError;

    fn try_from(r: GraphRepr) -> Result<Self, GraphError> {
        TextualGraph::new(r.nodes, r.edges)
    }
}

impl PartialEq for TextualGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for TextualGraph {}

impl TextualGraph {
    /// Builds a graph, checking that every edge endpoint exists.
    pub fn new(
        nodes: impl IntoIterator<Item = (NodeId, String)>,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        for (id, text) in nodes {
            if map.insert(id, text).is_some() {
                return Err(GraphError::DuplicateNodeId(id));
            }
        }
        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, usize)>> =
            map.keys().map(|&id| (id, Vec::new())).collect();
        for (i, e) in edges.iter().enumerate() {
            for end in [e.src, e.dst] {
                if !map.contains_key(&end) {
                    return Err(GraphError::DanglingEdge { edge: i, node: end });
                }
            }
            adjacency.get_mut(&e.src).expect("checked").push((e.dst, i));
            if e.src != e.dst {
                adjacency.get_mut(&e.dst).expect("checked").push((e.src, i));
            }
        }
        Ok(TextualGraph {
            nodes: map,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn node_set(&self) -> NodeSet {
        self.nodes.keys().copied().collect()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.nodes.iter().map(|(&id, t)| (id, t.as_str()))
    }

    pub fn node_text(&self, id: NodeId) -> Option<&str> {
        self.nodes.get(&id).map(String::as_str)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> Option<&Edge> {
        self.edges.get(index)
    }

    /// Position of `id` in [`Self::node_ids`].
    pub fn node_index(&self, id: NodeId) -> Option<usize> {
        self.contains(id).then(|| self.nodes.range(..id).count())
    }

    /// `(neighbor, edge index)` for every edge incident to `v`, in edge order
    /// per direction; parallel edges appear once each.
    pub fn incident(&self, v: NodeId) -> &[(NodeId, usize)] {
        self.adjacency.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Undirected first-order neighbors of `v`, excluding `v` itself.
    pub fn neighbors(&self, v: NodeId) -> Result<NodeSet, GraphError> {
        let adj = self.adjacency.get(&v).ok_or(GraphError::UnknownNode(v))?;
        Ok(adj.iter().map(|&(u, _)| u).filter(|&u| u != v).collect())
    }

    /// Nodes restricted to `keep`, edges with both endpoints kept, in order.
    pub fn induced_subgraph(&self, keep: &NodeSet) -> Result<TextualGraph, GraphError> {
        if let Some(bad) = keep.iter().find(|id| !self.contains(*id)) {
            return Err(GraphError::UnknownNode(bad));
        }
        let nodes = keep.iter().map(|id| (id, self.nodes[&id].clone()));
        let edges = self
            .edges
            .iter()
            .filter(|e| keep.contains(e.src) && keep.contains(e.dst))
            .cloned()
            .collect();
        TextualGraph::new(nodes, edges)
    }

    /// Keeps the given nodes and exactly the listed edges.
    pub fn edge_subgraph(
        &self,
        keep: &NodeSet,
        edge_indices: &BTreeSet<usize>,
    ) -> Result<TextualGraph, GraphError> {
        if let Some(bad) = keep.iter().find(|id| !self.contains(*id)) {
            return Err(GraphError::UnknownNode(bad));
        }
        let nodes = keep.iter().map(|id| (id, self.nodes[&id].clone()));
        let edges = edge_indices
            .iter()
            .filter_map(|&i| self.edges.get(i).cloned())
            .collect();
        TextualGraph::new(nodes, edges)
    }

    /// Parses the two delimited tables.
    pub fn load(nodes_table: &str, edges_table: &str) -> Result<TextualGraph, GraphError> {
        let mut nodes = Vec::new();
        for (line, rec) in records("nodes", nodes_table, &NODES_HEADER)? {
            if rec.len() != 2 {
                return Err(malformed("nodes", line, format!("expected 2 columns, got {}", rec.len())));
            }
            nodes.push((parse_id("nodes", line, &rec[0])?, rec[1].to_string()));
        }
        let mut edges = Vec::new();
        for (line, rec) in records("edges", edges_table, &EDGES_HEADER)? {
            if rec.len() != 3 {
                return Err(malformed("edges", line, format!("expected 3 columns, got {}", rec.len())));
            }
            edges.push(Edge {
                src: parse_id("edges", line, &rec[0])?,
                text: rec[1].to_string(),
                dst: parse_id("edges", line, &rec[2])?,
            });
        }
        TextualGraph::new(nodes, edges)
    }

    pub fn load_files(nodes_path: &Path, edges_path: &Path) -> Result<TextualGraph, GraphError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|e| GraphError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })
        };
        TextualGraph::load(&read(nodes_path)?, &read(edges_path)?)
    }

    pub fn nodes_table(&self) -> String {
        write_table(
            &NODES_HEADER,
            self.nodes.iter().map(|(id, t)| vec![id.to_string(), t.clone()]),
        )
    }

    pub fn edges_table(&self) -> String {
        write_table(
            &EDGES_HEADER,
            self.edges
                .iter()
                .map(|e| vec![e.src.to_string(), e.text.clone(), e.dst.to_string()]),
        )
    }

    /// Node block (ascending ids) followed by the edge block (stored order).
    pub fn linearize(&self) -> String {
        let mut out = self.nodes_table();
        out.push_str(&self.edges_table());
        out
    }

    /// Inverse of [`Self::linearize`].
    pub fn parse_linearized(text: &str) -> Result<TextualGraph, GraphError> {
        let edges_header = format!("\n{}\n", EDGES_HEADER.join(","));
        let split = find_block_start(text, &edges_header).ok_or_else(|| {
            malformed("edges", 0, "missing `src,edge_attr,dst` block".to_string())
        })?;
        TextualGraph::load(&text[..split + 1], &text[split + 1..])
    }
}

// The edge header can only start a line outside a quoted field, so scan for
// it while tracking quote state.
fn find_block_start(text: &str, needle: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut in_quotes = false;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'"' {
            in_quotes = !in_quotes;
        } else if b == b'\n' && !in_quotes && text[i..].starts_with(needle) {
            return Some(i);
        }
    }
    None
}

fn malformed(table: &'static str, line: u64, reason: String) -> GraphError {
    GraphError::MalformedRow {
        table,
        line,
        reason,
    }
}

fn parse_id(table: &'static str, line: u64, field: &str) -> Result<NodeId, GraphError> {
    field
        .parse::<NodeId>()
        .map_err(|_| malformed(table, line, format!("`{field}` is not a non-negative integer id")))
}

fn records(
    table: &'static str,
    text: &str,
    header: &[&str],
) -> Result<Vec<(u64, csv::StringRecord)>, GraphError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let got = reader
        .headers()
        .map_err(|e| malformed(table, 1, e.to_string()))?
        .clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(malformed(
            table,
            1,
            format!("header must be `{}`, got `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(table, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec));
    }
    Ok(out)
}

fn write_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
