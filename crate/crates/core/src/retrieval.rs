//! Query-driven subgraph retrieval.
//!
//! Nodes and edges are ranked by cosine similarity to the query; the top `k`
//! of each receive prizes `k, k-1, ..., 1` by rank and everything else gets
//! zero. A prize-collecting Steiner selection then picks one connected
//! structure maximising
//!
//! ```text
//! sum(node prizes) + sum(edge prizes) - |edges| * edge_cost
//! ```
//!
//! Two solvers are provided: [`PcstMode::Exact`] enumerates connected node
//! subsets (small graphs only) and [`PcstMode::Heuristic`] grows a tree
//! greedily from each prized node and keeps the best result.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_flagged, Embedder, EmbeddingError, EmbeddingTable};
use crate::graph::{GraphError, NodeId, NodeSet, TextualGraph};

/// Largest graph the exact solver accepts.
pub const EXACT_MAX_NODES: usize = 15;

/// Score differences below this count as ties.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("nothing to rank")]
    EmptyItemSet,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("ranked list has {len} entries but k = {k}")]
    RankOverflow { len: usize, k: usize },
    #[error("edge cost must be finite and non-negative, got {0}")]
    InvalidEdgeCost(f64),
    #[error("exact solver supports at most {EXACT_MAX_NODES} nodes, graph has {0}")]
    GraphTooLargeForExact(usize),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("vector for {what} has dim {got}, query has {expected}")]
    DimMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T> = std::result::Result<T, RetrievalError>;

/// Items in descending score order; ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList<K> {
    pub entries: Vec<(K, f64)>,
}

impl<K: Copy> RankedList<K> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<K> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

/// The `k` items most similar to `query` (all of them if fewer than `k`).
pub fn top_k<'a, K, I>(query: &[f64], items: I, k: usize) -> Result<RankedList<K>>
where
    K: Ord + Copy + std::fmt::Display,
    I: IntoIterator<Item = (K, &'a [f64])>,
{
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let mut degenerate = false;
    let mut scored = Vec::new();
    for (id, v) in items {
        if v.len() != query.len() {
            return Err(RetrievalError::DimMismatch {
                what: id.to_string(),
                expected: query.len(),
                got: v.len(),
            });
        }
        let (s, zero) = cosine_flagged(query, v);
        degenerate |= zero;
        scored.push((id, s));
    }
    if scored.is_empty() {
        return Err(RetrievalError::EmptyItemSet);
    }
    if degenerate {
        log::warn!("zero vector during ranking; its similarities are taken as 0");
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(RankedList { entries: scored })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrizeMap {
    pub node_prize: BTreeMap<NodeId, f64>,
    pub edge_prize: BTreeMap<usize, f64>,
    pub edge_cost: f64,
}

impl PrizeMap {
    pub fn node(&self, id: NodeId) -> f64 {
        self.node_prize.get(&id).copied().unwrap_or(0.0)
    }

    pub fn edge(&self, index: usize) -> f64 {
        self.edge_prize.get(&index).copied().unwrap_or(0.0)
    }

    /// Gain of selecting an edge: its prize minus the per-edge cost.
    pub fn edge_gain(&self, index: usize) -> f64 {
        self.edge(index) - self.edge_cost
    }
}

/// Item at zero-based rank `i` gets prize `k - i`; unranked items get 0.
pub fn assign_prizes(
    ranked_nodes: &RankedList<NodeId>,
    ranked_edges: &RankedList<usize>,
    k: usize,
    edge_cost: f64,
) -> Result<PrizeMap> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if !edge_cost.is_finite() || edge_cost < 0.0 {
        return Err(RetrievalError::InvalidEdgeCost(edge_cost));
    }
    for len in [ranked_nodes.len(), ranked_edges.len()] {
        if len > k {
            return Err(RetrievalError::RankOverflow { len, k });
        }
    }
    let prize = |rank: usize| (k - rank) as f64;
    Ok(PrizeMap {
        node_prize: ranked_nodes
            .entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, prize(i)))
            .collect(),
        edge_prize: ranked_edges
            .entries
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, prize(i)))
            .collect(),
        edge_cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcstMode {
    Exact,
    #[default]
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSubgraph {
    pub nodes: NodeSet,
    pub edge_indices: BTreeSet<usize>,
    pub objective: f64,
}

impl RetrievedSubgraph {
    /// Total prize minus edge cost, recomputed from the selection.
    pub fn recompute_objective(&self, prizes: &PrizeMap) -> f64 {
        objective_of(&self.nodes, &self.edge_indices, prizes)
    }

    /// The selected nodes and exactly the selected edges.
    pub fn to_graph(&self, g: &TextualGraph) -> Result<TextualGraph> {
        Ok(g.edge_subgraph(&self.nodes, &self.edge_indices)?)
    }
}

pub fn objective_of(nodes: &NodeSet, edges: &BTreeSet<usize>, prizes: &PrizeMap) -> f64 {
    nodes.iter().map(|v| prizes.node(v)).sum::<f64>()
        + edges.iter().map(|&e| prizes.edge_gain(e)).sum::<f64>()
}

pub fn solve_pcst(g: &TextualGraph, prizes: &PrizeMap, mode: PcstMode) -> Result<RetrievedSubgraph> {
    if g.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }
    match mode {
        PcstMode::Exact => solve_exact(g, prizes),
        PcstMode::Heuristic => Ok(solve_heuristic(g, prizes)),
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Best edge set spanning a connected node set: every edge with positive
/// gain, plus the least costly edges needed to connect what remains.
fn complete_edges(
    ids: &[NodeId],
    mask: u32,
    edges: &[(usize, usize, usize)],
    prizes: &PrizeMap,
) -> (BTreeSet<usize>, f64) {
    let inside: Vec<&(usize, usize, usize)> = edges
        .iter()
        .filter(|(_, a, b)| mask >> a & 1 == 1 && mask >> b & 1 == 1)
        .collect();
    let mut uf = UnionFind::new(ids.len());
    let mut chosen = BTreeSet::new();
    let mut gain = 0.0;
    for &&(e, a, b) in &inside {
        let g = prizes.edge_gain(e);
        if g > 0.0 {
            uf.union(a, b);
            chosen.insert(e);
            gain += g;
        }
    }
    let mut rest: Vec<_> = inside
        .iter()
        .filter(|(e, _, _)| !chosen.contains(e))
        .map(|&&(e, a, b)| (prizes.edge_gain(e), e, a, b))
        .collect();
    rest.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    for (g, e, a, b) in rest {
        if uf.union(a, b) {
            chosen.insert(e);
            gain += g;
        }
    }
    (chosen, gain)
}

fn solve_exact(g: &TextualGraph, prizes: &PrizeMap) -> Result<RetrievedSubgraph> {
    let n = g.node_count();
    if n > EXACT_MAX_NODES {
        return Err(RetrievalError::GraphTooLargeForExact(n));
    }
    let ids = g.node_ids();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges: Vec<(usize, usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| (i, index[&e.src], index[&e.dst]))
        .collect();
    let mut nbr = vec![0u32; n];
    for &(_, a, b) in &edges {
        nbr[a] |= 1 << b;
        nbr[b] |= 1 << a;
    }
    let node_prize: Vec<f64> = ids.iter().map(|&id| prizes.node(id)).collect();

    let mut best: Option<(f64, u32, BTreeSet<usize>)> = None;
    for mask in 1u32..(1u32 << n) {
        if !mask_connected(mask, &nbr) {
            continue;
        }
        let (chosen, edge_gain) = complete_edges(&ids, mask, &edges, prizes);
        let total: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| node_prize[i])
            .sum::<f64>()
            + edge_gain;
        let better = match &best {
            None => true,
            Some((b, bmask, _)) => {
                total > b + TIE_EPS
                    || ((total - b).abs() <= TIE_EPS && tie_prefers(mask, *bmask))
            }
        };
        if better {
            best = Some((total, mask, chosen));
        }
    }
    let (objective, mask, edge_indices) = best.expect("at least one node");
    let nodes = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ids[i]).collect();
    Ok(RetrievedSubgraph {
        nodes,
        edge_indices,
        objective,
    })
}

/// Among equal objectives prefer fewer nodes, then the lexicographically
/// smaller sorted id list.
fn tie_prefers(candidate: u32, incumbent: u32) -> bool {
    let (c, i) = (candidate.count_ones(), incumbent.count_ones());
    if c != i {
        return c < i;
    }
    // lowest differing bit decides: whoever has it holds the smaller id there
    let diff = candidate ^ incumbent;
    diff != 0 && candidate & (diff & diff.wrapping_neg()) != 0
}

fn mask_connected(mask: u32, nbr: &[u32]) -> bool {
    let start = mask.trailing_zeros() as usize;
    let mut seen = 1u32 << start;
    let mut frontier = seen;
    while frontier != 0 {
        let v = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let fresh = nbr[v] & mask & !seen;
        seen |= fresh;
        frontier |= fresh;
    }
    seen == mask
}

#[derive(Debug, Clone)]
enum Move {
    Edge(usize),
    Attach { edge: usize, node: NodeId },
    Bridge { e1: usize, mid: NodeId, e2: usize, node: NodeId },
}

fn solve_heuristic(g: &TextualGraph, prizes: &PrizeMap) -> RetrievedSubgraph {
    // restart from every prized node and prized-edge endpoint, keep the best
    let mut starts: BTreeSet<NodeId> = prizes
        .node_prize
        .iter()
        .filter(|(id, p)| **p > 0.0 && g.contains(**id))
        .map(|(id, _)| *id)
        .collect();
    for (&e, &p) in &prizes.edge_prize {
        if p > 0.0 && e < g.edge_count() {
            let edge = &g.edges()[e];
            starts.extend([edge.src, edge.dst]);
        }
    }
    if starts.is_empty() {
        starts.insert(g.node_ids()[0]);
    }
    let mut best: Option<RetrievedSubgraph> = None;
    for start in starts {
        let cand = grow_from(g, prizes, start);
        if best.as_ref().is_none_or(|b| cand.objective > b.objective + TIE_EPS) {
            best = Some(cand);
        }
    }
    best.expect("at least one start")
}

fn grow_from(g: &TextualGraph, prizes: &PrizeMap, start: NodeId) -> RetrievedSubgraph {
    let mut nodes: NodeSet = [start].into_iter().collect();
    let mut edges: BTreeSet<usize> = BTreeSet::new();
    loop {
        let Some((gain, mv)) = best_move(g, prizes, &nodes, &edges) else { break };
        if gain <= TIE_EPS {
            break;
        }
        match mv {
            Move::Edge(e) => {
                edges.insert(e);
            }
            Move::Attach { edge, node } => {
                edges.insert(edge);
                nodes.insert(node);
            }
            Move::Bridge { e1, mid, e2, node } => {
                edges.extend([e1, e2]);
                nodes.extend([mid, node]);
            }
        }
    }
    prune_leaves(g, prizes, &mut nodes, &mut edges);
    let objective = objective_of(&nodes, &edges, prizes);
    RetrievedSubgraph {
        nodes,
        edge_indices: edges,
        objective,
    }
}

/// Highest-gain move; ties go to the move found first (edges before
/// attachments before bridges, ascending ids within each).
fn best_move(
    g: &TextualGraph,
    prizes: &PrizeMap,
    nodes: &NodeSet,
    edges: &BTreeSet<usize>,
) -> Option<(f64, Move)> {
    let mut best: Option<(f64, Move)> = None;
    let mut offer = |gain: f64, mv: Move| {
        if best.as_ref().is_none_or(|(b, _)| gain > b + TIE_EPS) {
            best = Some((gain, mv));
        }
    };
    for v in nodes.iter() {
        for &(u, e) in g.incident(v) {
            if nodes.contains(u) && !edges.contains(&e) && u >= v {
                offer(prizes.edge_gain(e), Move::Edge(e));
            }
        }
    }
    for v in nodes.iter() {
        for &(u, e) in g.incident(v) {
            if !nodes.contains(u) {
                offer(prizes.node(u) + prizes.edge_gain(e), Move::Attach { edge: e, node: u });
            }
        }
    }
    for v in nodes.iter() {
        for &(mid, e1) in g.incident(v) {
            if nodes.contains(mid) {
                continue;
            }
            let first = prizes.node(mid) + prizes.edge_gain(e1);
            for &(u, e2) in g.incident(mid) {
                if u == mid || nodes.contains(u) {
                    continue;
                }
                offer(
                    first + prizes.node(u) + prizes.edge_gain(e2),
                    Move::Bridge { e1, mid, e2, node: u },
                );
            }
        }
    }
    best
}

/// Repeatedly drops leaves whose node prize does not cover their edge.
fn prune_leaves(g: &TextualGraph, prizes: &PrizeMap, nodes: &mut NodeSet, edges: &mut BTreeSet<usize>) {
    loop {
        let mut degree: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for &e in edges.iter() {
            let edge = &g.edges()[e];
            degree.entry(edge.src).or_default().push(e);
            degree.entry(edge.dst).or_default().push(e);
        }
        let leaf = degree.iter().find(|(v, es)| {
            es.len() == 1 && prizes.node(**v) + prizes.edge_gain(es[0]) < -TIE_EPS
        });
        let Some((&v, es)) = leaf else { break };
        let e = es[0];
        edges.remove(&e);
        nodes.remove(v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: usize,
    pub edge_cost: f64,
    pub mode: PcstMode,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            k: 10,
            edge_cost: 0.5,
            mode: PcstMode::Heuristic,
        }
    }
}

/// Ranks nodes and edges against `query`, assigns prizes, and solves.
pub fn retrieve(
    g: &TextualGraph,
    table: &EmbeddingTable,
    query: &[f64],
    params: &RetrievalParams,
) -> Result<(RetrievedSubgraph, PrizeMap)> {
    if g.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }
    table.check_covers(g)?;
    let ranked_nodes = top_k(
        query,
        g.node_ids().into_iter().map(|id| (id, table.node(id).expect("covered"))),
        params.k,
    )?;
    let ranked_edges = if g.edge_count() == 0 {
        RankedList { entries: vec![] }
    } else {
        top_k(
            query,
            (0..g.edge_count()).map(|i| (i, table.edge(i).expect("covered"))),
            params.k,
        )?
    };
    let prizes = assign_prizes(&ranked_nodes, &ranked_edges, params.k, params.edge_cost)?;
    let sub = solve_pcst(g, &prizes, params.mode)?;
    Ok((sub, prizes))
}

/// [`retrieve`] with the query embedded through `embedder`.
pub fn retrieve_text(
    g: &TextualGraph,
    table: &EmbeddingTable,
    embedder: &Embedder,
    query: &str,
    params: &RetrievalParams,
) -> Result<(RetrievedSubgraph, PrizeMap)> {
    let q = embedder.embed_text(query)?;
    retrieve(g, table, &q, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn path(n: u64) -> TextualGraph {
        let nodes = (0..n).map(|i| (i, format!("n{i}")));
        let edges = (1..n).map(|i| Edge::new(i - 1, "next", i)).collect();
        TextualGraph::new(nodes, edges).unwrap()
    }

    fn prizes(nodes: &[(NodeId, f64)], edge_cost: f64) -> PrizeMap {
        PrizeMap {
            node_prize: nodes.iter().copied().collect(),
            edge_prize: BTreeMap::new(),
            edge_cost,
        }
    }

    #[test]
    fn top_k_brute_force_example() {
        let items: Vec<(u64, Vec<f64>)> =
            vec![(0, vec![1.0, 0.0]), (1, vec![0.0, 1.0]), (2, vec![0.6, 0.8])];
        let r = top_k(&[1.0, 0.0], items.iter().map(|(i, v)| (*i, v.as_slice())), 2).unwrap();
        assert_eq!(r.ids(), vec![0, 2]);
        assert!((r.entries[0].1 - 1.0).abs() < 1e-12);
        assert!((r.entries[1].1 - 0.6).abs() < 1e-12);

        let all = top_k(&[1.0, 0.0], items.iter().map(|(i, v)| (*i, v.as_slice())), 10).unwrap();
        assert_eq!(all.ids(), vec![0, 2, 1]);
    }

    #[test]
    fn top_k_ties_and_errors() {
        let v = [0.3, 0.4];
        let r = top_k(&[1.0, 1.0], [(7u64, &v[..]), (3, &v[..])], 2).unwrap();
        assert_eq!(r.ids(), vec![3, 7]);
        let empty: [(u64, &[f64]); 0] = [];
        assert_eq!(top_k(&[1.0], empty, 1).unwrap_err(), RetrievalError::EmptyItemSet);
        assert_eq!(top_k(&[1.0], [(0u64, &[1.0][..])], 0).unwrap_err(), RetrievalError::ZeroK);
    }

    #[test]
    fn prizes_by_rank() {
        let nodes = RankedList {
            entries: (0..10u64).map(|i| (i, 1.0 - i as f64 * 0.01)).collect(),
        };
        let p = assign_prizes(&nodes, &RankedList { entries: vec![] }, 10, 0.5).unwrap();
        assert_eq!(p.node(0), 10.0);
        assert_eq!(p.node(9), 1.0);
        assert_eq!(p.node(42), 0.0);

        let one = RankedList { entries: vec![(4u64, 0.9)] };
        let p1 = assign_prizes(&one, &RankedList { entries: vec![] }, 1, 0.5).unwrap();
        assert_eq!((p1.node(4), p1.node(0)), (1.0, 0.0));

        assert_eq!(
            assign_prizes(&nodes, &RankedList { entries: vec![] }, 5, 0.5).unwrap_err(),
            RetrievalError::RankOverflow { len: 10, k: 5 }
        );
    }

    #[test]
    fn path_with_two_prized_ends() {
        let g = path(4);
        let p = prizes(&[(0, 3.0), (2, 3.0)], 1.0);
        for mode in [PcstMode::Exact, PcstMode::Heuristic] {
            let s = solve_pcst(&g, &p, mode).unwrap();
            assert_eq!(s.nodes.to_vec(), vec![0, 1, 2], "{mode:?}");
            assert_eq!(s.edge_indices, BTreeSet::from([0, 1]));
            assert!((s.objective - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_and_zero_prizes() {
        let g = TextualGraph::new([(3, "x".into())], vec![]).unwrap();
        let s = solve_pcst(&g, &prizes(&[(3, 5.0)], 2.0), PcstMode::Exact).unwrap();
        assert_eq!((s.nodes.to_vec(), s.objective), (vec![3], 5.0));

        let g = path(5);
        for mode in [PcstMode::Exact, PcstMode::Heuristic] {
            let s = solve_pcst(&g, &prizes(&[], 0.5), mode).unwrap();
            assert_eq!(s.nodes.to_vec(), vec![0]);
            assert_eq!(s.objective, 0.0);
        }
    }

    #[test]
    fn exact_rejects_large_graphs() {
        let g = path(16);
        assert_eq!(
            solve_pcst(&g, &prizes(&[], 0.5), PcstMode::Exact).unwrap_err(),
            RetrievalError::GraphTooLargeForExact(16)
        );
        let empty = TextualGraph::new([], vec![]).unwrap();
        assert_eq!(
            solve_pcst(&empty, &prizes(&[], 0.5), PcstMode::Heuristic).unwrap_err(),
            RetrievalError::EmptyGraph
        );
    }

    #[test]
    fn cheap_prized_edge_is_kept_costly_one_dropped() {
        // triangle 0-1-2: edge (0,2) has prize above cost, the others below
        let g = TextualGraph::new(
            (0..3).map(|i| (i, String::new())),
            vec![Edge::new(0, "a", 1), Edge::new(1, "b", 2), Edge::new(0, "c", 2)],
        )
        .unwrap();
        let p = PrizeMap {
            node_prize: BTreeMap::from([(0, 2.0), (1, 2.0), (2, 2.0)]),
            edge_prize: BTreeMap::from([(2, 3.0)]),
            edge_cost: 1.0,
        };
        let s = solve_pcst(&g, &p, PcstMode::Exact).unwrap();
        assert_eq!(s.edge_indices, BTreeSet::from([0, 2]));
        assert!((s.objective - (6.0 + 2.0 - 1.0)).abs() < 1e-12);
        assert!((s.recompute_objective(&p) - s.objective).abs() < 1e-12);
    }

    fn star_table(g: &TextualGraph) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(6);
        for id in g.node_ids() {
            let mut v = vec![0.1; 6];
            v[id as usize] = 1.0;
            t.insert_node(id, v).unwrap();
        }
        for i in 0..g.edge_count() {
            t.insert_edge(i, vec![0.2, 0.1, 0.0, 0.3, 0.0, 0.1]).unwrap();
        }
        t
    }

    fn six() -> TextualGraph {
        TextualGraph::new(
            (0..6).map(|i| (i, format!("n{i}"))),
            vec![
                Edge::new(0, "a", 1),
                Edge::new(1, "b", 2),
                Edge::new(2, "c", 3),
                Edge::new(3, "d", 4),
                Edge::new(4, "e", 5),
                Edge::new(1, "f", 4),
            ],
        )
        .unwrap()
    }

    #[test]
    fn query_equal_to_node_embedding_is_rank_zero_and_retrieved() {
        let g = six();
        let t = star_table(&g);
        for target in 0..6u64 {
            let q = t.node(target).unwrap().to_vec();
            for mode in [PcstMode::Exact, PcstMode::Heuristic] {
                let params = RetrievalParams { k: 3, edge_cost: 0.5, mode };
                let (s, p) = retrieve(&g, &t, &q, &params).unwrap();
                assert_eq!(p.node(target), 3.0);
                assert!(s.nodes.contains(target), "{target} {mode:?}");
            }
        }
    }

    #[test]
    fn free_edges_and_full_prizes_take_whole_component() {
        let g = six();
        let t = star_table(&g);
        let params = RetrievalParams { k: 6, edge_cost: 0.0, mode: PcstMode::Exact };
        let (s, _) = retrieve(&g, &t, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &params).unwrap();
        assert_eq!(s.nodes, g.node_set());
    }

    #[test]
    fn zero_query_ties_by_id() {
        let g = six();
        let t = star_table(&g);
        let params = RetrievalParams { k: 2, ..RetrievalParams::default() };
        let (s, p) = retrieve(&g, &t, &[0.0; 6], &params).unwrap();
        assert_eq!((p.node(0), p.node(1), p.node(2)), (2.0, 1.0, 0.0));
        assert_eq!(p.edge(0), 2.0);
        assert!(s.nodes.contains(0));

        let mut short = EmbeddingTable::new(6);
        short.insert_node(0, vec![1.0; 6]).unwrap();
        assert!(matches!(
            retrieve(&g, &short, &[0.0; 6], &params),
            Err(RetrievalError::Embedding(EmbeddingError::MissingVector { .. }))
        ));
    }
}
