//! Top-k prizes and PCST over the harry potter excerpt. The heuristic runs
//! on the full graph; exact mode is bitmask search and only runs on the
//! first dozen nodes.
//!
//! ```text
//! cargo run --example retrieve_subgraph -- "who wrote the books?"
//! ```

use grag::casestudy;
use grag::graph::NodeSet;
use grag::embedding::{Embedder, EmbeddingTable, HashingEmbeddings};
use grag::retrieval::{retrieve_text, PcstMode, RetrievalParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let question = std::env::args().nth(1).unwrap_or_else(|| casestudy::QUESTION.to_string());
    let full = casestudy::graph();
    let small: NodeSet = full.node_ids().into_iter().take(12).collect();
    let small = full.induced_subgraph(&small)?;
    let embedder = Embedder::new(HashingEmbeddings::new(256));
    for (g, mode) in [(&full, PcstMode::Heuristic), (&small, PcstMode::Exact), (&small, PcstMode::Heuristic)] {
        let table = EmbeddingTable::for_graph(g, &embedder)?;
        let params = RetrievalParams { k: 5, edge_cost: 0.5, mode };
        let (sub, prizes) = retrieve_text(&g, &table, &embedder, &question, &params)?;
        println!(
            "{mode:?} on {} nodes: objective {:.2}, {} nodes, {} edges",
            g.node_count(),
            sub.objective,
            sub.nodes.len(),
            sub.edge_indices.len()
        );
        println!("  prized nodes {:?}", prizes.node_prize);
        println!("{}", sub.to_graph(g)?.linearize());
    }
    Ok(())
}
