mod common;

use std::collections::BTreeSet;

use common::{bfs_connected, brute_force_optimum, random_instance};
use grag::graph::NodeId;
use grag::retrieval::{solve_pcst, PcstMode, RetrievedSubgraph};

fn is_connected(g: &grag::graph::TextualGraph, s: &RetrievedSubgraph) -> bool {
    let nodes: BTreeSet<NodeId> = s.nodes.iter().collect();
    let pairs: Vec<_> = s.edge_indices.iter().map(|&e| (g.edges()[e].src, g.edges()[e].dst)).collect();
    bfs_connected(&nodes, &pairs)
}

#[test]
fn exact_matches_brute_force() {
    for seed in 0..200 {
        let (g, p) = random_instance(seed, 12);
        let s = solve_pcst(&g, &p, PcstMode::Exact).unwrap();
        let want = brute_force_optimum(&g, &p);
        assert!((s.objective - want).abs() < 1e-9, "seed {seed}: {} vs {want}", s.objective);
        assert!((s.recompute_objective(&p) - s.objective).abs() < 1e-9);
        assert!(is_connected(&g, &s), "seed {seed}");
    }
}

#[test]
fn heuristic_is_connected_and_close() {
    let mut good = 0;
    for seed in 0..200 {
        let (g, p) = random_instance(seed, 12);
        let exact = solve_pcst(&g, &p, PcstMode::Exact).unwrap();
        let heur = solve_pcst(&g, &p, PcstMode::Heuristic).unwrap();
        assert!(is_connected(&g, &heur), "seed {seed}");
        assert!((heur.recompute_objective(&p) - heur.objective).abs() < 1e-9);
        assert!(heur.objective <= exact.objective + 1e-9);
        if heur.objective >= 0.8 * exact.objective {
            good += 1;
        }
    }
    assert!(good >= 190, "{good}/200");
}

#[test]
fn exact_objective_monotone_in_prizes() {
    for seed in 0..100 {
        let (g, p) = random_instance(seed, 10);
        let mut bigger = p.clone();
        // one more rank level: every ranked prize grows by one, one new item enters
        for v in bigger.node_prize.values_mut() {
            *v += 1.0;
        }
        for v in bigger.edge_prize.values_mut() {
            *v += 1.0;
        }
        if let Some(v) = g.node_ids().into_iter().find(|v| !p.node_prize.contains_key(v)) {
            bigger.node_prize.insert(v, 1.0);
        }
        let a = solve_pcst(&g, &p, PcstMode::Exact).unwrap().objective;
        let b = solve_pcst(&g, &bigger, PcstMode::Exact).unwrap().objective;
        assert!(b >= a - 1e-9, "seed {seed}: {b} < {a}");
    }
}
