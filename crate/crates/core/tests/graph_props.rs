use grag::graph::{Edge, NodeSet, TextualGraph};
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = TextualGraph> {
    let text = "[a-z ,\"'.\n]{0,12}";
    (1usize..10).prop_flat_map(move |n| {
        let nodes = prop::collection::vec(text, n);
        let edges = prop::collection::vec((0..n as u64, text, 0..n as u64), 0..15);
        (nodes, edges).prop_map(|(texts, edges)| {
            let nodes = texts.into_iter().enumerate().map(|(i, t)| (i as u64 * 3, t));
            let edges = edges
                .into_iter()
                .map(|(s, t, d)| Edge::new(s * 3, t, d * 3))
                .collect();
            TextualGraph::new(nodes, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn linearize_then_load_is_a_fixed_point(g in arb_graph()) {
        let once = TextualGraph::parse_linearized(&g.linearize()).unwrap();
        prop_assert_eq!(&once, &g);
        prop_assert_eq!(once.linearize(), g.linearize());
    }

    #[test]
    fn induced_subgraph_is_monotone(g in arb_graph(), mask in prop::collection::vec(any::<(bool, bool)>(), 10)) {
        let ids = g.node_ids();
        let small: NodeSet = ids.iter().zip(&mask).filter(|(_, m)| m.0 && m.1).map(|(i, _)| *i).collect();
        let big: NodeSet = ids.iter().zip(&mask).filter(|(_, m)| m.0).map(|(i, _)| *i).collect();
        let e_small = g.induced_subgraph(&small).unwrap();
        let e_big = g.induced_subgraph(&big).unwrap();
        for e in e_small.edges() {
            prop_assert!(e_big.edges().contains(e));
        }
        prop_assert_eq!(g.induced_subgraph(&g.node_set()).unwrap(), g);
    }

    #[test]
    fn neighbors_are_symmetric(g in arb_graph()) {
        for v in g.node_ids() {
            for u in g.neighbors(v).unwrap().iter() {
                prop_assert!(u != v);
                prop_assert!(g.neighbors(u).unwrap().contains(v));
            }
        }
    }
}
