#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use grag::graph::{Edge, NodeId, TextualGraph};
use grag::retrieval::PrizeMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const COSTS: [f64; 3] = [0.25, 0.5, 1.0];

/// Random graph with 2..=max_nodes nodes and at most 14 edges, with
/// rank-style prizes over a random top-k of nodes and edges.
pub fn random_instance(seed: u64, max_nodes: usize) -> (TextualGraph, PrizeMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let m = rng.random_range(n - 1..=(n + 4).min(14));
    let mut edges = Vec::new();
    for i in 1..n {
        if rng.random_bool(0.85) {
            let j = rng.random_range(0..i);
            edges.push(Edge::new(j as u64, format!("r{i}"), i as u64));
        }
    }
    while edges.len() < m {
        let a = rng.random_range(0..n as u64);
        let b = rng.random_range(0..n as u64);
        if a != b {
            edges.push(Edge::new(a, "x", b));
        }
    }
    let g = TextualGraph::new((0..n as u64).map(|i| (i, format!("v{i}"))), edges).unwrap();
    let k = rng.random_range(1..=n);
    let mut order: Vec<u64> = (0..n as u64).collect();
    order.shuffle(&mut rng);
    let node_prize = order.iter().take(k).enumerate().map(|(i, &v)| (v, (k - i) as f64)).collect();
    let mut eorder: Vec<usize> = (0..g.edge_count()).collect();
    eorder.shuffle(&mut rng);
    let ke = k.min(eorder.len());
    let edge_prize = eorder.iter().take(ke).enumerate().map(|(i, &e)| (e, (k - i) as f64)).collect();
    let edge_cost = COSTS[rng.random_range(0..COSTS.len())];
    (g, PrizeMap { node_prize, edge_prize, edge_cost })
}

/// Optimum over every single node and every connected edge subset.
pub fn brute_force_optimum(g: &TextualGraph, p: &PrizeMap) -> f64 {
    let mut best = g
        .node_ids()
        .into_iter()
        .map(|v| p.node_prize.get(&v).copied().unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let m = g.edge_count();
    assert!(m <= 16, "oracle is exponential in edges");
    for mask in 1u32..(1 << m) {
        let chosen: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let nodes: BTreeSet<NodeId> =
            chosen.iter().flat_map(|&i| [g.edges()[i].src, g.edges()[i].dst]).collect();
        let pairs: Vec<(NodeId, NodeId)> =
            chosen.iter().map(|&i| (g.edges()[i].src, g.edges()[i].dst)).collect();
        if !bfs_connected(&nodes, &pairs) {
            continue;
        }
        let value: f64 = nodes.iter().map(|v| p.node_prize.get(v).copied().unwrap_or(0.0)).sum::<f64>()
            + chosen
                .iter()
                .map(|e| p.edge_prize.get(e).copied().unwrap_or(0.0) - p.edge_cost)
                .sum::<f64>();
        best = best.max(value);
    }
    best
}

pub fn bfs_connected(nodes: &BTreeSet<NodeId>, pairs: &[(NodeId, NodeId)]) -> bool {
    let Some(&start) = nodes.iter().next() else {
        return false;
    };
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for &(a, b) in pairs {
        if !nodes.contains(&a) || !nodes.contains(&b) {
            return false;
        }
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &u in adj.get(&v).into_iter().flatten() {
            if seen.insert(u) {
                queue.push_back(u);
            }
        }
    }
    seen.len() == nodes.len()
}

pub mod http {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread;

    /// A one-request-per-connection HTTP/1.1 server on localhost.
    pub struct FakeServer {
        pub base_url: String,
        hits: Arc<AtomicUsize>,
        pub requests: Arc<Mutex<Vec<(String, String)>>>,
    }

    impl FakeServer {
        pub fn hits(&self) -> usize {
            self.hits.load(Ordering::SeqCst)
        }
    }

    pub fn serve<F>(handler: F) -> FakeServer
    where
        F: Fn(usize, &str, &str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (h, r) = (Arc::clone(&hits), Arc::clone(&requests));
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut len = 0;
                loop {
                    let mut header = String::new();
                    reader.read_line(&mut header).unwrap();
                    if header.trim().is_empty() {
                        break;
                    }
                    let lower = header.to_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body = String::from_utf8(body).unwrap();
                let n = h.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = handler(n, &path, &body);
                r.lock().unwrap().push((path, body));
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        FakeServer { base_url, hits, requests }
    }

    pub fn chat_reply(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    /// A localhost URL nobody listens on.
    pub fn dead_url() -> String {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", l.local_addr().unwrap());
        drop(l);
        url
    }
}

pub mod align {
    use grag::aligner::{AlignTrainExample, AlignerHyper, AlignerModel};
    use grag::graph::{Edge, TextualGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn small_hyper(seed: u64) -> AlignerHyper {
        AlignerHyper { d_s: 4, d: 5, layers: 2, d_t: 3, tau: 0.5, seed }
    }

    fn vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Connected random graph on `n` nodes with uniform features.
    pub fn random_example(seed: u64, n: usize, d_s: usize) -> AlignTrainExample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges: Vec<Edge> = (1..n as u64)
            .map(|v| Edge::new(rng.random_range(0..v), "r", v))
            .collect();
        for _ in 0..2 {
            let (a, b) = (rng.random_range(0..n as u64), rng.random_range(0..n as u64));
            if a != b {
                edges.push(Edge::new(a, "x", b));
            }
        }
        let m = edges.len();
        let graph = TextualGraph::new((0..n as u64).map(|v| (v, format!("v{v}"))), edges).unwrap();
        AlignTrainExample {
            id: format!("rand-{seed}"),
            graph,
            node_feats: (0..n).map(|_| vec(&mut rng, d_s)).collect(),
            edge_feats: (0..m).map(|_| vec(&mut rng, d_s)).collect(),
            query_vec: vec(&mut rng, d_s),
            anchor_vec: vec(&mut rng, d_s),
            rationale_vec: vec(&mut rng, d_s),
        }
    }

    /// Largest relative gap between backward and central differences over
    /// every parameter entry, for `w_na * L_NA + w_ga * L_GA`.
    pub fn max_grad_error(model: &AlignerModel, batch: &[&AlignTrainExample], w_na: f64, w_ga: f64) -> f64 {
        let h = 1e-5;
        let (_, grads) = model.loss_gradients(batch, w_na, w_ga).unwrap();
        let loss = |m: &AlignerModel| {
            let r = m.losses(batch).unwrap();
            w_na * r.node_alignment + w_ga * r.graph_alignment
        };
        let mut worst: f64 = 0.0;
        let names: Vec<String> = model.params().names().map(String::from).collect();
        let mut probe = model.clone();
        for name in names {
            let len = model.params().get(&name).unwrap().data().len();
            for k in 0..len {
                let orig = model.params().get(&name).unwrap().data()[k];
                probe.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig + h;
                let up = loss(&probe);
                probe.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig - h;
                let down = loss(&probe);
                probe.params_mut().get_mut(&name).unwrap().data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.get(&name).map(|g| g.data()[k]).unwrap_or(0.0);
                let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        worst
    }
}

pub mod toy {
    use std::collections::BTreeMap;
    use std::path::{Path, PathBuf};

    use grag::config::PipelineConfig;

    pub fn dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("toy")
    }

    pub fn config_path() -> PathBuf {
        dir().join("config.json")
    }

    pub fn config() -> PipelineConfig {
        PipelineConfig::load(&config_path()).unwrap()
    }

    /// Relative path to contents for every file under `root`.
    pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
        out
    }
}
