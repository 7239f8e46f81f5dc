//! Seeded synthetic alignment data.
//!
//! Each example is a random tree with a few extra edges. One node is the
//! anchor: every edge touching it carries one of a handful of "anchor
//! relations", all other edges carry distractor relations. The anchor
//! vector is a noisy copy of the anchor node's features, the query mixes the
//! anchor node with its relation, and the rationale vector is a noisy copy of
//! the mean node feature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aligner::AlignTrainExample;
use crate::graph::{Edge, TextualGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub examples: usize,
    pub dim: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub extra_edges: usize,
    pub anchor_relations: usize,
    pub distractor_relations: usize,
    /// Noise scale relative to a unit signal.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            examples: 200,
            dim: 32,
            min_nodes: 8,
            max_nodes: 16,
            extra_edges: 2,
            anchor_relations: 4,
            distractor_relations: 12,
            noise: 0.3,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

fn noisy(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    let noise = unit(gaussian(rng, base.len()));
    unit(base.iter().zip(noise).map(|(b, e)| b + scale * e).collect())
}

/// Example `i`'s anchor node index (position in ascending id order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticExample {
    pub example: AlignTrainExample,
    pub anchor_index: usize,
}

pub fn generate(cfg: &SyntheticConfig) -> Vec<SyntheticExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let anchor_rels: Vec<Vec<f64>> = (0..cfg.anchor_relations).map(|_| unit(gaussian(&mut rng, cfg.dim))).collect();
    let distractors: Vec<Vec<f64>> =
        (0..cfg.distractor_relations).map(|_| unit(gaussian(&mut rng, cfg.dim))).collect();
    (0..cfg.examples)
        .map(|i| one(cfg, i, &anchor_rels, &distractors, &mut rng))
        .collect()
}

fn one(
    cfg: &SyntheticConfig,
    i: usize,
    anchor_rels: &[Vec<f64>],
    distractors: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> SyntheticExample {
    let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
    let anchor = rng.random_range(0..n);
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    // the anchor gets at least two edges
    while pairs.iter().filter(|(a, b)| *a == anchor || *b == anchor).count() < 2 {
        let u = rng.random_range(0..n);
        if u != anchor {
            pairs.push((anchor, u));
        }
    }
    for _ in 0..cfg.extra_edges {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            pairs.push((a, b));
        }
    }
    let rel = rng.random_range(0..anchor_rels.len());
    let mut edges = Vec::with_capacity(pairs.len());
    let mut edge_feats = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        if a == anchor || b == anchor {
            edges.push(Edge::new(a as u64, format!("anchor_rel_{rel}"), b as u64));
            edge_feats.push(anchor_rels[rel].clone());
        } else {
            let d = rng.random_range(0..distractors.len());
            edges.push(Edge::new(a as u64, format!("rel_{d}"), b as u64));
            edge_feats.push(distractors[d].clone());
        }
    }
    let node_feats: Vec<Vec<f64>> = (0..n).map(|_| unit(gaussian(rng, cfg.dim))).collect();
    let graph = TextualGraph::new((0..n as u64).map(|v| (v, format!("entity {i}.{v}"))), edges)
        .expect("endpoints exist");
    let anchor_vec = noisy(rng, &node_feats[anchor], cfg.noise);
    let mix: Vec<f64> = node_feats[anchor].iter().zip(&anchor_rels[rel]).map(|(a, b)| a + b).collect();
    let query_vec = noisy(rng, &unit(mix), cfg.noise);
    let mean: Vec<f64> = (0..cfg.dim)
        .map(|j| node_feats.iter().map(|f| f[j]).sum::<f64>() / n as f64)
        .collect();
    let rationale_vec = noisy(rng, &unit(mean), cfg.noise);
    SyntheticExample {
        example: AlignTrainExample {
            id: format!("syn-{i}"),
            graph,
            node_feats,
            edge_feats,
            query_vec,
            anchor_vec,
            rationale_vec,
        },
        anchor_index: anchor,
    }
}
