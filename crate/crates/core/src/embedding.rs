//! Fixed-dimension text embeddings and similarity.
//!
//! Vectors come either from an archive written ahead of time or from an
//! [`EmbeddingProvider`]. The archive is one JSON header line followed by
//! little-endian `f32` rows (nodes, then edges, then cached texts, each in
//! header order); values are widened to `f64` on load.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{NodeId, TextualGraph};
use crate::transport::Transport;

pub const ARCHIVE_FORMAT: &str = "grag-emb/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no vector for {kind} {id}")]
    MissingVector { kind: &'static str, id: String },
    #[error("non-finite component in {0}")]
    NonFiniteValue(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("no fixture for text with hash {0}")]
    FixtureMiss(String),
    #[error("malformed archive: {0}")]
    Archive(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// SHA-256 of the UTF-8 text, lowercase hex.
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Cosine similarity, plus whether either input was a zero vector (in which
/// case the similarity is defined as 0).
pub fn cosine_flagged(u: &[f64], v: &[f64]) -> (f64, bool) {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return (0.0, true);
    }
    ((dot / (nu * nv)).clamp(-1.0, 1.0), false)
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    cosine_flagged(u, v).0
}

fn check_vector(what: impl FnOnce() -> String, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(EmbeddingError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFiniteValue(what()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    node_vecs: BTreeMap<NodeId, Vec<f64>>,
    edge_vecs: BTreeMap<usize, Vec<f64>>,
    text_vecs: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveHeader {
    format: String,
    dim: usize,
    node_count: usize,
    edge_count: usize,
    text_count: usize,
    node_ids: Vec<NodeId>,
    edge_indices: Vec<usize>,
    text_keys: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    /// Embeds every node and edge text of `g` with `embedder`.
    pub fn for_graph(g: &TextualGraph, embedder: &Embedder) -> Result<Self> {
        let mut table = EmbeddingTable::new(embedder.dim());
        let node_texts: Vec<String> = g.nodes().map(|(_, t)| t.to_string()).collect();
        for ((id, _), v) in g.nodes().zip(embedder.embed_many(&node_texts)?) {
            table.insert_node(id, v)?;
        }
        let edge_texts: Vec<String> = g.edges().iter().map(|e| e.text.clone()).collect();
        for (i, v) in embedder.embed_many(&edge_texts)?.into_iter().enumerate() {
            table.insert_edge(i, v)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert_node(&mut self, id: NodeId, v: Vec<f64>) -> Result<()> {
        check_vector(|| format!("node {id}"), &v, self.dim)?;
        self.node_vecs.insert(id, v);
        Ok(())
    }

    pub fn insert_edge(&mut self, index: usize, v: Vec<f64>) -> Result<()> {
        check_vector(|| format!("edge {index}"), &v, self.dim)?;
        self.edge_vecs.insert(index, v);
        Ok(())
    }

    pub fn insert_text(&mut self, text: &str, v: Vec<f64>) -> Result<()> {
        check_vector(|| "text".to_string(), &v, self.dim)?;
        self.text_vecs.insert(text_key(text), v);
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&[f64]> {
        self.node_vecs.get(&id).map(Vec::as_slice)
    }

    pub fn edge(&self, index: usize) -> Option<&[f64]> {
        self.edge_vecs.get(&index).map(Vec::as_slice)
    }

    pub fn text(&self, text: &str) -> Option<&[f64]> {
        self.text_vecs.get(&text_key(text)).map(Vec::as_slice)
    }

    pub fn node_vecs(&self) -> &BTreeMap<NodeId, Vec<f64>> {
        &self.node_vecs
    }

    pub fn edge_vecs(&self) -> &BTreeMap<usize, Vec<f64>> {
        &self.edge_vecs
    }

    /// Every node and edge of `g` must have a vector.
    pub fn check_covers(&self, g: &TextualGraph) -> Result<()> {
        if let Some(id) = g.node_ids().into_iter().find(|id| !self.node_vecs.contains_key(id)) {
            return Err(EmbeddingError::MissingVector {
                kind: "node",
                id: id.to_string(),
            });
        }
        if let Some(i) = (0..g.edge_count()).find(|i| !self.edge_vecs.contains_key(i)) {
            return Err(EmbeddingError::MissingVector {
                kind: "edge",
                id: i.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ArchiveHeader {
            format: ARCHIVE_FORMAT.to_string(),
            dim: self.dim,
            node_count: self.node_vecs.len(),
            edge_count: self.edge_vecs.len(),
            text_count: self.text_vecs.len(),
            node_ids: self.node_vecs.keys().copied().collect(),
            edge_indices: self.edge_vecs.keys().copied().collect(),
            text_keys: self.text_vecs.keys().cloned().collect(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        let rows = self
            .node_vecs
            .values()
            .chain(self.edge_vecs.values())
            .chain(self.text_vecs.values());
        for row in rows {
            for &x in row {
                out.write_all(&(x as f32).to_le_bytes()).expect("in-memory write");
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| EmbeddingError::Archive("missing header line".into()))?;
        let header: ArchiveHeader = serde_json::from_slice(&bytes[..split])
            .map_err(|e| EmbeddingError::Archive(e.to_string()))?;
        if header.format != ARCHIVE_FORMAT {
            return Err(EmbeddingError::Archive(format!("unknown format {}", header.format)));
        }
        if header.dim == 0 {
            return Err(EmbeddingError::Archive("dim must be positive".into()));
        }
        if header.node_ids.len() != header.node_count
            || header.edge_indices.len() != header.edge_count
            || header.text_keys.len() != header.text_count
        {
            return Err(EmbeddingError::Archive("id lists disagree with declared counts".into()));
        }
        let payload = &bytes[split + 1..];
        let rows = header.node_count + header.edge_count + header.text_count;
        if payload.len() % 4 != 0 {
            return Err(EmbeddingError::Archive("payload is not a whole number of f32".into()));
        }
        let floats = payload.len() / 4;
        if floats != rows * header.dim {
            // a short or long row shows up as a per-row width that disagrees with dim
            let got = if rows == 0 { floats } else { floats / rows };
            return Err(EmbeddingError::DimensionMismatch {
                expected: header.dim,
                got,
            });
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64);
        let mut next_row = || values.by_ref().take(header.dim).collect::<Vec<f64>>();
        let mut table = EmbeddingTable::new(header.dim);
        for id in header.node_ids {
            table.insert_node(id, next_row())?;
        }
        for i in header.edge_indices {
            table.insert_edge(i, next_row())?;
        }
        for key in header.text_keys {
            let v = next_row();
            check_vector(|| format!("text {key}"), &v, header.dim)?;
            table.text_vecs.insert(key, v);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| io_error(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Loads an archive and checks it covers every node and edge of `g`.
pub fn load_embeddings(path: &Path, g: &TextualGraph) -> Result<EmbeddingTable> {
    let table = EmbeddingTable::load(path)?;
    table.check_covers(g)?;
    Ok(table)
}

fn io_error(path: &Path, e: std::io::Error) -> EmbeddingError {
    EmbeddingError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Offline provider: `<dir>/<sha256(text)>.json` holds a JSON array.
pub struct FixtureEmbeddings {
    dir: PathBuf,
    dim: usize,
}

impl FixtureEmbeddings {
    pub fn new(dir: impl Into<PathBuf>, dim: usize) -> Self {
        FixtureEmbeddings {
            dir: dir.into(),
            dim,
        }
    }

    pub fn record(&self, text: &str, v: &[f64]) -> Result<()> {
        check_vector(|| "fixture".into(), v, self.dim)?;
        fs::create_dir_all(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let path = self.dir.join(format!("{}.json", text_key(text)));
        let json = serde_json::to_string(v).expect("vector serializes");
        fs::write(&path, json).map_err(|e| io_error(&path, e))
    }
}

impl EmbeddingProvider for FixtureEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                let key = text_key(t);
                let path = self.dir.join(format!("{key}.json"));
                let raw = fs::read_to_string(&path).map_err(|_| EmbeddingError::FixtureMiss(key))?;
                let v: Vec<f64> = serde_json::from_str(&raw)
                    .map_err(|e| EmbeddingError::Archive(format!("{}: {e}", path.display())))?;
                check_vector(|| path.display().to_string(), &v, self.dim)?;
                Ok(v)
            })
            .collect()
    }
}

/// HTTP provider: POST `{"texts": [...]}` to `{base_url}/embed`, reply
/// `{"dim": d, "vectors": [[...], ...]}`.
pub struct ServiceEmbeddings {
    base_url: String,
    api_key: Option<String>,
    dim: usize,
    transport: Arc<dyn Transport>,
}

impl ServiceEmbeddings {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
        dim: usize,
        transport: Arc<dyn Transport>,
    ) -> Self {
        ServiceEmbeddings {
            base_url: base_url.into(),
            api_key,
            dim,
            transport,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/embed", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct ServiceReply {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingProvider for ServiceEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let body = serde_json::json!({ "texts": texts });
        let reply = self
            .transport
            .post_json(&self.endpoint(), self.api_key.as_deref(), &body)
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        if !(200..300).contains(&reply.status) {
            return Err(EmbeddingError::ProviderUnavailable(format!(
                "status {}: {}",
                reply.status, reply.body
            )));
        }
        let parsed: ServiceReply = serde_json::from_str(&reply.body)
            .map_err(|e| EmbeddingError::ProviderUnavailable(format!("bad reply: {e}")))?;
        if parsed.dim != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: parsed.dim,
            });
        }
        if parsed.vectors.len() != texts.len() {
            return Err(EmbeddingError::ProviderUnavailable(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                parsed.vectors.len()
            )));
        }
        for v in &parsed.vectors {
            check_vector(|| "service reply".into(), v, self.dim)?;
        }
        Ok(parsed.vectors)
    }
}

/// Deterministic bag-of-features embedding: signed feature hashing of
/// lowercase word unigrams and character trigrams, L2-normalised. Needs no
/// model or network, which makes it suitable for fixtures and toy corpora.
pub struct HashingEmbeddings {
    dim: usize,
}

impl HashingEmbeddings {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dim must be positive");
        HashingEmbeddings { dim }
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let words = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty());
        for word in words {
            self.bump(&mut v, word.as_bytes(), 1.0);
            let padded: Vec<char> = format!("#{word}#").chars().collect();
            for tri in padded.windows(3) {
                let s: String = tri.iter().collect();
                self.bump(&mut v, s.as_bytes(), 0.5);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    fn bump(&self, v: &mut [f64], feature: &[u8], weight: f64) {
        let h = fnv1a(feature);
        let slot = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        v[slot] += sign * weight;
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashingEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// A provider behind a text cache. Lookups for the same text return the same
/// vector for the lifetime of the embedder.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: RwLock<HashMap<String, Arc<Vec<f64>>>>,
}

impl Embedder {
    pub fn new(provider: impl EmbeddingProvider + 'static) -> Self {
        Embedder::boxed(Box::new(provider))
    }

    pub fn boxed(provider: Box<dyn EmbeddingProvider>) -> Self {
        Embedder {
            provider,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.provider.dim()
    }

    pub fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed_many(&[text.to_string()])?.remove(0))
    }

    pub fn embed_many(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let keys: Vec<String> = texts.iter().map(|t| text_key(t)).collect();
        let missing: Vec<String> = {
            let cache = self.cache.read().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert((*k).clone()))
                .map(|(t, _)| t.clone())
                .collect()
        };
        if !missing.is_empty() {
            let vecs = self.provider.embed_batch(&missing)?;
            if vecs.len() != missing.len() {
                return Err(EmbeddingError::ProviderUnavailable(
                    "provider returned wrong number of vectors".into(),
                ));
            }
            let mut cache = self.cache.write().expect("cache lock");
            for (t, v) in missing.iter().zip(vecs) {
                check_vector(|| "provider output".into(), &v, self.dim())?;
                cache.entry(text_key(t)).or_insert_with(|| Arc::new(v));
            }
        }
        let cache = self.cache.read().expect("cache lock");
        Ok(keys.iter().map(|k| cache[k].as_ref().clone()).collect())
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine(&[2.0, 2.0], &[1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]) - 0.8).abs() < 1e-12);
        assert_eq!(cosine_flagged(&[0.0, 0.0], &[1.0, 1.0]), (0.0, true));
    }

    fn graph3() -> TextualGraph {
        TextualGraph::load("node_id,node_attr\n0,a\n1,b\n2,c\n", "src,edge_attr,dst\n0,r,1\n").unwrap()
    }

    #[test]
    fn archive_with_short_row_is_dimension_mismatch() {
        let mut t = EmbeddingTable::new(3);
        t.insert_node(0, vec![1.0, 2.0, 3.0]).unwrap();
        let mut bytes = t.to_bytes();
        // claim dim 4 while rows hold 3 values
        let split = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = String::from_utf8(bytes[..split].to_vec()).unwrap().replace("\"dim\":3", "\"dim\":4");
        let mut patched = header.into_bytes();
        patched.extend_from_slice(&bytes.split_off(split));
        assert_eq!(
            EmbeddingTable::from_bytes(&patched).unwrap_err(),
            EmbeddingError::DimensionMismatch { expected: 4, got: 3 }
        );
    }

    #[test]
    fn partial_archive_reports_missing_vector() {
        let g = graph3();
        let mut t = EmbeddingTable::new(2);
        t.insert_node(0, vec![1.0, 0.0]).unwrap();
        t.insert_node(1, vec![0.0, 1.0]).unwrap();
        t.insert_edge(0, vec![1.0, 1.0]).unwrap();
        assert_eq!(
            t.check_covers(&g).unwrap_err(),
            EmbeddingError::MissingVector { kind: "node", id: "2".into() }
        );
    }

    #[test]
    fn archive_reload_is_idempotent() {
        let emb = Embedder::new(HashingEmbeddings::new(8));
        let g = graph3();
        let mut t = EmbeddingTable::for_graph(&g, &emb).unwrap();
        t.insert_text("query", emb.embed_text("query").unwrap()).unwrap();
        let once = EmbeddingTable::from_bytes(&t.to_bytes()).unwrap();
        let twice = EmbeddingTable::from_bytes(&once.to_bytes()).unwrap();
        assert_eq!(once, twice);
        once.check_covers(&g).unwrap();
        assert!(once.text("query").is_some());
    }

    #[test]
    fn non_finite_vectors_rejected() {
        let mut t = EmbeddingTable::new(2);
        assert!(matches!(
            t.insert_node(0, vec![f64::NAN, 0.0]),
            Err(EmbeddingError::NonFiniteValue(_))
        ));
    }

    struct Counting(AtomicUsize);
    impl EmbeddingProvider for &'static Counting {
        fn dim(&self) -> usize {
            2
        }
        fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            self.0.fetch_add(texts.len(), Ordering::SeqCst);
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
        }
    }

    #[test]
    fn repeated_text_hits_the_cache() {
        let counter: &'static Counting = Box::leak(Box::new(Counting(AtomicUsize::new(0))));
        let emb = Embedder::new(counter);
        let a = emb.embed_text("same text").unwrap();
        let b = emb.embed_text("same text").unwrap();
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(counter.0.load(Ordering::SeqCst), 1);
        emb.embed_many(&["x".into(), "x".into(), "same text".into()]).unwrap();
        assert_eq!(counter.0.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn fixture_miss_offline() {
        let dir = tempfile::tempdir().unwrap();
        let fx = FixtureEmbeddings::new(dir.path(), 2);
        fx.record("known", &[0.5, 0.5]).unwrap();
        let emb = Embedder::new(fx);
        assert_eq!(emb.embed_text("known").unwrap(), vec![0.5, 0.5]);
        assert!(matches!(emb.embed_text("unseen"), Err(EmbeddingError::FixtureMiss(_))));
    }

    #[test]
    fn hashing_embeddings_are_deterministic_and_normalised() {
        let h = HashingEmbeddings::new(32);
        let a = h.embed("J. K. Rowling");
        assert_eq!(a, h.embed("J. K. Rowling"));
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.embed("").iter().all(|&x| x == 0.0));
        assert!(cosine(&h.embed("harry potter"), &h.embed("harry potter novel")) > 0.5);
    }
}
