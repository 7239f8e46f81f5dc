//! Pipeline configuration: one JSON file, `${VAR}` interpolation in string
//! values, relative paths resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aligner::{AlignerHyper, TrainConfig};
use crate::evalkit::SweepGrid;
use crate::gateway::CompletionParams;
use crate::retrieval::{PcstMode, RetrievalParams};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{0}")]
pub struct ConfigInvalid(pub String);

fn invalid(msg: impl Into<String>) -> ConfigInvalid {
    ConfigInvalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// JSON list of questions.
    pub questions: PathBuf,
    /// Holds `<graph>.nodes.csv` and `<graph>.edges.csv`.
    pub graphs: PathBuf,
    /// Recorded chat completions.
    pub fixtures: PathBuf,
    pub output: PathBuf,
    /// Recorded embeddings, read by the `fixture` embedding provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// A trained aligner used instead of the train stage's output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            questions: "questions.json".into(),
            graphs: "graphs".into(),
            fixtures: "fixtures".into(),
            output: "out".into(),
            embeddings: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub k: usize,
    pub edge_cost: f64,
    pub mode: PcstMode,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        let p = RetrievalParams::default();
        RetrievalSection { k: p.k, edge_cost: p.edge_cost, mode: p.mode }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignerSection {
    pub d: usize,
    pub layers: usize,
    pub d_t: usize,
    pub tau: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AlignerSection {
    fn default() -> Self {
        AlignerSection {
            d: 1024,
            layers: 4,
            d_t: 4096,
            tau: 0.07,
            steps: 60,
            batch: 8,
            lr: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub n_seed: usize,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection { n_seed: crate::refine::DEFAULT_N_SEED }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingProviderKind {
    #[default]
    Hashing,
    Fixture,
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub provider: EmbeddingProviderKind,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection { provider: EmbeddingProviderKind::Hashing, dim: 1024, base_url: None, api_key: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// Replay fixtures only; no network.
    pub offline: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    /// Service mode: write every completion into the fixtures directory.
    pub record: bool,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let p = CompletionParams::default();
        GatewaySection {
            offline: true,
            base_url: None,
            model: p.model,
            api_key: None,
            record: false,
            temperature: p.temperature,
            max_tokens: p.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Also ask the relevance and faithfulness judges about each rationale.
    pub judge: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub retrieval: RetrievalSection,
    #[serde(default)]
    pub aligner: AlignerSection,
    #[serde(default)]
    pub prune: PruneSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Replaces `${NAME}` with the environment variable `NAME`.
pub fn interpolate(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<String, ConfigInvalid> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| invalid(format!("unterminated ${{ in {text:?}")))?;
        let name = &after[..end];
        let value = lookup(name).ok_or_else(|| invalid(format!("environment variable {name} is not set")))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(v: &mut serde_json::Value, lookup: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigInvalid> {
    match v {
        serde_json::Value::String(s) => *s = interpolate(s, lookup)?,
        serde_json::Value::Array(items) => {
            for item in items {
                interpolate_value(item, lookup)?;
            }
        }
        serde_json::Value::Object(map) => {
            for item in map.values_mut() {
                interpolate_value(item, lookup)?;
            }
        }
        _ => {}
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses config text. `lookup` resolves `${VAR}` references.
    pub fn parse(text: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Self, ConfigInvalid> {
        let mut raw: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid(format!("config is not JSON: {e}")))?;
        interpolate_value(&mut raw, lookup)?;
        serde_json::from_value(raw).map_err(|e| invalid(e.to_string()))
    }

    /// Reads a config file with environment interpolation; relative paths
    /// are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigInvalid> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &|name| std::env::var(name).ok())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn aligner_hyper(&self) -> AlignerHyper {
        AlignerHyper {
            d_s: self.embedding.dim,
            d: self.aligner.d,
            layers: self.aligner.layers,
            d_t: self.aligner.d_t,
            tau: self.aligner.tau,
            seed: self.aligner.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.aligner.steps,
            batch: self.aligner.batch,
            lr: self.aligner.lr,
            seed: self.aligner.seed,
        }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        RetrievalParams { k: self.retrieval.k, edge_cost: self.retrieval.edge_cost, mode: self.retrieval.mode }
    }

    pub fn completion_params(&self) -> CompletionParams {
        CompletionParams {
            model: self.gateway.model.clone(),
            temperature: self.gateway.temperature,
            max_tokens: self.gateway.max_tokens,
        }
    }

    /// SHA-256 over the canonical JSON of the config without secrets and
    /// without the output directory, so moving the output keeps the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.gateway.api_key = None;
        c.embedding.api_key = None;
        c.paths.output = PathBuf::new();
        let canonical = serde_json::to_string(&serde_json::to_value(&c).expect("config serializes")).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Range checks and path existence.
    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let a = &self.aligner;
        let checks: [(bool, &str); 12] = [
            (self.retrieval.k >= 1, "retrieval.k must be at least 1"),
            (self.retrieval.edge_cost >= 0.0 && self.retrieval.edge_cost.is_finite(), "retrieval.edge_cost must be non-negative"),
            (a.tau > 0.0 && a.tau.is_finite(), "aligner.tau must be positive"),
            (a.steps >= 1, "aligner.steps must be at least 1"),
            (a.batch >= 1, "aligner.batch must be at least 1"),
            (a.lr > 0.0 && a.lr.is_finite(), "aligner.lr must be positive"),
            (a.d >= 1 && a.layers >= 1 && a.d_t >= 1, "aligner.d, aligner.layers and aligner.d_t must be at least 1"),
            (self.prune.n_seed >= 1, "prune.n_seed must be at least 1"),
            (self.embedding.dim >= 1, "embedding.dim must be at least 1"),
            (self.gateway.offline || self.gateway.base_url.is_some(), "gateway.base_url is required when gateway.offline is false"),
            (
                self.embedding.provider != EmbeddingProviderKind::Service || self.embedding.base_url.is_some(),
                "embedding.base_url is required for the service provider",
            ),
            (
                self.embedding.provider != EmbeddingProviderKind::Fixture || self.paths.embeddings.is_some(),
                "paths.embeddings is required for the fixture provider",
            ),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(invalid(*msg));
        }
        if let Some(grid) = &self.sweep {
            grid.cells().map_err(|e| invalid(e.to_string()))?;
        }
        let p = &self.paths;
        let mut must_exist = vec![("paths.questions", &p.questions), ("paths.graphs", &p.graphs)];
        if self.gateway.offline {
            must_exist.push(("paths.fixtures", &p.fixtures));
        }
        if let Some(e) = &p.embeddings {
            must_exist.push(("paths.embeddings", e));
        }
        if let Some(c) = &p.checkpoint {
            must_exist.push(("paths.checkpoint", c));
        }
        for (name, path) in must_exist {
            if !self.resolve(path).exists() {
                return Err(invalid(format!("{name} does not exist: {}", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> Option<String> {
        (name == "KEY").then(|| "s3cret".to_string())
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = PipelineConfig::parse(r#"{"paths": {"questions": "q.json", "graphs": "g", "fixtures": "f", "output": "o"}}"#, &env).unwrap();
        assert_eq!(c.retrieval.k, 10);
        assert_eq!(c.prune.n_seed, 25);
        assert!(c.gateway.offline);
        let a = &c.aligner;
        assert_eq!((a.steps, a.batch, a.lr, a.layers, a.d), (60, 8, 1e-5, 4, 1024));
    }

    #[test]
    fn interpolation_and_missing_variables() {
        assert_eq!(interpolate("Bearer ${KEY}!", &env).unwrap(), "Bearer s3cret!");
        assert_eq!(interpolate("plain", &env).unwrap(), "plain");
        assert!(interpolate("${NOPE}", &env).unwrap_err().0.contains("NOPE"));
        assert!(interpolate("${KEY", &env).is_err());
    }

    #[test]
    fn secrets_and_output_do_not_change_the_hash() {
        let mut a = PipelineConfig::default();
        let h = a.hash();
        a.gateway.api_key = Some("x".into());
        a.paths.output = "elsewhere".into();
        assert_eq!(a.hash(), h);
        a.prune.n_seed = 3;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = PipelineConfig::parse(r#"{"paths": {"questions": "q", "graphs": "g", "fixtures": "f", "output": "o"}, "retreival": {}}"#, &env).unwrap_err();
        assert!(err.0.contains("retreival"));
    }
}
