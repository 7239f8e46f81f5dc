//! Answer metrics, graph/text similarity analysis and grid sweeps.
//!
//! Answers are normalized (lowercase, punctuation removed, articles dropped,
//! whitespace collapsed) and the prediction is split into candidates on
//! newlines and semicolons. A candidate matches a gold answer when the gold
//! answer's tokens appear contiguously in it. Hit@1 looks at the first
//! candidate only, F1 is computed over candidate and gold sets, and accuracy
//! requires the two normalized sets to be equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{pool_graph, AlignTrainExample, AlignerError, AlignerModel};
use crate::embedding::cosine;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold answer list is empty")]
    EmptyGold,
    #[error("sweep grid has an empty axis: {0}")]
    EmptyGrid(&'static str),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub gold_answers: Vec<String>,
    /// Name of the graph the question is asked against.
    pub graph: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hit1: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prediction: String,
    pub hit1: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub judge: BTreeMap<String, String>,
}

pub fn normalize(text: &str) -> String {
    let lower: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lower
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized, non-empty candidate answers in order.
pub fn candidates(prediction: &str) -> Vec<String> {
    prediction
        .split(['\n', ';'])
        .map(normalize)
        .filter(|c| !c.is_empty())
        .collect()
}

fn contains_tokens(haystack: &str, needle: &str) -> bool {
    let h: Vec<&str> = haystack.split(' ').collect();
    let n: Vec<&str> = needle.split(' ').collect();
    !needle.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

pub fn exact_metrics(prediction: &str, gold: &[String]) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let gold: BTreeSet<String> = gold.iter().map(|g| normalize(g)).filter(|g| !g.is_empty()).collect();
    let cands: BTreeSet<String> = candidates(prediction).into_iter().collect();
    let first = candidates(prediction).into_iter().next();
    let hit1 = match &first {
        Some(c) if gold.iter().any(|g| contains_tokens(c, g)) => 1.0,
        _ => 0.0,
    };
    let matched_cands = cands.iter().filter(|c| gold.iter().any(|g| contains_tokens(c, g))).count();
    let matched_gold = gold.iter().filter(|g| cands.iter().any(|c| contains_tokens(c, g))).count();
    let f1 = if matched_cands == 0 || gold.is_empty() {
        0.0
    } else {
        let p = matched_cands as f64 / cands.len() as f64;
        let r = matched_gold as f64 / gold.len() as f64;
        2.0 * p * r / (p + r)
    };
    let accuracy = if !cands.is_empty() && cands == gold { 1.0 } else { 0.0 };
    Ok(Metrics { hit1, f1, accuracy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub examples: usize,
    pub hit1: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mean_tokens: f64,
}

pub fn summarize(records: &[EvalRecord]) -> Summary {
    let n = records.len().max(1) as f64;
    let mean = |f: &dyn Fn(&EvalRecord) -> f64| records.iter().map(f).fold(0.0, |a, b| a + b) / n;
    Summary {
        examples: records.len(),
        hit1: mean(&|r| r.hit1),
        f1: mean(&|r| r.f1),
        accuracy: mean(&|r| r.accuracy),
        mean_tokens: mean(&|r| r.token_count as f64),
    }
}

/// Records as CSV, sorted by id.
pub fn records_csv(records: &[EvalRecord]) -> Result<String> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "prediction", "hit1", "f1", "accuracy", "token_count"])?;
    for r in sorted {
        w.write_record([
            r.id.clone(),
            r.prediction.clone(),
            r.hit1.to_string(),
            format!("{:.6}", r.f1),
            r.accuracy.to_string(),
            r.token_count.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Query,
    Rationale,
    TextualizedGraph,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Query, Target::Rationale, Target::TextualizedGraph];

    pub fn name(self) -> &'static str {
        match self {
            Target::Query => "query",
            Target::Rationale => "rationale",
            Target::TextualizedGraph => "textualized_graph",
        }
    }
}

/// A training example plus the embedding of its linearized graph text.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisItem {
    pub example: AlignTrainExample,
    pub graph_text_vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub id: String,
    pub target: Target,
    pub unaligned: f64,
    pub aligned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTable {
    pub rows: Vec<SimilarityRow>,
}

fn similarity(model: &AlignerModel, item: &AnalysisItem, target: Target) -> Result<f64> {
    let ex = &item.example;
    let r_g = model.project(&pool_graph(&model.encode(ex)?)?)?;
    let text = match target {
        Target::Query => &ex.query_vec,
        Target::Rationale => &ex.rationale_vec,
        Target::TextualizedGraph => &item.graph_text_vec,
    };
    Ok(cosine(&r_g, &model.project(text)?))
}

/// Cosine between the projected graph vector and each projected text target,
/// before and after alignment training.
pub fn alignment_analysis(
    before: &AlignerModel,
    after: &AlignerModel,
    items: &[AnalysisItem],
) -> Result<SimilarityTable> {
    if before.hyper() != after.hyper() {
        return Err(AlignerError::CheckpointMismatch.into());
    }
    let mut rows = Vec::with_capacity(items.len() * 3);
    for item in items {
        for target in Target::ALL {
            rows.push(SimilarityRow {
                id: item.example.id.clone(),
                target,
                unaligned: similarity(before, item, target)?,
                aligned: similarity(after, item, target)?,
            });
        }
    }
    Ok(SimilarityTable { rows })
}

impl SimilarityTable {
    /// (unaligned, aligned) mean per target.
    pub fn means(&self) -> BTreeMap<Target, (f64, f64)> {
        let mut acc: BTreeMap<Target, (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.target).or_default();
            e.0 += r.unaligned;
            e.1 += r.aligned;
            e.2 += 1;
        }
        acc.into_iter()
            .map(|(t, (u, a, n))| (t, (u / n as f64, a / n as f64)))
            .collect()
    }

    /// `x,y,series` triples; x is the example's position, series is
    /// `<target>/<aligned|unaligned>`.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("x,y,series\n");
        let mut position: BTreeMap<Target, usize> = BTreeMap::new();
        for r in &self.rows {
            let x = position.entry(r.target).or_default();
            let _ = writeln!(out, "{},{:.9},{}/unaligned", x, r.unaligned, r.target.name());
            let _ = writeln!(out, "{},{:.9},{}/aligned", x, r.aligned, r.target.name());
            *x += 1;
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,target,unaligned,aligned\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.9},{:.9}", r.id, r.target.name(), r.unaligned, r.aligned);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("similarity.csv"), self.to_csv())?;
        std::fs::write(dir.join("similarity_plot.csv"), self.plot_data())?;
        let means: BTreeMap<&str, BTreeMap<&str, f64>> = self
            .means()
            .into_iter()
            .map(|(t, (u, a))| (t.name(), BTreeMap::from([("unaligned", u), ("aligned", a)])))
            .collect();
        std::fs::write(
            dir.join("similarity_summary.json"),
            serde_json::to_string_pretty(&means).expect("map serializes"),
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n_seed: Vec<usize>,
    pub align_steps: Vec<usize>,
    pub top_k: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_seed: usize,
    pub align_steps: usize,
    pub top_k: usize,
}

impl SweepGrid {
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        for (name, axis) in [("n_seed", &self.n_seed), ("align_steps", &self.align_steps), ("top_k", &self.top_k)] {
            if axis.is_empty() {
                return Err(EvalError::EmptyGrid(name));
            }
        }
        let mut cells = Vec::new();
        for &top_k in &self.top_k {
            for &align_steps in &self.align_steps {
                for &n_seed in &self.n_seed {
                    cells.push(GridCell { n_seed, align_steps, top_k });
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: GridCell,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

/// Runs `cell_fn` on every grid cell. A failing cell becomes a row with its
/// error message and the sweep moves on.
pub fn sweep<F, E>(grid: &SweepGrid, mut cell_fn: F) -> Result<SweepTable>
where
    F: FnMut(GridCell) -> std::result::Result<Vec<EvalRecord>, E>,
    E: std::fmt::Display,
{
    let rows = grid
        .cells()?
        .into_iter()
        .map(|cell| match cell_fn(cell) {
            Ok(records) => SweepRow { cell, summary: Some(summarize(&records)), error: None },
            Err(e) => SweepRow { cell, summary: None, error: Some(e.to_string()) },
        })
        .collect();
    Ok(SweepTable { rows })
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_seed,align_steps,top_k,hit1,f1,accuracy,mean_tokens,error\n");
        for r in &self.rows {
            let c = r.cell;
            match (&r.summary, &r.error) {
                (Some(s), _) => {
                    let _ = writeln!(
                        out,
                        "{},{},{},{:.6},{:.6},{:.6},{:.3},",
                        c.n_seed, c.align_steps, c.top_k, s.hit1, s.f1, s.accuracy, s.mean_tokens
                    );
                }
                (None, e) => {
                    let msg = e.as_deref().unwrap_or("").replace([',', '\n'], " ");
                    let _ = writeln!(out, "{},{},{},,,,,{}", c.n_seed, c.align_steps, c.top_k, msg);
                }
            }
        }
        out
    }

    /// One matrix per top_k: rows are n_seed values, columns align_steps
    /// values, entries the chosen metric (empty for failed cells).
    pub fn heatmaps(&self, metric: fn(&Summary) -> f64) -> BTreeMap<usize, String> {
        let mut out = BTreeMap::new();
        let ks: BTreeSet<usize> = self.rows.iter().map(|r| r.cell.top_k).collect();
        for k in ks {
            let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.cell.top_k == k).collect();
            let seeds: BTreeSet<usize> = rows.iter().map(|r| r.cell.n_seed).collect();
            let steps: BTreeSet<usize> = rows.iter().map(|r| r.cell.align_steps).collect();
            let mut text = String::from("n_seed");
            for s in &steps {
                let _ = write!(text, ",{s}");
            }
            text.push('\n');
            for n in &seeds {
                let _ = write!(text, "{n}");
                for s in &steps {
                    let v = rows
                        .iter()
                        .find(|r| r.cell.n_seed == *n && r.cell.align_steps == *s)
                        .and_then(|r| r.summary.as_ref())
                        .map(|sm| format!("{:.6}", metric(sm)))
                        .unwrap_or_default();
                    let _ = write!(text, ",{v}");
                }
                text.push('\n');
            }
            out.insert(k, text);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), self.to_csv())?;
        let metrics: [(&str, fn(&Summary) -> f64); 3] =
            [("hit1", |s| s.hit1), ("f1", |s| s.f1), ("tokens", |s| s.mean_tokens)];
        for (name, f) in metrics {
            for (k, text) in self.heatmaps(f) {
                std::fs::write(dir.join(format!("heatmap_{name}_k{k}.csv")), text)?;
            }
        }
        Ok(())
    }
}
