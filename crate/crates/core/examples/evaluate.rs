//! Answer metrics, a summary table and a toy sweep heatmap.
//!
//! ```text
//! cargo run --example evaluate
//! ```

use grag::evalkit::{exact_metrics, summarize, sweep, EvalError, EvalRecord, SweepGrid};

fn record(id: &str, prediction: &str, gold: &[&str]) -> Result<EvalRecord, EvalError> {
    let gold: Vec<String> = gold.iter().map(|s| s.to_string()).collect();
    let m = exact_metrics(prediction, &gold)?;
    Ok(EvalRecord {
        id: id.into(),
        prediction: prediction.into(),
        hit1: m.hit1,
        f1: m.f1,
        accuracy: m.accuracy,
        token_count: prediction.split_whitespace().count(),
        judge: Default::default(),
    })
}

fn main() -> Result<(), EvalError> {
    let records = vec![
        record("q1", "The Philosopher's Stone", &["harry potter and the philosopher's stone", "philosopher's stone"])?,
        record("q2", "english; french", &["english", "french", "german"])?,
        record("q3", "fantasy", &["science fiction"])?,
    ];
    for r in &records {
        println!("{:<4} hit1 {:.0} f1 {:.3} acc {:.0}  {:?}", r.id, r.hit1, r.f1, r.accuracy, r.prediction);
    }
    println!("{:?}", summarize(&records));

    let grid = SweepGrid { n_seed: vec![2, 4, 8], align_steps: vec![20, 60], top_k: vec![5] };
    let table = sweep(&grid, |cell| -> Result<Vec<EvalRecord>, EvalError> {
        let hit = if cell.n_seed * cell.align_steps >= 80 { "english" } else { "unknown" };
        Ok(vec![record("q", hit, &["english"])?])
    })?;
    print!("{}", table.to_csv());
    for (k, map) in table.heatmaps(|s| s.hit1) {
        println!("top_k {k}\n{map}");
    }
    Ok(())
}
