//! Trains the aligner on seeded synthetic data and reports how far the graph
//! and rationale projections moved together.
//!
//! ```text
//! cargo run --release --example train_aligner -- [steps] [lr]
//! ```

use grag::aligner::{anchor_distribution, train_aligner, AlignerHyper, AlignerModel, AlignTrainExample, TrainConfig};
use grag::embedding::cosine;
use grag::synthetic::{generate, SyntheticConfig, SyntheticExample};

fn report(label: &str, model: &AlignerModel, held: &[SyntheticExample]) -> Result<(), Box<dyn std::error::Error>> {
    let mut cos = 0.0;
    let mut hits = 0;
    for s in held {
        cos += cosine(&model.graph_token(&s.example)?, &model.project(&s.example.rationale_vec)?);
        let anchor = anchor_distribution(&s.example.node_feats, &s.example.anchor_vec)?;
        hits += usize::from(model.predict(&s.example)?.argmax() == anchor.argmax());
    }
    println!("{label}: mean cos {:.4}, argmax agreement {hits}/{}", cos / held.len() as f64, held.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(60);
    let lr = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3e-3);

    let data = generate(&SyntheticConfig::default());
    let (train, held) = data.split_at(160);
    let train: Vec<AlignTrainExample> = train.iter().map(|s| s.example.clone()).collect();
    let hyper = AlignerHyper { d_s: 32, d: 64, layers: 4, d_t: 64, tau: 0.07, seed: 0 };
    let mut model = AlignerModel::new(hyper)?;
    report("untrained", &model, held)?;
    let log = train_aligner(&mut model, &train, &TrainConfig { steps, batch: 8, lr, seed: 0 })?;
    for r in log.iter().step_by(10.max(steps / 6)) {
        println!("  step {:>4}  L_NA {:.4}  L_GA {:.4}", r.step, r.node_alignment, r.graph_alignment);
    }
    report("trained", &model, held)?;
    Ok(())
}
