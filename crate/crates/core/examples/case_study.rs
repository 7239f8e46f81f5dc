//! The harry potter case study: extract a grounded rationale, prune with an
//! aligner, build the generation bundle and answer from fixtures.
//!
//! ```text
//! cargo run --example case_study
//! ```

use grag::aligner::{AlignerHyper, AlignerModel};
use grag::casestudy;
use grag::embedding::{Embedder, HashingEmbeddings};
use grag::gateway::{extract_rationale, FixtureStore, Gateway};
use grag::refine::{count_tokens, generate_answer, generator_prompt, inference_example, make_bundle, prune};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = tempfile::tempdir()?;
    casestudy::record_extraction(fixtures.path())?;
    let gateway = Gateway::fixture(fixtures.path());
    let g = casestudy::graph();

    let rationale = extract_rationale(casestudy::QUESTION, &[casestudy::ANSWER.into()], &g, &gateway)?;
    for (i, step) in rationale.steps.iter().enumerate() {
        println!("{}. {step}", i + 1);
    }
    for a in &rationale.anchors {
        println!("{} {:?} -> nodes {:?} edges {:?}", a.kind, a.span, a.nodes, a.edges);
    }

    let embedder = Embedder::new(HashingEmbeddings::new(64));
    let model = AlignerModel::new(AlignerHyper { d_s: 64, d: 32, layers: 2, d_t: 16, tau: 0.07, seed: 0 })?;
    let scores = model.predict(&inference_example("hp", &g, &embedder, casestudy::QUESTION)?)?;
    let pruned = prune(&g, &scores, 4)?;
    let bundle = make_bundle(&model, &pruned, &embedder, casestudy::QUESTION)?;
    let full = count_tokens(&generator_prompt(&g, casestudy::QUESTION)?);
    println!(
        "pruned to {} of {} nodes, {} of {full} prompt tokens, graph token of width {}",
        pruned.graph.node_count(),
        g.node_count(),
        bundle.token_count,
        bundle.d_t()
    );

    FixtureStore::new(fixtures.path()).record(&bundle.prompt, casestudy::GENERATION_REPLY)?;
    println!("answer: {}", generate_answer(&bundle, &gateway)?);
    Ok(())
}
