use grag::aligner::{train_aligner, AlignerError, AlignerHyper, AlignerModel, TrainConfig};
use grag::evalkit::*;
use grag::synthetic::{generate, SyntheticConfig};
use proptest::prelude::*;

fn answer() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["paris", "rome", "the", "new", "york", "stone", "a", "x"]), 1..4)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_implications(cands in prop::collection::vec(answer(), 0..4), gold in prop::collection::vec(answer(), 1..4)) {
        let m = exact_metrics(&cands.join("\n"), &gold).unwrap();
        for v in [m.hit1, m.f1, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.hit1 == 1.0 { prop_assert!(m.f1 > 0.0); }
        if m.accuracy == 1.0 { prop_assert!((m.f1 - 1.0).abs() < 1e-12); }
    }

    #[test]
    fn metrics_ignore_gold_order_and_prediction_case(cands in prop::collection::vec(answer(), 0..4), mut gold in prop::collection::vec(answer(), 1..4)) {
        let pred = cands.join("; ");
        let m = exact_metrics(&pred, &gold).unwrap();
        gold.reverse();
        prop_assert_eq!(exact_metrics(&pred, &gold).unwrap(), m);
        let shouty = format!("{}!", pred.to_uppercase().replace(' ', " , "));
        prop_assert_eq!(exact_metrics(&shouty, &gold).unwrap(), m);
    }
}

fn items(n: usize) -> Vec<AnalysisItem> {
    generate(&SyntheticConfig { examples: n, dim: 16, ..SyntheticConfig::default() })
        .into_iter()
        .map(|s| AnalysisItem { graph_text_vec: s.example.node_feats[0].clone(), example: s.example })
        .collect()
}

const HYPER: AlignerHyper = AlignerHyper { d_s: 16, d: 32, layers: 2, d_t: 16, tau: 0.07, seed: 6 };

#[test]
fn identical_models_give_identical_columns() {
    let m = AlignerModel::new(HYPER).unwrap();
    let t = alignment_analysis(&m, &m, &items(7)).unwrap();
    assert_eq!(t.rows.len(), 21);
    assert!(t.rows.iter().all(|r| r.aligned == r.unaligned));
    let dir = tempfile::tempdir().unwrap();
    t.write(dir.path()).unwrap();
    let plot = std::fs::read_to_string(dir.path().join("similarity_plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 21 * 2);
    assert!(dir.path().join("similarity_summary.json").exists());
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let a = AlignerModel::new(HYPER).unwrap();
    let b = AlignerModel::new(AlignerHyper { d: 8, ..HYPER }).unwrap();
    assert!(matches!(alignment_analysis(&a, &b, &items(1)), Err(EvalError::Aligner(AlignerError::CheckpointMismatch))));
}

#[test]
fn training_raises_rationale_similarity() {
    let data = items(60);
    let train: Vec<_> = data.iter().map(|i| i.example.clone()).collect();
    let before = AlignerModel::new(HYPER).unwrap();
    let mut after = before.clone();
    train_aligner(&mut after, &train, &TrainConfig { steps: 60, batch: 8, lr: 3e-3, seed: 0 }).unwrap();
    let means = alignment_analysis(&before, &after, &data).unwrap().means();
    let (u, a) = means[&Target::Rationale];
    assert!(a > u + 0.1, "{u} -> {a}");
}

#[test]
fn sweeps_are_deterministic() {
    let grid = SweepGrid { n_seed: vec![1, 5], align_steps: vec![1, 2], top_k: vec![3, 4] };
    let run = || {
        sweep(&grid, |c| {
            Ok::<_, String>(vec![EvalRecord {
                id: format!("{}", c.top_k),
                prediction: "p".into(),
                hit1: (c.n_seed % 2) as f64,
                f1: 0.5,
                accuracy: 0.0,
                token_count: c.n_seed * c.align_steps,
                judge: Default::default(),
            }])
        })
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 8);
    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let hm = std::fs::read_to_string(dir.path().join("heatmap_tokens_k4.csv")).unwrap();
    assert_eq!(hm, "n_seed,1,2\n1,1.000000,2.000000\n5,5.000000,10.000000\n");
}
