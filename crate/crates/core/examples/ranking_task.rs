//! Train with the cross-entropy objective (positives are ratings >= F) and
//! report Recall@5 and NDCG on the test split.

use gdsrec::data::split_dataset;
use gdsrec::eval::{self, EvalOptions, EvalReport};
use gdsrec::graph::build_graph;
use gdsrec::synthetic::{generate, SyntheticSpec};
use gdsrec::{Predictor, Task, TrainConfig, VariantFlags};

pub fn run_example(max_epochs: usize, threshold: u8) -> gdsrec::Result<EvalReport> {
    let synth = generate(&SyntheticSpec::default())?;
    let bundle = split_dataset(&synth.raw, 0.6, 11)?;
    let graph = build_graph(&bundle, 1);
    let config = TrainConfig {
        dim: 16,
        task: Task::Ranking,
        threshold,
        max_epochs,
        learning_rate: 1e-3,
        seed: 11,
        ..Default::default()
    };
    let flags = VariantFlags::default();
    let out = gdsrec::train::fit_with(&bundle, &graph, &config, &flags, |r| {
        println!(
            "epoch {:>2}  bce {:.4}  val bce {:.4}  scores in [{:.3}, {:.3}]",
            r.epoch, r.train_loss, r.val_loss, r.val_score_min, r.val_score_max
        );
    })?;
    let predictor = Predictor::for_pairs(
        &out.params,
        &graph,
        &bundle,
        &flags,
        bundle.test.iter().map(|r| (r.user, r.item)),
    );
    let opts = EvalOptions { threshold, keep_rankings: true, ..Default::default() };
    let report = eval::evaluate(&predictor, &bundle.test, &opts)?;
    if let Some(first) = report.rankings.as_ref().and_then(|r| r.first()) {
        println!("user {} ranked items {:?} labels {:?}", first.user, first.items, first.labels);
    }
    println!("{report}");
    Ok(report)
}

fn main() -> gdsrec::Result<()> {
    run_example(20, 4).map(|_| ())
}
