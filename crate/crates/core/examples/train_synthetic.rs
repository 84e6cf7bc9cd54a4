//! Train on seeded synthetic data and compare test MAE against predicting
//! the global training mean.
//!
//! ```text
//! cargo run --release --example train_synthetic
//! ```

use gdsrec::data::split_dataset;
use gdsrec::eval::{self, EvalOptions};
use gdsrec::graph::build_graph;
use gdsrec::synthetic::{generate, SyntheticSpec};
use gdsrec::{Predictor, TrainConfig, VariantFlags};

pub fn run_example(max_epochs: usize) -> gdsrec::Result<(f64, f64)> {
    let synth = generate(&SyntheticSpec::default())?;
    let bundle = split_dataset(&synth.raw, 0.6, 7)?;
    let graph = build_graph(&bundle, 1);
    let config = TrainConfig {
        dim: 32,
        max_epochs,
        seed: 7,
        ..Default::default()
    };
    let flags = VariantFlags::default();
    let out = gdsrec::train::fit_with(&bundle, &graph, &config, &flags, |r| {
        println!(
            "epoch {:>2}  train {:.4}  val MAE {:.4}  RMSE {:.4}",
            r.epoch, r.train_loss, r.val_mae, r.val_rmse
        );
    })?;

    let pairs = bundle.test.iter().map(|r| (r.user, r.item));
    let predictor = Predictor::for_pairs(&out.params, &graph, &bundle, &flags, pairs);
    let report = eval::evaluate(&predictor, &bundle.test, &EvalOptions::default())?;
    let baseline: f64 = bundle
        .test
        .iter()
        .map(|r| (r.rating as f64 - bundle.global_mean).abs())
        .sum::<f64>()
        / bundle.test.len() as f64;
    println!("best epoch {}", out.best_epoch);
    println!("{report}");
    println!("global-mean MAE {baseline:.4}");
    Ok((report.mae, baseline))
}

fn main() -> gdsrec::Result<()> {
    run_example(50).map(|_| ())
}
