//! Write synthetic ratings/trust files, then run preprocess → train →
//! evaluate exactly as the CLI does, leaving every artifact on disk.
//!
//! ```text
//! cargo run --example pipeline -- /tmp/gdsrec-demo
//! ```

use std::path::Path;

use gdsrec::commands::{self, RunRecord, TrainSummary};
use gdsrec::data::Split;
use gdsrec::synthetic::{generate, write_files, SyntheticSpec};
use gdsrec::RunConfig;

pub fn run_example(dir: &Path, max_epochs: usize) -> gdsrec::Result<(TrainSummary, RunRecord)> {
    let synth = generate(&SyntheticSpec::default())?;
    write_files(&synth.raw, &dir.join("data"))?;

    let mut cfg = RunConfig::default();
    cfg.data.dataset_dir = dir.join("data");
    cfg.output_dir = dir.join("out");
    cfg.train.dim = 16;
    cfg.train.max_epochs = max_epochs;

    let (_, stats) = commands::preprocess(&cfg)?;
    println!("{stats}");
    let summary = commands::train(&cfg)?;
    println!("best epoch {} of {}", summary.best_epoch, summary.epochs);
    let record = commands::evaluate(&cfg, None, Split::Test)?;
    println!("{}", record.report);
    Ok((summary, record))
}

fn main() -> gdsrec::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "gdsrec_demo".into());
    run_example(Path::new(&dir), 10).map(|_| ())
}
