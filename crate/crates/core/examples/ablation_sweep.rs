//! Ablation table on synthetic data: the base model, the RC/SN/RD variants,
//! the avg/max attention rules and a few α values, each trained from the
//! same seed.

use gdsrec::commands::{self, AblationTable};
use gdsrec::config::SweepConfig;
use gdsrec::synthetic::{generate, write_files, SyntheticSpec};
use gdsrec::{AttentionMode, RunConfig, Variant};

pub fn run_example(dir: &std::path::Path, max_epochs: usize) -> gdsrec::Result<AblationTable> {
    let synth = generate(&SyntheticSpec { users: 30, items: 40, ..Default::default() })?;
    write_files(&synth.raw, &dir.join("data"))?;

    let mut cfg = RunConfig::default();
    cfg.data.dataset_dir = dir.join("data");
    cfg.output_dir = dir.join("out");
    cfg.train.dim = 16;
    cfg.train.max_epochs = max_epochs;
    cfg.train.learning_rate = 1e-3;
    cfg.sweep = SweepConfig {
        variants: vec![Variant::Rc, Variant::Sn, Variant::Rd],
        attention: vec![AttentionMode::UniformAvg, AttentionMode::Max],
        alpha: vec![0.0, 1.0, 1.6],
        delta: vec![0, 3],
        neighbor_cap: vec![5],
        parallel: true,
    };
    let table = commands::ablate(&cfg)?;
    print!("{table}");
    Ok(table)
}

fn main() -> gdsrec::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "ablation_demo".into());
    run_example(std::path::Path::new(&dir), 15).map(|_| ())
}
