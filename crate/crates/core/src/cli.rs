//! Command-line front end. Flags override values from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::config::RunConfig;
use crate::data::Split;
use crate::error::{Error, Result};
use crate::model::{AttentionMode, Variant};
use crate::train::Task;

/// Environment variable holding the log filter (`info`, `debug`, ...).
pub const LOG_ENV: &str = "GDSREC_LOG";

fn parse<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gdsrec", version, about = "Decentralized graph collaborative filtering for social recommendation")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the split, initialization and node dropout.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding the ratings and trust files.
    #[arg(long, global = true)]
    pub dataset_dir: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse::<Task>)]
    pub task: Option<Task>,
    /// Rating threshold for positives.
    #[arg(long = "F", global = true, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub threshold: Option<u8>,
    #[arg(long, global = true, value_parser = parse::<Variant>)]
    pub variant: Option<Variant>,
    #[arg(long, global = true, value_parser = parse::<AttentionMode>)]
    pub attention: Option<AttentionMode>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Rating-agreement threshold for relationship coefficients.
    #[arg(long, global = true)]
    pub delta: Option<u8>,
    /// Node-dropout cap.
    #[arg(long = "K", global = true)]
    pub neighbor_cap: Option<usize>,
    /// Embedding size.
    #[arg(long = "D", global = true)]
    pub dim: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the data, build the decentralized graph, print dataset statistics.
    Preprocess,
    /// Train with early stopping; writes checkpoint.json and metrics.jsonl.
    Train,
    /// Score a checkpoint on a split.
    Evaluate {
        /// Defaults to <out>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Clamp reported predictions to [1, 5].
        #[arg(long)]
        clamp: bool,
    },
    /// Train and test every sweep cell from the config.
    Ablate {
        /// Run cells concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.task {
            t.task = v;
        }
        if let Some(v) = self.threshold {
            t.threshold = v;
        }
        if let Some(v) = self.delta {
            t.delta = v;
        }
        if let Some(v) = self.neighbor_cap {
            t.neighbor_cap = v;
        }
        if let Some(v) = self.dim {
            t.dim = v;
        }
        if let Some(v) = self.epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.lr {
            t.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.variant {
            v.apply(&mut cfg.variant);
        }
        if let Some(v) = self.attention {
            cfg.variant.attention = v;
        }
        if let Some(v) = self.alpha {
            cfg.variant.alpha = v;
        }
        if let Some(v) = &self.dataset_dir {
            cfg.data.dataset_dir = v.clone();
        }
        if let Some(v) = self.train_fraction {
            cfg.data.train_fraction = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        match self.command {
            Command::Evaluate { clamp: true, .. } => cfg.clamp_predictions = true,
            Command::Ablate { parallel: true } => cfg.sweep.parallel = true,
            _ => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first) and runs the command, printing
/// results to stdout.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    run(&cli)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Preprocess => {
            let (prep, stats) = commands::preprocess(&cfg)?;
            println!("{stats}");
            println!("dataset hash {}", prep.dataset_hash);
        }
        Command::Train => {
            let s = commands::train(&cfg)?;
            println!(
                "trained {} epochs (best {}{}); checkpoint {}",
                s.epochs,
                s.best_epoch,
                if s.stopped_early { ", stopped early" } else { "" },
                s.checkpoint_hash
            );
        }
        Command::Evaluate { checkpoint, split, .. } => {
            let rec = commands::evaluate(&cfg, checkpoint.as_deref(), (*split).into())?;
            println!("{}", rec.report);
        }
        Command::Ablate { .. } => {
            let table = commands::ablate(&cfg)?;
            print!("{table}");
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}
