//! The four pipeline steps behind the CLI: preprocess, train, evaluate,
//! ablate. Each reads a [`RunConfig`] and writes its artifacts under
//! `output_dir`.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{split_dataset, DatasetBundle, RawDataset, Split};
use crate::error::{Error, Result};
use crate::eval::{self, EvalOptions, EvalReport};
use crate::graph::{build_graph, DecentralizedGraph};
use crate::model::{Predictor, VariantFlags};
use crate::persist::{self, Checkpoint};
use crate::train::{self, TrainConfig};

/// File names inside the output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn bundle(&self) -> PathBuf {
        self.dir.join("bundle.json")
    }
    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }
    pub fn timings(&self) -> PathBuf {
        self.dir.join("timings.jsonl")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.toml")
    }
    pub fn report_text(&self) -> PathBuf {
        self.dir.join("report.txt")
    }
    pub fn report_json(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn ablation_text(&self) -> PathBuf {
        self.dir.join("ablation.txt")
    }
    pub fn ablation_json(&self) -> PathBuf {
        self.dir.join("ablation.json")
    }

    fn ensure(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub relations: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Users that appear only in the trust file.
    pub trust_only_users: usize,
}

impl DatasetStats {
    pub fn of(bundle: &DatasetBundle) -> Self {
        DatasetStats {
            users: bundle.num_users(),
            items: bundle.num_items(),
            ratings: bundle.train.len() + bundle.validation.len() + bundle.test.len(),
            relations: bundle.trust.len(),
            train: bundle.train.len(),
            validation: bundle.validation.len(),
            test: bundle.test.len(),
            trust_only_users: bundle.num_users() - bundle.rated_users,
        }
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "users", self.users)?;
        writeln!(f, "{:<12} {:>10}", "items", self.items)?;
        writeln!(f, "{:<12} {:>10}", "ratings", self.ratings)?;
        writeln!(f, "{:<12} {:>10}", "relations", self.relations)?;
        write!(
            f,
            "{:<12} {:>10}  (train {} / validation {} / test {}; {} trust-only users)",
            "split", "", self.train, self.validation, self.test, self.trust_only_users
        )
    }
}

pub struct Prepared {
    pub bundle: DatasetBundle,
    pub graph: DecentralizedGraph,
    pub dataset_hash: String,
}

/// Reads the raw files, splits, builds the graph and writes both artifacts.
pub fn preprocess(cfg: &RunConfig) -> Result<(Prepared, DatasetStats)> {
    cfg.validate()?;
    let raw = RawDataset::load(
        cfg.data.ratings_path(),
        cfg.data.trust_path(),
        cfg.data.delimiter,
        cfg.data.duplicates,
    )?;
    if raw.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop trust edges", raw.self_loops_dropped);
    }
    let flagged = raw.flagged_trust_edges();
    if flagged > 0 {
        log::warn!("{flagged} trust edges touch users without ratings");
    }
    let bundle = split_dataset(&raw, cfg.data.train_fraction, cfg.train.seed)?;
    let graph = build_graph(&bundle, cfg.train.delta);
    let art = Artifacts::new(&cfg.output_dir);
    art.ensure()?;
    let header = persist::write_bundle(&art.bundle(), &bundle, cfg.train.delta)?;
    persist::write_graph(&art.graph(), &graph, &header.dataset_hash)?;
    let stats = DatasetStats::of(&bundle);
    Ok((
        Prepared {
            bundle,
            graph,
            dataset_hash: header.dataset_hash,
        },
        stats,
    ))
}

/// Uses existing artifacts when they match the config, otherwise
/// preprocesses. A stored graph built with another δ is rebuilt in memory.
pub fn load_or_preprocess(cfg: &RunConfig) -> Result<Prepared> {
    let art = Artifacts::new(&cfg.output_dir);
    if !art.bundle().exists() {
        log::info!("no bundle in {}; preprocessing", art.dir.display());
        return preprocess(cfg).map(|(p, _)| p);
    }
    let (bundle, header) = persist::read_bundle(&art.bundle())?;
    if header.split_seed != cfg.train.seed || header.train_fraction != cfg.data.train_fraction {
        log::info!("bundle split settings differ from config; preprocessing again");
        return preprocess(cfg).map(|(p, _)| p);
    }
    let graph = match art.graph().exists() {
        true => {
            let (graph, hash) = persist::read_graph(&art.graph())?;
            (hash == header.dataset_hash && graph.delta == cfg.train.delta).then_some(graph)
        }
        false => None,
    };
    let graph = graph.unwrap_or_else(|| build_graph(&bundle, cfg.train.delta));
    Ok(Prepared {
        bundle,
        graph,
        dataset_hash: header.dataset_hash,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub checkpoint_hash: String,
    pub dataset_hash: String,
}

/// Trains with early stopping and writes the best checkpoint, the metrics
/// log, the timings log and the effective config.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let prep = load_or_preprocess(cfg)?;
    let art = Artifacts::new(&cfg.output_dir);
    art.ensure()?;
    cfg.save(&art.config())?;

    let open = |p: PathBuf| -> Result<(BufWriter<fs::File>, PathBuf)> {
        let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        Ok((BufWriter::new(f), p))
    };
    let (mut metrics, metrics_path) = open(art.metrics())?;
    let (mut timings, timings_path) = open(art.timings())?;
    let mut io_err = None;
    let outcome = train::fit_with(&prep.bundle, &prep.graph, &cfg.train, &cfg.variant, |r| {
        let res = writeln!(metrics, "{}", persist::metrics_line(r))
            .and_then(|_| metrics.flush())
            .map_err(|e| Error::io(&metrics_path, e))
            .and_then(|_| {
                writeln!(timings, "{}", persist::timing_line(r)).map_err(|e| Error::io(&timings_path, e))
            });
        if let Err(e) = res {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    timings.flush().map_err(|e| Error::io(&timings_path, e))?;

    let ckpt = Checkpoint::new(
        &prep.bundle,
        &cfg.train,
        &cfg.variant,
        outcome.best_epoch,
        outcome.params,
        outcome.optimizer,
    );
    let checkpoint_hash = persist::write_checkpoint(&art.checkpoint(), &ckpt)?;
    Ok(TrainSummary {
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        checkpoint_hash,
        dataset_hash: prep.dataset_hash,
    })
}

/// Machine-readable evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub report: EvalReport,
    pub split: Split,
    pub dataset_hash: String,
    pub checkpoint_hash: String,
    pub seed: u64,
    pub flags: VariantFlags,
    pub config: TrainConfig,
}

/// Scores a checkpoint on one split. Refuses checkpoints trained on a
/// different dataset.
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<RunRecord> {
    let art = Artifacts::new(&cfg.output_dir);
    let ckpt_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| art.checkpoint());
    let ckpt = persist::read_checkpoint(&ckpt_path)?;
    let prep = load_or_preprocess(cfg)?;
    ckpt.check_dataset(&prep.bundle)?;
    let graph = if prep.graph.delta == ckpt.provenance.delta {
        prep.graph
    } else {
        build_graph(&prep.bundle, ckpt.provenance.delta)
    };
    let records = prep.bundle.split(split);
    let predictor = Predictor::for_pairs(
        &ckpt.params,
        &graph,
        &prep.bundle,
        &ckpt.flags,
        records.iter().map(|r| (r.user, r.item)),
    );
    let report = eval::evaluate(
        &predictor,
        records,
        &EvalOptions {
            threshold: cfg.train.threshold,
            keep_rankings: false,
            clamp: cfg.clamp_predictions,
        },
    )?;
    let record = RunRecord {
        report,
        split,
        dataset_hash: prep.dataset_hash,
        checkpoint_hash: persist::file_hash(&ckpt_path)?,
        seed: ckpt.config.seed,
        flags: ckpt.flags,
        config: ckpt.config,
    };
    art.ensure()?;
    write_text(&art.report_text(), &format!("{}\n", record.report))?;
    write_pretty(&art.report_json(), &record)?;
    Ok(record)
}

/// One cell of an ablation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// Which axis this row varies: `base`, `variant`, `attention`, `alpha`,
    /// `delta` or `K`.
    pub block: String,
    pub setting: String,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub recall_at_5: Option<f64>,
    pub ndcg: Option<f64>,
    pub epochs: Option<usize>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn block(&self, name: &str) -> impl Iterator<Item = &AblationRow> {
        let name = name.to_string();
        self.rows.iter().filter(move |r| r.block == name)
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:<10} {:>8} {:>8} {:>9} {:>8} {:>7}",
            "block", "setting", "MAE", "RMSE", "Recall@5", "NDCG", "epochs"
        )?;
        let cell = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            match &r.error {
                Some(e) => writeln!(f, "{:<10} {:<10} failed: {e}", r.block, r.setting)?,
                None => writeln!(
                    f,
                    "{:<10} {:<10} {:>8} {:>8} {:>9} {:>8} {:>7}",
                    r.block,
                    r.setting,
                    cell(r.mae),
                    cell(r.rmse),
                    cell(r.recall_at_5),
                    cell(r.ndcg),
                    r.epochs.map_or("-".into(), |e| e.to_string())
                )?,
            }
        }
        Ok(())
    }
}

struct Cell {
    block: &'static str,
    setting: String,
    train: TrainConfig,
    flags: VariantFlags,
}

fn sweep_cells(cfg: &RunConfig) -> Vec<Cell> {
    let base = |block, setting: String| Cell {
        block,
        setting,
        train: cfg.train.clone(),
        flags: cfg.variant,
    };
    let mut cells = vec![base("base", cfg.variant.label())];
    for &v in &cfg.sweep.variants {
        let mut c = base("variant", v.to_string());
        v.apply(&mut c.flags);
        cells.push(c);
    }
    for &a in &cfg.sweep.attention {
        let mut c = base("attention", a.to_string());
        c.flags.attention = a;
        cells.push(c);
    }
    for &a in &cfg.sweep.alpha {
        let mut c = base("alpha", format!("{a}"));
        c.flags.alpha = a;
        cells.push(c);
    }
    for &d in &cfg.sweep.delta {
        let mut c = base("delta", d.to_string());
        c.train.delta = d;
        cells.push(c);
    }
    for &k in &cfg.sweep.neighbor_cap {
        let mut c = base("K", k.to_string());
        c.train.neighbor_cap = k;
        cells.push(c);
    }
    cells
}

fn run_cell(bundle: &DatasetBundle, graph: &DecentralizedGraph, cell: &Cell, cfg: &RunConfig) -> AblationRow {
    let attempt = || -> Result<(EvalReport, usize, usize)> {
        let rebuilt;
        let graph = if graph.delta == cell.train.delta {
            graph
        } else {
            rebuilt = build_graph(bundle, cell.train.delta);
            &rebuilt
        };
        let out = train::fit(bundle, graph, &cell.train, &cell.flags)?;
        let predictor = Predictor::for_pairs(
            &out.params,
            graph,
            bundle,
            &cell.flags,
            bundle.test.iter().map(|r| (r.user, r.item)),
        );
        let report = eval::evaluate(
            &predictor,
            &bundle.test,
            &EvalOptions {
                threshold: cell.train.threshold,
                keep_rankings: false,
                clamp: cfg.clamp_predictions,
            },
        )?;
        Ok((report, out.history.len(), out.best_epoch))
    };
    let mut row = AblationRow {
        block: cell.block.into(),
        setting: cell.setting.clone(),
        mae: None,
        rmse: None,
        recall_at_5: None,
        ndcg: None,
        epochs: None,
        best_epoch: None,
        error: None,
    };
    match attempt() {
        Ok((rep, epochs, best)) => {
            row.mae = Some(rep.mae);
            row.rmse = Some(rep.rmse);
            row.recall_at_5 = Some(rep.recall_at_5);
            row.ndcg = Some(rep.ndcg);
            row.epochs = Some(epochs);
            row.best_epoch = Some(best);
        }
        Err(e) => {
            log::warn!("cell {} = {} failed: {e}", cell.block, cell.setting);
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Trains and tests the base configuration plus one row per sweep value,
/// all from the same seed. A failing cell is recorded and the sweep goes on.
pub fn ablate(cfg: &RunConfig) -> Result<AblationTable> {
    cfg.validate()?;
    if cfg.sweep.is_empty() {
        return Err(Error::Config("the sweep is empty; nothing to ablate".into()));
    }
    let prep = load_or_preprocess(cfg)?;
    let cells = sweep_cells(cfg);
    log::info!("ablation: {} cells", cells.len());
    let rows: Vec<AblationRow> = if cfg.sweep.parallel {
        cells
            .par_iter()
            .map(|c| run_cell(&prep.bundle, &prep.graph, c, cfg))
            .collect()
    } else {
        cells
            .iter()
            .map(|c| run_cell(&prep.bundle, &prep.graph, c, cfg))
            .collect()
    };
    let table = AblationTable { rows };
    let art = Artifacts::new(&cfg.output_dir);
    art.ensure()?;
    write_text(&art.ablation_text(), &table.to_string())?;
    write_pretty(&art.ablation_json(), &table)?;
    Ok(table)
}
