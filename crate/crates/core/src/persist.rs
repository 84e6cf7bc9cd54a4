//! Versioned on-disk artifacts: preprocessed bundle, decentralized graph,
//! checkpoints and the metrics log. All are JSON; floats round-trip exactly.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetBundle, IdMap, RatingRecord, TrustEdge};
use crate::error::{Error, Result};
use crate::graph::DecentralizedGraph;
use crate::model::{ModelParams, VariantFlags};
use crate::train::{EpochReport, RmsProp, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

const BUNDLE_FORMAT: &str = "gdsrec-bundle";
const GRAPH_FORMAT: &str = "gdsrec-graph";
const CHECKPOINT_FORMAT: &str = "gdsrec-checkpoint";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn check_format(path: &Path, found: &str, version: u32, want: &str) -> Result<()> {
    if found != want {
        return Err(Error::Format(format!(
            "{}: expected a {want} file, found {found:?}",
            path.display()
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported {want} version {version} (this build reads {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

type Triple = (usize, usize, u8);

#[derive(Serialize, Deserialize)]
struct BundleBody {
    users: IdMap,
    items: IdMap,
    rated_users: usize,
    train_fraction: f64,
    split_seed: u64,
    train: Vec<Triple>,
    validation: Vec<Triple>,
    test: Vec<Triple>,
    trust: Vec<(usize, usize, bool)>,
}

impl BundleBody {
    fn of(b: &DatasetBundle) -> Self {
        let triples = |rs: &[RatingRecord]| rs.iter().map(|r| (r.user, r.item, r.rating)).collect();
        BundleBody {
            users: b.users.clone(),
            items: b.items.clone(),
            rated_users: b.rated_users,
            train_fraction: b.train_fraction,
            split_seed: b.split_seed,
            train: triples(&b.train),
            validation: triples(&b.validation),
            test: triples(&b.test),
            trust: b
                .trust
                .iter()
                .map(|e| (e.src, e.dst, e.unrated_endpoint))
                .collect(),
        }
    }

    fn into_bundle(self) -> Result<DatasetBundle> {
        let records = |ts: Vec<Triple>| {
            ts.into_iter()
                .map(|(user, item, rating)| RatingRecord { user, item, rating })
                .collect()
        };
        DatasetBundle::from_parts(
            self.users,
            self.items,
            self.rated_users,
            records(self.train),
            records(self.validation),
            records(self.test),
            self.trust
                .into_iter()
                .map(|(src, dst, unrated_endpoint)| TrustEdge {
                    src,
                    dst,
                    unrated_endpoint,
                })
                .collect(),
            self.train_fraction,
            self.split_seed,
        )
    }
}

/// Hash of the bundle's content (ids, splits, trust edges, split settings).
pub fn dataset_hash(bundle: &DatasetBundle) -> String {
    let bytes = serde_json::to_vec(&BundleBody::of(bundle)).expect("bundle serializes");
    sha256_hex(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleHeader {
    pub format: String,
    pub version: u32,
    pub num_users: usize,
    pub num_items: usize,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub delta: u8,
    pub dataset_hash: String,
}

#[derive(Serialize, Deserialize)]
struct BundleFile {
    header: BundleHeader,
    body: BundleBody,
}

pub fn write_bundle(path: &Path, bundle: &DatasetBundle, delta: u8) -> Result<BundleHeader> {
    let header = BundleHeader {
        format: BUNDLE_FORMAT.into(),
        version: FORMAT_VERSION,
        num_users: bundle.num_users(),
        num_items: bundle.num_items(),
        split_seed: bundle.split_seed,
        train_fraction: bundle.train_fraction,
        delta,
        dataset_hash: dataset_hash(bundle),
    };
    write_json(
        path,
        &BundleFile {
            header: header.clone(),
            body: BundleBody::of(bundle),
        },
    )?;
    Ok(header)
}

pub fn read_bundle(path: &Path) -> Result<(DatasetBundle, BundleHeader)> {
    let file: BundleFile = read_json(path)?;
    check_format(path, &file.header.format, file.header.version, BUNDLE_FORMAT)?;
    let header = file.header;
    let bundle = file.body.into_bundle()?;
    let hash = dataset_hash(&bundle);
    if hash != header.dataset_hash {
        return Err(Error::Format(format!(
            "{}: content hash {hash} does not match header {}",
            path.display(),
            header.dataset_hash
        )));
    }
    Ok((bundle, header))
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    dataset_hash: String,
    graph: DecentralizedGraph,
}

pub fn write_graph(path: &Path, graph: &DecentralizedGraph, dataset_hash: &str) -> Result<()> {
    write_json(
        path,
        &GraphFile {
            format: GRAPH_FORMAT.into(),
            version: FORMAT_VERSION,
            dataset_hash: dataset_hash.into(),
            graph: graph.clone(),
        },
    )
}

/// Returns the graph and the hash of the dataset it was built from.
pub fn read_graph(path: &Path) -> Result<(DecentralizedGraph, String)> {
    let file: GraphFile = read_json(path)?;
    check_format(path, &file.format, file.version, GRAPH_FORMAT)?;
    Ok((file.graph, file.dataset_hash))
}

/// Where a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub delta: u8,
    pub neighbor_cap: usize,
    pub dim: usize,
    pub split_seed: u64,
    pub train_fraction: f64,
}

/// Node dropout and shuffling are counter-based, so `(seed, next_epoch)`
/// is the whole random state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub next_epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub epoch: usize,
    pub provenance: Provenance,
    pub flags: VariantFlags,
    pub config: TrainConfig,
    pub rng: RngState,
    pub params: ModelParams,
    pub optimizer: RmsProp,
}

impl Checkpoint {
    pub fn new(
        bundle: &DatasetBundle,
        config: &TrainConfig,
        flags: &VariantFlags,
        epoch: usize,
        params: ModelParams,
        optimizer: RmsProp,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: FORMAT_VERSION,
            epoch,
            provenance: Provenance {
                dataset_hash: dataset_hash(bundle),
                delta: config.delta,
                neighbor_cap: config.neighbor_cap,
                dim: config.dim,
                split_seed: bundle.split_seed,
                train_fraction: bundle.train_fraction,
            },
            flags: *flags,
            config: config.clone(),
            rng: RngState {
                seed: config.seed,
                next_epoch: epoch as u64 + 1,
            },
            params,
            optimizer,
        }
    }

    /// Refuses checkpoints trained on different data.
    pub fn check_dataset(&self, bundle: &DatasetBundle) -> Result<()> {
        let found = dataset_hash(bundle);
        if found != self.provenance.dataset_hash {
            return Err(Error::HashMismatch {
                expected: self.provenance.dataset_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<String> {
    write_json(path, ckpt)?;
    file_hash(path)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = read_json(path)?;
    check_format(path, &ckpt.format, ckpt.version, CHECKPOINT_FORMAT)?;
    let p = &ckpt.params;
    let shapes_ok = p.user_embed.cols == p.dim
        && p.item_embed.cols == p.dim
        && p.groups().iter().all(|(_, m)| m.data.len() == m.rows * m.cols);
    if !shapes_ok {
        return Err(Error::Format(format!("{}: inconsistent parameter shapes", path.display())));
    }
    Ok(ckpt)
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLine {
    pub v: u32,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
    pub val_rmse: Option<f64>,
    pub val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_score_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_score_max: Option<f64>,
}

impl From<&EpochReport> for MetricsLine {
    fn from(r: &EpochReport) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        MetricsLine {
            v: FORMAT_VERSION,
            epoch: r.epoch,
            train_loss: r.train_loss,
            val_mae: finite(r.val_mae),
            val_rmse: finite(r.val_rmse),
            val_loss: finite(r.val_loss),
            val_score_min: finite(r.val_score_min),
            val_score_max: finite(r.val_score_max),
        }
    }
}

/// Wall-clock time per epoch, kept apart from the metrics log so that log
/// stays a pure function of data, config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLine {
    pub v: u32,
    pub epoch: usize,
    pub wall_time: f64,
}

pub fn metrics_line(report: &EpochReport) -> String {
    serde_json::to_string(&MetricsLine::from(report)).expect("metrics serialize")
}

pub fn timing_line(report: &EpochReport) -> String {
    serde_json::to_string(&TimingLine {
        v: FORMAT_VERSION,
        epoch: report.epoch,
        wall_time: report.wall_time,
    })
    .expect("timing serialize")
}

pub fn read_metrics_log(path: &Path) -> Result<Vec<MetricsLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
