//! Graph-based decentralized collaborative filtering for social
//! recommendation.
//!
//! Each user and item sees the world through its own small neighborhood:
//! the items a user rated (tagged with how far the rating sits from the
//! item's average), the users who rated an item, and the users a user
//! trusts, weighted by how often they agreed. Offsets learned from those
//! neighborhoods are added to a benchmark built from the average ratings.
//!
//! ```no_run
//! use gdsrec::{data, graph, train, model};
//! let raw = data::RawDataset::load("ratings.txt", "trust.txt",
//!     data::Delimiter::Auto, data::DuplicatePolicy::Reject)?;
//! let bundle = data::split_dataset(&raw, 0.6, 42)?;
//! let g = graph::build_graph(&bundle, 1);
//! let cfg = train::TrainConfig { dim: 32, ..Default::default() };
//! let out = train::fit(&bundle, &g, &cfg, &model::VariantFlags::default())?;
//! # Ok::<(), gdsrec::Error>(())
//! ```

pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod persist;
pub mod synthetic;
pub mod train;

pub use config::RunConfig;
pub use data::{DatasetBundle, RatingRecord, RawDataset};
pub use error::{Error, Result};
pub use graph::DecentralizedGraph;
pub use model::{AttentionMode, ModelParams, Predictor, Variant, VariantFlags};
pub use train::{Task, TrainConfig};
