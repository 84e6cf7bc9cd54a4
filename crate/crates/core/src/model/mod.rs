//! Learnable components and the prediction path.
//!
//! A user's latent offset aggregates its rated items, each encoded together
//! with the rating-difference embedding of that edge; an item's offset does
//! the same over its raters. A shared three-layer head turns a
//! `(user offset, item offset)` pair into a signed preference rating, and the
//! final prediction adds the averaged preference ratings of the user and its
//! social neighbors to the mean-rating benchmark.

mod forward;
mod layers;
mod params;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forward::{
    difference_row, offset_backward, offset_trace, pair_backward, pair_trace, social_term_weights,
    Forward, OffsetTrace, PairGradients, PairTrace, Side, SocialTerm,
};
pub use layers::{
    argmax, attention_weights, attention_weights_backward, softmax, AttentionTrace, EncoderTrace,
    HeadTrace,
};
pub use params::{
    Affine, Attention, Encoder, Gradients, Head, Matrix, ModelParams, Network,
};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::graph::{DecentralizedGraph, NeighborSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub enum AttentionMode {
    #[default]
    #[serde(rename = "softmax")]
    Softmax,
    #[serde(rename = "avg")]
    UniformAvg,
    #[serde(rename = "max")]
    Max,
}

impl std::str::FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(AttentionMode::Softmax),
            "avg" | "uniform" | "uniform_avg" => Ok(AttentionMode::UniformAvg),
            "max" => Ok(AttentionMode::Max),
            other => Err(Error::Config(format!("unknown attention mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionMode::Softmax => "softmax",
            AttentionMode::UniformAvg => "avg",
            AttentionMode::Max => "max",
        })
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantFlags {
    /// Equal social weights instead of relationship coefficients.
    pub rc_off: bool,
    /// Drop the social term: `f(u, v) = r^p(u, v)`.
    pub sn_off: bool,
    /// Index the difference table by raw rating instead of level.
    pub rd_raw: bool,
    pub attention: AttentionMode,
    /// Weight of the mean-rating benchmark.
    pub alpha: f64,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            rc_off: false,
            sn_off: false,
            rd_raw: false,
            attention: AttentionMode::Softmax,
            alpha: 1.0,
        }
    }
}

impl VariantFlags {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Short label such as `base`, `rc`, `sn+max`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.rc_off {
            parts.push("rc".to_string());
        }
        if self.sn_off {
            parts.push("sn".to_string());
        }
        if self.rd_raw {
            parts.push("rd".to_string());
        }
        if self.attention != AttentionMode::Softmax {
            parts.push(self.attention.to_string());
        }
        if parts.is_empty() {
            "base".into()
        } else {
            parts.join("+")
        }
    }
}

/// Named structural variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Base,
    Rc,
    Sn,
    Rd,
}

impl Variant {
    pub fn apply(self, flags: &mut VariantFlags) {
        flags.rc_off = self == Variant::Rc;
        flags.sn_off = self == Variant::Sn;
        flags.rd_raw = self == Variant::Rd;
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Rc => "rc",
            Variant::Sn => "sn",
            Variant::Rd => "rd",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "rc" => Ok(Variant::Rc),
            "sn" => Ok(Variant::Sn),
            "rd" => Ok(Variant::Rd),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// `x_il = L_U(q_l ⊕ s_level)`.
pub fn encode_user_interaction(params: &ModelParams, item: usize, level: usize) -> Vec<f64> {
    params
        .net
        .user_encoder
        .forward(params.item_embed.row(item), params.diff_embed.row(level))
        .output
}

/// `y_jk = L_I(p_k ⊕ s_level)`.
pub fn encode_item_interaction(params: &ModelParams, user: usize, level: usize) -> Vec<f64> {
    params
        .net
        .item_encoder
        .forward(params.user_embed.row(user), params.diff_embed.row(level))
        .output
}

/// Attention weights over `u`'s encoded interactions.
pub fn attention_user(
    params: &ModelParams,
    user: usize,
    interactions: &[Vec<f64>],
    mode: AttentionMode,
) -> Vec<f64> {
    let own = params.user_embed.row(user);
    let scores: Vec<f64> = interactions
        .iter()
        .map(|x| params.net.user_attention.forward(x, own).score)
        .collect();
    attention_weights(&scores, mode)
}

pub fn user_offset(
    params: &ModelParams,
    graph: &DecentralizedGraph,
    flags: &VariantFlags,
    user: usize,
    sampler: &NeighborSampler,
) -> Vec<f64> {
    let edges = sampler.user_items(graph, user);
    offset_trace(params, flags, Side::User, user, &edges, graph.user_items(user).len()).offset
}

pub fn item_offset(
    params: &ModelParams,
    graph: &DecentralizedGraph,
    flags: &VariantFlags,
    item: usize,
    sampler: &NeighborSampler,
) -> Vec<f64> {
    let edges = sampler.item_users(graph, item);
    offset_trace(params, flags, Side::Item, item, &edges, graph.item_users(item).len()).offset
}

pub fn preference_rating(params: &ModelParams, h_user: &[f64], h_item: &[f64]) -> f64 {
    params.net.head.forward(h_user, h_item).output
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rating prediction for one pair with full neighborhoods.
pub fn predict(
    user: usize,
    item: usize,
    graph: &DecentralizedGraph,
    bundle: &DatasetBundle,
    params: &ModelParams,
    flags: &VariantFlags,
) -> f64 {
    let fwd = Forward {
        params,
        graph,
        bundle,
        flags,
        sampler: NeighborSampler::full(),
    };
    let h_u = fwd.user_offset(user).offset;
    let h_v = fwd.item_offset(item).offset;
    let social: Vec<(usize, f64, Vec<f64>)> = fwd
        .social(user)
        .into_iter()
        .map(|(k, w)| (k, w, fwd.user_offset(k).offset))
        .collect();
    let refs: Vec<(usize, f64, &[f64])> =
        social.iter().map(|(k, w, h)| (*k, *w, h.as_slice())).collect();
    pair_trace(params, bundle, flags, user, item, &h_u, &h_v, &refs).prediction
}

/// `sigmoid(x)` kept strictly inside (0, 1); plain `sigmoid` rounds to
/// exactly 1.0 (or underflows to 0.0) for large `|x|`.
pub fn ranking_score(x: f64) -> f64 {
    sigmoid(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `sigmoid(r̂)`, the ranking-task score.
pub fn predict_ranking_score(
    user: usize,
    item: usize,
    graph: &DecentralizedGraph,
    bundle: &DatasetBundle,
    params: &ModelParams,
    flags: &VariantFlags,
) -> f64 {
    ranking_score(predict(user, item, graph, bundle, params, flags))
}

/// Evaluation-time predictor: offsets are computed once, with full
/// neighborhoods, for every user and item a query can touch.
pub struct Predictor<'a> {
    params: &'a ModelParams,
    bundle: &'a DatasetBundle,
    graph: &'a DecentralizedGraph,
    flags: VariantFlags,
    user_offsets: Vec<Option<Vec<f64>>>,
    item_offsets: Vec<Option<Vec<f64>>>,
}

impl<'a> Predictor<'a> {
    /// Precomputes offsets for the users and items in `pairs` (and the
    /// social neighbors of those users).
    pub fn for_pairs(
        params: &'a ModelParams,
        graph: &'a DecentralizedGraph,
        bundle: &'a DatasetBundle,
        flags: &VariantFlags,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut users = BTreeSet::new();
        let mut items = BTreeSet::new();
        for (u, v) in pairs {
            users.insert(u);
            items.insert(v);
            if !flags.sn_off {
                users.extend(graph.social(u).iter().map(|e| e.neighbor));
            }
        }
        let fwd = Forward {
            params,
            graph,
            bundle,
            flags,
            sampler: NeighborSampler::full(),
        };
        let users: Vec<usize> = users.into_iter().collect();
        let items: Vec<usize> = items.into_iter().collect();
        let uo: Vec<(usize, Vec<f64>)> = users
            .par_iter()
            .map(|&u| (u, fwd.user_offset(u).offset))
            .collect();
        let io: Vec<(usize, Vec<f64>)> = items
            .par_iter()
            .map(|&v| (v, fwd.item_offset(v).offset))
            .collect();
        let mut user_offsets = vec![None; graph.num_users()];
        for (u, h) in uo {
            user_offsets[u] = Some(h);
        }
        let mut item_offsets = vec![None; graph.num_items()];
        for (v, h) in io {
            item_offsets[v] = Some(h);
        }
        Predictor {
            params,
            bundle,
            graph,
            flags: *flags,
            user_offsets,
            item_offsets,
        }
    }

    fn user_h(&self, u: usize) -> std::borrow::Cow<'_, [f64]> {
        match &self.user_offsets[u] {
            Some(h) => h.as_slice().into(),
            None => user_offset(self.params, self.graph, &self.flags, u, &NeighborSampler::full()).into(),
        }
    }

    fn item_h(&self, v: usize) -> std::borrow::Cow<'_, [f64]> {
        match &self.item_offsets[v] {
            Some(h) => h.as_slice().into(),
            None => item_offset(self.params, self.graph, &self.flags, v, &NeighborSampler::full()).into(),
        }
    }

    pub fn trace(&self, user: usize, item: usize) -> PairTrace {
        let h_u = self.user_h(user);
        let h_v = self.item_h(item);
        let social: Vec<(usize, f64, std::borrow::Cow<'_, [f64]>)> = if self.flags.sn_off {
            Vec::new()
        } else {
            let edges = self.graph.social(user);
            let weights = social_term_weights(edges, &self.flags);
            edges
                .iter()
                .zip(weights)
                .map(|(e, w)| (e.neighbor, w, self.user_h(e.neighbor)))
                .collect()
        };
        let refs: Vec<(usize, f64, &[f64])> =
            social.iter().map(|(k, w, h)| (*k, *w, h.as_ref())).collect();
        pair_trace(self.params, self.bundle, &self.flags, user, item, &h_u, &h_v, &refs)
    }

    pub fn predict(&self, user: usize, item: usize) -> f64 {
        self.trace(user, item).prediction
    }

    pub fn ranking_score(&self, user: usize, item: usize) -> f64 {
        ranking_score(self.predict(user, item))
    }
}
