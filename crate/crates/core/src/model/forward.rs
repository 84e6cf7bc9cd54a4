//! Offsets, preference ratings and the final prediction, with traces for
//! the backward pass.

use super::layers::{
    attention_weights, attention_weights_backward, softmax, AttentionTrace, EncoderTrace, HeadTrace,
};
use super::params::{axpy, Affine, Attention, Encoder, Gradients, Matrix, ModelParams};
use super::{AttentionMode, VariantFlags};
use crate::data::DatasetBundle;
use crate::graph::{social_weights, DecentralizedGraph, InteractionEdge, NeighborSampler, SocialEdge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    User,
    Item,
}

/// Everything computed while building one latent offset.
#[derive(Debug, Clone)]
pub struct OffsetTrace {
    pub side: Side,
    pub node: usize,
    /// Degree before node dropout.
    pub degree: usize,
    /// `(neighbor, difference-table row)` per aggregated neighbor.
    pub neighbors: Vec<(usize, usize)>,
    pub encoders: Vec<EncoderTrace>,
    /// Empty under uniform attention.
    pub attention: Vec<AttentionTrace>,
    pub probs: Vec<f64>,
    pub weights: Vec<f64>,
    pub aggregate: Vec<f64>,
    pub offset: Vec<f64>,
}

struct SideParams<'a> {
    own: &'a Matrix,
    other: &'a Matrix,
    encoder: &'a Encoder,
    attention: &'a Attention,
    aggregate: &'a Affine,
}

fn side_params(p: &ModelParams, side: Side) -> SideParams<'_> {
    match side {
        Side::User => SideParams {
            own: &p.user_embed,
            other: &p.item_embed,
            encoder: &p.net.user_encoder,
            attention: &p.net.user_attention,
            aggregate: &p.net.user_aggregate,
        },
        Side::Item => SideParams {
            own: &p.item_embed,
            other: &p.user_embed,
            encoder: &p.net.item_encoder,
            attention: &p.net.item_attention,
            aggregate: &p.net.item_aggregate,
        },
    }
}

/// Row of the difference table an edge reads.
pub fn difference_row(edge: &InteractionEdge, flags: &VariantFlags) -> usize {
    if flags.rd_raw {
        edge.rating as usize - 1
    } else {
        edge.level as usize
    }
}

/// `Tanh(W·Σ_l w_l·x_l + b)` over `edges`, with `x_l` from the side's
/// interaction encoder and `w_l` from its attention network.
pub fn offset_trace(
    params: &ModelParams,
    flags: &VariantFlags,
    side: Side,
    node: usize,
    edges: &[InteractionEdge],
    degree: usize,
) -> OffsetTrace {
    let sp = side_params(params, side);
    let neighbors: Vec<(usize, usize)> = edges
        .iter()
        .map(|e| (e.neighbor, difference_row(e, flags)))
        .collect();
    let encoders: Vec<EncoderTrace> = neighbors
        .iter()
        .map(|&(n, row)| sp.encoder.forward(sp.other.row(n), params.diff_embed.row(row)))
        .collect();
    let (attention, probs) = if flags.attention == AttentionMode::UniformAvg {
        (Vec::new(), Vec::new())
    } else {
        let own = sp.own.row(node);
        let att: Vec<AttentionTrace> = encoders
            .iter()
            .map(|t| sp.attention.forward(&t.output, own))
            .collect();
        let scores: Vec<f64> = att.iter().map(|a| a.score).collect();
        let probs = softmax(&scores);
        (att, probs)
    };
    let weights = match flags.attention {
        AttentionMode::UniformAvg => attention_weights(&vec![0.0; encoders.len()], flags.attention),
        AttentionMode::Softmax => probs.clone(),
        AttentionMode::Max => {
            let scores: Vec<f64> = attention.iter().map(|a| a.score).collect();
            attention_weights(&scores, flags.attention)
        }
    };
    let mut aggregate = vec![0.0; params.dim];
    for (w, t) in weights.iter().zip(&encoders) {
        axpy(*w, &t.output, &mut aggregate);
    }
    let offset = sp.aggregate.forward_tanh(&aggregate);
    OffsetTrace {
        side,
        node,
        degree,
        neighbors,
        encoders,
        attention,
        probs,
        weights,
        aggregate,
        offset,
    }
}

/// Accumulates `∂L/∂θ` given `∂L/∂offset`.
pub fn offset_backward(
    params: &ModelParams,
    flags: &VariantFlags,
    trace: &OffsetTrace,
    g_offset: &[f64],
    grads: &mut Gradients,
) {
    let sp = side_params(params, trace.side);
    let dim = params.dim;
    let Gradients {
        user_rows,
        item_rows,
        diff_embed,
        net,
    } = grads;
    let (g_enc, g_att, g_agg, own_rows, other_rows) = match trace.side {
        Side::User => (
            &mut net.user_encoder,
            &mut net.user_attention,
            &mut net.user_aggregate,
            user_rows,
            item_rows,
        ),
        Side::Item => (
            &mut net.item_encoder,
            &mut net.item_attention,
            &mut net.item_aggregate,
            item_rows,
            user_rows,
        ),
    };
    let g_aggregate = sp
        .aggregate
        .backward_tanh(&trace.aggregate, &trace.offset, g_offset, g_agg);
    if trace.neighbors.is_empty() {
        return;
    }

    let mut g_x: Vec<Vec<f64>> = trace
        .weights
        .iter()
        .map(|&w| g_aggregate.iter().map(|g| w * g).collect())
        .collect();
    if flags.attention != AttentionMode::UniformAvg {
        let g_weights: Vec<f64> = trace
            .encoders
            .iter()
            .map(|t| super::params::dot(&t.output, &g_aggregate))
            .collect();
        let g_scores = attention_weights_backward(&trace.probs, &g_weights, flags.attention);
        let mut g_own = vec![0.0; dim];
        for ((t, &gs), gx) in trace.attention.iter().zip(&g_scores).zip(g_x.iter_mut()) {
            if gs == 0.0 {
                continue;
            }
            let g_in = sp.attention.backward(t, gs, g_att);
            axpy(1.0, &g_in[..dim], gx);
            axpy(1.0, &g_in[dim..], &mut g_own);
        }
        let row = own_rows
            .entry(trace.node)
            .or_insert_with(|| vec![0.0; dim]);
        axpy(1.0, &g_own, row);
    }
    for ((t, gx), &(n, drow)) in trace.encoders.iter().zip(&g_x).zip(&trace.neighbors) {
        let g_in = sp.encoder.backward(t, gx, g_enc);
        let row = other_rows.entry(n).or_insert_with(|| vec![0.0; dim]);
        axpy(1.0, &g_in[..dim], row);
        axpy(1.0, &g_in[dim..], diff_embed.row_mut(drow));
    }
}

/// One socially connected user's contribution to a prediction.
#[derive(Debug, Clone)]
pub struct SocialTerm {
    pub neighbor: usize,
    pub weight: f64,
    pub head: HeadTrace,
}

#[derive(Debug, Clone)]
pub struct PairTrace {
    pub user: usize,
    pub item: usize,
    pub own: HeadTrace,
    pub social: Vec<SocialTerm>,
    /// `(α/2)·[E(u) + E(v)]`
    pub benchmark: f64,
    /// The learned part `f(u, v)`.
    pub preference: f64,
    pub prediction: f64,
}

/// Weights over the (possibly sampled) social neighbors.
pub fn social_term_weights(edges: &[SocialEdge], flags: &VariantFlags) -> Vec<f64> {
    if flags.rc_off {
        vec![1.0 / edges.len() as f64; edges.len()]
    } else {
        let coeffs: Vec<u32> = edges.iter().map(|e| e.coefficient).collect();
        social_weights(&coeffs)
    }
}

/// Combines offsets into `r̂ = (α/2)[E(u)+E(v)] + f(u, v)`.
///
/// `social` pairs each neighbor with its normalized weight and offset; an
/// empty slice (or the social-off variant) makes `f` the user's own
/// preference rating.
pub fn pair_trace(
    params: &ModelParams,
    bundle: &DatasetBundle,
    flags: &VariantFlags,
    user: usize,
    item: usize,
    h_user: &[f64],
    h_item: &[f64],
    social: &[(usize, f64, &[f64])],
) -> PairTrace {
    let head = &params.net.head;
    let own = head.forward(h_user, h_item);
    let social: Vec<SocialTerm> = if flags.sn_off {
        Vec::new()
    } else {
        social
            .iter()
            .map(|&(neighbor, weight, h)| SocialTerm {
                neighbor,
                weight,
                head: head.forward(h, h_item),
            })
            .collect()
    };
    let preference = if social.is_empty() {
        own.output
    } else {
        let mut acc = 0.0;
        for s in &social {
            acc += s.weight * s.head.output;
        }
        0.5 * (own.output + acc)
    };
    let benchmark = 0.5 * flags.alpha * (bundle.user_mean(user) + bundle.item_mean(item));
    PairTrace {
        user,
        item,
        own,
        social,
        benchmark,
        preference,
        prediction: benchmark + preference,
    }
}

/// Offset gradients produced by one pair: `(user, ∂h)` entries for the
/// target and each social neighbor, and `∂h_item`.
pub struct PairGradients {
    pub users: Vec<(usize, Vec<f64>)>,
    pub item: Vec<f64>,
}

pub fn pair_backward(
    params: &ModelParams,
    trace: &PairTrace,
    g_prediction: f64,
    grads: &mut Gradients,
) -> PairGradients {
    let head = &params.net.head;
    let own_scale = if trace.social.is_empty() { 1.0 } else { 0.5 };
    let (g_hu, mut g_hv) = head.backward(&trace.own, g_prediction * own_scale, &mut grads.net.head);
    let mut users = vec![(trace.user, g_hu)];
    for s in &trace.social {
        let (g_hk, g_hv_k) =
            head.backward(&s.head, g_prediction * 0.5 * s.weight, &mut grads.net.head);
        axpy(1.0, &g_hv_k, &mut g_hv);
        users.push((s.neighbor, g_hk));
    }
    PairGradients { users, item: g_hv }
}

/// Forward evaluation under one node-dropout draw.
#[derive(Clone, Copy)]
pub struct Forward<'a> {
    pub params: &'a ModelParams,
    pub graph: &'a DecentralizedGraph,
    pub bundle: &'a DatasetBundle,
    pub flags: &'a VariantFlags,
    pub sampler: NeighborSampler,
}

impl<'a> Forward<'a> {
    pub fn user_offset(&self, u: usize) -> OffsetTrace {
        let edges = self.sampler.user_items(self.graph, u);
        offset_trace(
            self.params,
            self.flags,
            Side::User,
            u,
            &edges,
            self.graph.user_items(u).len(),
        )
    }

    pub fn item_offset(&self, v: usize) -> OffsetTrace {
        let edges = self.sampler.item_users(self.graph, v);
        offset_trace(
            self.params,
            self.flags,
            Side::Item,
            v,
            &edges,
            self.graph.item_users(v).len(),
        )
    }

    /// Sampled social neighbors of `u` with their weights; empty when the
    /// social term is switched off.
    pub fn social(&self, u: usize) -> Vec<(usize, f64)> {
        if self.flags.sn_off {
            return Vec::new();
        }
        let edges = self.sampler.social(self.graph, u);
        let weights = social_term_weights(&edges, self.flags);
        edges.iter().map(|e| e.neighbor).zip(weights).collect()
    }
}
