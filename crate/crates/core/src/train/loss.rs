use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RatingRecord;
use crate::error::{Error, Result};
use crate::graph::View;
use crate::model::{
    offset_backward, pair_backward, pair_trace, sigmoid, Forward, Gradients, OffsetTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Squared error on ratings.
    #[default]
    Rating,
    /// Binary cross-entropy on `rating >= threshold` labels.
    Ranking,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rating" => Ok(Task::Rating),
            "ranking" => Ok(Task::Ranking),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-sample loss and `∂loss/∂r̂`.
pub fn sample_loss(task: Task, prediction: f64, rating: u8, threshold: u8) -> (f64, f64) {
    match task {
        Task::Rating => {
            let e = prediction - rating as f64;
            (0.5 * e * e, e)
        }
        Task::Ranking => {
            let y = if rating >= threshold { 1.0 } else { 0.0 };
            (softplus(prediction) - y * prediction, sigmoid(prediction) - y)
        }
    }
}

/// How many neighbors one aggregation consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationRecord {
    pub view: View,
    pub node: usize,
    pub degree: usize,
    pub consumed: usize,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// Batch-mean loss.
    pub loss: f64,
    pub grads: Gradients,
    pub predictions: Vec<f64>,
    pub aggregations: Vec<AggregationRecord>,
}

/// Forward and backward over one batch under `fwd`'s neighbor draw.
///
/// Each distinct user (targets and their sampled social neighbors) and item
/// gets one offset per batch; gradients from every pair touching it are
/// summed before backpropagating through the offset.
pub fn batch_loss(
    fwd: &Forward<'_>,
    batch: &[RatingRecord],
    task: Task,
    threshold: u8,
) -> Result<BatchOutput> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut social: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    let mut users = std::collections::BTreeSet::new();
    let mut items = std::collections::BTreeSet::new();
    for r in batch {
        users.insert(r.user);
        items.insert(r.item);
        let s = social.entry(r.user).or_insert_with(|| fwd.social(r.user));
        users.extend(s.iter().map(|&(k, _)| k));
    }
    let users: Vec<usize> = users.into_iter().collect();
    let items: Vec<usize> = items.into_iter().collect();
    let user_traces: BTreeMap<usize, OffsetTrace> = users
        .par_iter()
        .map(|&u| (u, fwd.user_offset(u)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let item_traces: BTreeMap<usize, OffsetTrace> = items
        .par_iter()
        .map(|&v| (v, fwd.item_offset(v)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect();

    let mut grads = Gradients::zeros(fwd.params.dim);
    let mut g_users: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut g_items: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len() as f64;
    for r in batch {
        let terms: Vec<(usize, f64, &[f64])> = social[&r.user]
            .iter()
            .map(|&(k, w)| (k, w, user_traces[&k].offset.as_slice()))
            .collect();
        let trace = pair_trace(
            fwd.params,
            fwd.bundle,
            fwd.flags,
            r.user,
            r.item,
            &user_traces[&r.user].offset,
            &item_traces[&r.item].offset,
            &terms,
        );
        let (loss, g_pred) = sample_loss(task, trace.prediction, r.rating, threshold);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss for pair ({}, {}): prediction {}",
                r.user, r.item, trace.prediction
            )));
        }
        total += loss;
        predictions.push(trace.prediction);
        let pg = pair_backward(fwd.params, &trace, g_pred * scale, &mut grads);
        for (u, g) in pg.users {
            accumulate(&mut g_users, u, g);
        }
        accumulate(&mut g_items, r.item, pg.item);
    }
    for (u, g) in &g_users {
        offset_backward(fwd.params, fwd.flags, &user_traces[u], g, &mut grads);
    }
    for (v, g) in &g_items {
        offset_backward(fwd.params, fwd.flags, &item_traces[v], g, &mut grads);
    }

    let mut aggregations = Vec::with_capacity(user_traces.len() + item_traces.len());
    for t in user_traces.values() {
        aggregations.push(AggregationRecord {
            view: View::UserItems,
            node: t.node,
            degree: t.degree,
            consumed: t.neighbors.len(),
        });
    }
    for t in item_traces.values() {
        aggregations.push(AggregationRecord {
            view: View::ItemUsers,
            node: t.node,
            degree: t.degree,
            consumed: t.neighbors.len(),
        });
    }
    if !fwd.flags.sn_off {
        for (&u, s) in &social {
            aggregations.push(AggregationRecord {
                view: View::Social,
                node: u,
                degree: fwd.graph.social(u).len(),
                consumed: s.len(),
            });
        }
    }

    Ok(BatchOutput {
        loss: total * scale,
        grads,
        predictions,
        aggregations,
    })
}

fn accumulate(map: &mut BTreeMap<usize, Vec<f64>>, key: usize, g: Vec<f64>) {
    match map.get_mut(&key) {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => {
            map.insert(key, g);
        }
    }
}

/// `L₁ = (1/2|B|) Σ (r̂ − r)²` and its gradients.
pub fn rating_loss(fwd: &Forward<'_>, batch: &[RatingRecord]) -> Result<BatchOutput> {
    batch_loss(fwd, batch, Task::Rating, 0)
}

/// Mean binary cross-entropy of `sigmoid(r̂)` against `rating >= threshold`.
pub fn ranking_loss(fwd: &Forward<'_>, batch: &[RatingRecord], threshold: u8) -> Result<BatchOutput> {
    batch_loss(fwd, batch, Task::Ranking, threshold)
}
