//! Rating metrics (MAE, RMSE) and ranking metrics (Recall@5, NDCG) over the
//! observed held-out items of each user.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::RatingRecord;
use crate::error::{Error, Result};
use crate::model::Predictor;

pub const RECALL_CUTOFF: usize = 5;

pub fn mae_rmse(predictions: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    if predictions.len() != truths.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Validation("no predictions to score".into()));
    }
    let n = predictions.len() as f64;
    let (abs, sq) = predictions
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(a, s), (p, t)| {
            let e = p - t;
            (a + e.abs(), s + e * e)
        });
    Ok((abs / n, (sq / n).sqrt()))
}

/// 1 for ratings `>= threshold`, else 0.
pub fn label_items(ratings: &[u8], threshold: u8) -> Vec<u8> {
    ratings.iter().map(|&r| u8::from(r >= threshold)).collect()
}

/// Positions of `items` ordered by descending score, ties by ascending
/// item index.
pub fn rank_user(items: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(items[a].cmp(&items[b]))
    });
    order
}

/// Fraction of a user's positives found in the first `k` positions.
pub fn recall_at(labels: &[u8], k: usize) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y > 0).count();
    if positives == 0 {
        return None;
    }
    let hits = labels.iter().take(k).filter(|&&y| y > 0).count();
    Some(hits as f64 / positives as f64)
}

fn dcg(labels: &[u8]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(pos, &y)| ((1u64 << y) - 1) as f64 / ((pos + 2) as f64).log2())
        .sum()
}

/// DCG over the full list with gain `2^y − 1` and discount `log₂(pos+1)`,
/// normalized by the DCG of the label-sorted list.
pub fn ndcg(labels: &[u8]) -> Option<f64> {
    let mut ideal = labels.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return None;
    }
    Some(dcg(labels) / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub recall_at_5: f64,
    pub ndcg: f64,
    /// Users with at least one positive.
    pub users_ranked: usize,
    /// Users left out because none of their items was positive.
    pub users_without_positives: usize,
}

/// Macro-averaged Recall@5 and NDCG over ranked label lists.
pub fn recall_ndcg(lists: &[Vec<u8>]) -> RankingSummary {
    let mut recall = 0.0;
    let mut gain = 0.0;
    let mut ranked = 0;
    let mut skipped = 0;
    for labels in lists {
        match (recall_at(labels, RECALL_CUTOFF), ndcg(labels)) {
            (Some(r), Some(n)) => {
                recall += r;
                gain += n;
                ranked += 1;
            }
            _ => skipped += 1,
        }
    }
    let avg = |s: f64| if ranked == 0 { 0.0 } else { s / ranked as f64 };
    RankingSummary {
        recall_at_5: avg(recall),
        ndcg: avg(gain),
        users_ranked: ranked,
        users_without_positives: skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRanking {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub recall_at_5: f64,
    pub ndcg: f64,
    pub n_test: usize,
    pub threshold: u8,
    pub users_ranked: usize,
    pub users_without_positives: usize,
    /// Metric conventions, for readers comparing against other numbers.
    pub conventions: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rankings: Option<Vec<UserRanking>>,
}

pub const CONVENTIONS: &str = "macro-averaged per user; recall@5 over observed held-out items; \
ndcg over the full observed list, gain 2^y-1, discount log2(pos+1); ties by item index";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Ratings at or above this are positives.
    pub threshold: u8,
    /// Keep per-user ranked lists in the report.
    pub keep_rankings: bool,
    /// Clamp predictions to [1, 5] before computing MAE/RMSE.
    pub clamp: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 4,
            keep_rankings: false,
            clamp: false,
        }
    }
}

/// Scores every record with `predictor` and fills an [`EvalReport`].
pub fn evaluate(
    predictor: &Predictor<'_>,
    records: &[RatingRecord],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let EvalOptions {
        threshold,
        keep_rankings,
        clamp,
    } = *opts;
    let preds: Vec<f64> = records
        .iter()
        .map(|r| predictor.predict(r.user, r.item))
        .collect();
    let reported: Vec<f64> = if clamp {
        preds.iter().map(|p| p.clamp(1.0, 5.0)).collect()
    } else {
        preds.clone()
    };
    let truths: Vec<f64> = records.iter().map(|r| r.rating as f64).collect();
    let (mae, rmse) = mae_rmse(&reported, &truths)?;

    let mut per_user: BTreeMap<usize, Vec<(usize, f64, u8)>> = BTreeMap::new();
    for (r, &p) in records.iter().zip(&preds) {
        per_user
            .entry(r.user)
            .or_default()
            .push((r.item, crate::model::ranking_score(p), r.rating));
    }
    let mut lists = Vec::with_capacity(per_user.len());
    let mut rankings = Vec::new();
    for (user, entries) in per_user {
        let items: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let scores: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let ratings: Vec<u8> = entries.iter().map(|e| e.2).collect();
        let order = rank_user(&items, &scores);
        let labels: Vec<u8> = label_items(&order.iter().map(|&i| ratings[i]).collect::<Vec<_>>(), threshold);
        if keep_rankings {
            rankings.push(UserRanking {
                user,
                items: order.iter().map(|&i| items[i]).collect(),
                scores: order.iter().map(|&i| scores[i]).collect(),
                labels: labels.clone(),
            });
        }
        lists.push(labels);
    }
    let summary = recall_ndcg(&lists);
    Ok(EvalReport {
        mae,
        rmse,
        recall_at_5: summary.recall_at_5,
        ndcg: summary.ndcg,
        n_test: records.len(),
        threshold,
        users_ranked: summary.users_ranked,
        users_without_positives: summary.users_without_positives,
        conventions: CONVENTIONS.to_string(),
        rankings: keep_rankings.then_some(rankings),
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records      {}", self.n_test)?;
        writeln!(f, "MAE          {:.4}", self.mae)?;
        writeln!(f, "RMSE         {:.4}", self.rmse)?;
        writeln!(f, "Recall@5     {:.4}   (F = {})", self.recall_at_5, self.threshold)?;
        writeln!(f, "NDCG         {:.4}", self.ndcg)?;
        writeln!(
            f,
            "users ranked {} ({} without positives skipped)",
            self.users_ranked, self.users_without_positives
        )?;
        write!(f, "conventions  {}", self.conventions)
    }
}
