//! The decentralized interaction graph and the weighted social graph.
//!
//! Every rating edge is re-labelled with the ceiling of its absolute
//! deviation from the counterpart's train mean: the user view measures
//! `r_il` against the item mean, the item view measures `r_kj` against the
//! user mean. Social edges carry the relationship coefficient (one plus the
//! number of co-rated items whose ratings differ by at most `delta`) and the
//! coefficient normalized over the source user's neighbors.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;

/// Distinct rating-difference levels, `0..=4` for ratings on a 1..5 scale.
pub const NUM_LEVELS: usize = 5;

pub const DEFAULT_DELTA: u8 = 1;

fn quantize(rating: u8, mean: f64) -> u8 {
    let level = (rating as f64 - mean).abs().ceil();
    debug_assert!((0.0..=4.0).contains(&level), "level {level} out of range");
    level.min((NUM_LEVELS - 1) as f64) as u8
}

/// `⌈|r_il − E(v_l)|⌉`, the level seen from the user side.
pub fn user_level(rating: u8, item_avg: f64) -> u8 {
    quantize(rating, item_avg)
}

/// `⌈|r_kj − E(u_k)|⌉`, the level seen from the item side.
pub fn item_level(rating: u8, user_avg: f64) -> u8 {
    quantize(rating, user_avg)
}

/// Relationship coefficient between two users given their rated items.
///
/// Both slices must be sorted by item index.
pub fn relation_coefficient(a: &[(usize, u8)], b: &[(usize, u8)], delta: u8) -> u32 {
    let (mut i, mut j) = (0, 0);
    let mut agree = 0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if a[i].1.abs_diff(b[j].1) <= delta {
                    agree += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    1 + agree
}

/// Normalizes coefficients into weights summing to one.
pub fn social_weights(coefficients: &[u32]) -> Vec<f64> {
    let total: u64 = coefficients.iter().map(|&t| t as u64).sum();
    coefficients
        .iter()
        .map(|&t| t as f64 / total as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEdge {
    pub neighbor: usize,
    pub level: u8,
    pub rating: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialEdge {
    pub neighbor: usize,
    pub coefficient: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralizedGraph {
    pub delta: u8,
    user_view: Vec<Vec<InteractionEdge>>,
    item_view: Vec<Vec<InteractionEdge>>,
    social_view: Vec<Vec<SocialEdge>>,
}

impl DecentralizedGraph {
    /// Builds all three views from the bundle's train split.
    pub fn build(bundle: &DatasetBundle, delta: u8) -> Self {
        let user_view = (0..bundle.num_users())
            .into_par_iter()
            .map(|u| {
                bundle
                    .items_of_user(u)
                    .iter()
                    .map(|&(v, r)| InteractionEdge {
                        neighbor: v,
                        level: user_level(r, bundle.item_mean(v)),
                        rating: r,
                    })
                    .collect()
            })
            .collect();
        let item_view = (0..bundle.num_items())
            .into_par_iter()
            .map(|v| {
                bundle
                    .users_of_item(v)
                    .iter()
                    .map(|&(u, r)| InteractionEdge {
                        neighbor: u,
                        level: item_level(r, bundle.user_mean(u)),
                        rating: r,
                    })
                    .collect()
            })
            .collect();
        let social_view = (0..bundle.num_users())
            .into_par_iter()
            .map(|u| {
                let mine = bundle.items_of_user(u);
                let neighbors = bundle.social_neighbors(u);
                let coeffs: Vec<u32> = neighbors
                    .iter()
                    .map(|&k| relation_coefficient(mine, bundle.items_of_user(k), delta))
                    .collect();
                let weights = social_weights(&coeffs);
                neighbors
                    .iter()
                    .zip(coeffs)
                    .zip(weights)
                    .map(|((&neighbor, coefficient), weight)| SocialEdge {
                        neighbor,
                        coefficient,
                        weight,
                    })
                    .collect()
            })
            .collect();
        DecentralizedGraph {
            delta,
            user_view,
            item_view,
            social_view,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_view.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_view.len()
    }

    /// Items rated by `u` with user-side levels.
    pub fn user_items(&self, u: usize) -> &[InteractionEdge] {
        &self.user_view[u]
    }

    /// Raters of `v` with item-side levels.
    pub fn item_users(&self, v: usize) -> &[InteractionEdge] {
        &self.item_view[v]
    }

    pub fn social(&self, u: usize) -> &[SocialEdge] {
        &self.social_view[u]
    }

    pub fn num_social_edges(&self) -> usize {
        self.social_view.iter().map(Vec::len).sum()
    }

    pub fn max_degree(&self, view: View) -> usize {
        match view {
            View::UserItems => self.user_view.iter().map(Vec::len).max(),
            View::ItemUsers => self.item_view.iter().map(Vec::len).max(),
            View::Social => self.social_view.iter().map(Vec::len).max(),
        }
        .unwrap_or(0)
    }
}

pub fn build_graph(bundle: &DatasetBundle, delta: u8) -> DecentralizedGraph {
    DecentralizedGraph::build(bundle, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum View {
    UserItems,
    ItemUsers,
    Social,
}

impl View {
    fn tag(self) -> u64 {
        match self {
            View::UserItems => 1,
            View::ItemUsers => 2,
            View::Social => 3,
        }
    }
}

/// Which positions of a node's neighbor list survive node dropout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub node: usize,
    /// Ascending positions into the full neighbor list.
    pub kept: Vec<usize>,
    pub seed: u64,
}

impl NeighborSample {
    pub fn apply<T: Clone>(&self, list: &[T]) -> Vec<T> {
        self.kept.iter().map(|&p| list[p].clone()).collect()
    }
}

/// Keeps every neighbor when `degree <= cap`, otherwise a uniform
/// `cap`-subset drawn without replacement.
pub fn sample_neighbors(node: usize, degree: usize, cap: usize, seed: u64) -> NeighborSample {
    assert!(cap >= 1, "neighbor cap must be at least 1");
    let kept = if degree <= cap {
        (0..degree).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kept = index::sample(&mut rng, degree, cap).into_vec();
        kept.sort_unstable();
        kept
    };
    NeighborSample { node, kept, seed }
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-epoch node dropout. The draw for a node depends only on
/// `(seed, epoch, view, node)`, so it is reproducible and order-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborSampler {
    pub seed: u64,
    pub epoch: u64,
    /// `None` keeps full neighborhoods (evaluation).
    pub cap: Option<usize>,
}

impl NeighborSampler {
    pub fn full() -> Self {
        NeighborSampler {
            seed: 0,
            epoch: 0,
            cap: None,
        }
    }

    pub fn for_epoch(seed: u64, epoch: u64, cap: usize) -> Self {
        NeighborSampler {
            seed,
            epoch,
            cap: Some(cap),
        }
    }

    pub fn node_seed(&self, view: View, node: usize) -> u64 {
        mix(mix(mix(self.seed ^ mix(self.epoch)) ^ view.tag()) ^ node as u64)
    }

    pub fn sample(&self, view: View, node: usize, degree: usize) -> NeighborSample {
        match self.cap {
            Some(cap) => sample_neighbors(node, degree, cap, self.node_seed(view, node)),
            None => NeighborSample {
                node,
                kept: (0..degree).collect(),
                seed: 0,
            },
        }
    }

    pub fn user_items(&self, g: &DecentralizedGraph, u: usize) -> Vec<InteractionEdge> {
        let list = g.user_items(u);
        self.sample(View::UserItems, u, list.len()).apply(list)
    }

    pub fn item_users(&self, g: &DecentralizedGraph, v: usize) -> Vec<InteractionEdge> {
        let list = g.item_users(v);
        self.sample(View::ItemUsers, v, list.len()).apply(list)
    }

    pub fn social(&self, g: &DecentralizedGraph, u: usize) -> Vec<SocialEdge> {
        let list = g.social(u);
        self.sample(View::Social, u, list.len()).apply(list)
    }
}
