//! Seeded synthetic rating/trust data with per-user and per-item biases.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{IdMap, RatingRecord, RawDataset, TrustEdge};
use crate::error::{Error, Result};

/// Ratings are `clip(round(mean + b_u + b_v + noise), 1, 5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    /// Fraction of the user-item grid that is observed.
    pub density: f64,
    pub mean: f64,
    pub user_bias_sd: f64,
    pub item_bias_sd: f64,
    pub noise_sd: f64,
    /// Outgoing trust edges per user, drawn among the users with the
    /// closest biases.
    pub trust_per_user: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 60,
            items: 80,
            density: 0.3,
            mean: 3.2,
            user_bias_sd: 0.7,
            item_bias_sd: 0.7,
            noise_sd: 0.3,
            trust_per_user: 4,
            seed: 2024,
        }
    }
}

/// The generated data together with the biases that produced it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub raw: RawDataset,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    if spec.users < 2 || spec.items == 0 {
        return Err(Error::Config("need at least 2 users and 1 item".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::Config(format!("density {} outside (0, 1]", spec.density)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()));
    let ub = normal(spec.user_bias_sd)?;
    let ib = normal(spec.item_bias_sd)?;
    let noise = normal(spec.noise_sd)?;
    let user_bias: Vec<f64> = (0..spec.users).map(|_| ub.sample(&mut rng)).collect();
    let item_bias: Vec<f64> = (0..spec.items).map(|_| ib.sample(&mut rng)).collect();

    let per_user = ((spec.items as f64 * spec.density).round() as usize).clamp(1, spec.items);
    let mut ratings = Vec::with_capacity(spec.users * per_user);
    for (u, bu) in user_bias.iter().enumerate() {
        let mut items = index::sample(&mut rng, spec.items, per_user).into_vec();
        items.sort_unstable();
        for v in items {
            let raw = spec.mean + bu + item_bias[v] + noise.sample(&mut rng);
            let rating = raw.round().clamp(1.0, 5.0) as u8;
            ratings.push(RatingRecord { user: u, item: v, rating });
        }
    }
    ratings.shuffle(&mut rng);

    let pool = (spec.trust_per_user * 3).clamp(1, spec.users - 1);
    let mut trust = Vec::new();
    for u in 0..spec.users {
        let mut others: Vec<usize> = (0..spec.users).filter(|&k| k != u).collect();
        others.sort_by(|&a, &b| {
            (user_bias[a] - user_bias[u])
                .abs()
                .total_cmp(&(user_bias[b] - user_bias[u]).abs())
                .then(a.cmp(&b))
        });
        let take = spec.trust_per_user.min(pool);
        let mut picked = index::sample(&mut rng, pool, take).into_vec();
        picked.sort_unstable();
        for p in picked {
            trust.push(TrustEdge {
                src: u,
                dst: others[p],
                unrated_endpoint: false,
            });
        }
    }
    // a few random long-range links
    for _ in 0..spec.users / 10 {
        let a = rng.random_range(0..spec.users);
        let b = rng.random_range(0..spec.users);
        if a != b && !trust.iter().any(|e| e.src == a && e.dst == b) {
            trust.push(TrustEdge {
                src: a,
                dst: b,
                unrated_endpoint: false,
            });
        }
    }

    let users = IdMap::from((0..spec.users).map(|u| format!("u{u}")).collect::<Vec<_>>());
    let items = IdMap::from((0..spec.items).map(|v| format!("i{v}")).collect::<Vec<_>>());
    Ok(Synthetic {
        raw: RawDataset {
            rated_users: users.len(),
            users,
            items,
            ratings,
            trust,
            self_loops_dropped: 0,
        },
        user_bias,
        item_bias,
    })
}

/// Writes `ratings.txt` and `trust.txt` (comma separated) into `dir`.
pub fn write_files(raw: &RawDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ratings_path = dir.join("ratings.txt");
    let trust_path = dir.join("trust.txt");
    let mut out = Vec::new();
    for r in &raw.ratings {
        writeln!(
            out,
            "{},{},{}",
            raw.users.external(r.user).unwrap_or_default(),
            raw.items.external(r.item).unwrap_or_default(),
            r.rating
        )
        .expect("write to Vec");
    }
    fs::write(&ratings_path, out).map_err(|e| Error::io(&ratings_path, e))?;
    let mut out = Vec::new();
    for e in &raw.trust {
        writeln!(
            out,
            "{},{}",
            raw.users.external(e.src).unwrap_or_default(),
            raw.users.external(e.dst).unwrap_or_default()
        )
        .expect("write to Vec");
    }
    fs::write(&trust_path, out).map_err(|e| Error::io(&trust_path, e))?;
    Ok((ratings_path, trust_path))
}
