//! Rating and trust ingestion, dense index maps, seeded splits and the
//! train-only statistics (per-user/per-item averages, global mean) the model
//! is anchored on.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

/// One observed rating, with user and item already mapped to dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
}

/// A directed social relation `src -> dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrustEdge {
    pub src: usize,
    pub dst: usize,
    /// Set when either endpoint has no rating in the ratings file.
    #[serde(default)]
    pub unrated_endpoint: bool,
}

/// Bijection between external identifiers and `0..len()`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `id`, assigning the next free one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&ix) = self.index.get(id) {
            return ix;
        }
        let ix = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), ix);
        ix
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn external(&self, ix: usize) -> Option<&str> {
        self.ids.get(ix).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

impl From<Vec<String>> for IdMap {
    fn from(ids: Vec<String>) -> Self {
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        IdMap { ids, index }
    }
}

impl From<IdMap> for Vec<String> {
    fn from(map: IdMap) -> Self {
        map.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Tab if the first data line has one, else comma, else whitespace.
    #[default]
    Auto,
    Comma,
    Tab,
    Whitespace,
}

impl Delimiter {
    fn resolve(self, sample: &str) -> Delimiter {
        match self {
            Delimiter::Auto if sample.contains('\t') => Delimiter::Tab,
            Delimiter::Auto if sample.contains(',') => Delimiter::Comma,
            Delimiter::Auto => Delimiter::Whitespace,
            other => other,
        }
    }

    fn split(self, line: &str) -> Vec<&str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
            Delimiter::Whitespace | Delimiter::Auto => line.split_whitespace().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    #[default]
    Reject,
    LastWins,
}

/// Parsed ratings file with the id maps it induced.
#[derive(Debug, Clone, Default)]
pub struct RatingsFile {
    pub records: Vec<RatingRecord>,
    pub users: IdMap,
    pub items: IdMap,
    pub duplicates_replaced: usize,
}

/// Parsed trust file. Users first seen here were appended to the user map.
#[derive(Debug, Clone, Default)]
pub struct TrustFile {
    pub edges: Vec<TrustEdge>,
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_rating(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    // "4.0" style exports from numeric containers
    let v = field.parse::<f64>().ok()?;
    (v.fract() == 0.0 && v.is_finite()).then_some(v as i64)
}

/// Parses `<user><sep><item><sep><rating>` lines.
pub fn parse_ratings(
    text: &str,
    origin: &Path,
    delimiter: Delimiter,
    duplicates: DuplicatePolicy,
) -> Result<RatingsFile> {
    let mut out = RatingsFile::default();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut delim = None;
    for (line_no, line) in data_lines(text) {
        let d = *delim.get_or_insert_with(|| delimiter.resolve(line));
        let fields = d.split(line);
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(parse_err(format!(
                "expected 3 fields (user, item, rating), found {}",
                fields.len()
            )));
        }
        let rating = parse_rating(fields[2])
            .ok_or_else(|| parse_err(format!("rating {:?} is not an integer", fields[2])))?;
        if !(MIN_RATING as i64..=MAX_RATING as i64).contains(&rating) {
            return Err(Error::Validation(format!(
                "{}:{}: rating {} outside [{}, {}]",
                origin.display(),
                line_no,
                rating,
                MIN_RATING,
                MAX_RATING
            )));
        }
        let user = out.users.intern(fields[0]);
        let item = out.items.intern(fields[1]);
        let record = RatingRecord {
            user,
            item,
            rating: rating as u8,
        };
        match seen.get(&(user, item)) {
            Some(&pos) => match duplicates {
                DuplicatePolicy::Reject => {
                    return Err(parse_err(format!(
                        "duplicate rating for user {:?} on item {:?}",
                        fields[0], fields[1]
                    )))
                }
                DuplicatePolicy::LastWins => {
                    out.records[pos] = record;
                    out.duplicates_replaced += 1;
                }
            },
            None => {
                seen.insert((user, item), out.records.len());
                out.records.push(record);
            }
        }
    }
    Ok(out)
}

pub fn load_ratings(
    path: impl AsRef<Path>,
    delimiter: Delimiter,
    duplicates: DuplicatePolicy,
) -> Result<RatingsFile> {
    let path = path.as_ref();
    parse_ratings(&read_text(path)?, path, delimiter, duplicates)
}

/// Parses `<src><sep><dst>` lines against an existing user map.
///
/// Self-loops are dropped and counted. Repeated edges are kept once. An edge
/// touching a user the map did not already contain is kept but flagged.
pub fn parse_trust(
    text: &str,
    origin: &Path,
    delimiter: Delimiter,
    users: &mut IdMap,
) -> Result<TrustFile> {
    let known = users.len();
    let mut out = TrustFile::default();
    let mut seen = HashSet::new();
    let mut delim = None;
    for (line_no, line) in data_lines(text) {
        let d = *delim.get_or_insert_with(|| delimiter.resolve(line));
        let fields = d.split(line);
        // some trust dumps carry a trailing weight column; ignore it
        if !(2..=3).contains(&fields.len()) || fields[..2].iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message: format!("expected 2 fields (src, dst), found {}", fields.len()),
            });
        }
        if fields[0] == fields[1] {
            out.self_loops_dropped += 1;
            continue;
        }
        let src = users.intern(fields[0]);
        let dst = users.intern(fields[1]);
        if !seen.insert((src, dst)) {
            out.duplicates_dropped += 1;
            continue;
        }
        out.edges.push(TrustEdge {
            src,
            dst,
            unrated_endpoint: src >= known || dst >= known,
        });
    }
    Ok(out)
}

pub fn load_trust(
    path: impl AsRef<Path>,
    delimiter: Delimiter,
    users: &mut IdMap,
) -> Result<TrustFile> {
    let path = path.as_ref();
    parse_trust(&read_text(path)?, path, delimiter, users)
}

/// Everything read from disk, before splitting.
#[derive(Debug, Clone, Default)]
pub struct RawDataset {
    pub users: IdMap,
    pub items: IdMap,
    pub ratings: Vec<RatingRecord>,
    pub trust: Vec<TrustEdge>,
    /// Users with at least one rating occupy `0..rated_users`.
    pub rated_users: usize,
    pub self_loops_dropped: usize,
}

impl RawDataset {
    pub fn load(
        ratings: impl AsRef<Path>,
        trust: impl AsRef<Path>,
        delimiter: Delimiter,
        duplicates: DuplicatePolicy,
    ) -> Result<Self> {
        let r = load_ratings(ratings, delimiter, duplicates)?;
        Self::from_ratings(r).with_trust_file(trust, delimiter)
    }

    pub fn from_ratings(r: RatingsFile) -> Self {
        RawDataset {
            rated_users: r.users.len(),
            users: r.users,
            items: r.items,
            ratings: r.records,
            trust: Vec::new(),
            self_loops_dropped: 0,
        }
    }

    fn with_trust_file(mut self, path: impl AsRef<Path>, delimiter: Delimiter) -> Result<Self> {
        let t = load_trust(path, delimiter, &mut self.users)?;
        self.trust = t.edges;
        self.self_loops_dropped = t.self_loops_dropped;
        Ok(self)
    }

    pub fn flagged_trust_edges(&self) -> usize {
        self.trust.iter().filter(|e| e.unrated_endpoint).count()
    }
}

/// Shuffles `0..n` with `seed` and cuts it into train / validation / test.
///
/// The holdout after the train prefix alternates validation, test,
/// validation, ... so the two halves differ in size by at most one.
pub fn split_indices(
    n: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n);
    let (train, rest) = order.split_at(n_train);
    let mut val = Vec::with_capacity(rest.len() / 2 + 1);
    let mut test = Vec::with_capacity(rest.len() / 2);
    for (pos, &ix) in rest.iter().enumerate() {
        if pos % 2 == 0 {
            val.push(ix);
        } else {
            test.push(ix);
        }
    }
    Ok((train.to_vec(), val, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entity {
    User(usize),
    Item(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Indexed splits plus the train-only statistics. Immutable once built.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub users: IdMap,
    pub items: IdMap,
    pub rated_users: usize,
    pub train: Vec<RatingRecord>,
    pub validation: Vec<RatingRecord>,
    pub test: Vec<RatingRecord>,
    pub trust: Vec<TrustEdge>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub global_mean: f64,
    user_avg: Vec<f64>,
    item_avg: Vec<f64>,
    user_train_count: Vec<usize>,
    item_train_count: Vec<usize>,
    items_of_user: Vec<Vec<(usize, u8)>>,
    users_of_item: Vec<Vec<(usize, u8)>>,
    social: Vec<Vec<usize>>,
}

/// Shuffles and splits `raw`, then computes statistics on the train part.
pub fn split_dataset(raw: &RawDataset, train_fraction: f64, seed: u64) -> Result<DatasetBundle> {
    let (tr, va, te) = split_indices(raw.ratings.len(), train_fraction, seed)?;
    let pick = |ixs: &[usize]| ixs.iter().map(|&i| raw.ratings[i]).collect::<Vec<_>>();
    DatasetBundle::from_parts(
        raw.users.clone(),
        raw.items.clone(),
        raw.rated_users,
        pick(&tr),
        pick(&va),
        pick(&te),
        raw.trust.clone(),
        train_fraction,
        seed,
    )
}

impl DatasetBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        users: IdMap,
        items: IdMap,
        rated_users: usize,
        train: Vec<RatingRecord>,
        validation: Vec<RatingRecord>,
        test: Vec<RatingRecord>,
        trust: Vec<TrustEdge>,
        train_fraction: f64,
        split_seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = users.len();
        let m = items.len();
        for r in train.iter().chain(&validation).chain(&test) {
            if r.user >= n || r.item >= m {
                return Err(Error::Validation(format!(
                    "rating ({}, {}) outside {n} users x {m} items",
                    r.user, r.item
                )));
            }
            if !(MIN_RATING..=MAX_RATING).contains(&r.rating) {
                return Err(Error::Validation(format!("rating {} out of range", r.rating)));
            }
        }
        for e in &trust {
            if e.src >= n || e.dst >= n {
                return Err(Error::Validation(format!(
                    "trust edge ({}, {}) outside {n} users",
                    e.src, e.dst
                )));
            }
        }

        let mut user_sum = vec![0u64; n];
        let mut item_sum = vec![0u64; m];
        let mut user_train_count = vec![0usize; n];
        let mut item_train_count = vec![0usize; m];
        let mut items_of_user = vec![Vec::new(); n];
        let mut users_of_item = vec![Vec::new(); m];
        let mut total = 0u64;
        for r in &train {
            user_sum[r.user] += r.rating as u64;
            item_sum[r.item] += r.rating as u64;
            user_train_count[r.user] += 1;
            item_train_count[r.item] += 1;
            items_of_user[r.user].push((r.item, r.rating));
            users_of_item[r.item].push((r.user, r.rating));
            total += r.rating as u64;
        }
        for list in items_of_user.iter_mut().chain(users_of_item.iter_mut()) {
            list.sort_unstable();
        }
        let global_mean = total as f64 / train.len() as f64;
        let mean = |sum: u64, count: usize| {
            if count == 0 {
                global_mean
            } else {
                sum as f64 / count as f64
            }
        };
        let user_avg = user_sum
            .iter()
            .zip(&user_train_count)
            .map(|(&s, &c)| mean(s, c))
            .collect();
        let item_avg = item_sum
            .iter()
            .zip(&item_train_count)
            .map(|(&s, &c)| mean(s, c))
            .collect();

        let mut social = vec![Vec::new(); n];
        for e in &trust {
            social[e.src].push(e.dst);
        }
        for list in &mut social {
            list.sort_unstable();
            list.dedup();
        }

        Ok(DatasetBundle {
            users,
            items,
            rated_users,
            train,
            validation,
            test,
            trust,
            train_fraction,
            split_seed,
            global_mean,
            user_avg,
            item_avg,
            user_train_count,
            item_train_count,
            items_of_user,
            users_of_item,
            social,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn split(&self, which: Split) -> &[RatingRecord] {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Train-split mean of an entity's ratings, or the global mean when the
    /// entity has none.
    pub fn average_rating(&self, entity: Entity) -> Result<f64> {
        match entity {
            Entity::User(u) => self.user_avg.get(u).copied().ok_or(Error::UnknownIndex {
                kind: "user",
                index: u,
                len: self.user_avg.len(),
            }),
            Entity::Item(v) => self.item_avg.get(v).copied().ok_or(Error::UnknownIndex {
                kind: "item",
                index: v,
                len: self.item_avg.len(),
            }),
        }
    }

    #[inline]
    pub fn user_mean(&self, u: usize) -> f64 {
        self.user_avg[u]
    }

    #[inline]
    pub fn item_mean(&self, v: usize) -> f64 {
        self.item_avg[v]
    }

    pub fn user_train_count(&self, u: usize) -> usize {
        self.user_train_count[u]
    }

    pub fn item_train_count(&self, v: usize) -> usize {
        self.item_train_count[v]
    }

    /// R(u): train items of `u` with ratings, sorted by item.
    pub fn items_of_user(&self, u: usize) -> &[(usize, u8)] {
        &self.items_of_user[u]
    }

    /// R(v): train raters of `v` with ratings, sorted by user.
    pub fn users_of_item(&self, v: usize) -> &[(usize, u8)] {
        &self.users_of_item[v]
    }

    /// N(u): direct social neighbors of `u`, sorted.
    pub fn social_neighbors(&self, u: usize) -> &[usize] {
        &self.social[u]
    }
}
