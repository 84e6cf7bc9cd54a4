use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NUM_LEVELS;

/// Row-major dense matrix. Vectors are stored as `1 x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn vector(len: usize) -> Self {
        Self::zeros(1, len)
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x + bias`
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(bias.len(), self.rows);
        (0..self.rows)
            .map(|r| dot(self.row(r), x) + bias[r])
            .collect()
    }

    /// `selfᵀ · g`
    pub fn transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        debug_assert_eq!(g.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                axpy(gr, self.row(r), &mut out);
            }
        }
        out
    }

    /// `self += g ⊗ x`
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr != 0.0 {
                let cols = self.cols;
                axpy(gr, x, &mut self.data[r * cols..(r + 1) * cols]);
            }
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a·x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// Two-layer perceptron `2D -> D -> D` with ReLU between the layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Attention scorer `2D -> D (ReLU) -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// `D -> D` affine map; Tanh is applied by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: Matrix,
    pub b: Matrix,
}

/// Preference head `2D -> D (Tanh) -> D (Tanh) -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w: Matrix,
}

/// All dense (non-embedding) weights. Also used as the gradient and
/// optimizer-state container for those weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub user_encoder: Encoder,
    pub item_encoder: Encoder,
    pub user_attention: Attention,
    pub item_attention: Attention,
    pub user_aggregate: Affine,
    pub item_aggregate: Affine,
    pub head: Head,
}

impl Encoder {
    fn new(dim: usize, mut init: impl FnMut(usize, usize) -> Matrix) -> Self {
        Encoder {
            w1: init(dim, 2 * dim),
            b1: init(1, dim),
            w2: init(dim, dim),
            b2: init(1, dim),
        }
    }
}

impl Attention {
    fn new(dim: usize, mut init: impl FnMut(usize, usize) -> Matrix) -> Self {
        Attention {
            w1: init(dim, 2 * dim),
            b1: init(1, dim),
            w2: init(1, dim),
            b2: init(1, 1),
        }
    }
}

impl Affine {
    fn new(dim: usize, mut init: impl FnMut(usize, usize) -> Matrix) -> Self {
        Affine {
            w: init(dim, dim),
            b: init(1, dim),
        }
    }
}

impl Head {
    fn new(dim: usize, mut init: impl FnMut(usize, usize) -> Matrix) -> Self {
        Head {
            w1: init(dim, 2 * dim),
            b1: init(1, dim),
            w2: init(dim, dim),
            b2: init(1, dim),
            w: init(1, dim),
        }
    }
}

impl Network {
    fn new(dim: usize, mut init: impl FnMut(usize, usize) -> Matrix) -> Self {
        Network {
            user_encoder: Encoder::new(dim, &mut init),
            item_encoder: Encoder::new(dim, &mut init),
            user_attention: Attention::new(dim, &mut init),
            item_attention: Attention::new(dim, &mut init),
            user_aggregate: Affine::new(dim, &mut init),
            item_aggregate: Affine::new(dim, &mut init),
            head: Head::new(dim, &mut init),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(dim, Matrix::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.user_aggregate.w.rows)
    }

    /// Every weight in a fixed order, with a stable name.
    pub fn groups(&self) -> Vec<(&'static str, &Matrix)> {
        let n = self;
        vec![
            ("user_encoder.w1", &n.user_encoder.w1),
            ("user_encoder.b1", &n.user_encoder.b1),
            ("user_encoder.w2", &n.user_encoder.w2),
            ("user_encoder.b2", &n.user_encoder.b2),
            ("item_encoder.w1", &n.item_encoder.w1),
            ("item_encoder.b1", &n.item_encoder.b1),
            ("item_encoder.w2", &n.item_encoder.w2),
            ("item_encoder.b2", &n.item_encoder.b2),
            ("user_attention.w1", &n.user_attention.w1),
            ("user_attention.b1", &n.user_attention.b1),
            ("user_attention.w2", &n.user_attention.w2),
            ("user_attention.b2", &n.user_attention.b2),
            ("item_attention.w1", &n.item_attention.w1),
            ("item_attention.b1", &n.item_attention.b1),
            ("item_attention.w2", &n.item_attention.w2),
            ("item_attention.b2", &n.item_attention.b2),
            ("user_aggregate.w", &n.user_aggregate.w),
            ("user_aggregate.b", &n.user_aggregate.b),
            ("item_aggregate.w", &n.item_aggregate.w),
            ("item_aggregate.b", &n.item_aggregate.b),
            ("head.w1", &n.head.w1),
            ("head.b1", &n.head.b1),
            ("head.w2", &n.head.w2),
            ("head.b2", &n.head.b2),
            ("head.w", &n.head.w),
        ]
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let n = self;
        vec![
            ("user_encoder.w1", &mut n.user_encoder.w1),
            ("user_encoder.b1", &mut n.user_encoder.b1),
            ("user_encoder.w2", &mut n.user_encoder.w2),
            ("user_encoder.b2", &mut n.user_encoder.b2),
            ("item_encoder.w1", &mut n.item_encoder.w1),
            ("item_encoder.b1", &mut n.item_encoder.b1),
            ("item_encoder.w2", &mut n.item_encoder.w2),
            ("item_encoder.b2", &mut n.item_encoder.b2),
            ("user_attention.w1", &mut n.user_attention.w1),
            ("user_attention.b1", &mut n.user_attention.b1),
            ("user_attention.w2", &mut n.user_attention.w2),
            ("user_attention.b2", &mut n.user_attention.b2),
            ("item_attention.w1", &mut n.item_attention.w1),
            ("item_attention.b1", &mut n.item_attention.b1),
            ("item_attention.w2", &mut n.item_attention.w2),
            ("item_attention.b2", &mut n.item_attention.b2),
            ("user_aggregate.w", &mut n.user_aggregate.w),
            ("user_aggregate.b", &mut n.user_aggregate.b),
            ("item_aggregate.w", &mut n.item_aggregate.w),
            ("item_aggregate.b", &mut n.item_aggregate.b),
            ("head.w1", &mut n.head.w1),
            ("head.b1", &mut n.head.b1),
            ("head.w2", &mut n.head.w2),
            ("head.b2", &mut n.head.b2),
            ("head.w", &mut n.head.w),
        ]
    }
}

/// Every learnable array of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub user_embed: Matrix,
    pub item_embed: Matrix,
    /// One row per rating-difference level (or raw rating, for the
    /// raw-rating variant), shared by the user and item sides.
    pub diff_embed: Matrix,
    pub net: Network,
}

impl ModelParams {
    /// Uniform `[-1/√D, 1/√D)` initialization of every array.
    pub fn init(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding size must be positive");
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let user_embed = Matrix::uniform(num_users, dim, bound, &mut rng);
        let item_embed = Matrix::uniform(num_items, dim, bound, &mut rng);
        let diff_embed = Matrix::uniform(NUM_LEVELS, dim, bound, &mut rng);
        let net = Network::new(dim, |r, c| Matrix::uniform(r, c, bound, &mut rng));
        ModelParams {
            dim,
            user_embed,
            item_embed,
            diff_embed,
            net,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_embed.rows
    }

    pub fn num_items(&self) -> usize {
        self.item_embed.rows
    }

    /// Zeroes every prediction-head weight so all preference ratings are 0.
    pub fn zero_head(&mut self) {
        let h = &mut self.net.head;
        for m in [&mut h.w1, &mut h.b1, &mut h.w2, &mut h.b2, &mut h.w] {
            m.fill(0.0);
        }
    }

    pub fn groups(&self) -> Vec<(&'static str, &Matrix)> {
        let mut g = vec![
            ("user_embed", &self.user_embed),
            ("item_embed", &self.item_embed),
            ("diff_embed", &self.diff_embed),
        ];
        g.extend(self.net.groups());
        g
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut g = vec![
            ("user_embed", &mut self.user_embed),
            ("item_embed", &mut self.item_embed),
            ("diff_embed", &mut self.diff_embed),
        ];
        g.extend(self.net.groups_mut());
        g
    }

    pub fn num_scalars(&self) -> usize {
        self.groups().iter().map(|(_, m)| m.len()).sum()
    }

    /// Name of the first group holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.groups()
            .into_iter()
            .find(|(_, m)| !m.is_finite())
            .map(|(name, _)| name)
    }
}

/// Gradients for one batch. Embedding tables are row-sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
    pub diff_embed: Matrix,
    pub net: Network,
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        Gradients {
            user_rows: BTreeMap::new(),
            item_rows: BTreeMap::new(),
            diff_embed: Matrix::zeros(NUM_LEVELS, dim),
            net: Network::zeros(dim),
        }
    }

    /// Gradient row for user `u`, created as zeros on first touch.
    pub fn user_row(&mut self, u: usize) -> &mut Vec<f64> {
        let dim = self.diff_embed.cols;
        self.user_rows.entry(u).or_insert_with(|| vec![0.0; dim])
    }

    pub fn item_row(&mut self, v: usize) -> &mut Vec<f64> {
        let dim = self.diff_embed.cols;
        self.item_rows.entry(v).or_insert_with(|| vec![0.0; dim])
    }

    pub fn scale(&mut self, c: f64) {
        for row in self.user_rows.values_mut().chain(self.item_rows.values_mut()) {
            row.iter_mut().for_each(|x| *x *= c);
        }
        self.diff_embed.data.iter_mut().for_each(|x| *x *= c);
        for (_, m) in self.net.groups_mut() {
            m.data.iter_mut().for_each(|x| *x *= c);
        }
    }

    /// Dense copy laid out like [`ModelParams::groups`].
    pub fn to_dense(&self, num_users: usize, num_items: usize) -> Vec<(&'static str, Matrix)> {
        let dim = self.diff_embed.cols;
        let densify = |rows: &BTreeMap<usize, Vec<f64>>, n: usize| {
            let mut m = Matrix::zeros(n, dim);
            for (&r, g) in rows {
                m.row_mut(r).copy_from_slice(g);
            }
            m
        };
        let mut out = vec![
            ("user_embed", densify(&self.user_rows, num_users)),
            ("item_embed", densify(&self.item_rows, num_items)),
            ("diff_embed", self.diff_embed.clone()),
        ];
        out.extend(self.net.groups().into_iter().map(|(n, m)| (n, m.clone())));
        out
    }

    pub fn is_zero(&self) -> bool {
        self.user_rows
            .values()
            .chain(self.item_rows.values())
            .flatten()
            .chain(&self.diff_embed.data)
            .all(|&x| x == 0.0)
            && self
                .net
                .groups()
                .iter()
                .all(|(_, m)| m.data.iter().all(|&x| x == 0.0))
    }
}
