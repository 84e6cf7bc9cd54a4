//! Forward passes that keep what their backward passes need.

use super::params::{axpy, concat, dot, Affine, Attention, Encoder, Head};
use super::AttentionMode;

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub input: Vec<f64>,
    pub pre_relu: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Encoder {
    /// `W2·ReLU(W1·[a ⊕ b] + b1) + b2`
    pub fn forward(&self, a: &[f64], b: &[f64]) -> EncoderTrace {
        let input = concat(a, b);
        let pre_relu = self.w1.affine(&input, &self.b1.data);
        let hidden: Vec<f64> = pre_relu.iter().map(|&z| z.max(0.0)).collect();
        let output = self.w2.affine(&hidden, &self.b2.data);
        EncoderTrace {
            input,
            pre_relu,
            hidden,
            output,
        }
    }

    /// Accumulates weight gradients into `grad` and returns `∂/∂input`.
    pub fn backward(&self, t: &EncoderTrace, g_out: &[f64], grad: &mut Encoder) -> Vec<f64> {
        grad.w2.add_outer(g_out, &t.hidden);
        axpy(1.0, g_out, &mut grad.b2.data);
        let mut g_pre = self.w2.transpose_mul(g_out);
        for (g, &z) in g_pre.iter_mut().zip(&t.pre_relu) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        grad.w1.add_outer(&g_pre, &t.input);
        axpy(1.0, &g_pre, &mut grad.b1.data);
        self.w1.transpose_mul(&g_pre)
    }
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub input: Vec<f64>,
    pub pre_relu: Vec<f64>,
    pub hidden: Vec<f64>,
    pub score: f64,
}

impl Attention {
    /// Unnormalized score `w2ᵀ·ReLU(W1·[x ⊕ e] + b1) + b2`.
    pub fn forward(&self, x: &[f64], e: &[f64]) -> AttentionTrace {
        let input = concat(x, e);
        let pre_relu = self.w1.affine(&input, &self.b1.data);
        let hidden: Vec<f64> = pre_relu.iter().map(|&z| z.max(0.0)).collect();
        let score = dot(&self.w2.data, &hidden) + self.b2.data[0];
        AttentionTrace {
            input,
            pre_relu,
            hidden,
            score,
        }
    }

    pub fn backward(&self, t: &AttentionTrace, g_score: f64, grad: &mut Attention) -> Vec<f64> {
        axpy(g_score, &t.hidden, &mut grad.w2.data);
        grad.b2.data[0] += g_score;
        let g_pre: Vec<f64> = self
            .w2
            .data
            .iter()
            .zip(&t.pre_relu)
            .map(|(&w, &z)| if z > 0.0 { g_score * w } else { 0.0 })
            .collect();
        grad.w1.add_outer(&g_pre, &t.input);
        axpy(1.0, &g_pre, &mut grad.b1.data);
        self.w1.transpose_mul(&g_pre)
    }
}

impl Affine {
    /// `Tanh(W·x + b)`
    pub fn forward_tanh(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .affine(x, &self.b.data)
            .into_iter()
            .map(f64::tanh)
            .collect()
    }

    /// Backward through `Tanh(W·x + b)` given its output `y`.
    pub fn backward_tanh(&self, x: &[f64], y: &[f64], g_y: &[f64], grad: &mut Affine) -> Vec<f64> {
        let g_pre: Vec<f64> = g_y.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
        grad.w.add_outer(&g_pre, x);
        axpy(1.0, &g_pre, &mut grad.b.data);
        self.w.transpose_mul(&g_pre)
    }
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub output: f64,
}

impl Head {
    /// Preference rating from a user offset and an item offset.
    pub fn forward(&self, h_user: &[f64], h_item: &[f64]) -> HeadTrace {
        let input = concat(h_user, h_item);
        let z1: Vec<f64> = self
            .w1
            .affine(&input, &self.b1.data)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let z2: Vec<f64> = self
            .w2
            .affine(&z1, &self.b2.data)
            .into_iter()
            .map(f64::tanh)
            .collect();
        let output = dot(&self.w.data, &z2);
        HeadTrace {
            input,
            z1,
            z2,
            output,
        }
    }

    /// Returns `(∂/∂h_user, ∂/∂h_item)`.
    pub fn backward(&self, t: &HeadTrace, g_out: f64, grad: &mut Head) -> (Vec<f64>, Vec<f64>) {
        axpy(g_out, &t.z2, &mut grad.w.data);
        let g_pre2: Vec<f64> = self
            .w
            .data
            .iter()
            .zip(&t.z2)
            .map(|(&w, &z)| g_out * w * (1.0 - z * z))
            .collect();
        grad.w2.add_outer(&g_pre2, &t.z1);
        axpy(1.0, &g_pre2, &mut grad.b2.data);
        let g_z1 = self.w2.transpose_mul(&g_pre2);
        let g_pre1: Vec<f64> = g_z1
            .iter()
            .zip(&t.z1)
            .map(|(g, z)| g * (1.0 - z * z))
            .collect();
        grad.w1.add_outer(&g_pre1, &t.input);
        axpy(1.0, &g_pre1, &mut grad.b1.data);
        let mut g_in = self.w1.transpose_mul(&g_pre1);
        let g_item = g_in.split_off(t.input.len() / 2);
        (g_in, g_item)
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Position of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bx), (i, &x)| {
            if x > bx {
                (i, x)
            } else {
                (bi, bx)
            }
        })
        .0
}

/// Aggregation weights for one neighborhood.
///
/// `UniformAvg` ignores the scores. `Max` hands every neighbor the largest
/// softmax weight, so its weights sum to more than one when the
/// neighborhood has more than one member.
pub fn attention_weights(scores: &[f64], mode: AttentionMode) -> Vec<f64> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    match mode {
        AttentionMode::Softmax => softmax(scores),
        AttentionMode::UniformAvg => vec![1.0 / n as f64; n],
        AttentionMode::Max => {
            let p = softmax(scores);
            vec![p[argmax(&p)]; n]
        }
    }
}

/// Maps `∂L/∂weight_l` to `∂L/∂score_m` for the given mode.
pub fn attention_weights_backward(
    probs: &[f64],
    g_weights: &[f64],
    mode: AttentionMode,
) -> Vec<f64> {
    match mode {
        AttentionMode::Softmax => {
            let inner = dot(probs, g_weights);
            probs
                .iter()
                .zip(g_weights)
                .map(|(p, g)| p * (g - inner))
                .collect()
        }
        AttentionMode::UniformAvg => vec![0.0; probs.len()],
        AttentionMode::Max => {
            let a = argmax(probs);
            let g_pa: f64 = g_weights.iter().sum();
            let pa = probs[a];
            probs
                .iter()
                .enumerate()
                .map(|(m, &pm)| g_pa * pa * (if m == a { 1.0 } else { 0.0 } - pm))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.3, 0.3]), vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_quarter() {
        assert_eq!(
            attention_weights(&[5.0, -1.0, 0.0, 2.0], AttentionMode::UniformAvg),
            vec![0.25; 4]
        );
    }

    #[test]
    fn max_mode_shares_largest() {
        let w = attention_weights(&[2f64.ln(), 0.0], AttentionMode::Max);
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[0], w[1]);
    }

    #[test]
    fn singleton_weight_is_one() {
        for mode in [AttentionMode::Softmax, AttentionMode::UniformAvg, AttentionMode::Max] {
            assert_eq!(attention_weights(&[17.0], mode), vec![1.0]);
        }
    }

    fn fd_weights(scores: &[f64], g: &[f64], mode: AttentionMode) -> Vec<f64> {
        let h = 1e-6;
        (0..scores.len())
            .map(|m| {
                let mut up = scores.to_vec();
                up[m] += h;
                let mut dn = scores.to_vec();
                dn[m] -= h;
                let f = |s: &[f64]| dot(&attention_weights(s, mode), g);
                (f(&up) - f(&dn)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn weight_backward_matches_differences() {
        let scores = [0.4, -1.2, 0.9, 0.1];
        let g = [0.3, -0.7, 1.1, 0.2];
        for mode in [AttentionMode::Softmax, AttentionMode::UniformAvg, AttentionMode::Max] {
            let probs = softmax(&scores);
            let analytic = attention_weights_backward(&probs, &g, mode);
            let numeric = fd_weights(&scores, &g, mode);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!((a - n).abs() < 1e-8, "{mode:?}: {a} vs {n}");
            }
        }
    }
}
