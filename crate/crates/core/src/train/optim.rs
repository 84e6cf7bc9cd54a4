use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NUM_LEVELS;
use crate::model::{Gradients, Matrix, ModelParams, Network};

pub const DEFAULT_RHO: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSprop: `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g/(√acc + ε)`.
///
/// Embedding rows that receive no gradient in a step are left alone and
/// their accumulator decay is applied the next time they are touched (or on
/// [`RmsProp::sync`]). This is the dense update with `g = 0`, done lazily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub rho: f64,
    pub epsilon: f64,
    step: u64,
    user_acc: Matrix,
    item_acc: Matrix,
    user_synced: Vec<u64>,
    item_synced: Vec<u64>,
    diff_acc: Matrix,
    net_acc: Network,
}

#[inline]
fn update(theta: &mut [f64], g: &[f64], acc: &mut [f64], rho: f64, eps: f64, lr: f64) {
    for ((t, &gi), a) in theta.iter_mut().zip(g).zip(acc.iter_mut()) {
        *a = rho * *a + (1.0 - rho) * gi * gi;
        *t -= lr * gi / (a.sqrt() + eps);
    }
}

fn check(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("parameter group {name} after update")))
    }
}

impl RmsProp {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_constants(params, DEFAULT_RHO, DEFAULT_EPSILON)
    }

    pub fn with_constants(params: &ModelParams, rho: f64, epsilon: f64) -> Self {
        let dim = params.dim;
        RmsProp {
            rho,
            epsilon,
            step: 0,
            user_acc: Matrix::zeros(params.num_users(), dim),
            item_acc: Matrix::zeros(params.num_items(), dim),
            user_synced: vec![0; params.num_users()],
            item_synced: vec![0; params.num_items()],
            diff_acc: Matrix::zeros(NUM_LEVELS, dim),
            net_acc: Network::zeros(dim),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
        self.step += 1;
        let (rho, eps, now) = (self.rho, self.epsilon, self.step);
        let sparse = [
            (
                "user_embed",
                &grads.user_rows,
                &mut params.user_embed,
                &mut self.user_acc,
                &mut self.user_synced,
            ),
            (
                "item_embed",
                &grads.item_rows,
                &mut params.item_embed,
                &mut self.item_acc,
                &mut self.item_synced,
            ),
        ];
        for (name, rows, table, acc, synced) in sparse {
            for (&r, g) in rows {
                let missed = now - 1 - synced[r];
                let acc_row = acc.row_mut(r);
                if missed > 0 {
                    let decay = rho.powi(missed as i32);
                    acc_row.iter_mut().for_each(|a| *a *= decay);
                }
                update(table.row_mut(r), g, acc_row, rho, eps, lr);
                synced[r] = now;
                check(name, table.row(r))?;
            }
        }
        update(
            &mut params.diff_embed.data,
            &grads.diff_embed.data,
            &mut self.diff_acc.data,
            rho,
            eps,
            lr,
        );
        check("diff_embed", &params.diff_embed.data)?;
        for (((name, theta), (_, g)), (_, acc)) in params
            .net
            .groups_mut()
            .into_iter()
            .zip(grads.net.groups())
            .zip(self.net_acc.groups_mut())
        {
            update(&mut theta.data, &g.data, &mut acc.data, rho, eps, lr);
            check(name, &theta.data)?;
        }
        Ok(())
    }

    /// Applies every pending embedding-row decay.
    pub fn sync(&mut self) {
        let (rho, now) = (self.rho, self.step);
        for (acc, synced) in [
            (&mut self.user_acc, &mut self.user_synced),
            (&mut self.item_acc, &mut self.item_synced),
        ] {
            for (r, s) in synced.iter_mut().enumerate() {
                let missed = now - *s;
                if missed > 0 {
                    let decay = rho.powi(missed as i32);
                    acc.row_mut(r).iter_mut().for_each(|a| *a *= decay);
                }
                *s = now;
            }
        }
    }

    /// Accumulators in [`ModelParams::groups`] order. Call [`sync`](Self::sync)
    /// first for current embedding rows.
    pub fn accumulators(&self) -> Vec<(&'static str, &Matrix)> {
        let mut g = vec![
            ("user_embed", &self.user_acc),
            ("item_embed", &self.item_acc),
            ("diff_embed", &self.diff_acc),
        ];
        g.extend(self.net_acc.groups());
        g
    }
}
