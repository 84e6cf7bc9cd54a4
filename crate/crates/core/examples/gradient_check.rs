//! Compare backpropagated gradients with central finite differences for
//! every parameter group, under both objectives.

use gdsrec::data::{split_dataset, RatingRecord};
use gdsrec::graph::{build_graph, NeighborSampler};
use gdsrec::model::Forward;
use gdsrec::synthetic::{generate, SyntheticSpec};
use gdsrec::train::{batch_loss, Task};
use gdsrec::{ModelParams, VariantFlags};

const STEP: f64 = 1e-5;
/// Central differences carry about 1e-11 of round-off at this step, so
/// gradients smaller than this floor are compared absolutely.
const FLOOR: f64 = 1e-6;

/// Largest per-group relative error, `max|a − n| / max(|a|, |n|, FLOOR)`.
pub fn run_example() -> gdsrec::Result<Vec<(Task, &'static str, f64)>> {
    let synth = generate(&SyntheticSpec {
        users: 4,
        items: 5,
        density: 0.8,
        trust_per_user: 2,
        ..Default::default()
    })?;
    let bundle = split_dataset(&synth.raw, 0.7, 3)?;
    let graph = build_graph(&bundle, 1);
    let flags = VariantFlags::default();
    let sampler = NeighborSampler::for_epoch(3, 0, 3);
    let batch: Vec<RatingRecord> = bundle.train.clone();
    let mut params = ModelParams::init(bundle.num_users(), bundle.num_items(), 6, 9);
    // move away from the near-uniform attention of a fresh initialization
    for (_, m) in params.groups_mut() {
        m.data.iter_mut().for_each(|x| *x *= 4.0);
    }

    let loss_at = |p: &ModelParams, task: Task| -> gdsrec::Result<f64> {
        let fwd = Forward { params: p, graph: &graph, bundle: &bundle, flags: &flags, sampler };
        Ok(batch_loss(&fwd, &batch, task, 4)?.loss)
    };

    let mut rows = Vec::new();
    for task in [Task::Rating, Task::Ranking] {
        let fwd = Forward { params: &params, graph: &graph, bundle: &bundle, flags: &flags, sampler };
        let analytic = batch_loss(&fwd, &batch, task, 4)?.grads.to_dense(params.num_users(), params.num_items());
        for (g, (name, grad)) in analytic.iter().enumerate() {
            let mut worst_diff = 0.0f64;
            let mut scale = 0.0f64;
            for k in 0..grad.data.len() {
                let mut plus = params.clone();
                plus.groups_mut()[g].1.data[k] += STEP;
                let mut minus = params.clone();
                minus.groups_mut()[g].1.data[k] -= STEP;
                let numeric = (loss_at(&plus, task)? - loss_at(&minus, task)?) / (2.0 * STEP);
                worst_diff = worst_diff.max((grad.data[k] - numeric).abs());
                scale = scale.max(grad.data[k].abs()).max(numeric.abs());
            }
            let rel = worst_diff / scale.max(FLOOR);
            println!("{task:?} {name:<18} rel err {rel:.2e}  (largest gradient {scale:.2e})");
            rows.push((task, *name, rel));
        }
    }
    Ok(rows)
}

fn main() -> gdsrec::Result<()> {
    let rows = run_example()?;
    let worst = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    println!("worst relative error {worst:.2e}");
    Ok(())
}
