//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! ```text
//! cargo test -p gdsrec --test acceptance -- --nocapture
//! ```
//!
//! Reference values are recomputed here from first principles (dense
//! matrices, naive loops, finite differences) rather than through the
//! library's own helpers.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gdsrec::commands;
use gdsrec::data::{split_dataset, DatasetBundle, IdMap, RatingRecord, Split, TrustEdge};
use gdsrec::eval;
use gdsrec::graph::{build_graph, NeighborSampler, View};
use gdsrec::model::{self, attention_weights, Forward};
use gdsrec::persist;
use gdsrec::synthetic::{generate, write_files, SyntheticSpec};
use gdsrec::train::{self, batch_loss, Decision, EarlyStopping, Task};
use gdsrec::{AttentionMode, ModelParams, Predictor, RunConfig, TrainConfig, VariantFlags};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Runs one criterion, prints its line and fails the test on FAIL.
fn criterion(id: u32, name: &str, limit: Duration, body: impl FnOnce() -> Check) {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(body));
    let secs = start.elapsed().as_secs_f64();
    let verdict = match outcome {
        Ok(Ok(detail)) if start.elapsed() <= limit => Ok(detail),
        Ok(Ok(detail)) => Err(format!("{detail}; took {secs:.1}s, limit {}s", limit.as_secs())),
        Ok(Err(msg)) => Err(msg),
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    match verdict {
        Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.2}s)"),
        Err(msg) => {
            println!("FAIL [{id:>2}] {name}: {msg} ({secs:.2}s)");
            panic!("criterion {id} failed: {msg}");
        }
    }
}

fn bundle_from(
    n: usize,
    m: usize,
    train: Vec<RatingRecord>,
    test: Vec<RatingRecord>,
    trust: Vec<(usize, usize)>,
) -> DatasetBundle {
    let users = IdMap::from((0..n).map(|u| format!("u{u}")).collect::<Vec<_>>());
    let items = IdMap::from((0..m).map(|v| format!("i{v}")).collect::<Vec<_>>());
    let trust = trust
        .into_iter()
        .map(|(src, dst)| TrustEdge { src, dst, unrated_endpoint: false })
        .collect();
    DatasetBundle::from_parts(users, items, n, train, Vec::new(), test, trust, 1.0, 0).unwrap()
}

fn rec(user: usize, item: usize, rating: u8) -> RatingRecord {
    RatingRecord { user, item, rating }
}

// ---------------------------------------------------------------- 1

#[test]
fn c01_graph_oracle_equivalence() {
    criterion(1, "graph matches brute-force T, lambda and levels", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut compared = 0usize;
        for case in 0..50 {
            let n = rng.random_range(2..=20);
            let m = rng.random_range(1..=20);
            let density = rng.random_range(0.1..0.9);
            let mut dense = vec![vec![None; m]; n];
            let mut train = Vec::new();
            for (u, row) in dense.iter_mut().enumerate() {
                for (v, cell) in row.iter_mut().enumerate() {
                    if rng.random_bool(density) {
                        let r = rng.random_range(1..=5u8);
                        *cell = Some(r);
                        train.push(rec(u, v, r));
                    }
                }
            }
            if train.is_empty() {
                dense[0][0] = Some(3);
                train.push(rec(0, 0, 3));
            }
            train.shuffle(&mut rng);
            let mut trust = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && rng.random_bool(0.3) {
                        trust.push((a, b));
                    }
                }
            }
            let bundle = bundle_from(n, m, train.clone(), Vec::new(), trust.clone());

            // means straight from the dense matrix, global mean for cold entities
            let all: Vec<f64> = dense.iter().flatten().flatten().map(|&r| r as f64).collect();
            let global = all.iter().sum::<f64>() / all.len() as f64;
            let mean_of = |xs: Vec<f64>| {
                if xs.is_empty() {
                    global
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            };
            let user_mean: Vec<f64> = (0..n)
                .map(|u| mean_of(dense[u].iter().flatten().map(|&r| r as f64).collect()))
                .collect();
            let item_mean: Vec<f64> = (0..m)
                .map(|v| mean_of((0..n).filter_map(|u| dense[u][v]).map(|r| r as f64).collect()))
                .collect();

            for delta in 0..=3u8 {
                let g = build_graph(&bundle, delta);
                for u in 0..n {
                    let mut want: Vec<(usize, u8, u8)> = (0..m)
                        .filter_map(|v| dense[u][v].map(|r| (v, (r as f64 - item_mean[v]).abs().ceil() as u8, r)))
                        .collect();
                    want.sort_unstable();
                    let mut got: Vec<(usize, u8, u8)> =
                        g.user_items(u).iter().map(|e| (e.neighbor, e.level, e.rating)).collect();
                    got.sort_unstable();
                    ensure!(got == want, "case {case} delta {delta}: user {u} view {got:?} != {want:?}");

                    let mut out: Vec<usize> = trust.iter().filter(|e| e.0 == u).map(|e| e.1).collect();
                    out.sort_unstable();
                    let coeffs: Vec<u32> = out
                        .iter()
                        .map(|&k| {
                            1 + (0..m)
                                .filter(|&v| match (dense[u][v], dense[k][v]) {
                                    (Some(a), Some(b)) => (a as i32 - b as i32).abs() <= delta as i32,
                                    _ => false,
                                })
                                .count() as u32
                        })
                        .collect();
                    let total: u32 = coeffs.iter().sum();
                    let mut got: Vec<_> = g.social(u).to_vec();
                    got.sort_by_key(|e| e.neighbor);
                    ensure!(got.len() == out.len(), "case {case}: user {u} has {} social edges, want {}", got.len(), out.len());
                    for ((e, &k), &t) in got.iter().zip(&out).zip(&coeffs) {
                        ensure!(e.neighbor == k && e.coefficient == t, "case {case} delta {delta}: T({u},{k}) = {} want {t}", e.coefficient);
                        let lambda = t as f64 / total as f64;
                        ensure!((e.weight - lambda).abs() <= 1e-12, "case {case}: lambda({u},{k}) = {} want {lambda}", e.weight);
                        compared += 1;
                    }
                }
                for v in 0..m {
                    let mut want: Vec<(usize, u8, u8)> = (0..n)
                        .filter_map(|u| dense[u][v].map(|r| (u, (r as f64 - user_mean[u]).abs().ceil() as u8, r)))
                        .collect();
                    want.sort_unstable();
                    let mut got: Vec<(usize, u8, u8)> =
                        g.item_users(v).iter().map(|e| (e.neighbor, e.level, e.rating)).collect();
                    got.sort_unstable();
                    ensure!(got == want, "case {case} delta {delta}: item {v} view {got:?} != {want:?}");
                }
            }
        }
        Ok(format!("50 cases x 4 deltas, {compared} social edges compared"))
    });
}

// ---------------------------------------------------------------- 2

fn gradient_fixture() -> (DatasetBundle, ModelParams) {
    // 4 users x 5 items; user 0 rates all five items so K=3 actually drops
    let rows = [
        (0, 0, 5), (0, 1, 3), (0, 2, 4), (0, 3, 1), (0, 4, 2),
        (1, 0, 4), (1, 1, 2), (1, 3, 5), (1, 4, 3),
        (2, 0, 1), (2, 2, 5), (2, 3, 2), (2, 4, 4),
        (3, 1, 3), (3, 2, 4), (3, 4, 5),
    ];
    let train: Vec<RatingRecord> = rows.iter().map(|&(u, v, r)| rec(u, v, r)).collect();
    let trust = vec![(0, 1), (0, 2), (0, 3), (1, 0), (2, 3), (3, 0), (3, 1)];
    let bundle = bundle_from(4, 5, train, Vec::new(), trust);
    let mut params = ModelParams::init(4, 5, 6, 17);
    for (_, m) in params.groups_mut() {
        m.data.iter_mut().for_each(|x| *x *= 4.0);
    }
    (bundle, params)
}

#[test]
fn c02_gradient_check() {
    criterion(2, "analytic gradients match central differences", Duration::from_secs(30), || {
        const STEP: f64 = 1e-5;
        // round-off in the central difference is ~1e-11 here; smaller
        // gradients are compared against this floor instead of themselves
        const FLOOR: f64 = 1e-6;
        let (bundle, params) = gradient_fixture();
        let graph = build_graph(&bundle, 1);
        let flags = VariantFlags::default();
        let sampler = NeighborSampler::for_epoch(5, 0, 3);
        ensure!(
            sampler.user_items(&graph, 0).len() == 3 && graph.user_items(0).len() == 5,
            "fixture should exercise dropout"
        );
        let batch = bundle.train.clone();

        // the loss itself against an independent sum over `predict`
        let full = Forward { params: &params, graph: &graph, bundle: &bundle, flags: &flags, sampler: NeighborSampler::full() };
        let l1 = batch_loss(&full, &batch, Task::Rating, 4).map_err(|e| e.to_string())?.loss;
        let oracle = batch
            .iter()
            .map(|r| {
                let e = model::predict(r.user, r.item, &graph, &bundle, &params, &flags) - r.rating as f64;
                e * e
            })
            .sum::<f64>()
            / (2.0 * batch.len() as f64);
        ensure!((l1 - oracle).abs() < 1e-12, "L1 {l1} vs oracle {oracle}");

        let mut worst: (f64, String) = (0.0, String::new());
        let mut groups = 0;
        for task in [Task::Rating, Task::Ranking] {
            let loss = |p: &ModelParams| {
                let fwd = Forward { params: p, graph: &graph, bundle: &bundle, flags: &flags, sampler };
                batch_loss(&fwd, &batch, task, 4).unwrap().loss
            };
            let fwd = Forward { params: &params, graph: &graph, bundle: &bundle, flags: &flags, sampler };
            let analytic = batch_loss(&fwd, &batch, task, 4)
                .map_err(|e| e.to_string())?
                .grads
                .to_dense(4, 5);
            for (g, (name, grad)) in analytic.iter().enumerate() {
                let (mut diff, mut scale) = (0.0f64, 0.0f64);
                for k in 0..grad.data.len() {
                    let mut plus = params.clone();
                    plus.groups_mut()[g].1.data[k] += STEP;
                    let mut minus = params.clone();
                    minus.groups_mut()[g].1.data[k] -= STEP;
                    let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
                    diff = diff.max((grad.data[k] - numeric).abs());
                    scale = scale.max(grad.data[k].abs()).max(numeric.abs());
                }
                let rel = diff / scale.max(FLOOR);
                ensure!(rel < 1e-4, "{task:?} {name}: relative error {rel:.3e}");
                if rel > worst.0 {
                    worst = (rel, format!("{task:?} {name}"));
                }
                groups += 1;
            }
        }
        Ok(format!("{groups} group checks, worst {:.2e} ({})", worst.0, worst.1))
    });
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_zero_head_decomposition() {
    criterion(3, "zeroed head gives the mean-rating benchmark", Duration::from_secs(1), || {
        let synth = generate(&SyntheticSpec { users: 15, items: 20, ..Default::default() }).unwrap();
        let bundle = split_dataset(&synth.raw, 0.6, 9).unwrap();
        let graph = build_graph(&bundle, 1);
        let mut params = ModelParams::init(bundle.num_users(), bundle.num_items(), 8, 3);
        params.zero_head();

        // train-split means recomputed from the records
        let mut us: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut is: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for r in &bundle.train {
            let e = us.entry(r.user).or_default();
            e.0 += r.rating as f64;
            e.1 += 1.0;
            let e = is.entry(r.item).or_default();
            e.0 += r.rating as f64;
            e.1 += 1.0;
        }
        let global = bundle.train.iter().map(|r| r.rating as f64).sum::<f64>() / bundle.train.len() as f64;
        let mean = |m: &BTreeMap<usize, (f64, f64)>, k| m.get(&k).map_or(global, |&(s, c)| s / c);

        for alpha in [1.0, 0.0] {
            let flags = VariantFlags { alpha, ..Default::default() };
            let pred = Predictor::for_pairs(&params, &graph, &bundle, &flags, bundle.test.iter().map(|r| (r.user, r.item)));
            for r in &bundle.test {
                let want = alpha * 0.5 * (mean(&us, r.user) + mean(&is, r.item));
                let got = pred.predict(r.user, r.item);
                let direct = model::predict(r.user, r.item, &graph, &bundle, &params, &flags);
                ensure!(got == direct, "predictor {got} != predict {direct}");
                ensure!((got - want).abs() <= 1e-12, "alpha {alpha} pair ({}, {}): {got} vs {want}", r.user, r.item);
                if alpha == 0.0 {
                    ensure!(got == 0.0, "alpha 0 gave {got}");
                }
            }
        }
        Ok(format!("{} test pairs, alpha 1 and 0", bundle.test.len()))
    });
}

// ---------------------------------------------------------------- 4

#[test]
fn c04_equal_coefficients_make_rc_a_no_op() {
    criterion(4, "equal T: base and RC variant agree exactly", Duration::from_secs(1), || {
        // every user rates items 0 and 1 identically, plus two private items, so
        // every linked pair has T = 3 for delta = 1
        let n = 8;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for u in 0..n {
            train.push(rec(u, 0, 4));
            train.push(rec(u, 1, 2));
            train.push(rec(u, 2 + 2 * u, 1 + (u % 5) as u8));
            train.push(rec(u, 3 + 2 * u, 1 + ((u + 2) % 5) as u8));
            test.push(rec(u, 2 + 2 * ((u + 3) % n), 3));
        }
        let trust: Vec<(usize, usize)> =
            (0..n).flat_map(|u| [(u, (u + 1) % n), (u, (u + 3) % n), (u, (u + 4) % n)]).collect();
        let bundle = bundle_from(n, 2 * n + 2, train, test, trust);
        let graph = build_graph(&bundle, 1);
        let coeffs: Vec<u32> = (0..n).flat_map(|u| graph.social(u).iter().map(|e| e.coefficient)).collect();
        ensure!(coeffs.iter().all(|&t| t == coeffs[0]), "fixture coefficients differ: {coeffs:?}");

        let params = ModelParams::init(n, 2 * n + 2, 8, 5);
        let base = VariantFlags::default();
        let rc = VariantFlags { rc_off: true, ..base };
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (0..2 * n + 2).map(move |v| (u, v))).collect();
        let pb = Predictor::for_pairs(&params, &graph, &bundle, &base, pairs.iter().copied());
        let pr = Predictor::for_pairs(&params, &graph, &bundle, &rc, pairs.iter().copied());
        for &(u, v) in &pairs {
            let (a, b) = (pb.predict(u, v), pr.predict(u, v));
            ensure!(a.to_bits() == b.to_bits(), "pair ({u}, {v}): {a} vs {b}");
        }

        // and training from the same seed stays identical
        let cfg = TrainConfig { dim: 8, max_epochs: 2, batch_size: 8, neighbor_cap: 2, ..Default::default() };
        let a = train::fit(&bundle, &graph, &cfg, &base).map_err(|e| e.to_string())?;
        let b = train::fit(&bundle, &graph, &cfg, &rc).map_err(|e| e.to_string())?;
        ensure!(a.params == b.params, "trained parameters differ");
        Ok(format!("T = {} everywhere, {} pairs bitwise equal, 2 training epochs identical", coeffs[0], pairs.len()))
    });
}

// ---------------------------------------------------------------- 5

#[test]
fn c05_attention_properties() {
    criterion(5, "softmax, avg and max attention weights", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for case in 0..1000 {
            let len = rng.random_range(1..=40);
            let scores: Vec<f64> = (0..len).map(|_| rng.random_range(-30.0..30.0)).collect();
            let w = attention_weights(&scores, AttentionMode::Softmax);
            let sum: f64 = w.iter().sum();
            ensure!((sum - 1.0).abs() <= 1e-9, "case {case}: softmax sums to {sum}");
            ensure!(w.iter().all(|&x| x > 0.0), "case {case}: non-positive softmax weight");

            // naive softmax with the max subtracted
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let z: f64 = ex.iter().sum();
            for (a, e) in w.iter().zip(&ex) {
                ensure!((a - e / z).abs() <= 1e-12, "case {case}: softmax {a} vs {}", e / z);
            }

            let shift = rng.random_range(-100.0..100.0);
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let ws = attention_weights(&shifted, AttentionMode::Softmax);
            for (a, b) in w.iter().zip(&ws) {
                ensure!((a - b).abs() <= 1e-12, "case {case}: shift by {shift} moved {a} to {b}");
            }

            let avg = attention_weights(&scores, AttentionMode::UniformAvg);
            ensure!(avg.iter().all(|&x| x == 1.0 / len as f64), "case {case}: avg weights {avg:?}");

            let mx = attention_weights(&scores, AttentionMode::Max);
            let peak = ex.iter().map(|e| e / z).fold(0.0, f64::max);
            ensure!(mx.iter().all(|&x| x == mx[0]), "case {case}: max weights not common");
            ensure!((mx[0] - peak).abs() <= 1e-12, "case {case}: max weight {} vs {peak}", mx[0]);
        }
        Ok("1000 neighborhoods of 1..=40".into())
    });
}

// ---------------------------------------------------------------- 6

#[test]
fn c06_node_dropout_cap() {
    criterion(6, "node dropout keeps at most K and protects small nodes", Duration::from_secs(10), || {
        let (n, m) = (60, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut train = Vec::new();
        for u in 0..n {
            // degrees 1..=50
            let degree = 1 + u % 50;
            let mut items: Vec<usize> = (0..m).collect();
            items.shuffle(&mut rng);
            for &v in &items[..degree] {
                train.push(rec(u, v, rng.random_range(1..=5)));
            }
        }
        let mut trust = Vec::new();
        for u in 0..n {
            let k = rng.random_range(0..=12);
            let mut others: Vec<usize> = (0..n).filter(|&x| x != u).collect();
            others.shuffle(&mut rng);
            trust.extend(others[..k].iter().map(|&o| (u, o)));
        }
        let bundle = bundle_from(n, m, train, Vec::new(), trust);
        let graph = build_graph(&bundle, 1);
        ensure!(graph.max_degree(View::UserItems) == 50, "fixture max user degree {}", graph.max_degree(View::UserItems));

        let cfg = TrainConfig { dim: 8, neighbor_cap: 5, batch_size: 32, instrument: true, ..Default::default() };
        let mut params = ModelParams::init(n, m, 8, 1);
        let mut opt = train::RmsProp::new(&params);
        let report = train::train_epoch(&bundle, &graph, &mut params, &mut opt, &cfg, &VariantFlags::default(), 0)
            .map_err(|e| e.to_string())?;
        let recs = &report.aggregations;
        ensure!(!recs.is_empty(), "no aggregations recorded");
        let (mut capped, mut protected) = (0, 0);
        for a in recs {
            ensure!(a.consumed <= 5, "{:?} node {} consumed {} of {}", a.view, a.node, a.consumed, a.degree);
            if a.degree <= 5 {
                ensure!(a.consumed == a.degree, "{:?} node {} kept {} of {}", a.view, a.node, a.consumed, a.degree);
                protected += 1;
            } else {
                ensure!(a.consumed == 5, "{:?} node {} kept {} of {}", a.view, a.node, a.consumed, a.degree);
                capped += 1;
            }
        }
        let views: std::collections::BTreeSet<_> = recs.iter().map(|a| a.view).collect();
        ensure!(views.len() == 3, "views seen {views:?}");
        Ok(format!("{} aggregations ({capped} capped, {protected} kept whole) over 3 views", recs.len()))
    });
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_early_stopping() {
    criterion(7, "early stop on the 10th increase, best epoch restored", Duration::from_secs(1), || {
        let mut values = vec![0.9, 0.8, 0.7];
        values.extend((1..=12).map(|k| 0.7 + 0.01 * k as f64));
        let mut es = EarlyStopping::new(10);
        let mut snapshot = None;
        let mut stop = None;
        for (epoch, &v) in values.iter().enumerate() {
            match es.observe(v) {
                Decision::Continue { improved: true } => snapshot = Some(epoch),
                Decision::Continue { improved: false } => {}
                Decision::Stop { best_epoch } => {
                    stop = Some((epoch, best_epoch));
                    break;
                }
            }
        }
        ensure!(stop == Some((12, 2)), "stopped at {stop:?}, want epoch 12 with best 2");
        ensure!(snapshot == Some(2), "snapshot taken at {snapshot:?}");

        // nine increases are not enough
        let mut es = EarlyStopping::new(10);
        let nine: Vec<f64> = (0..10).map(|k| k as f64).collect();
        ensure!(nine.iter().all(|&v| matches!(es.observe(v), Decision::Continue { .. })), "stopped after nine increases");

        // fit restores the best epoch: rerunning up to that epoch reproduces it
        let synth = generate(&SyntheticSpec { users: 20, items: 25, ..Default::default() }).unwrap();
        let bundle = split_dataset(&synth.raw, 0.6, 4).unwrap();
        let graph = build_graph(&bundle, 1);
        let cfg = TrainConfig { dim: 8, learning_rate: 2e-2, patience: 2, max_epochs: 40, ..Default::default() };
        let flags = VariantFlags::default();
        let long = train::fit(&bundle, &graph, &cfg, &flags).map_err(|e| e.to_string())?;
        let short_cfg = TrainConfig { max_epochs: long.best_epoch + 1, ..cfg.clone() };
        let short = train::fit(&bundle, &graph, &short_cfg, &flags).map_err(|e| e.to_string())?;
        ensure!(long.params == short.params, "restored params differ from epoch {}", long.best_epoch);
        Ok(format!(
            "scripted stop at epoch 12 (best 2); fit ran {} epochs and restored epoch {}",
            long.history.len(),
            long.best_epoch
        ))
    });
}

// ---------------------------------------------------------------- 8

#[test]
fn c08_synthetic_learning_power() {
    criterion(8, "beats the global-mean predictor by at least 10%", Duration::from_secs(300), || {
        let synth = generate(&SyntheticSpec { users: 60, items: 80, seed: 2024, ..Default::default() }).unwrap();
        let bundle = split_dataset(&synth.raw, 0.6, 7).unwrap();
        let graph = build_graph(&bundle, 1);
        let cfg = TrainConfig { dim: 32, learning_rate: 5e-4, max_epochs: 50, seed: 7, ..Default::default() };
        let flags = VariantFlags::default();
        let out = train::fit(&bundle, &graph, &cfg, &flags).map_err(|e| e.to_string())?;
        let pred = Predictor::for_pairs(&out.params, &graph, &bundle, &flags, bundle.test.iter().map(|r| (r.user, r.item)));
        let n = bundle.test.len() as f64;
        let model_mae = bundle.test.iter().map(|r| (pred.predict(r.user, r.item) - r.rating as f64).abs()).sum::<f64>() / n;
        let mu = bundle.train.iter().map(|r| r.rating as f64).sum::<f64>() / bundle.train.len() as f64;
        let base_mae = bundle.test.iter().map(|r| (mu - r.rating as f64).abs()).sum::<f64>() / n;
        let gain = 1.0 - model_mae / base_mae;
        ensure!(gain >= 0.10, "model MAE {model_mae:.4} vs global mean {base_mae:.4} ({:.1}% lower)", gain * 100.0);
        Ok(format!(
            "test MAE {model_mae:.4} vs {base_mae:.4} ({:.1}% lower) after {} epochs",
            gain * 100.0,
            out.history.len()
        ))
    });
}

// ---------------------------------------------------------------- 9

fn oracle_ndcg(labels: &[u8]) -> f64 {
    let dcg = |ls: &[u8]| -> f64 {
        ls.iter()
            .enumerate()
            .map(|(i, &y)| (2f64.powi(y as i32) - 1.0) / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = labels.to_vec();
    ideal.sort_by(|a, b| b.cmp(a));
    dcg(labels) / dcg(&ideal)
}

#[test]
fn c09_metric_oracles() {
    criterion(9, "MAE/RMSE, Recall@5 and NDCG against oracles", Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..1000 {
            let len = rng.random_range(1..=50);
            let p: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..10.0)).collect();
            let t: Vec<f64> = (0..len).map(|_| rng.random_range(1..=5) as f64).collect();
            let (mae, rmse) = eval::mae_rmse(&p, &t).map_err(|e| e.to_string())?;
            ensure!(mae <= rmse + 1e-12, "case {case}: mae {mae} > rmse {rmse}");
        }
        let n = eval::ndcg(&[0, 1, 0]).unwrap();
        ensure!((n - 1.0 / 3f64.log2()).abs() <= 1e-12, "ndcg(0,1,0) = {n}");

        for case in 0..500 {
            let len = rng.random_range(1..=30);
            let items: Vec<usize> = (0..len).map(|i| i * 3 + 1).collect();
            let scores: Vec<f64> = (0..len).map(|_| rng.random_range(-4.0..4.0)).collect();
            let ratings: Vec<u8> = (0..len).map(|_| rng.random_range(1..=5)).collect();
            let lists = |s: &[f64]| -> Vec<u8> {
                let order = eval::rank_user(&items, s);
                eval::label_items(&order.iter().map(|&i| ratings[i]).collect::<Vec<_>>(), 4)
            };
            let base = lists(&scores);
            for f in [|x: f64| 3.0 * x + 1.0, |x: f64| (x / 2.0).exp(), |x: f64| x.tanh() * 0.5] {
                let moved: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
                ensure!(lists(&moved) == base, "case {case}: ranking changed under a monotone transform");
            }
            if base.iter().any(|&y| y > 0) {
                let got = eval::ndcg(&base).unwrap();
                let want = oracle_ndcg(&base);
                ensure!((got - want).abs() <= 1e-12, "case {case}: ndcg {got} vs {want}");
                let positives = base.iter().filter(|&&y| y > 0).count() as f64;
                let hits = base.iter().take(5).filter(|&&y| y > 0).count() as f64;
                let recall = eval::recall_at(&base, 5).unwrap();
                ensure!(recall == hits / positives, "case {case}: recall {recall}");
            }
        }
        Ok("1000 MAE/RMSE vectors, 500 ranked lists under 3 monotone maps".into())
    });
}

// ---------------------------------------------------------------- 10

fn end_to_end(root: &std::path::Path) -> gdsrec::Result<(Vec<u8>, String, String)> {
    let synth = generate(&SyntheticSpec::default())?;
    write_files(&synth.raw, &root.join("data"))?;
    let mut cfg = RunConfig::default();
    cfg.data.dataset_dir = root.join("data");
    cfg.output_dir = root.join("out");
    cfg.train.dim = 16;
    cfg.train.max_epochs = 5;
    cfg.train.seed = 123;
    commands::preprocess(&cfg)?;
    let summary = commands::train(&cfg)?;
    let record = commands::evaluate(&cfg, None, Split::Test)?;
    let metrics = std::fs::read(root.join("out/metrics.jsonl")).map_err(|e| gdsrec::Error::Io {
        path: root.join("out/metrics.jsonl"),
        source: e,
    })?;
    let report = persist::file_hash(&root.join("out/report.json"))?;
    assert_eq!(summary.checkpoint_hash, record.checkpoint_hash);
    Ok((metrics, summary.checkpoint_hash, report))
}

#[test]
fn c10_end_to_end_determinism() {
    criterion(10, "two seeded end-to-end runs are byte-identical", Duration::from_secs(120), || {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = end_to_end(a.path()).map_err(|e| e.to_string())?;
        let rb = end_to_end(b.path()).map_err(|e| e.to_string())?;
        let lines = String::from_utf8_lossy(&ra.0).lines().count();
        ensure!(lines == 5, "metrics log has {lines} lines");
        ensure!(ra.0 == rb.0, "metrics logs differ");
        ensure!(ra.1 == rb.1, "checkpoint hashes differ: {} vs {}", ra.1, rb.1);
        ensure!(ra.2 == rb.2, "report hashes differ");
        Ok(format!("5-line logs identical, checkpoint {}", &ra.1[..16]))
    });
}
