use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::Mat;
use crate::graph::{DataSplit, MessageGraph};
use crate::motif::MOTIF_COLUMNS;

struct Fixture {
    cfg: ModelConfig,
    inputs: ModelInputs,
    msg: MessageGraph,
}

fn fixture(seed: u64, backbone: Backbone, n: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig { backbone, layers: 2, hidden: 6, in_dim: 4, fusion_depth: 2, use_motif_features: true, log_counts: true };
    let x = Mat::from_shape_fn((n, cfg.in_dim), |_| rng.random_range(-1.0..1.0));
    let counts = Mat::from_shape_fn((n, MOTIF_COLUMNS), |_| if rng.random_bool(0.2) { rng.random_range(0.0..2.0) } else { 0.0 });
    let edges = (0..n * 2).map(|_| (rng.random_range(0..n as u32), rng.random_range(0..n as u32))).collect();
    Fixture { cfg, inputs: ModelInputs { x, counts }, msg: MessageGraph::from_undirected(n, edges) }
}

/// Readout `sum(a * logits) + sum(b * hidden)`, its gradients, and the
/// rectifier pattern.
fn readout(f: &Fixture, p: &ModelParams, a: &[f64], b: &Mat) -> (f64, Vec<Mat>, u64) {
    let rec = record_forward(p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval, true).unwrap();
    let out = rec.output();
    let value = out.logits.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() + (&out.hidden * b).sum();
    let grads = rec.backward(Some(a), Some(b.clone()));
    (value, grads, rec.tape.activation_signature())
}

fn check_gradients(f: &Fixture, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(&f.cfg, seed).unwrap();
    let n = f.inputs.num_nodes();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = Mat::from_shape_fn((n, f.cfg.hidden), |_| rng.random_range(-1.0..1.0));
    let (_, grads, sig) = readout(f, &params, &a, &b);
    let h = 1e-4;
    let mut checked = 0;
    for (t, grad) in grads.iter().enumerate() {
        let mut done = 0;
        let mut attempts = 0;
        while done < 3 && attempts < 50 {
            attempts += 1;
            let idx = rng.random_range(0..grad.len());
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut()[t].as_slice_mut().unwrap()[idx] += delta;
                let (v, _, s) = readout(f, &p, &a, &b);
                (v, s)
            };
            let ((up, su), (down, sd)) = (eval(h), eval(-h));
            if su != sig || sd != sig {
                continue;
            }
            let fd = (up - down) / (2.0 * h);
            let an = grad.as_slice().unwrap()[idx];
            let scale = fd.abs().max(an.abs());
            if scale > 1e-7 {
                assert!((fd - an).abs() / scale < 1e-4, "tensor {t} [{idx}]: fd {fd} vs analytic {an}");
            } else {
                assert!((fd - an).abs() < 1e-9);
            }
            done += 1;
        }
        checked += done;
    }
    assert!(checked >= grads.len() * 2);
}

#[test]
fn gradients_match_finite_differences() {
    check_gradients(&fixture(1, Backbone::Gcn, 7), 1);
    check_gradients(&fixture(2, Backbone::SageMean, 9), 2);
    check_gradients(&fixture(3, Backbone::Gcn, 5), 3);
}

#[test]
fn gradients_are_finite_and_vanish_with_zero_seed() {
    let f = fixture(4, Backbone::SageMean, 8);
    let p = ModelParams::init(&f.cfg, 4).unwrap();
    let rec = record_forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval, true).unwrap();
    let g = rec.backward(Some(&[1.0; 8]), None);
    assert!(g.iter().all(|m| m.iter().all(|v| v.is_finite())));
    let z = rec.backward(Some(&[0.0; 8]), None);
    assert!(z.iter().all(|m| m.iter().all(|&v| v == 0.0)));
    assert_eq!(g.len(), p.tensors().len());
    for (gm, (_, pm)) in g.iter().zip(p.tensors()) {
        assert_eq!(gm.dim(), pm.dim());
    }
}

#[test]
fn single_node_identity_model() {
    let d = 3;
    let cfg = ModelConfig { backbone: Backbone::Gcn, layers: 1, hidden: d, in_dim: d, fusion_depth: 0, use_motif_features: false, log_counts: false };
    let mut p = ModelParams::init(&cfg, 0).unwrap();
    p.motif.fusion.w = Mat::eye(d);
    p.layers[0].w = Mat::eye(d);
    p.head_w1 = Mat::eye(d);
    p.head_w2 = Mat::ones((d, 1));
    let inputs = ModelInputs { x: array![[0.5, 2.0, 1.0]], counts: Mat::zeros((1, MOTIF_COLUMNS)) };
    let out = forward(&p, &cfg, &inputs, &MessageGraph::from_undirected(1, vec![]), DropoutMode::Eval).unwrap();
    assert_eq!(out.logits, vec![3.5]);
    assert_eq!(out.hidden, inputs.x);
}

#[test]
fn sage_mean_of_opposite_neighbours_is_zero() {
    let msg = MessageGraph::from_undirected(3, vec![(0, 1), (0, 2)]);
    let z = array![[9.0, 9.0], [1.0, -2.0], [-1.0, 2.0]];
    assert_eq!(msg.mean.matmul(&z).row(0), array![0.0, 0.0]);
}

#[test]
fn eval_is_deterministic_and_dropout_is_seeded() {
    let f = fixture(5, Backbone::Gcn, 10);
    let p = ModelParams::init(&f.cfg, 5).unwrap();
    let a = forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval).unwrap();
    let b = forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval).unwrap();
    assert_eq!(a, b);
    let t = |seed| forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Train { p: 0.5, seed }).unwrap();
    assert_eq!(t(1), t(1));
    assert_ne!(t(1), t(2));
}

#[test]
fn gcn_equivariant_under_relabeling() {
    let f = fixture(6, Backbone::Gcn, 8);
    let p = ModelParams::init(&f.cfg, 6).unwrap();
    let perm: Vec<usize> = vec![3, 7, 0, 5, 1, 6, 2, 4];
    let x = Mat::from_shape_fn(f.inputs.x.dim(), |(i, j)| f.inputs.x[[perm[i], j]]);
    let counts = Mat::from_shape_fn(f.inputs.counts.dim(), |(i, j)| f.inputs.counts[[perm[i], j]]);
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new as u32;
    }
    let edges = f.msg.edges.iter().map(|&(u, v)| (inv[u as usize], inv[v as usize])).collect();
    let msg = MessageGraph::from_undirected(8, edges);
    let base = forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval).unwrap();
    let moved = forward(&p, &f.cfg, &ModelInputs { x, counts }, &msg, DropoutMode::Eval).unwrap();
    for (i, &old) in perm.iter().enumerate() {
        assert!((moved.logits[i] - base.logits[old]).abs() < 1e-12);
    }
}

#[test]
fn non_finite_input_reports_stage() {
    let mut f = fixture(7, Backbone::Gcn, 4);
    f.inputs.x[[1, 0]] = f64::INFINITY;
    let p = ModelParams::init(&f.cfg, 7).unwrap();
    let err = forward(&p, &f.cfg, &f.inputs, &f.msg, DropoutMode::Eval).unwrap_err();
    assert!(matches!(err, GnnError::NonFinite { layer: 0 }));
}

/// Two clusters with planted labels; features shifted by class.
fn separable(seed: u64) -> (ModelInputs, MessageGraph, Vec<f64>, DataSplit) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40;
    let labels: Vec<f64> = (0..n).map(|i| (i % 4 == 0) as u8 as f64).collect();
    let x = Mat::from_shape_fn((n, 4), |(i, _)| labels[i] * 2.0 - 1.0 + rng.random_range(-0.3..0.3));
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if labels[i] == labels[j] && rng.random_bool(0.2) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    let split = DataSplit {
        train_nodes: (0..24).collect(),
        val_nodes: (24..32).collect(),
        test_nodes: (32..40).collect(),
    };
    (ModelInputs { x, counts: Mat::zeros((n, MOTIF_COLUMNS)) }, MessageGraph::from_undirected(n, edges), labels, split)
}

fn small_cfg(seed: u64) -> GnnConfig {
    GnnConfig {
        model: ModelConfig { hidden: 16, in_dim: 4, log_counts: true, ..ModelConfig::default() },
        learning_rate: 1e-2,
        seed,
        ..GnnConfig::default()
    }
}

#[test]
fn separable_fixture_is_learned() {
    let (inputs, msg, labels, split) = separable(1);
    let cfg = GnnConfig { patience: 200, ..small_cfg(1) };
    let out = train(&inputs, &msg, &labels, &split, &cfg).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|r| r.train_loss).collect();
    assert!(losses.windows(2).take(5).all(|w| w[1] < w[0] + 1e-6), "{losses:?}");
    let o = forward(&out.params, &cfg.model, &inputs, &msg, DropoutMode::Eval).unwrap();
    let scores: Vec<f64> = split.train_nodes.iter().map(|&i| o.logits[i]).collect();
    let ys: Vec<bool> = split.train_nodes.iter().map(|&i| labels[i] > 0.5).collect();
    assert!(crate::metrics::auc_prc(&scores, &ys).unwrap() > 0.99);
}

#[test]
fn returns_best_epoch_snapshot() {
    let (inputs, msg, labels, split) = separable(2);
    let cfg = GnnConfig { max_epochs: 40, patience: 40, dropout: 0.3, ..small_cfg(2) };
    let out = train(&inputs, &msg, &labels, &split, &cfg).unwrap();
    let best = out.history[out.best_epoch - 1].val_auc_prc.unwrap();
    assert!(out.history.iter().all(|r| r.val_auc_prc.unwrap() <= best));
    let o = forward(&out.params, &cfg.model, &inputs, &msg, DropoutMode::Eval).unwrap();
    let scores: Vec<f64> = split.val_nodes.iter().map(|&i| o.logits[i]).collect();
    let ys: Vec<bool> = split.val_nodes.iter().map(|&i| labels[i] > 0.5).collect();
    assert_eq!(crate::metrics::auc_prc(&scores, &ys).unwrap(), best);
}

#[test]
fn patience_zero_stops_at_first_non_improvement() {
    let (inputs, msg, labels, split) = separable(3);
    let cfg = GnnConfig { patience: 0, ..small_cfg(3) };
    let out = train(&inputs, &msg, &labels, &split, &cfg).unwrap();
    let h = &out.history;
    let last = h.len() - 1;
    let best_before = h[..last].iter().filter_map(|r| r.val_auc_prc).fold(f64::NEG_INFINITY, f64::max);
    assert!(h[last].val_auc_prc.unwrap() <= best_before);
    for i in 1..last {
        let prev = h[..i].iter().filter_map(|r| r.val_auc_prc).fold(f64::NEG_INFINITY, f64::max);
        assert!(h[i].val_auc_prc.unwrap() > prev);
    }
}

#[test]
fn same_seed_same_history() {
    let (inputs, msg, labels, split) = separable(4);
    let cfg = GnnConfig { max_epochs: 15, dropout: 0.2, ..small_cfg(4) };
    let a = train(&inputs, &msg, &labels, &split, &cfg).unwrap();
    let b = train(&inputs, &msg, &labels, &split, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert_eq!(a.log_jsonl().lines().count(), a.history.len());
}

#[test]
fn checkpoint_round_trip_and_rejections() {
    let f = fixture(8, Backbone::SageMean, 3);
    let ck = Checkpoint { config: f.cfg.clone(), provenance: "train".into(), params: ModelParams::init(&f.cfg, 8).unwrap() };
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ck).unwrap();
    assert_eq!(&buf[..7], CHECKPOINT_MAGIC);
    assert_eq!(read_checkpoint(&buf[..], Some(&f.cfg)).unwrap(), ck);
    let other = ModelConfig { hidden: 7, ..f.cfg.clone() };
    assert!(matches!(read_checkpoint(&buf[..], Some(&other)), Err(GnnError::ConfigMismatch)));
    assert!(read_checkpoint(&buf[..buf.len() - 3], None).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(&bad[..], None).is_err());
    bad = buf.clone();
    bad.push(0);
    assert!(read_checkpoint(&bad[..], None).is_err());
}

#[test]
fn config_validation() {
    assert!(ModelConfig { layers: 0, ..ModelConfig::default() }.validate().is_err());
    assert!(GnnConfig { dropout: 1.0, ..GnnConfig::default() }.validate().is_err());
    assert_eq!("sage_mean".parse::<Backbone>().unwrap(), Backbone::SageMean);
    assert!("gat".parse::<Backbone>().is_err());
}
