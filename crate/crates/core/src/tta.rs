//! Teacher-student test-time adaptation on an unlabeled graph.
//!
//! Each step: the teacher scores the clean graph and selects nodes of middling
//! confidence; the student embeds an edge-dropped copy; the student is pulled
//! toward the teacher's embeddings and contrasted against motif-similar and
//! motif-dissimilar nodes; the teacher then tracks the student by EMA.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Mat;
use crate::gnn::{forward, record_forward, sigmoid, Adam, DropoutMode, GnnError, ModelConfig, ModelInputs, ModelParams};
use crate::graph::MessageGraph;
use crate::metrics::EvalResult;

#[derive(Debug, Error)]
pub enum TtaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite adaptation loss at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Model(#[from] GnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictWith {
    Teacher,
    Student,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaConfig {
    pub tau_low: f64,
    pub tau_high: f64,
    /// EMA momentum; 1 freezes the teacher.
    pub alpha: f64,
    pub beta: f64,
    pub temperature: f64,
    pub gamma: f64,
    pub edge_drop_p: f64,
    pub steps: usize,
    pub neg_samples: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub predict_with: PredictWith,
}

impl Default for TtaConfig {
    fn default() -> Self {
        Self {
            tau_low: 0.5,
            tau_high: 0.9,
            alpha: 0.9,
            beta: 0.1,
            temperature: 0.5,
            gamma: 0.9,
            edge_drop_p: 0.1,
            steps: 10,
            neg_samples: 16,
            learning_rate: 1e-4,
            seed: 0,
            predict_with: PredictWith::Teacher,
        }
    }
}

impl TtaConfig {
    pub fn validate(&self) -> Result<(), TtaError> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.tau_low) || !(0.0..=1.0).contains(&self.tau_high) {
            bad.push("tau_low/tau_high must lie in [0, 1]");
        }
        if self.tau_low >= self.tau_high {
            bad.push("tau_low must be below tau_high");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bad.push("alpha must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            bad.push("beta must be non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            bad.push("temperature must be positive");
        }
        if !(self.gamma > -1.0 && self.gamma < 1.0) {
            bad.push("gamma must lie in (-1, 1)");
        }
        if !(0.0..1.0).contains(&self.edge_drop_p) {
            bad.push("edge_drop_p must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bad.push("learning_rate must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(TtaError::InvalidConfig(bad.join("; ")))
        }
    }
}

/// Nodes whose binary confidence `max(s, 1 - s)` lies in `(tau_low, tau_high]`.
pub fn confidence_mask(logits: &[f64], tau_low: f64, tau_high: f64) -> Vec<usize> {
    logits
        .iter()
        .enumerate()
        .filter(|(_, &z)| {
            let s = sigmoid(z);
            let p = s.max(1.0 - s);
            tau_low < p && p <= tau_high
        })
        .map(|(i, _)| i)
        .collect()
}

/// Drops each undirected message edge independently with probability `p`.
pub fn perturb_graph(msg: &MessageGraph, p: f64, seed: u64) -> MessageGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = msg.edges.iter().copied().filter(|_| rng.random::<f64>() >= p).collect();
    MessageGraph::from_undirected(msg.num_nodes, kept)
}

/// Cosine similarity and its gradients; zero vectors give 0 with zero gradient.
fn cosine_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    if a == b {
        // stationary point; avoids rounding noise in the gradient
        return (1.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = dot / (na * nb);
    let da = a.iter().zip(b).map(|(&x, &y)| y / (na * nb) - c * x / (na * na)).collect();
    let db = a.iter().zip(b).map(|(&x, &y)| x / (na * nb) - c * y / (nb * nb)).collect();
    (c, da, db)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_grad(a, b).0
}

fn row(m: &Mat, i: usize) -> Vec<f64> {
    m.row(i).to_vec()
}

fn add_row(m: &mut Mat, i: usize, g: &[f64], scale: f64) {
    for (x, &v) in m.row_mut(i).iter_mut().zip(g) {
        *x += scale * v;
    }
}

/// Mean `1 - cos` between teacher and student rows over `mask`, with the
/// gradient w.r.t. the student embeddings. `None` for an empty mask.
pub fn sim_loss(teacher: &Mat, student: &Mat, mask: &[usize]) -> Option<(f64, Mat)> {
    if mask.is_empty() {
        return None;
    }
    let n = mask.len() as f64;
    let mut grad = Mat::zeros(student.dim());
    let mut total = 0.0;
    for &i in mask {
        let (c, _, ds) = cosine_grad(&row(teacher, i), &row(student, i));
        total += 1.0 - c;
        add_row(&mut grad, i, &ds, -1.0 / n);
    }
    Some((total / n, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNce {
    pub loss: f64,
    /// Gradient w.r.t. the embeddings.
    pub grad: Mat,
    pub used: usize,
    /// Anchors without a positive in their candidate pool.
    pub skipped: usize,
}

/// Contrastive loss with positives chosen by motif-feature cosine above
/// `gamma` from a random candidate pool of `2 * neg_samples` other nodes.
/// Remaining non-positive pool members, up to `neg_samples`, are negatives.
pub fn info_nce_loss(
    hidden: &Mat,
    x_motif: &Mat,
    mask: &[usize],
    temperature: f64,
    gamma: f64,
    neg_samples: usize,
    seed: u64,
) -> InfoNce {
    let n = hidden.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = Mat::zeros(hidden.dim());
    let mut terms: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut skipped = 0;
    let pool_size = (2 * neg_samples).max(1).min(n.saturating_sub(1));

    for &i in mask {
        let pool: Vec<usize> = index::sample(&mut rng, n - 1, pool_size)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j })
            .collect();
        let xi = row(x_motif, i);
        let (pos, rest): (Vec<usize>, Vec<usize>) = pool.into_iter().partition(|&j| cosine(&xi, &row(x_motif, j)) > gamma);
        if pos.is_empty() {
            skipped += 1;
            continue;
        }
        let p = pos[rng.random_range(0..pos.len())];
        let negs: Vec<usize> = rest.into_iter().take(neg_samples).collect();
        terms.push((i, std::iter::once(p).chain(negs).collect()));
    }
    if terms.is_empty() {
        if !mask.is_empty() {
            log::warn!("contrastive term skipped: no anchor had a motif-similar candidate");
        }
        return InfoNce { loss: 0.0, grad, used: 0, skipped };
    }

    let used = terms.len();
    let mut total = 0.0;
    for (i, others) in &terms {
        let hi = row(hidden, *i);
        let sims: Vec<(f64, Vec<f64>, Vec<f64>)> = others.iter().map(|&j| cosine_grad(&hi, &row(hidden, j))).collect();
        let logits: Vec<f64> = sims.iter().map(|s| s.0 / temperature).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += max + z.ln() - logits[0];
        for (k, (&j, (_, di, dj))) in others.iter().zip(&sims).enumerate() {
            let w = ((logits[k] - max).exp() / z - (k == 0) as u8 as f64) / temperature / used as f64;
            add_row(&mut grad, *i, di, w);
            add_row(&mut grad, j, dj, w);
        }
    }
    InfoNce { loss: total / used as f64, grad, used, skipped }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, kept inside the
/// elementwise envelope of the two operands.
pub fn ema_update(teacher: &mut ModelParams, student: &ModelParams, alpha: f64) {
    if alpha == 1.0 {
        return;
    }
    let src: Vec<Mat> = student.tensors().into_iter().map(|(_, m)| m.clone()).collect();
    for (t, s) in teacher.tensors_mut().into_iter().zip(&src) {
        t.zip_mut_with(s, |ti, &si| {
            let v = alpha * *ti + (1.0 - alpha) * si;
            *ti = v.clamp(ti.min(si), ti.max(si));
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub mask_size: usize,
    pub l_sim: f64,
    pub l_info: f64,
    pub l_total: f64,
    pub info_used: usize,
    pub info_skipped: usize,
}

#[derive(Debug, Clone)]
pub struct TtaState {
    pub teacher: ModelParams,
    pub student: ModelParams,
    pub optimizer: Adam,
    pub step: usize,
}

impl TtaState {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        Self { teacher: params.clone(), student: params.clone(), optimizer: Adam::new(learning_rate), step: 0 }
    }
}

fn mix(seed: u64, step: usize, salt: u64) -> u64 {
    seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

pub fn tta_step(
    state: &mut TtaState,
    model: &ModelConfig,
    inputs: &ModelInputs,
    msg: &MessageGraph,
    cfg: &TtaConfig,
) -> Result<StepDiagnostics, TtaError> {
    let step = state.step;
    state.step += 1;
    let teacher = forward(&state.teacher, model, inputs, msg, DropoutMode::Eval)?;
    let mask = confidence_mask(&teacher.logits, cfg.tau_low, cfg.tau_high);
    let mut diag = StepDiagnostics { step, mask_size: mask.len(), l_sim: 0.0, l_info: 0.0, l_total: 0.0, info_used: 0, info_skipped: 0 };
    if mask.is_empty() {
        log::info!("step {step}: empty confidence mask, EMA only");
        ema_update(&mut state.teacher, &state.student, cfg.alpha);
        return Ok(diag);
    }

    let perturbed = perturb_graph(msg, cfg.edge_drop_p, mix(cfg.seed, step, 1));
    let rec = record_forward(&state.student, model, inputs, &perturbed, DropoutMode::Eval, true)?;
    let student_hidden = rec.tape.value(rec.hidden).clone();
    let (l_sim, mut d_hidden) = sim_loss(&teacher.hidden, &student_hidden, &mask).expect("mask is non-empty");
    let similarity = teacher.x_motif.as_ref().unwrap_or(&inputs.counts);
    let info = if cfg.beta > 0.0 {
        info_nce_loss(&student_hidden, similarity, &mask, cfg.temperature, cfg.gamma, cfg.neg_samples, mix(cfg.seed, step, 2))
    } else {
        InfoNce { loss: 0.0, grad: Mat::zeros(student_hidden.dim()), used: 0, skipped: 0 }
    };
    d_hidden.scaled_add(cfg.beta, &info.grad);
    let total = l_sim + cfg.beta * info.loss;
    if !total.is_finite() {
        return Err(TtaError::NonFinite { step });
    }
    let grads = rec.backward(None, Some(d_hidden));
    drop(rec);
    state.optimizer.step(state.student.tensors_mut(), &grads);
    ema_update(&mut state.teacher, &state.student, cfg.alpha);

    diag.l_sim = l_sim;
    diag.l_info = info.loss;
    diag.l_total = total;
    diag.info_used = info.used;
    diag.info_skipped = info.skipped;
    log::debug!("tta step {step}: {diag:?}");
    Ok(diag)
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub teacher: ModelParams,
    pub student: ModelParams,
    pub per_step: Vec<StepDiagnostics>,
    /// Logits of the configured prediction network.
    pub logits: Vec<f64>,
}

impl AdaptOutcome {
    pub fn predictor(&self, cfg: &TtaConfig) -> &ModelParams {
        match cfg.predict_with {
            PredictWith::Teacher => &self.teacher,
            PredictWith::Student => &self.student,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaReport {
    pub per_step: Vec<StepDiagnostics>,
    pub final_metrics: Option<EvalResult>,
}

/// Runs `cfg.steps` adaptation steps starting from `params` (left untouched).
pub fn adapt(
    params: &ModelParams,
    model: &ModelConfig,
    inputs: &ModelInputs,
    msg: &MessageGraph,
    cfg: &TtaConfig,
) -> Result<AdaptOutcome, TtaError> {
    cfg.validate()?;
    let mut state = TtaState::new(params, cfg.learning_rate);
    let per_step = (0..cfg.steps).map(|_| tta_step(&mut state, model, inputs, msg, cfg)).collect::<Result<Vec<_>, _>>()?;
    let chosen = match cfg.predict_with {
        PredictWith::Teacher => &state.teacher,
        PredictWith::Student => &state.student,
    };
    let logits = forward(chosen, model, inputs, msg, DropoutMode::Eval)?.logits;
    Ok(AdaptOutcome { teacher: state.teacher, student: state.student, per_step, logits })
}
