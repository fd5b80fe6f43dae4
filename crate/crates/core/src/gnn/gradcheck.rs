use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::model::{record_forward, DropoutMode, ModelInputs, ModelParams};
use super::{GnnError, ModelConfig};
use crate::autodiff::Mat;
use crate::graph::MessageGraph;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Probes dropped because the step crossed a rectifier kink.
    pub skipped: usize,
    pub worst_tensor: Option<String>,
}

/// Central-difference check of the analytic gradient of a random linear
/// readout of logits and embeddings, `probes` coordinates per tensor.
/// Relative error uses `max(|fd|, |an|)`; pairs below `1e-7` count as
/// absolute error.
pub fn gradient_check(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs,
    msg: &MessageGraph,
    probes: usize,
    seed: u64,
) -> Result<GradCheckReport, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = inputs.num_nodes();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = Mat::from_shape_fn((n, cfg.hidden), |_| rng.random_range(-1.0..1.0));
    let readout = |p: &ModelParams, grads: bool| -> Result<(f64, Option<Vec<Mat>>, u64), GnnError> {
        let rec = record_forward(p, cfg, inputs, msg, DropoutMode::Eval, grads)?;
        let out = rec.output();
        let v = out.logits.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() + (&out.hidden * &b).sum();
        let g = grads.then(|| rec.backward(Some(&a), Some(b.clone())));
        Ok((v, g, rec.tape.activation_signature()))
    };
    let (_, grads, sig) = readout(params, true)?;
    let grads = grads.expect("gradients requested");
    let names: Vec<String> = params.tensors().into_iter().map(|(name, _)| name).collect();
    let h = 1e-4;
    let mut report = GradCheckReport { step: h, max_rel_err: 0.0, checked: 0, skipped: 0, worst_tensor: None };
    for (t, grad) in grads.iter().enumerate() {
        for _ in 0..probes {
            let idx = rng.random_range(0..grad.len());
            let eval = |delta: f64| -> Result<(f64, u64), GnnError> {
                let mut p = params.clone();
                p.tensors_mut()[t].as_slice_mut().expect("standard layout")[idx] += delta;
                let (v, _, s) = readout(&p, false)?;
                Ok((v, s))
            };
            let ((up, su), (down, sd)) = (eval(h)?, eval(-h)?);
            if su != sig || sd != sig {
                report.skipped += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * h);
            let an = grad.as_slice().expect("standard layout")[idx];
            let scale = fd.abs().max(an.abs());
            let err = if scale > 1e-7 { (fd - an).abs() / scale } else { (fd - an).abs() };
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_tensor = Some(names[t].clone());
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
