use serde::{Deserialize, Serialize};

use super::model::{forward, record_forward, DropoutMode, ModelInputs, ModelParams};
use super::{bce_loss, Adam, GnnConfig, GnnError};
use crate::graph::{DataSplit, MessageGraph};
use crate::metrics::auc_prc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation labels are single-class.
    pub val_auc_prc: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot from `best_epoch`.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn log_jsonl(&self) -> String {
        self.history.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Full-batch training with early stopping.
///
/// The monitored quantity is validation AUC-PRC, or minus the validation loss
/// when the validation labels contain a single class (minus the training loss
/// when there are no validation nodes). Training stops once more than
/// `patience` epochs pass without improvement.
pub fn train(
    inputs: &ModelInputs,
    msg: &MessageGraph,
    labels: &[f64],
    split: &DataSplit,
    cfg: &GnnConfig,
) -> Result<TrainOutcome, GnnError> {
    cfg.validate()?;
    if split.train_nodes.is_empty() {
        return Err(GnnError::EmptyNodeSet);
    }
    let mut params = ModelParams::init(&cfg.model, cfg.seed)?;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let mode = DropoutMode::Train { p: cfg.dropout, seed: epoch_seed(cfg.seed, epoch) };
        let rec = record_forward(&params, &cfg.model, inputs, msg, mode, true)?;
        let logits = rec.output().logits;
        let (loss, d_logits) = bce_loss(&logits, labels, &split.train_nodes)?;
        if !loss.is_finite() {
            return Err(GnnError::Divergence { epoch });
        }
        let grads = rec.backward(Some(&d_logits), None);
        drop(rec);
        opt.step(params.tensors_mut(), &grads);
        if !params.is_finite() {
            return Err(GnnError::Divergence { epoch });
        }

        let out = forward(&params, &cfg.model, inputs, msg, DropoutMode::Eval)?;
        let (val_auc_prc, val_loss, monitor) = if split.val_nodes.is_empty() {
            (None, None, -loss)
        } else {
            let scores: Vec<f64> = split.val_nodes.iter().map(|&i| out.logits[i]).collect();
            let ys: Vec<bool> = split.val_nodes.iter().map(|&i| labels[i] > 0.5).collect();
            let (vl, _) = bce_loss(&out.logits, labels, &split.val_nodes)?;
            match auc_prc(&scores, &ys) {
                Ok(ap) => (Some(ap), Some(vl), ap),
                Err(_) => (None, Some(vl), -vl),
            }
        };
        log::debug!("epoch {epoch}: loss {loss:.6} val {val_auc_prc:?}");
        history.push(EpochRecord { epoch, train_loss: loss, val_auc_prc, val_loss });

        if best.as_ref().is_none_or(|(m, _, _)| monitor > *m) {
            best = Some((monitor, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }

    match best {
        Some((_, best_epoch, params)) => Ok(TrainOutcome { params, history, best_epoch }),
        None => Ok(TrainOutcome { params, history, best_epoch: 0 }),
    }
}
