use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backbone, GnnError, ModelConfig};
use crate::autodiff::{Mat, Tape, Var};
use crate::graph::{MessageGraph, TemporalGraph};
use crate::motif::{enumerate_taxonomy, MotifCountMatrix, MOTIF_COLUMNS};
use crate::motif_features::{
    fuse_features_on, motif_embedding_table_on, positional_encoding_on, uniform, MotifFeatureParams,
    MotifFeatureVars, MotifStructure,
};

fn structure() -> &'static MotifStructure {
    static S: OnceLock<MotifStructure> = OnceLock::new();
    S.get_or_init(|| MotifStructure::new(&enumerate_taxonomy()))
}

/// Dense model inputs: base features `N x d_in` and real-valued counts `N x 108`.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub x: Mat,
    pub counts: Mat,
}

impl ModelInputs {
    pub fn new(features: &Mat, counts: &MotifCountMatrix, cfg: &ModelConfig) -> Result<Self, GnnError> {
        if counts.num_nodes() != features.nrows() {
            return Err(GnnError::Shape(format!(
                "{} feature rows but {} count rows",
                features.nrows(),
                counts.num_nodes()
            )));
        }
        Ok(Self { x: features.clone(), counts: counts.to_array(cfg.log_counts) })
    }

    pub fn from_graph(graph: &TemporalGraph, counts: &MotifCountMatrix, cfg: &ModelConfig) -> Result<Self, GnnError> {
        Self::new(&graph.features, counts, cfg)
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Self weight (GCN: the only weight).
    pub w: Mat,
    /// Neighbour-mean weight, SAGE only.
    pub w_neigh: Option<Mat>,
    pub b: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub motif: MotifFeatureParams,
    pub layers: Vec<LayerParams>,
    pub head_w1: Mat,
    pub head_b1: Mat,
    pub head_w2: Mat,
    pub head_b2: Mat,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, GnnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.hidden;
        let bound = 1.0 / (d as f64).sqrt();
        let motif = MotifFeatureParams::init(&mut rng, cfg.in_dim, d, cfg.fusion_depth);
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                w: uniform(&mut rng, (d, d), bound),
                w_neigh: (cfg.backbone == Backbone::SageMean).then(|| uniform(&mut rng, (d, d), bound)),
                b: Mat::zeros((1, d)),
            })
            .collect();
        Ok(Self {
            motif,
            layers,
            head_w1: uniform(&mut rng, (d, d), bound),
            head_b1: Mat::zeros((1, d)),
            head_w2: uniform(&mut rng, (d, 1), bound),
            head_b2: Mat::zeros((1, 1)),
        })
    }

    /// Named tensors in a fixed order shared by gradients and the optimizer.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut v = self.motif.tensors();
        for (i, l) in self.layers.iter().enumerate() {
            v.push((format!("layer{i}.w"), &l.w));
            if let Some(wn) = &l.w_neigh {
                v.push((format!("layer{i}.w_neigh"), wn));
            }
            v.push((format!("layer{i}.b"), &l.b));
        }
        v.push(("head.w1".into(), &self.head_w1));
        v.push(("head.b1".into(), &self.head_b1));
        v.push(("head.w2".into(), &self.head_w2));
        v.push(("head.b2".into(), &self.head_b2));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.motif.tensors_mut();
        for l in self.layers.iter_mut() {
            v.push(&mut l.w);
            if let Some(wn) = &mut l.w_neigh {
                v.push(wn);
            }
            v.push(&mut l.b);
        }
        v.push(&mut self.head_w1);
        v.push(&mut self.head_b1);
        v.push(&mut self.head_w2);
        v.push(&mut self.head_b2);
        v
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    Eval,
    /// Inverted dropout on every layer input; masks drawn from `seed`.
    Train { p: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    /// Final-layer node embeddings.
    pub hidden: Mat,
    pub x_motif: Option<Mat>,
}

/// A forward pass kept on its tape for differentiation.
pub struct Recorded {
    pub tape: Tape,
    /// One entry per [`ModelParams::tensors`] element.
    pub params: Vec<Var>,
    pub logits: Var,
    pub hidden: Var,
    pub x_motif: Option<Var>,
}

impl Recorded {
    pub fn output(&self) -> ForwardOutput {
        ForwardOutput {
            logits: self.tape.value(self.logits).iter().copied().collect(),
            hidden: self.tape.value(self.hidden).clone(),
            x_motif: self.x_motif.map(|v| self.tape.value(v).clone()),
        }
    }

    /// Gradients w.r.t. every parameter tensor given seeds on the logits
    /// (length N) and/or the hidden embeddings.
    pub fn backward(&self, d_logits: Option<&[f64]>, d_hidden: Option<Mat>) -> Vec<Mat> {
        let mut seeds = Vec::new();
        if let Some(g) = d_logits {
            seeds.push((self.logits, Array2::from_shape_vec((g.len(), 1), g.to_vec()).expect("logit seed")));
        }
        if let Some(g) = d_hidden {
            seeds.push((self.hidden, g));
        }
        let grads = self.tape.backward(seeds);
        self.params
            .iter()
            .map(|&v| grads.get_or_zeros(v, self.tape.value(v).dim()).as_standard_layout().into_owned())
            .collect()
    }
}

fn check_finite(tape: &Tape, v: Var, layer: usize) -> Result<(), GnnError> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GnnError::NonFinite { layer })
    }
}

fn dropout(tape: &mut Tape, z: Var, mode: DropoutMode, layer: u64) -> Var {
    match mode {
        DropoutMode::Train { p, seed } if p > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(layer);
            let keep = 1.0 / (1.0 - p);
            let mask = Mat::from_shape_fn(tape.value(z).dim(), |_| if rng.random::<f64>() < p { 0.0 } else { keep });
            tape.mul_const(z, mask)
        }
        _ => z,
    }
}

/// Runs the model on a fresh tape. `trainable` marks parameters for
/// differentiation.
///
/// Non-finite values abort with the stage index: 0 for the fused features,
/// `l` for message-passing layer `l`, `L + 1` for the head.
pub fn record_forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs,
    msg: &MessageGraph,
    mode: DropoutMode,
    trainable: bool,
) -> Result<Recorded, GnnError> {
    let n = inputs.num_nodes();
    if msg.num_nodes != n || inputs.counts.nrows() != n {
        return Err(GnnError::Shape(format!("inputs have {n} nodes, message graph {}", msg.num_nodes)));
    }
    if inputs.x.ncols() != cfg.in_dim || inputs.counts.ncols() != MOTIF_COLUMNS {
        return Err(GnnError::Shape(format!(
            "expected {} base features and {MOTIF_COLUMNS} count columns, got {} and {}",
            cfg.in_dim,
            inputs.x.ncols(),
            inputs.counts.ncols()
        )));
    }
    if params.layers.len() != cfg.layers || params.motif.hidden() != cfg.hidden {
        return Err(GnnError::Shape("parameters do not match the model configuration".into()));
    }

    let mut tape = Tape::new();
    let mvars = MotifFeatureVars::register(&mut tape, &params.motif, trainable);
    let mut all = mvars.all();
    let mut leaf = |tape: &mut Tape, m: &Mat| {
        let v = if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
        all.push(v);
        v
    };
    let layer_vars: Vec<(Var, Option<Var>, Var)> = params
        .layers
        .iter()
        .map(|l| {
            let w = leaf(&mut tape, &l.w);
            let wn = l.w_neigh.as_ref().map(|m| leaf(&mut tape, m));
            let b = leaf(&mut tape, &l.b);
            (w, wn, b)
        })
        .collect();
    let hw1 = leaf(&mut tape, &params.head_w1);
    let hb1 = leaf(&mut tape, &params.head_b1);
    let hw2 = leaf(&mut tape, &params.head_w2);
    let hb2 = leaf(&mut tape, &params.head_b2);

    let x_orig = tape.constant(inputs.x.clone());
    let x_motif = if cfg.use_motif_features {
        let s = structure();
        let pos = positional_encoding_on(&mut tape, s, &mvars);
        let hm = motif_embedding_table_on(&mut tape, s, &mvars, pos);
        let c = tape.constant(inputs.counts.clone());
        Some(tape.matmul(c, hm))
    } else {
        None
    };
    let mut z = fuse_features_on(&mut tape, &mvars, x_orig, x_motif);
    check_finite(&tape, z, 0)?;

    for (l, &(w, wn, b)) in layer_vars.iter().enumerate() {
        let input = dropout(&mut tape, z, mode, l as u64);
        let pre = match (cfg.backbone, wn) {
            (Backbone::Gcn, _) => {
                let agg = tape.spmm(msg.gcn.clone(), msg.gcn.clone(), input);
                tape.matmul(agg, w)
            }
            (Backbone::SageMean, Some(wn)) => {
                let own = tape.matmul(input, w);
                let nb = tape.spmm(msg.mean.clone(), msg.mean_t.clone(), input);
                let nbw = tape.matmul(nb, wn);
                tape.add(own, nbw)
            }
            (Backbone::SageMean, None) => {
                return Err(GnnError::Shape(format!("layer {} lacks a neighbour weight", l + 1)));
            }
        };
        let pre = tape.add_row(pre, b);
        z = tape.relu(pre);
        check_finite(&tape, z, l + 1)?;
    }
    let hidden = z;
    let h1 = tape.matmul(hidden, hw1);
    let h1 = tape.add_row(h1, hb1);
    let h1 = tape.relu(h1);
    let out = tape.matmul(h1, hw2);
    let logits = tape.add_row(out, hb2);
    check_finite(&tape, logits, cfg.layers + 1)?;

    Ok(Recorded { tape, params: all, logits, hidden, x_motif })
}

pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    inputs: &ModelInputs,
    msg: &MessageGraph,
    mode: DropoutMode,
) -> Result<ForwardOutput, GnnError> {
    Ok(record_forward(params, cfg, inputs, msg, mode, false)?.output())
}
