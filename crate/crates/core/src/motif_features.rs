//! Motif-role embeddings and their fusion with base node features.
//!
//! Every motif class `k` and role `q` gets `h_{k,q} = m_k + r_{k,q} + p_{k,q}`,
//! where `p_{k,q}` sums, over the motif's three abstract edges incident to the
//! role, a sinusoid of the edge ordinal and a small learned map of the role's
//! source/destination indicator on that edge. Node features are `C · H_m`,
//! fused with the base features through an affine map and an MLP.

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Mat, Tape, Var};
use crate::motif::{MotifTaxonomy, MOTIF_COLUMNS, NUM_MOTIFS, NUM_ROLES};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {got:?}")]
    Shape { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    #[error("non-finite value in fused features (row {row})")]
    NonFinite { row: usize },
}

/// `36 x d_h` motif prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifPrototypes(pub Mat);

/// Role embeddings stored as `108 x d_h`, row `k * 3 + q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleEmbeddings(pub Mat);

#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoder {
    /// `1 x d_h` frequencies.
    pub omega: Mat,
    /// `1 x d_h` phases.
    pub theta: Mat,
    /// `2 x d_h` weights of the indicator map; row 0 multiplies the source
    /// indicator, row 1 the destination indicator.
    pub edge_w: Mat,
    pub edge_b: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayer {
    /// `d_in x d_h`.
    pub w: Mat,
    pub b: Mat,
    /// `(weight, bias)` per MLP layer, tanh between layers. Empty means identity.
    pub mlp: Vec<(Mat, Mat)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotifFeatureParams {
    pub prototypes: MotifPrototypes,
    pub roles: RoleEmbeddings,
    pub encoder: PositionalEncoder,
    pub fusion: FusionLayer,
}

pub(crate) fn uniform(rng: &mut impl Rng, shape: (usize, usize), bound: f64) -> Mat {
    Array2::from_shape_fn(shape, |_| rng.random_range(-bound..bound))
}

impl MotifFeatureParams {
    pub fn init(rng: &mut impl Rng, in_dim: usize, hidden: usize, fusion_depth: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            prototypes: MotifPrototypes(uniform(rng, (NUM_MOTIFS, hidden), bound)),
            roles: RoleEmbeddings(uniform(rng, (MOTIF_COLUMNS, hidden), bound)),
            encoder: PositionalEncoder {
                omega: uniform(rng, (1, hidden), bound),
                theta: uniform(rng, (1, hidden), bound),
                edge_w: uniform(rng, (2, hidden), bound),
                edge_b: Mat::zeros((1, hidden)),
            },
            fusion: FusionLayer {
                w: uniform(rng, (in_dim, hidden), bound),
                b: Mat::zeros((1, hidden)),
                mlp: (0..fusion_depth)
                    .map(|_| (uniform(rng, (hidden, hidden), bound), Mat::zeros((1, hidden))))
                    .collect(),
            },
        }
    }

    pub fn hidden(&self) -> usize {
        self.prototypes.0.ncols()
    }
}

/// Constant incidence structure of the taxonomy used by the positional term.
#[derive(Debug, Clone)]
pub struct MotifStructure {
    /// `108 x 3`: role incident to edge ordinal `j`.
    pub edge_incidence: Mat,
    /// `108 x 2`: how often the role is the source / destination.
    pub endpoint_counts: Mat,
    /// `108 x 36`: row `k * 3 + q` selects prototype `k`.
    pub prototype_selector: Mat,
    /// `3 x 1`: edge ordinals 1, 2, 3.
    pub ordinals: Mat,
}

impl MotifStructure {
    pub fn new(taxonomy: &MotifTaxonomy) -> Self {
        let mut edge_incidence = Mat::zeros((MOTIF_COLUMNS, 3));
        let mut endpoint_counts = Mat::zeros((MOTIF_COLUMNS, 2));
        let mut prototype_selector = Mat::zeros((MOTIF_COLUMNS, NUM_MOTIFS));
        for (k, sig) in taxonomy.classes().iter().enumerate() {
            for q in 0..NUM_ROLES {
                let row = k * NUM_ROLES + q;
                prototype_selector[[row, k]] = 1.0;
                for (j, &(s, d)) in sig.edges.iter().enumerate() {
                    let (is_src, is_dst) = (s as usize == q, d as usize == q);
                    if is_src || is_dst {
                        edge_incidence[[row, j]] = 1.0;
                    }
                    endpoint_counts[[row, 0]] += is_src as u8 as f64;
                    endpoint_counts[[row, 1]] += is_dst as u8 as f64;
                }
            }
        }
        Self {
            edge_incidence,
            endpoint_counts,
            prototype_selector,
            ordinals: ndarray::array![[1.0], [2.0], [3.0]],
        }
    }
}

/// Tape handles for the module's parameters.
#[derive(Debug, Clone)]
pub struct MotifFeatureVars {
    pub prototypes: Var,
    pub roles: Var,
    pub omega: Var,
    pub theta: Var,
    pub edge_w: Var,
    pub edge_b: Var,
    pub fuse_w: Var,
    pub fuse_b: Var,
    pub mlp: Vec<(Var, Var)>,
}

impl MotifFeatureVars {
    /// Registers parameters in [`MotifFeatureParams::tensors`] order.
    pub fn register(tape: &mut Tape, p: &MotifFeatureParams, trainable: bool) -> Self {
        let mut leaf = |m: &Mat| if trainable { tape.param(m.clone()) } else { tape.constant(m.clone()) };
        let prototypes = leaf(&p.prototypes.0);
        let roles = leaf(&p.roles.0);
        let omega = leaf(&p.encoder.omega);
        let theta = leaf(&p.encoder.theta);
        let edge_w = leaf(&p.encoder.edge_w);
        let edge_b = leaf(&p.encoder.edge_b);
        let fuse_w = leaf(&p.fusion.w);
        let fuse_b = leaf(&p.fusion.b);
        let mlp = p.fusion.mlp.iter().map(|(w, b)| (leaf(w), leaf(b))).collect();
        Self { prototypes, roles, omega, theta, edge_w, edge_b, fuse_w, fuse_b, mlp }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut v = vec![
            self.prototypes,
            self.roles,
            self.omega,
            self.theta,
            self.edge_w,
            self.edge_b,
            self.fuse_w,
            self.fuse_b,
        ];
        for &(w, b) in &self.mlp {
            v.push(w);
            v.push(b);
        }
        v
    }
}

impl MotifFeatureParams {
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut v: Vec<(String, &Mat)> = vec![
            ("motif.prototypes".into(), &self.prototypes.0),
            ("motif.roles".into(), &self.roles.0),
            ("motif.pos.omega".into(), &self.encoder.omega),
            ("motif.pos.theta".into(), &self.encoder.theta),
            ("motif.pos.edge_w".into(), &self.encoder.edge_w),
            ("motif.pos.edge_b".into(), &self.encoder.edge_b),
            ("fusion.w".into(), &self.fusion.w),
            ("fusion.b".into(), &self.fusion.b),
        ];
        for (i, (w, b)) in self.fusion.mlp.iter().enumerate() {
            v.push((format!("fusion.mlp{i}.w"), w));
            v.push((format!("fusion.mlp{i}.b"), b));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = vec![
            &mut self.prototypes.0,
            &mut self.roles.0,
            &mut self.encoder.omega,
            &mut self.encoder.theta,
            &mut self.encoder.edge_w,
            &mut self.encoder.edge_b,
            &mut self.fusion.w,
            &mut self.fusion.b,
        ];
        for (w, b) in self.fusion.mlp.iter_mut() {
            v.push(w);
            v.push(b);
        }
        v
    }
}

/// `108 x d_h` positional terms `p_{k,q}` on the tape.
pub fn positional_encoding_on(tape: &mut Tape, s: &MotifStructure, v: &MotifFeatureVars) -> Var {
    let ordinals = tape.constant(s.ordinals.clone());
    let phase = tape.matmul(ordinals, v.omega);
    let phase = tape.add_row(phase, v.theta);
    let temporal = tape.sin(phase); // 3 x d_h, row j = sin(j ω + θ)
    // rows are the map at indicator (1, 0) and (0, 1)
    let roles_in = tape.add_row(v.edge_w, v.edge_b);
    let roles_out = tape.tanh(roles_in); // 2 x d_h
    let incidence = tape.constant(s.edge_incidence.clone());
    let endpoints = tape.constant(s.endpoint_counts.clone());
    let t_part = tape.matmul(incidence, temporal);
    let e_part = tape.matmul(endpoints, roles_out);
    tape.add(t_part, e_part)
}

/// `H_m = selector · M + R + P` on the tape.
pub fn motif_embedding_table_on(tape: &mut Tape, s: &MotifStructure, v: &MotifFeatureVars, pos: Var) -> Var {
    let sel = tape.constant(s.prototype_selector.clone());
    let protos = tape.matmul(sel, v.prototypes);
    let with_roles = tape.add(protos, v.roles);
    tape.add(with_roles, pos)
}

/// `MLP(X_orig W_f + X_motif + b)`; `x_motif = None` drops the motif term.
pub fn fuse_features_on(tape: &mut Tape, v: &MotifFeatureVars, x_orig: Var, x_motif: Option<Var>) -> Var {
    let proj = tape.matmul(x_orig, v.fuse_w);
    let summed = match x_motif {
        Some(xm) => tape.add(proj, xm),
        None => proj,
    };
    let mut h = tape.add_row(summed, v.fuse_b);
    for (i, &(w, b)) in v.mlp.iter().enumerate() {
        if i > 0 {
            h = tape.tanh(h);
        }
        let lin = tape.matmul(h, w);
        h = tape.add_row(lin, b);
    }
    h
}

fn check(what: &'static str, got: (usize, usize), expected: (usize, usize)) -> Result<(), FeatureError> {
    if got != expected {
        return Err(FeatureError::Shape { what, expected, got });
    }
    Ok(())
}

/// `108 x d_h` table of `p_{k,q}` (row `k * 3 + q`).
pub fn positional_encoding(taxonomy: &MotifTaxonomy, encoder: &PositionalEncoder) -> Mat {
    let d = encoder.omega.ncols();
    let params = MotifFeatureParams {
        prototypes: MotifPrototypes(Mat::zeros((NUM_MOTIFS, d))),
        roles: RoleEmbeddings(Mat::zeros((MOTIF_COLUMNS, d))),
        encoder: encoder.clone(),
        fusion: FusionLayer { w: Mat::zeros((1, d)), b: Mat::zeros((1, d)), mlp: vec![] },
    };
    let mut tape = Tape::new();
    let vars = MotifFeatureVars::register(&mut tape, &params, false);
    let p = positional_encoding_on(&mut tape, &MotifStructure::new(taxonomy), &vars);
    tape.value(p).clone()
}

pub fn motif_embedding_table(
    prototypes: &MotifPrototypes,
    roles: &RoleEmbeddings,
    pos: &Mat,
) -> Result<Mat, FeatureError> {
    let d = prototypes.0.ncols();
    check("prototypes", prototypes.0.dim(), (NUM_MOTIFS, d))?;
    check("roles", roles.0.dim(), (MOTIF_COLUMNS, d))?;
    check("positional", pos.dim(), (MOTIF_COLUMNS, d))?;
    let mut h = roles.0.clone() + pos;
    for k in 0..NUM_MOTIFS {
        for q in 0..NUM_ROLES {
            let mut row = h.row_mut(k * NUM_ROLES + q);
            row += &prototypes.0.row(k);
        }
    }
    Ok(h)
}

pub fn motif_feature_matrix(counts: &Mat, h_m: &Mat) -> Result<Mat, FeatureError> {
    check("counts", (counts.ncols(), 0), (MOTIF_COLUMNS, 0))?;
    check("H_m", (h_m.nrows(), 0), (MOTIF_COLUMNS, 0))?;
    Ok(counts.dot(h_m))
}

pub fn fuse_features(x_orig: &Mat, x_motif: &Mat, fusion: &FusionLayer) -> Result<Mat, FeatureError> {
    let d = fusion.b.ncols();
    check("x_orig", (x_orig.ncols(), d), (fusion.w.nrows(), fusion.w.ncols()))?;
    check("x_motif", x_motif.dim(), (x_orig.nrows(), d))?;
    let mut tape = Tape::new();
    let xo = tape.constant(x_orig.clone());
    let xm = tape.constant(x_motif.clone());
    let params = MotifFeatureParams {
        prototypes: MotifPrototypes(Mat::zeros((NUM_MOTIFS, d))),
        roles: RoleEmbeddings(Mat::zeros((MOTIF_COLUMNS, d))),
        encoder: PositionalEncoder {
            omega: Mat::zeros((1, d)),
            theta: Mat::zeros((1, d)),
            edge_w: Mat::zeros((2, d)),
            edge_b: Mat::zeros((1, d)),
        },
        fusion: fusion.clone(),
    };
    let vars = MotifFeatureVars::register(&mut tape, &params, false);
    let out = fuse_features_on(&mut tape, &vars, xo, Some(xm));
    let x = tape.value(out).clone();
    if let Some(row) = x.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(FeatureError::NonFinite { row });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motif::enumerate_taxonomy;
    use ndarray::{array, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder(rng: &mut ChaCha8Rng, d: usize) -> PositionalEncoder {
        PositionalEncoder {
            omega: uniform(rng, (1, d), 1.0),
            theta: uniform(rng, (1, d), 1.0),
            edge_w: uniform(rng, (2, d), 1.0),
            edge_b: uniform(rng, (1, d), 1.0),
        }
    }

    #[test]
    fn zero_encoder_gives_zero_positions() {
        let d = 4;
        let enc = PositionalEncoder {
            omega: Mat::zeros((1, d)),
            theta: Mat::zeros((1, d)),
            edge_w: Mat::zeros((2, d)),
            edge_b: Mat::zeros((1, d)),
        };
        let p = positional_encoding(&enumerate_taxonomy(), &enc);
        assert_eq!(p.dim(), (MOTIF_COLUMNS, d));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unused_role_is_zero_and_triangle_by_hand() {
        let tax = enumerate_taxonomy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = encoder(&mut rng, 5);
        let p = positional_encoding(&tax, &enc);
        for (k, sig) in tax.classes().iter().enumerate() {
            if sig.node_count == 2 {
                assert!(p.row(k * 3 + 2).iter().all(|&v| v == 0.0));
            }
        }
        let tri = tax.index_of(&[(0, 1), (1, 2), (2, 0)]).unwrap();
        let t = |j: f64| -> Array1<f64> {
            (&enc.omega.row(0) * j + enc.theta.row(0)).mapv(f64::sin)
        };
        let e_src = (&enc.edge_w.row(0) + &enc.edge_b.row(0)).mapv(f64::tanh);
        let e_dst = (&enc.edge_w.row(1) + &enc.edge_b.row(0)).mapv(f64::tanh);
        let expected = t(1.0) + &e_src + t(3.0) + &e_dst;
        for (a, b) in p.row(tri * 3).iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_table_sums_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 3;
        let m = MotifPrototypes(uniform(&mut rng, (NUM_MOTIFS, d), 1.0));
        let r = RoleEmbeddings(uniform(&mut rng, (MOTIF_COLUMNS, d), 1.0));
        let p = uniform(&mut rng, (MOTIF_COLUMNS, d), 1.0);
        let h = motif_embedding_table(&m, &r, &p).unwrap();
        for k in 0..NUM_MOTIFS {
            for q in 0..NUM_ROLES {
                for c in 0..d {
                    let want = m.0[[k, c]] + r.0[[k * 3 + q, c]] + p[[k * 3 + q, c]];
                    assert_eq!(h[[k * 3 + q, c]], want);
                }
            }
        }
        let zeros = Mat::zeros((MOTIF_COLUMNS, d));
        let h0 = motif_embedding_table(&m, &RoleEmbeddings(zeros.clone()), &zeros).unwrap();
        assert_eq!(h0.row(7), m.0.row(2));
        assert!(motif_embedding_table(&m, &r, &Mat::zeros((5, d))).is_err());
    }

    #[test]
    fn feature_matrix_selects_and_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = uniform(&mut rng, (MOTIF_COLUMNS, 4), 1.0);
        let mut c = Mat::zeros((3, MOTIF_COLUMNS));
        c[[1, 17]] = 1.0;
        c[[2, 0]] = 2.0;
        let x = motif_feature_matrix(&c, &h).unwrap();
        assert!(x.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(x.row(1), h.row(17));
        assert_eq!(x.row(2), &h.row(0) * 2.0);
        assert!(motif_feature_matrix(&Mat::zeros((3, 10)), &h).is_err());
    }

    #[test]
    fn linear_in_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = uniform(&mut rng, (MOTIF_COLUMNS, 6), 1.0);
        let c1 = Mat::from_shape_fn((5, MOTIF_COLUMNS), |_| rng.random_range(0..20) as f64);
        let c2 = Mat::from_shape_fn((5, MOTIF_COLUMNS), |_| rng.random_range(0..20) as f64);
        let sum = motif_feature_matrix(&(&c1 + &c2), &h).unwrap();
        let parts = motif_feature_matrix(&c1, &h).unwrap() + motif_feature_matrix(&c2, &h).unwrap();
        assert!(sum.iter().zip(parts.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        let doubled = motif_feature_matrix(&(&c1 * 2.0), &h).unwrap();
        assert_eq!(doubled, motif_feature_matrix(&c1, &h).unwrap() * 2.0);
    }

    #[test]
    fn identity_fusion() {
        let x = array![[1.0, 2.0], [3.0, -4.0]];
        let xm = array![[0.5, 0.5], [1.0, 0.0]];
        let fusion = FusionLayer { w: Mat::eye(2), b: Mat::zeros((1, 2)), mlp: vec![] };
        assert_eq!(fuse_features(&x, &xm, &fusion).unwrap(), &x + &xm);
        let bad = FusionLayer { w: Mat::eye(3), b: Mat::zeros((1, 3)), mlp: vec![] };
        assert!(fuse_features(&x, &xm, &bad).is_err());
    }

    #[test]
    fn fusion_rejects_non_finite() {
        let x = array![[f64::NAN, 0.0]];
        let fusion = FusionLayer { w: Mat::eye(2), b: Mat::zeros((1, 2)), mlp: vec![] };
        assert_eq!(fuse_features(&x, &Mat::zeros((1, 2)), &fusion), Err(FeatureError::NonFinite { row: 0 }));
    }

    /// Scalar readout `sum(X * w)` over the full feature pipeline.
    fn readout(params: &MotifFeatureParams, counts: &Mat, x: &Mat, w: &Mat) -> (f64, Option<Vec<Mat>>) {
        let tax = enumerate_taxonomy();
        let s = MotifStructure::new(&tax);
        let mut tape = Tape::new();
        let vars = MotifFeatureVars::register(&mut tape, params, true);
        let pos = positional_encoding_on(&mut tape, &s, &vars);
        let hm = motif_embedding_table_on(&mut tape, &s, &vars, pos);
        let c = tape.constant(counts.clone());
        let xm = tape.matmul(c, hm);
        let xo = tape.constant(x.clone());
        let out = fuse_features_on(&mut tape, &vars, xo, Some(xm));
        let value = (tape.value(out) * w).sum();
        let g = tape.backward(vec![(out, w.clone())]);
        let grads = vars
            .all()
            .into_iter()
            .zip(params.tensors())
            .map(|(v, (_, m))| g.get_or_zeros(v, m.dim()))
            .collect();
        (value, Some(grads))
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, d_in, d) = (4, 3, 5);
        let params = MotifFeatureParams::init(&mut rng, d_in, d, 2);
        let counts = Mat::from_shape_fn((n, MOTIF_COLUMNS), |_| rng.random_range(0..3) as f64 * 0.1);
        let x = uniform(&mut rng, (n, d_in), 1.0);
        let w = uniform(&mut rng, (n, d), 1.0);
        let (_, grads) = readout(&params, &counts, &x, &w);
        let grads = grads.unwrap();
        let h = 1e-4;
        for (gi, grad) in grads.iter().enumerate() {
            for probe in 0..6 {
                let idx = (probe * 7919 + gi) % grad.len();
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    let t = &mut p.tensors_mut()[gi];
                    let cols = t.ncols();
                    t[[idx / cols, idx % cols]] += delta;
                    readout(&p, &counts, &x, &w).0
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let an = grad.as_slice().unwrap()[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4 || (fd - an).abs() < 1e-9, "tensor {gi} idx {idx}: fd {fd} vs {an}");
            }
        }
    }
}
