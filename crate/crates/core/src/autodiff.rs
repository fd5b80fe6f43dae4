//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! Values are recorded eagerly on a [`Tape`]; [`Tape::backward`] takes seed
//! gradients for any set of output nodes, so losses can be evaluated outside
//! the tape and only their gradient w.r.t. a recorded output fed back in.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{Array2, Axis};

use crate::graph::CsrMatrix;

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Constant sparse matrix times a variable; holds the transpose.
    SpMM(Arc<CsrMatrix>, Var),
    Add(Var, Var),
    /// Broadcast a `1 x d` row over every row of the left operand.
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Mat),
    Relu(Var),
    Tanh(Var),
    Sin(Var),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` where no path reached the node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros of shape `shape` when unreached.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Mat {
        self.get(v).cloned().unwrap_or_else(|| Mat::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    pub fn spmm(&mut self, m: Arc<CsrMatrix>, m_t: Arc<CsrMatrix>, x: Var) -> Var {
        let value = m.matmul(self.value(x));
        let ng = self.needs(x);
        self.push(value, Op::SpMM(m_t, x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1, "add_row expects a 1 x d row");
        let value = self.value(a) + self.value(row);
        let ng = self.needs(a) || self.needs(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    pub fn mul_const(&mut self, a: Var, mask: Mat) -> Var {
        let value = self.value(a) * &mask;
        let ng = self.needs(a);
        self.push(value, Op::MulConst(a, mask), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        let ng = self.needs(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::sin);
        let ng = self.needs(a);
        self.push(value, Op::Sin(a), ng)
    }

    /// Hash of every rectifier's on/off pattern. Two evaluations with equal
    /// signatures lie in the same linear region of the network.
    pub fn activation_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(_) = node.op {
                for v in node.value.iter() {
                    (*v > 0.0).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Accumulates gradients from the given seeds back to every node that
    /// depends on a trainable input.
    pub fn backward(&self, seeds: Vec<(Var, Mat)>) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let acc = |grads: &mut Vec<Option<Mat>>, v: Var, g: Mat| match &mut grads[v.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        };
        for (v, g) in seeds {
            assert_eq!(g.dim(), self.value(v).dim(), "seed gradient shape mismatch");
            acc(&mut grads, v, g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::SpMM(m_t, x) => acc(&mut grads, *x, m_t.matmul(&g)),
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(*row) {
                        acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                }
                Op::Scale(a, c) => acc(&mut grads, *a, &g * *c),
                Op::MulConst(a, mask) => acc(&mut grads, *a, &g * mask),
                Op::Relu(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |gi, &x| {
                        if x <= 0.0 {
                            *gi = 0.0
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(&node.value, |gi, &y| *gi *= 1.0 - y * y);
                    acc(&mut grads, *a, d);
                }
                Op::Sin(a) => {
                    let mut d = g.clone();
                    d.zip_mut_with(self.value(*a), |gi, &x| *gi *= x.cos());
                    acc(&mut grads, *a, d);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}
