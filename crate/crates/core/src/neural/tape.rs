//! Vector-valued reverse-mode automatic differentiation.
//!
//! Every node holds a `Vec<f64>`; scalars are length-1 vectors. Operations
//! append nodes whose inputs are already on the tape, so the node order is a
//! topological order and the backward pass is a single reverse sweep.
//!
//! `max(0, z)` uses the subgradient 0 at `z = 0`.

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatVec {
        w: Var,
        x: Var,
        rows: usize,
        cols: usize,
    },
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Sum(Var),
    Accumulate(Vec<Var>),
    Index(Var, usize),
    Concat(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Parameters and constants alike enter as leaves.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(vec![value])
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// First element; intended for scalar nodes.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "elementwise operands differ in length");
        let value = va.iter().zip(vb).map(|(x, y)| f(*x, *y)).collect();
        self.push(value, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.nodes[a.0].value.iter().map(|x| f(*x)).collect();
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    /// `a + c` elementwise.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Shift(a), |x| x + c)
    }

    /// `W x` with `W` stored row-major as `rows * cols` values.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        assert_eq!(wv.len(), rows * cols, "matrix has wrong size");
        assert_eq!(xv.len(), cols, "vector has wrong length");
        let value = wv
            .chunks_exact(cols)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(value, Op::MatVec { w, x, rows, cols })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax(&self.nodes[a.0].value);
        self.push(value, Op::Softmax(a))
    }

    /// Sum of a vector's entries as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    /// Sum of scalar nodes, added in the given order.
    pub fn accumulate(&mut self, terms: &[Var]) -> Var {
        let s = terms.iter().map(|t| self.nodes[t.0].value[0]).sum();
        self.push(vec![s], Op::Accumulate(terms.to_vec()))
    }

    pub fn index(&mut self, a: Var, i: usize) -> Var {
        let v = self.nodes[a.0].value[i];
        self.push(vec![v], Op::Index(a, i))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let value = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(value, Op::Concat(parts.to_vec()))
    }

    /// Clamp to `[0, 1]` as `max(0, z) - max(0, z - 1)`.
    pub fn clamp_unit(&mut self, z: Var) -> Var {
        let lo = self.relu(z);
        let above = self.shift(z, -1.0);
        let hi = self.relu(above);
        self.sub(lo, hi)
    }

    /// `min(a, c)` as `a - max(0, a - c)`.
    pub fn min_const(&mut self, a: Var, c: f64) -> Var {
        let over = self.shift(a, -c);
        let excess = self.relu(over);
        self.sub(a, excess)
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Internal(format!(
                "node {} is not on the tape",
                output.0
            )));
        }
        if self.nodes[output.0].value.len() != 1 {
            return Err(Error::Internal("backward needs a scalar output".into()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        fn acc<'a>(adj: &'a mut [Option<Vec<f64>>], v: Var, len: usize) -> &'a mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    for (d, x) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                    for (d, x) in acc(&mut adj, *b, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                }
                Op::Sub(a, b) => {
                    for (d, x) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                    for (d, x) in acc(&mut adj, *b, g.len()).iter_mut().zip(&g) {
                        *d -= x;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for ((d, x), y) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g).zip(vb) {
                        *d += x * y;
                    }
                    for ((d, x), y) in acc(&mut adj, *b, g.len()).iter_mut().zip(&g).zip(va) {
                        *d += x * y;
                    }
                }
                Op::Scale(a, c) => {
                    for (d, x) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g) {
                        *d += c * x;
                    }
                }
                Op::Shift(a) => {
                    for (d, x) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g) {
                        *d += x;
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    let xv = &self.nodes[x.0].value;
                    let dw = acc(&mut adj, *w, rows * cols);
                    for (row, gr) in dw.chunks_exact_mut(cols).zip(&g) {
                        for (d, xi) in row.iter_mut().zip(xv) {
                            *d += gr * xi;
                        }
                    }
                    let wv = &self.nodes[w.0].value;
                    let dx = acc(&mut adj, *x, cols);
                    for (row, gr) in wv.chunks_exact(cols).zip(&g) {
                        for (d, wij) in dx.iter_mut().zip(row) {
                            *d += gr * wij;
                        }
                    }
                }
                Op::Tanh(a) => {
                    for ((d, x), y) in acc(&mut adj, *a, g.len())
                        .iter_mut()
                        .zip(&g)
                        .zip(&node.value)
                    {
                        *d += x * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a.0].value;
                    for ((d, x), z) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g).zip(va) {
                        if *z > 0.0 {
                            *d += x;
                        }
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot: f64 = g.iter().zip(y).map(|(x, y)| x * y).sum();
                    for ((d, x), yi) in acc(&mut adj, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *d += yi * (x - dot);
                    }
                }
                Op::Sum(a) => {
                    let len = self.nodes[a.0].value.len();
                    for d in acc(&mut adj, *a, len).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Accumulate(terms) => {
                    for t in terms {
                        acc(&mut adj, *t, 1)[0] += g[0];
                    }
                }
                Op::Index(a, k) => {
                    let len = self.nodes[a.0].value.len();
                    acc(&mut adj, *a, len)[*k] += g[0];
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        for (d, x) in acc(&mut adj, *p, len)
                            .iter_mut()
                            .zip(&g[offset..offset + len])
                        {
                            *d += x;
                        }
                        offset += len;
                    }
                }
            }
            // Leaves keep their adjoint for the caller.
            if matches!(node.op, Op::Leaf) {
                adj[i] = Some(g);
            }
        }
        Ok(Gradients { adj })
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Adjoints of the leaves reached by a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to a leaf. Leaves recorded before the output
    /// that do not influence it get zeros of length `len`.
    pub fn wrt(&self, v: Var, len: usize) -> Result<Vec<f64>> {
        match self.adj.get(v.0) {
            None => Err(Error::Internal(format!(
                "node {} was not recorded before the output",
                v.0
            ))),
            Some(Some(g)) => Ok(g.clone()),
            Some(None) => Ok(vec![0.0; len]),
        }
    }
}
