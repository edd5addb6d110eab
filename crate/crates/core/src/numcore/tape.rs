//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every primitive appends one node holding its computed value. Nodes only
//! reference earlier nodes, so the tape is topologically ordered by
//! construction and the backward sweep is a single reverse scan.

use std::collections::HashMap;

use super::tensor::{matmul_raw, matvec_raw, matvec_t_raw, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    SumSq(Var),
    L2Norm(Var),
    L1Norm(Var),
    RowL2Norms(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to requested leaves.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    map: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.map.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.map.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn last_axis(t: &Tensor) -> usize {
    t.cols()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value: t,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input; no gradient flows into it.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Const,
            value: t,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product. Supports `[n×k]·[k×p]`, `[m×k]·[k]` and `[k]·[k×p]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = match (av.rank(), bv.rank()) {
            (2, 2) if av.shape()[1] == bv.shape()[0] => {
                let (n, k, p) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                Tensor::new(vec![n, p], matmul_raw(av.data(), bv.data(), n, k, p))?
            }
            (2, 1) if av.shape()[1] == bv.shape()[0] => {
                let (m, k) = (av.shape()[0], av.shape()[1]);
                Tensor::vector(matvec_raw(av.data(), m, k, bv.data()))
            }
            (1, 2) if av.shape()[0] == bv.shape()[0] => {
                let (k, p) = (bv.shape()[0], bv.shape()[1]);
                Tensor::vector(matmul_raw(av.data(), bv.data(), 1, k, p))
            }
            _ => return Err(Error::dim("matmul", av.shape(), bv.shape())),
        };
        self.push(Op::MatMul(a, b), out, &[a, b])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim(op, sa, sb));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), out, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push(Op::Sub(a, b), out, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), out, &[a, b])
    }

    /// Adds a bias vector to every row (or to the single vector).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let p = last_axis(xv);
        if bv.rank() != 1 || bv.len() != p || xv.rank() == 0 {
            return Err(Error::dim("add_bias", xv.shape(), bv.shape()));
        }
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % p])
            .collect();
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(Op::AddBias(x, bias), out, &[x, bias])
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(Op::Affine(x, scale), out, &[x])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.affine(x, s, 0.0)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), out, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out, &[x])
    }

    /// `ln(max(eps, x))`; the gradient is zero where the clamp is active.
    pub fn ln_clamped(&mut self, x: Var, eps: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(eps).ln());
        self.push(Op::Ln(x, eps), out, &[x])
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::param("concat of zero parts"));
        };
        let first_v = self.value(first);
        let rank = first_v.rank();
        let rows = first_v.rows();
        if rank == 0 {
            return Err(Error::dim("concat", first_v.shape(), &[1]));
        }
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() != rank || pv.rows() != rows {
                return Err(Error::dim("concat", first_v.shape(), pv.shape()));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| last_axis(self.value(p))).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let out = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec()), out, parts)
    }

    /// Columns `start..start+len` along the last axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let w = last_axis(xv);
        if xv.rank() == 0 || len == 0 || start + len > w {
            return Err(Error::dim("slice", xv.shape(), &[start, len]));
        }
        let rows = xv.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.data()[r * w + start..r * w + start + len]);
        }
        let shape = if xv.rank() == 1 { vec![len] } else { vec![rows, len] };
        let out = Tensor::new(shape, data)?;
        self.push(Op::Slice(x, start), out, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s), &[x])
    }

    /// Mean over every element.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Squared ℓ2 norm of all elements.
    pub fn sum_sq(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::SumSq(x), Tensor::scalar(s), &[x])
    }

    /// ℓ2 norm; subgradient 0 at the origin.
    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::L2Norm(x), Tensor::scalar(s.sqrt()), &[x])
    }

    /// ℓ1 norm; subgradient `sign(x)` with 0 at 0.
    pub fn l1_norm(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().map(|v| v.abs()).sum();
        self.push(Op::L1Norm(x), Tensor::scalar(s), &[x])
    }

    /// Per-row ℓ2 norms of a matrix, `[n×p] -> [n]`; a vector counts as one row.
    pub fn row_l2_norms(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(Error::dim("row_l2_norms", xv.shape(), &[1]));
        }
        let p = last_axis(xv);
        let norms = xv
            .data()
            .chunks(p)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.push(Op::RowL2Norms(x), Tensor::vector(norms), &[x])
    }

    /// Reverse sweep from scalar `output`, returning gradients for `leaves`.
    pub fn grad(&self, output: Var, leaves: &[Var]) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::contract(format!("output {} is not on this tape", output.0)));
        }
        let out_val = &self.nodes[output.0].value;
        if out_val.len() != 1 {
            return Err(Error::contract(format!(
                "gradient requires a scalar output, found shape {:?}",
                out_val.shape()
            )));
        }
        for &l in leaves {
            match self.nodes.get(l.0) {
                Some(Node { op: Op::Leaf, .. }) => {}
                _ => return Err(Error::UnknownLeaf(l.0)),
            }
        }

        let mut adj: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        adj[output.0] = Some(vec![1.0]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                adj[i] = Some(g);
                continue;
            }
            self.backprop(node, &g, &mut adj);
        }

        let mut map = HashMap::with_capacity(leaves.len());
        for &l in leaves {
            let shape = self.nodes[l.0].value.shape().to_vec();
            let data = match adj.get_mut(l.0).and_then(Option::take) {
                Some(d) => d,
                None => vec![0.0; self.nodes[l.0].value.len()],
            };
            let t = if shape.is_empty() {
                Tensor::scalar(data[0])
            } else {
                Tensor::new(shape, data)?
            };
            if let Some(prev) = map.insert(l, t.clone()) {
                debug_assert_eq!(prev, t);
            }
        }
        Ok(Gradients { map })
    }

    fn backprop(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, delta: Vec<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(a) => a.iter_mut().zip(&delta).for_each(|(x, d)| *x += d),
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                match (av.rank(), bv.rank()) {
                    (2, 2) => {
                        let (n, k, p) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                        if wants(*a) {
                            // dA = dC · Bᵀ
                            let mut da = vec![0.0; n * k];
                            for i in 0..n {
                                let grow = &g[i * p..(i + 1) * p];
                                for l in 0..k {
                                    let brow = &bv.data()[l * p..(l + 1) * p];
                                    da[i * k + l] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                                }
                            }
                            acc(*a, da);
                        }
                        if wants(*b) {
                            // dB = Aᵀ · dC
                            let mut db = vec![0.0; k * p];
                            for i in 0..n {
                                let grow = &g[i * p..(i + 1) * p];
                                for l in 0..k {
                                    let ail = av.data()[i * k + l];
                                    if ail == 0.0 {
                                        continue;
                                    }
                                    let drow = &mut db[l * p..(l + 1) * p];
                                    for (d, &gj) in drow.iter_mut().zip(grow) {
                                        *d += ail * gj;
                                    }
                                }
                            }
                            acc(*b, db);
                        }
                    }
                    (2, 1) => {
                        let (m, k) = (av.shape()[0], av.shape()[1]);
                        if wants(*a) {
                            let x = bv.data();
                            let mut da = vec![0.0; m * k];
                            for i in 0..m {
                                for j in 0..k {
                                    da[i * k + j] = g[i] * x[j];
                                }
                            }
                            acc(*a, da);
                        }
                        if wants(*b) {
                            acc(*b, matvec_t_raw(av.data(), m, k, g));
                        }
                    }
                    (1, 2) => {
                        let (k, p) = (bv.shape()[0], bv.shape()[1]);
                        if wants(*a) {
                            acc(*a, matvec_raw(bv.data(), k, p, g));
                        }
                        if wants(*b) {
                            let x = av.data();
                            let mut db = vec![0.0; k * p];
                            for l in 0..k {
                                for j in 0..p {
                                    db[l * p + j] = x[l] * g[j];
                                }
                            }
                            acc(*b, db);
                        }
                    }
                    _ => unreachable!("matmul shapes validated on record"),
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let da = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                let db = g.iter().zip(av).map(|(x, y)| x * y).collect();
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddBias(x, b) => {
                acc(*x, g.to_vec());
                let p = val(*b).len();
                let mut db = vec![0.0; p];
                for (i, gi) in g.iter().enumerate() {
                    db[i % p] += gi;
                }
                acc(*b, db);
            }
            Op::Affine(x, s) => acc(*x, g.iter().map(|v| v * s).collect()),
            Op::Relu(x) => {
                let d = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gi, &xi)| if xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                acc(*x, d);
            }
            Op::Tanh(x) => {
                let d = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, yi)| gi * (1.0 - yi * yi))
                    .collect();
                acc(*x, d);
            }
            Op::Sigmoid(x) => {
                let d = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect();
                acc(*x, d);
            }
            Op::Ln(x, eps) => {
                let d = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gi, &xi)| if xi > *eps { gi / xi } else { 0.0 })
                    .collect();
                acc(*x, d);
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, d);
                    }
                    offset += w;
                }
            }
            Op::Slice(x, start) => {
                let xv = val(*x);
                let (rows, w) = (xv.rows(), xv.cols());
                let len = node.value.cols();
                let mut d = vec![0.0; xv.len()];
                for r in 0..rows {
                    d[r * w + start..r * w + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                acc(*x, d);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; val(*x).len()]),
            Op::SumSq(x) => acc(*x, val(*x).data().iter().map(|v| 2.0 * v * g[0]).collect()),
            Op::L2Norm(x) => {
                let n = node.value.data()[0];
                let d = if n > 0.0 {
                    val(*x).data().iter().map(|v| g[0] * v / n).collect()
                } else {
                    vec![0.0; val(*x).len()]
                };
                acc(*x, d);
            }
            Op::L1Norm(x) => {
                let d = val(*x).data().iter().map(|&v| g[0] * sign(v)).collect();
                acc(*x, d);
            }
            Op::RowL2Norms(x) => {
                let xv = val(*x);
                let p = xv.cols();
                let norms = node.value.data();
                let mut d = vec![0.0; xv.len()];
                for (r, row) in xv.data().chunks(p).enumerate() {
                    if norms[r] > 0.0 {
                        for (j, v) in row.iter().enumerate() {
                            d[r * p + j] = g[r] * v / norms[r];
                        }
                    }
                }
                acc(*x, d);
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Const => "constant",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddBias(..) => "add_bias",
        Op::Affine(..) => "affine",
        Op::Relu(..) => "relu",
        Op::Tanh(..) => "tanh",
        Op::Sigmoid(..) => "sigmoid",
        Op::Ln(..) => "ln",
        Op::Concat(..) => "concat",
        Op::Slice(..) => "slice",
        Op::Sum(..) => "sum",
        Op::SumSq(..) => "sum_sq",
        Op::L2Norm(..) => "l2_norm",
        Op::L1Norm(..) => "l1_norm",
        Op::RowL2Norms(..) => "row_l2_norms",
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]));
        let f = tape.sum_sq(x).unwrap();
        let g = tape.grad(f, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn linear_gradient_is_coefficients() {
        let a = vec![0.5, -1.5, 3.0];
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::vector(a.clone()));
        let x = tape.leaf(Tensor::vector(vec![7.0, 8.0, -9.0]));
        let p = tape.mul(av, x).unwrap();
        let f = tape.sum(p).unwrap();
        let g = tape.grad(f, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap().data(), a.as_slice());
    }

    #[test]
    fn non_scalar_output_is_contract_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.tanh(x).unwrap();
        assert!(matches!(tape.grad(y, &[x]), Err(Error::Contract(_))));
    }

    #[test]
    fn unknown_leaf_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0]));
        let c = tape.constant(Tensor::vector(vec![1.0]));
        let f = tape.sum_sq(x).unwrap();
        assert!(matches!(tape.grad(f, &[c]), Err(Error::UnknownLeaf(_))));
        assert!(matches!(tape.grad(f, &[Var(99)]), Err(Error::UnknownLeaf(99))));
    }

    #[test]
    fn norm_subgradients_at_origin_are_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let n2 = tape.l2_norm(x).unwrap();
        let n1 = tape.l1_norm(x).unwrap();
        let f = tape.add(n1, n2).unwrap();
        let g = tape.grad(f, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.leaf(Tensor::vector(vec![3.0]));
        let f = tape.sum(x).unwrap();
        let g = tape.grad(f, &[y]).unwrap();
        assert_eq!(g.get(y).unwrap().data(), &[0.0]);
    }

    #[test]
    fn ln_clamp_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 2.0]));
        let l = tape.ln_clamped(x, 1e-12).unwrap();
        assert!((tape.value(l).data()[0] - (1e-12f64).ln()).abs() < 1e-12);
        let f = tape.sum(l).unwrap();
        let g = tape.grad(f, &[x]).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.5]);
    }

    #[test]
    fn concat_and_slice_route_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = tape.slice(c, 1, 1).unwrap();
        assert_eq!(tape.value(s).data(), &[3.0, 5.0]);
        let f = tape.sum_sq(s).unwrap();
        let g = tape.grad(f, &[a, b]).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.get(b).unwrap().data(), &[6.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(tape.add(a, b), Err(Error::Dimension { .. })));
        let m = tape.leaf(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.matmul(m, b), Err(Error::Dimension { .. })));
    }
}
