//! Tensor-level reverse-mode differentiation.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding
//! its output values. [`Tape::backward`] then walks the nodes in reverse
//! and accumulates vector-Jacobian products into each input. Nodes are
//! flat `Vec<f64>` buffers; shapes travel with the op.
//!
//! ```
//! use bitdnn::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let p = tape.param(vec![1.0, -2.0, 3.0]);
//! let sq = tape.mul(p, p);
//! let loss = tape.sum(sq);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(&*grads.get(p), &[2.0, -4.0, 6.0]);
//! ```

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{self, CapsShape, Conv1dShape, Conv2dShape};
use crate::training::loss::{margin_loss_backward, margin_loss_value, MarginLossConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d { input: Var, weight: Var, bias: Var, shape: Conv1dShape },
    Dense { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Concat(Vec<Var>),
    BinaryIndex { input: Var, eps: f64 },
    TriangularIndex { input: Var, triples: Arc<[[u32; 3]]> },
    Conv2d { input: Var, weight: Var, bias: Var, shape: Conv2dShape },
    Squash { input: Var, dim: usize },
    Norms { input: Var, dim: usize },
    ClassPredict { poses: Var, weight: Var, bias: Var, shape: CapsShape },
    Softmax { input: Var, cols: usize },
    WeightedSum { c: Var, u_hat: Var, shape: CapsShape },
    Agreement { v: Var, u_hat: Var, shape: CapsShape },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mask { input: Var, keep: Range<usize> },
    MarginLoss { lengths: Var, target: usize, config: MarginLossConfig },
    Mse { input: Var, target: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of `var`; zeros if the loss does not depend on it.
    pub fn get(&self, var: Var) -> std::borrow::Cow<'_, [f64]> {
        match &self.grads[var.0] {
            Some(g) => std::borrow::Cow::Borrowed(g),
            None => std::borrow::Cow::Owned(vec![0.0; self.lens[var.0]]),
        }
    }

    pub fn take(&mut self, var: Var) -> Vec<f64> {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| vec![0.0; self.lens[var.0]])
    }
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

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn param(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub(crate) fn conv1d(&mut self, input: Var, weight: Var, bias: Var, shape: Conv1dShape) -> Var {
        let out = kernels::conv1d(shape, self.value(input), self.value(weight), self.value(bias));
        let rg = self.rg(&[input, weight, bias]);
        self.push(out, Op::Conv1d { input, weight, bias, shape }, rg)
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let out = kernels::dense(self.value(input), self.value(weight), self.value(bias));
        let rg = self.rg(&[input, weight, bias]);
        self.push(out, Op::Dense { input, weight, bias }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = kernels::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).iter().copied()).collect();
        let rg = self.rg(parts);
        self.push(out, Op::Concat(parts.to_vec()), rg)
    }

    pub fn binary_index(&mut self, x: Var, eps: f64) -> Var {
        let out = kernels::binary_index(self.value(x), eps);
        let rg = self.rg(&[x]);
        self.push(out, Op::BinaryIndex { input: x, eps }, rg)
    }

    pub fn triangular_index(&mut self, x: Var, triples: Arc<[[u32; 3]]>) -> Var {
        let out = kernels::triangular_index(self.value(x), &triples);
        let rg = self.rg(&[x]);
        self.push(out, Op::TriangularIndex { input: x, triples }, rg)
    }

    pub(crate) fn conv2d(&mut self, input: Var, weight: Var, bias: Var, shape: Conv2dShape) -> Var {
        let out = kernels::conv2d(shape, self.value(input), self.value(weight), self.value(bias));
        let rg = self.rg(&[input, weight, bias]);
        self.push(out, Op::Conv2d { input, weight, bias, shape }, rg)
    }

    pub fn squash(&mut self, x: Var, dim: usize) -> Var {
        let out = kernels::squash_groups(self.value(x), dim);
        let rg = self.rg(&[x]);
        self.push(out, Op::Squash { input: x, dim }, rg)
    }

    pub fn norms(&mut self, x: Var, dim: usize) -> Var {
        let out = kernels::group_norms(self.value(x), dim);
        let rg = self.rg(&[x]);
        self.push(out, Op::Norms { input: x, dim }, rg)
    }

    pub(crate) fn class_predict(&mut self, poses: Var, weight: Var, bias: Var, shape: CapsShape) -> Var {
        let out = kernels::class_predict(shape, self.value(poses), self.value(weight), self.value(bias));
        let rg = self.rg(&[poses, weight, bias]);
        self.push(out, Op::ClassPredict { poses, weight, bias, shape }, rg)
    }

    pub fn softmax_rows(&mut self, x: Var, cols: usize) -> Var {
        let out = kernels::softmax_rows(self.value(x), cols);
        let rg = self.rg(&[x]);
        self.push(out, Op::Softmax { input: x, cols }, rg)
    }

    pub(crate) fn weighted_sum(&mut self, c: Var, u_hat: Var, shape: CapsShape) -> Var {
        let out = kernels::weighted_sum(shape, self.value(c), self.value(u_hat));
        let rg = self.rg(&[c, u_hat]);
        self.push(out, Op::WeightedSum { c, u_hat, shape }, rg)
    }

    pub(crate) fn agreement(&mut self, v: Var, u_hat: Var, shape: CapsShape) -> Var {
        let out = kernels::agreement(shape, self.value(v), self.value(u_hat));
        let rg = self.rg(&[v, u_hat]);
        self.push(out, Op::Agreement { v, u_hat, shape }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = vec![self.value(x).iter().sum()];
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// Zeroes every entry outside `keep`.
    pub fn mask(&mut self, x: Var, keep: Range<usize>) -> Var {
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| if keep.contains(&i) { v } else { 0.0 })
            .collect();
        let rg = self.rg(&[x]);
        self.push(out, Op::Mask { input: x, keep }, rg)
    }

    /// `target` is a 0-based class index.
    pub fn margin_loss(&mut self, lengths: Var, target: usize, config: MarginLossConfig) -> Var {
        let out = vec![margin_loss_value(self.value(lengths), target, &config)];
        let rg = self.rg(&[lengths]);
        self.push(out, Op::MarginLoss { lengths, target, config }, rg)
    }

    pub fn mse(&mut self, x: Var, target: Vec<f64>) -> Var {
        let v = self.value(x);
        let out = vec![v.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / v.len() as f64];
        let rg = self.rg(&[x]);
        self.push(out, Op::Mse { input: x, target }, rg)
    }

    /// The side of every piecewise boundary taken by the recorded pass:
    /// relu inputs, normalized-difference clamps, and margin hinges. Two
    /// passes with equal patterns lie in the same smooth region.
    pub fn branch_pattern(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.value(*x).iter().map(|&v| u8::from(v > 0.0))),
                Op::BinaryIndex { input, eps } => {
                    let x = self.value(*input);
                    for i in 0..x.len() {
                        for j in i + 1..x.len() {
                            let (v, active) = kernels::normalized_difference(x[i], x[j], *eps);
                            out.push(if active { 0 } else if v > 0.0 { 1 } else { 2 });
                        }
                    }
                }
                Op::MarginLoss { lengths, target, config } => {
                    let mut grad = vec![0.0; self.value(*lengths).len()];
                    margin_loss_backward(self.value(*lengths), *target, config, 1.0, &mut grad);
                    out.extend(grad.iter().map(|&g| u8::from(g != 0.0)));
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let value = &self.nodes[loss.0].value;
        if value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got {} values",
                value.len()
            )));
        }
        if !value[0].is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {}", value[0])));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            lens: self.nodes.iter().map(|n| n.value.len()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut slot = Slots { tape: self, grads };
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { input, weight, bias, shape } => {
                let (mut gi, mut gw, mut gb) = (slot.take(*input), slot.take(*weight), slot.take(*bias));
                kernels::conv1d_backward(
                    *shape,
                    self.value(*input),
                    self.value(*weight),
                    g,
                    gi.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                slot.put(*input, gi);
                slot.put(*weight, gw);
                slot.put(*bias, gb);
            }
            Op::Dense { input, weight, bias } => {
                let (mut gi, mut gw, mut gb) = (slot.take(*input), slot.take(*weight), slot.take(*bias));
                kernels::dense_backward(
                    self.value(*input),
                    self.value(*weight),
                    g,
                    gi.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                slot.put(*input, gi);
                slot.put(*weight, gw);
                slot.put(*bias, gb);
            }
            Op::Relu(x) => {
                if let Some(mut gi) = slot.take(*x) {
                    kernels::relu_backward(self.value(*x), g, &mut gi);
                    slot.put(*x, Some(gi));
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if let Some(mut gi) = slot.take(p) {
                        for (a, b) in gi.iter_mut().zip(&g[offset..offset + n]) {
                            *a += b;
                        }
                        slot.put(p, Some(gi));
                    }
                    offset += n;
                }
            }
            Op::BinaryIndex { input, eps } => {
                if let Some(mut gi) = slot.take(*input) {
                    kernels::binary_index_backward(self.value(*input), *eps, g, &mut gi);
                    slot.put(*input, Some(gi));
                }
            }
            Op::TriangularIndex { input, triples } => {
                if let Some(mut gi) = slot.take(*input) {
                    kernels::triangular_index_backward(triples, g, &mut gi);
                    slot.put(*input, Some(gi));
                }
            }
            Op::Conv2d { input, weight, bias, shape } => {
                let (mut gi, mut gw, mut gb) = (slot.take(*input), slot.take(*weight), slot.take(*bias));
                kernels::conv2d_backward(
                    *shape,
                    self.value(*input),
                    self.value(*weight),
                    g,
                    gi.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                slot.put(*input, gi);
                slot.put(*weight, gw);
                slot.put(*bias, gb);
            }
            Op::Squash { input, dim } => {
                if let Some(mut gi) = slot.take(*input) {
                    kernels::squash_groups_backward(self.value(*input), *dim, g, &mut gi);
                    slot.put(*input, Some(gi));
                }
            }
            Op::Norms { input, dim } => {
                if let Some(mut gi) = slot.take(*input) {
                    kernels::group_norms_backward(self.value(*input), *dim, &node.value, g, &mut gi);
                    slot.put(*input, Some(gi));
                }
            }
            Op::ClassPredict { poses, weight, bias, shape } => {
                let (mut gp, mut gw, mut gb) = (slot.take(*poses), slot.take(*weight), slot.take(*bias));
                kernels::class_predict_backward(
                    *shape,
                    self.value(*poses),
                    self.value(*weight),
                    g,
                    gp.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                slot.put(*poses, gp);
                slot.put(*weight, gw);
                slot.put(*bias, gb);
            }
            Op::Softmax { input, cols } => {
                if let Some(mut gi) = slot.take(*input) {
                    kernels::softmax_rows_backward(&node.value, *cols, g, &mut gi);
                    slot.put(*input, Some(gi));
                }
            }
            Op::WeightedSum { c, u_hat, shape } => {
                let (mut gc, mut gu) = (slot.take(*c), slot.take(*u_hat));
                kernels::weighted_sum_backward(
                    *shape,
                    self.value(*c),
                    self.value(*u_hat),
                    g,
                    gc.as_deref_mut(),
                    gu.as_deref_mut(),
                );
                slot.put(*c, gc);
                slot.put(*u_hat, gu);
            }
            Op::Agreement { v, u_hat, shape } => {
                let (mut gv, mut gu) = (slot.take(*v), slot.take(*u_hat));
                kernels::agreement_backward(
                    *shape,
                    self.value(*v),
                    self.value(*u_hat),
                    g,
                    gv.as_deref_mut(),
                    gu.as_deref_mut(),
                );
                slot.put(*v, gv);
                slot.put(*u_hat, gu);
            }
            Op::Add(a, b) => {
                for x in [*a, *b] {
                    if let Some(mut gi) = slot.take(x) {
                        for (p, q) in gi.iter_mut().zip(g) {
                            *p += q;
                        }
                        slot.put(x, Some(gi));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if let Some(mut ga) = slot.take(*a) {
                    for ((p, q), y) in ga.iter_mut().zip(g).zip(vb) {
                        *p += q * y;
                    }
                    slot.put(*a, Some(ga));
                }
                if let Some(mut gb) = slot.take(*b) {
                    for ((p, q), x) in gb.iter_mut().zip(g).zip(va) {
                        *p += q * x;
                    }
                    slot.put(*b, Some(gb));
                }
            }
            Op::Scale(x, factor) => {
                if let Some(mut gi) = slot.take(*x) {
                    for (p, q) in gi.iter_mut().zip(g) {
                        *p += q * factor;
                    }
                    slot.put(*x, Some(gi));
                }
            }
            Op::Sum(x) => {
                if let Some(mut gi) = slot.take(*x) {
                    for p in gi.iter_mut() {
                        *p += g[0];
                    }
                    slot.put(*x, Some(gi));
                }
            }
            Op::Mask { input, keep } => {
                if let Some(mut gi) = slot.take(*input) {
                    for i in keep.clone() {
                        gi[i] += g[i];
                    }
                    slot.put(*input, Some(gi));
                }
            }
            Op::MarginLoss { lengths, target, config } => {
                if let Some(mut gi) = slot.take(*lengths) {
                    margin_loss_backward(self.value(*lengths), *target, config, g[0], &mut gi);
                    slot.put(*lengths, Some(gi));
                }
            }
            Op::Mse { input, target } => {
                if let Some(mut gi) = slot.take(*input) {
                    let v = self.value(*input);
                    let n = v.len() as f64;
                    for ((p, a), b) in gi.iter_mut().zip(v).zip(target) {
                        *p += g[0] * 2.0 * (a - b) / n;
                    }
                    slot.put(*input, Some(gi));
                }
            }
        }
    }
}

/// Take/put access to gradient buffers; only nodes that require a
/// gradient get one.
struct Slots<'a> {
    tape: &'a Tape,
    grads: &'a mut [Option<Vec<f64>>],
}

impl Slots<'_> {
    fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        let node = &self.tape.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            self.grads[v.0]
                .take()
                .unwrap_or_else(|| vec![0.0; node.value.len()]),
        )
    }

    fn put(&mut self, v: Var, g: Option<Vec<f64>>) {
        if let Some(g) = g {
            debug_assert!(self.grads[v.0].is_none(), "same var used twice in one op");
            self.grads[v.0] = Some(g);
        }
    }
}

/// Evaluates `loss_fn` on a fresh tape with `params` bound as leaves and
/// returns the loss with exact gradients for every parameter tensor.
pub fn compute_gradients<F>(params: &[Vec<f64>], loss_fn: F) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.iter().map(|&v| grads.take(v)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn check<F>(x: &[f64], build: F)
    where
        F: Fn(&mut Tape, Var) -> Var,
    {
        let f = |p: &[f64]| {
            let mut t = Tape::new();
            let v = t.param(p.to_vec());
            let out = build(&mut t, v);
            t.scalar(out)
        };
        let mut t = Tape::new();
        let v = t.param(x.to_vec());
        let out = build(&mut t, v);
        let g = t.backward(out).unwrap();
        let numeric = fd(f, x);
        for (a, n) in g.get(v).iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn quadratic_bowl() {
        let p = vec![0.5, -1.5, 2.0];
        let (loss, g) = compute_gradients(std::slice::from_ref(&p), |t, v| {
            let sq = t.mul(v[0], v[0]);
            Ok(t.sum(sq))
        })
        .unwrap();
        assert_eq!(loss, 0.25 + 2.25 + 4.0);
        assert_eq!(g[0], vec![1.0, -3.0, 4.0]);
    }

    #[test]
    fn squash_gradient() {
        check(&[0.3, -0.7, 1.1, 0.2, 0.1, -0.4], |t, v| {
            let s = t.squash(v, 3);
            let w = t.constant(vec![1.0, 2.0, -1.0, 0.5, -0.3, 0.8]);
            let p = t.mul(s, w);
            t.sum(p)
        });
    }

    #[test]
    fn softmax_and_norm_gradient() {
        check(&[0.3, -0.7, 1.1, 0.2, 0.1, -0.4], |t, v| {
            let s = t.softmax_rows(v, 3);
            let w = t.constant(vec![1.0, 2.0, -1.0, 0.5, -0.3, 0.8]);
            let p = t.mul(s, w);
            let n = t.norms(p, 2);
            t.sum(n)
        });
    }

    #[test]
    fn index_gradients() {
        check(&[0.3, 0.7, 1.1, 0.2, 0.9], |t, v| {
            let b = t.binary_index(v, 1e-8);
            let tri = t.triangular_index(v, kernels::all_triples(5).into());
            let c = t.concat(&[b, tri]);
            let sq = t.mul(c, c);
            t.sum(sq)
        });
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut t = Tape::new();
        let a = t.param(vec![1.0, 2.0]);
        let b = t.param(vec![3.0]);
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert_eq!(&*g.get(b), &[0.0]);
    }

    #[test]
    fn non_finite_loss_rejected() {
        let mut t = Tape::new();
        let a = t.param(vec![f64::NAN]);
        let s = t.sum(a);
        assert!(matches!(t.backward(s), Err(Error::Numeric(_))));
    }
}
