//! Reverse-mode automatic differentiation over a Wengert list.
//!
//! Every op appends a node holding its forward value and the handles of its
//! parents. Nodes only reference earlier nodes, so insertion order is a
//! topological order and the reverse sweep visits it back to front.
//!
//! The vector-Jacobian product of every op is itself written with tape ops.
//! With `create_graph` the sweep records those products as ordinary
//! differentiable nodes, which is what lets a meta-learner differentiate
//! through its own inner-loop gradient steps.

use std::collections::HashMap;

use crate::error::{GradError, Result};
use crate::kernels;
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that made it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
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
    Neg(Var),
    Scale(Var, f64),
    /// `amp * sin(omega * x)`
    Sin { x: Var, omega: f64, amp: f64 },
    /// `amp * cos(omega * x)`
    Cos { x: Var, omega: f64, amp: f64 },
    Abs(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Reshape(Var),
    BroadcastTo(Var),
    SumTo(Var),
    Sum(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Pad { x: Var, start: usize },
    Upsample { x: Var, factors: Vec<usize> },
    SumPool { x: Var, factors: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The recording context. Single-threaded; independent tapes may live on
/// different threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    no_grad: bool,
    /// `sin(omega x)` and `cos(omega x)` per (node, omega bits). Higher-order
    /// sweeps revisit the same phases many times.
    trig: HashMap<(usize, u64), [Option<Tensor>; 2]>,
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

    /// A trainable input: gradients flow to it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input: no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient from [`Tape::backward`], if any.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && !self.no_grad;
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, rg)
    }

    // ---- elementwise -------------------------------------------------------

    fn same_shape(&mut self, a: Var, b: Var, op: &'static str) -> Result<(Var, Var)> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            return Ok((a, b));
        }
        let target = kernels::broadcast_shapes(&sa, &sb).map_err(|_| GradError::Shape {
            op,
            lhs: sa.clone(),
            rhs: sb.clone(),
        })?;
        Ok((self.broadcast_to(a, &target)?, self.broadcast_to(b, &target)?))
    }

    /// Elementwise sum with right-aligned broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.same_shape(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.record(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.same_shape(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.record(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = self.same_shape(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.record(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| -a);
        self.record(v, Op::Neg(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|a| c * a);
        self.record(v, Op::Scale(x, c), &[x])
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.mul(x, x)
    }

    /// `sin(omega * x)`, elementwise.
    pub fn sin_act(&mut self, x: Var, omega: f64) -> Var {
        self.sin_scaled(x, omega, 1.0)
    }

    fn sin_scaled(&mut self, x: Var, omega: f64, amp: f64) -> Var {
        let v = self.phase(x, omega, 0).map(|a| amp * a);
        self.record(v, Op::Sin { x, omega, amp }, &[x])
    }

    /// `cos(omega * x)`, elementwise.
    pub fn cos_act(&mut self, x: Var, omega: f64) -> Var {
        self.cos_scaled(x, omega, 1.0)
    }

    fn cos_scaled(&mut self, x: Var, omega: f64, amp: f64) -> Var {
        let v = self.phase(x, omega, 1).map(|a| amp * a);
        self.record(v, Op::Cos { x, omega, amp }, &[x])
    }

    /// Cached `sin(omega x)` (`which = 0`) or `cos(omega x)` (`which = 1`).
    fn phase(&mut self, x: Var, omega: f64, which: usize) -> &Tensor {
        let nodes = &self.nodes;
        // The derivative's phase is only needed when x can carry gradient.
        let single = self.no_grad || !nodes[x.0].requires_grad;
        let slot = self.trig.entry((x.0, omega.to_bits())).or_default();
        if slot[which].is_none() {
            if single {
                let f = if which == 0 { 0 } else { 1 };
                slot[which] = Some(nodes[x.0].value.map(|a| {
                    let sc = kernels::sin_cos(omega * a);
                    if f == 0 {
                        sc.0
                    } else {
                        sc.1
                    }
                }));
            } else {
                let (s, c) = kernels::sin_cos_scaled(&nodes[x.0].value, omega);
                slot[0].get_or_insert(s);
                slot[1].get_or_insert(c);
            }
        }
        slot[which].as_ref().expect("filled above")
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.record(v, Op::Abs(x), &[x])
    }

    // ---- linear algebra ----------------------------------------------------

    /// Matrix product with optional transposes of the last two dims. Both
    /// operands are matrices or share identical leading batch dims.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b), ta, tb)?;
        Ok(self.record(v, Op::MatMul { a, b, ta, tb }, &[a, b]))
    }

    /// `a[.., p, q] @ b[q, r]` or batched `a[B.., p, q] @ b[B.., q, r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() > 2 && sb.len() == 2 {
            let q = sa[sa.len() - 1];
            let rows = numel(&sa[..sa.len() - 1]);
            if q != sb[0] {
                return Err(GradError::Shape {
                    op: "matmul",
                    lhs: sa,
                    rhs: sb,
                });
            }
            let flat = self.reshape(a, &[rows, q])?;
            let out = self.matmul_t(flat, b, false, false)?;
            let mut shape = sa[..sa.len() - 1].to_vec();
            shape.push(sb[1]);
            return self.reshape(out, &shape);
        }
        self.matmul_t(a, b, false, false)
    }

    // ---- shape ---------------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        let v = self.value(x).reshape(shape)?;
        Ok(self.record(v, Op::Reshape(x), &[x]))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        let v = kernels::broadcast_to(self.value(x), shape)?;
        Ok(self.record(v, Op::BroadcastTo(x), &[x]))
    }

    /// Sums broadcast dims away so the result has `shape`.
    pub fn sum_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if self.shape(x) == shape {
            return Ok(x);
        }
        let v = kernels::sum_to(self.value(x), shape)?;
        Ok(self.record(v, Op::SumTo(x), &[x]))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let v = Tensor::scalar(self.value(x).sum());
        self.record(v, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = kernels::concat_last(&tensors)?;
        Ok(self.record(v, Op::Concat(parts.to_vec()), parts))
    }

    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = kernels::slice_last(self.value(x), start, len)?;
        Ok(self.record(v, Op::Slice { x, start }, &[x]))
    }

    pub fn pad_last(&mut self, x: Var, start: usize, total: usize) -> Result<Var> {
        let v = kernels::pad_last(self.value(x), start, total)?;
        Ok(self.record(v, Op::Pad { x, start }, &[x]))
    }

    /// Nearest-neighbour upsampling of a channels-last grid `[s_1.., C]` to
    /// the spatial size `target`. Each target extent must be an integer
    /// multiple of the source extent.
    pub fn upsample_nearest(&mut self, x: Var, target: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let ratio_err = || GradError::UpsampleRatio {
            from: shape[..shape.len().saturating_sub(1)].to_vec(),
            to: target.to_vec(),
        };
        if shape.len() != target.len() + 1 {
            return Err(ratio_err());
        }
        let mut factors = Vec::with_capacity(target.len());
        for (&s, &t) in shape.iter().zip(target) {
            if t % s != 0 || t < s {
                return Err(ratio_err());
            }
            factors.push(t / s);
        }
        self.upsample_by(x, &factors)
    }

    fn upsample_by(&mut self, x: Var, factors: &[usize]) -> Result<Var> {
        if factors.iter().all(|&f| f == 1) {
            return Ok(x);
        }
        let v = kernels::upsample_nearest(self.value(x), factors)?;
        Ok(self.record(
            v,
            Op::Upsample {
                x,
                factors: factors.to_vec(),
            },
            &[x],
        ))
    }

    fn sum_pool(&mut self, x: Var, factors: &[usize]) -> Result<Var> {
        if factors.iter().all(|&f| f == 1) {
            return Ok(x);
        }
        let v = kernels::sum_pool(self.value(x), factors)?;
        Ok(self.record(
            v,
            Op::SumPool {
                x,
                factors: factors.to_vec(),
            },
            &[x],
        ))
    }

    // ---- reverse sweep -------------------------------------------------------

    /// Gradients of the scalar `loss` with respect to `wrt`. With
    /// `create_graph` the returned vars are differentiable functions of the
    /// tape's inputs; otherwise they are constants. Inputs `loss` does not
    /// depend on get zero gradients.
    pub fn gradients(&mut self, loss: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        let adj = self.sweep(loss, create_graph)?;
        let prev = self.no_grad;
        self.no_grad = !create_graph;
        let out = wrt
            .iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Tensor::zeros(self.shape(w));
                    self.constant(z)
                }
            })
            .collect();
        self.no_grad = prev;
        Ok(out)
    }

    /// Accumulates d(loss)/d(node) into the gradient buffer of every node
    /// that requires grad. Repeated calls add up until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let adj = self.sweep(loss, false)?;
        if self.grads.len() < self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        for i in 0..=loss.0 {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let contribution = match adj.get(i).copied().flatten() {
                Some(g) => self.nodes[g.0].value.clone(),
                None => Tensor::zeros(self.nodes[i].value.shape()),
            };
            match &mut self.grads[i] {
                Some(acc) => acc.axpy(1.0, &contribution)?,
                slot => *slot = Some(contribution),
            }
        }
        Ok(())
    }

    fn sweep(&mut self, loss: Var, create_graph: bool) -> Result<Vec<Option<Var>>> {
        if !self.value(loss).is_scalar() {
            return Err(GradError::NotScalar(self.shape(loss).to_vec()));
        }
        let mut adj: Vec<Option<Var>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(adj);
        }
        let prev = self.no_grad;
        self.no_grad = !create_graph;
        let seed = self.constant(Tensor::ones(self.shape(loss)));
        adj[loss.0] = Some(seed);
        let result = self.sweep_from(loss, &mut adj);
        self.no_grad = prev;
        result.map(|_| adj)
    }

    fn sweep_from(&mut self, loss: Var, adj: &mut [Option<Var>]) -> Result<()> {
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let mut contribs: Vec<(Var, Var)> = Vec::with_capacity(2);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    contribs.push((a, g));
                    contribs.push((b, g));
                }
                Op::Sub(a, b) => {
                    contribs.push((a, g));
                    if self.requires_grad(b) {
                        let n = self.neg(g);
                        contribs.push((b, n));
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(a) {
                        contribs.push((a, self.mul(g, b)?));
                    }
                    if self.requires_grad(b) {
                        contribs.push((b, self.mul(g, a)?));
                    }
                }
                Op::Neg(x) => contribs.push((x, self.neg(g))),
                Op::Scale(x, c) => contribs.push((x, self.scale(g, c))),
                Op::Sin { x, omega, amp } => {
                    let d = self.cos_scaled(x, omega, amp * omega);
                    contribs.push((x, self.mul(g, d)?));
                }
                Op::Cos { x, omega, amp } => {
                    let d = self.sin_scaled(x, omega, -amp * omega);
                    contribs.push((x, self.mul(g, d)?));
                }
                Op::Abs(x) => {
                    let sign = self.value(x).map(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    let s = self.constant(sign);
                    contribs.push((x, self.mul(g, s)?));
                }
                Op::MatMul { a, b, ta, tb } => {
                    if self.requires_grad(a) {
                        let da = match (ta, tb) {
                            (false, false) => self.matmul_t(g, b, false, true)?,
                            (false, true) => self.matmul_t(g, b, false, false)?,
                            (true, false) => self.matmul_t(b, g, false, true)?,
                            (true, true) => self.matmul_t(b, g, true, true)?,
                        };
                        contribs.push((a, da));
                    }
                    if self.requires_grad(b) {
                        let db = match (ta, tb) {
                            (false, false) => self.matmul_t(a, g, true, false)?,
                            (false, true) => self.matmul_t(g, a, true, false)?,
                            (true, false) => self.matmul_t(a, g, false, false)?,
                            (true, true) => self.matmul_t(g, a, true, true)?,
                        };
                        contribs.push((b, db));
                    }
                }
                Op::Reshape(x) => {
                    let s = self.shape(x).to_vec();
                    contribs.push((x, self.reshape(g, &s)?));
                }
                Op::BroadcastTo(x) => {
                    let s = self.shape(x).to_vec();
                    contribs.push((x, self.sum_to(g, &s)?));
                }
                Op::SumTo(x) | Op::Sum(x) => {
                    let s = self.shape(x).to_vec();
                    contribs.push((x, self.broadcast_to(g, &s)?));
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = *self.shape(p).last().expect("concat parts have rank >= 1");
                        if self.requires_grad(p) {
                            contribs.push((p, self.slice_last(g, start, w)?));
                        }
                        start += w;
                    }
                }
                Op::Slice { x, start } => {
                    let total = *self.shape(x).last().expect("sliced tensor has rank >= 1");
                    contribs.push((x, self.pad_last(g, start, total)?));
                }
                Op::Pad { x, start } => {
                    let len = *self.shape(x).last().expect("padded tensor has rank >= 1");
                    contribs.push((x, self.slice_last(g, start, len)?));
                }
                Op::Upsample { x, factors } => contribs.push((x, self.sum_pool(g, &factors)?)),
                Op::SumPool { x, factors } => contribs.push((x, self.upsample_by(g, &factors)?)),
            }
            debug_assert!(contribs
                .iter()
                .all(|(p, c)| self.shape(*p) == self.shape(*c)));
            for (p, c) in contribs {
                if !self.nodes[p.0].requires_grad {
                    continue;
                }
                adj[p.0] = Some(match adj[p.0] {
                    None => c,
                    Some(prev) => self.add(prev, c)?,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_gradient_is_input() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::new(&[3], vec![0.3, -1.0, 2.0]).unwrap());
        let x = tape.constant(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let wx = tape.mul(w, x).unwrap();
        let loss = tape.sum(wx);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 2.0, 3.0]);
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn sin_at_zero_has_unit_slope() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sin_act(w, 1.0);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w).unwrap().item().unwrap(), 1.0);
    }

    #[test]
    fn sin_act_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(
            Tensor::new(&[3], vec![0.0, std::f64::consts::PI / 40.0, 0.5]).unwrap(),
        );
        let y = tape.sin_act(x, 20.0);
        assert_eq!(tape.value(y).data()[0], 0.0);
        assert!((tape.value(y).data()[1] - 1.0).abs() < 1e-15);
        let z = tape.sin_act(x, 1.0);
        assert!((tape.value(z).data()[2] - 0.479_425_538_604_203).abs() < 1e-12);
    }

    #[test]
    fn backward_accumulates_until_zeroed() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(3.0));
        let l = tape.scale(w, 2.0);
        tape.backward(l).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().item().unwrap(), 4.0);
        tape.zero_grad();
        assert!(tape.grad(w).is_none());
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(w).unwrap().item().unwrap(), 2.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(w), Err(GradError::NotScalar(_))));
    }

    #[test]
    fn every_tracked_node_gets_a_grad() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(Tensor::zeros(&[2]));
        let b = tape.scale(a, 3.0);
        let l = tape.square(b).unwrap();
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(a).unwrap().item().unwrap(), 18.0);
        assert_eq!(tape.grad(b).unwrap().item().unwrap(), 6.0);
        assert_eq!(tape.grad(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn second_derivative_through_create_graph() {
        // f(x) = sin(2x); f'' = -4 sin(2x)
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.7));
        let y = tape.sin_act(x, 2.0);
        let dy = tape.gradients(y, &[x], true).unwrap()[0];
        let d2 = tape.gradients(dy, &[x], false).unwrap()[0];
        let expected = -4.0 * (1.4f64).sin();
        assert!((tape.value(d2).item().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gradients_without_create_graph_are_constants() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.7));
        let y = tape.square(x).unwrap();
        let g = tape.gradients(y, &[x], false).unwrap()[0];
        assert!(!tape.requires_grad(g));
        assert!((tape.value(g).item().unwrap() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn upsample_rejects_fractional_ratio() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 2, 1]));
        assert!(matches!(
            tape.upsample_nearest(x, &[3, 4]),
            Err(GradError::UpsampleRatio { .. })
        ));
        let y = tape.upsample_nearest(x, &[4, 6]).unwrap();
        assert_eq!(tape.shape(y), &[4, 6, 1]);
    }

    #[test]
    fn matmul_flattens_leading_dims_against_matrix() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_fn(&[2, 2, 3], |i| i as f64));
        let w = tape.constant(Tensor::ones(&[3, 1]));
        let y = tape.matmul(a, w).unwrap();
        assert_eq!(tape.shape(y), &[2, 2, 1]);
        assert_eq!(tape.value(y).data(), &[3.0, 12.0, 21.0, 30.0]);
    }
}
