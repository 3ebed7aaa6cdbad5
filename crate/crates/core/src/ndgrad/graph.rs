use super::tensor::{gemm, MatRef, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Gelu(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Map { x: Var, df: fn(f64) -> f64 },
    SqErrSum(Var, Var),
    Sum(Var),
    Transpose(Var),
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<usize>,
}

/// Define-by-run tape. Nodes are appended in evaluation order, so the node
/// index is already a topological order of the recorded graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradient of a scalar loss with respect to every leaf that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// `(param slot, gradient)` for every leaf registered through [`Graph::param`].
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &Tensor)> + '_ {
        self.params
            .iter()
            .filter_map(|&(node, slot)| self.grads[node].as_ref().map(|g| (slot, g)))
    }

    /// Adds each parameter gradient into `params[slot].grad`.
    pub fn accumulate(&self, params: &mut [&mut Param]) -> Result<()> {
        for (slot, g) in self.param_grads() {
            let p = params
                .get_mut(slot)
                .ok_or_else(|| Error::Invalid(format!("no parameter in slot {slot}")))?;
            p.grad.add_assign(g)?;
        }
        Ok(())
    }
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `x·Φ(x)` with the exact error-function CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * std_normal_pdf(x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Differentiable leaf tied to a parameter slot for [`Gradients::accumulate`].
    pub fn param(&mut self, slot: usize, p: &Param) -> Var {
        let v = self.push(p.value.clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(slot);
        v
    }

    /// Copy of `v`'s value with the gradient path cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a + bias` with `bias` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = self.value(a).add_row(self.value(bias))?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Elementwise clamp to `[lo, hi]`. The backward pass lets gradient
    /// through only where `lo < x < hi`; inputs sitting exactly on a bound
    /// count as clipped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if !(lo < hi) {
            return Err(Error::Invalid(format!("clamp bounds {lo} >= {hi}")));
        }
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        let rg = self.rg(a);
        Ok(self.push(out, Op::Clamp { x: a, lo, hi }, rg))
    }

    /// Elementwise `f` with a caller-supplied derivative `df`.
    pub fn map(&mut self, a: Var, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, Op::Map { x: a, df }, rg)
    }

    /// Scalar `Σ (a − b)²`.
    pub fn sq_err_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sq_err_sum(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(out), Op::SqErrSum(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(out), Op::Sum(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(a).slice_rows(start, end)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows { x: a, start }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&values)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Reverse sweep from a scalar `loss`. Each node is visited once, in
    /// reverse recording order; gradients from multiple consumers are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(root.value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|slot| (i, slot)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                if self.rg(*a) {
                    // dA = G·Bᵀ
                    let slot = accum_slot(grads, *a, av.shape());
                    gemm(
                        m,
                        n,
                        k,
                        MatRef::new(g.data(), n as isize, 1),
                        MatRef::new(bv.data(), n as isize, 1).t(),
                        slot.data_mut(),
                        1.0,
                    );
                }
                if self.rg(*b) {
                    // dB = Aᵀ·G
                    let slot = accum_slot(grads, *b, bv.shape());
                    gemm(
                        k,
                        m,
                        n,
                        MatRef::new(av.data(), k as isize, 1).t(),
                        MatRef::new(g.data(), n as isize, 1),
                        slot.data_mut(),
                        1.0,
                    );
                }
            }
            Op::AddRow(a, bias) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g)?;
                }
                if self.rg(*bias) {
                    let bshape = self.value(*bias).shape().to_vec();
                    let slot = accum_slot(grads, *bias, &bshape);
                    let c = g.cols();
                    for row in g.data().chunks_exact(c) {
                        for (s, v) in slot.data_mut().iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g)?;
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g)?;
                }
                if self.rg(*b) {
                    accumulate(grads, *b, &g.scale(-1.0))?;
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, &g.mul(self.value(*b))?)?;
                }
                if self.rg(*b) {
                    accumulate(grads, *b, &g.mul(self.value(*a))?)?;
                }
            }
            Op::Scale(a, s) => accumulate(grads, *a, &g.scale(*s))?,
            Op::Tanh(a) => {
                let local = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))?;
                accumulate(grads, *a, &local)?;
            }
            Op::Gelu(a) => {
                let local = g.zip_map(self.value(*a), |gi, x| gi * gelu_grad(x))?;
                accumulate(grads, *a, &local)?;
            }
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                let local = g.zip_map(self.value(*x), |gi, xi| {
                    if xi > lo && xi < hi {
                        gi
                    } else {
                        0.0
                    }
                })?;
                accumulate(grads, *x, &local)?;
            }
            Op::Map { x, df } => {
                let local = g.zip_map(self.value(*x), |gi, xi| gi * df(xi))?;
                accumulate(grads, *x, &local)?;
            }
            Op::SqErrSum(a, b) => {
                let s = 2.0 * g.item();
                let diff = self.value(*a).sub(self.value(*b))?;
                if self.rg(*a) {
                    accumulate(grads, *a, &diff.scale(s))?;
                }
                if self.rg(*b) {
                    accumulate(grads, *b, &diff.scale(-s))?;
                }
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                accumulate(grads, *a, &Tensor::full(&shape, g.item()))?;
            }
            Op::Transpose(a) => accumulate(grads, *a, &g.transpose()?)?,
            Op::SliceRows { x, start } => {
                let shape = self.value(*x).shape().to_vec();
                let c = g.cols();
                let slot = accum_slot(grads, *x, &shape);
                let dst = &mut slot.data_mut()[start * c..start * c + g.len()];
                for (d, v) in dst.iter_mut().zip(g.data()) {
                    *d += v;
                }
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.rg(p) {
                        accumulate(grads, p, &g.slice_rows(row, row + r)?)?;
                    }
                    row += r;
                }
            }
        }
        Ok(())
    }
}

fn accum_slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: &Tensor) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(g),
        slot @ None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tanh_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![0.0, 30.0]));
        let y = g.tanh(x);
        assert_eq!(g.value(y).data()[0], 0.0);
        let big = g.value(y).data()[1];
        assert!(big > 1.0 - 1e-12 && big <= 1.0);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data()[0], 1.0);
    }

    #[test]
    fn gelu_examples() {
        assert_eq!(gelu(0.0), 0.0);
        assert!(approx(gelu(10.0), 10.0, 1e-12));
        assert!(approx(gelu_grad(0.0), 0.5, 1e-15));
    }

    #[test]
    fn clamp_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![0.3, 1.4, -1.0, -3.0]));
        let y = g.clamp(x, -1.0, 1.0).unwrap();
        assert_eq!(g.value(y).data(), &[0.3, 1.0, -1.0, -1.0]);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(g.clamp(x, 1.0, 1.0).is_err());
    }

    #[test]
    fn sq_err_sum_examples() {
        let mut g = Graph::new();
        let a = g.input(Tensor::row(vec![1.0, 2.0]));
        let b = g.constant(Tensor::zeros(&[1, 2]));
        let l = g.sq_err_sum(a, b).unwrap();
        assert_eq!(g.value(l).item(), 5.0);
        let self_err = g.sq_err_sum(a, a).unwrap();
        assert_eq!(g.value(self_err).item(), 0.0);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.wrt(a).unwrap().data(), &[2.0, 4.0]);
        let c = g.constant(Tensor::zeros(&[2, 1]));
        assert!(g.sq_err_sum(a, c).is_err());
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let p = g.input(Tensor::row(vec![1.0, -2.0, 3.0]));
        let s = g.sum(p);
        assert_eq!(g.backward(s).unwrap().wrt(p).unwrap().data(), &[1.0; 3]);

        let mut g = Graph::new();
        let p = g.input(Tensor::row(vec![3.0]));
        let zero = g.constant(Tensor::zeros(&[1, 1]));
        let l = g.sq_err_sum(p, zero).unwrap();
        assert_eq!(g.backward(l).unwrap().wrt(p).unwrap().data(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let p = g.input(Tensor::row(vec![1.0, 2.0]));
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn shared_node_gradients_accumulate() {
        // f(x) = Σ x⊙x, df/dx = 2x
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![1.5, -0.5, 4.0]));
        let xx = g.mul(x, x).unwrap();
        let s = g.sum(xx);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[3.0, -1.0, 8.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::row(vec![1.0]));
        let x = g.input(Tensor::row(vec![2.0]));
        let y = g.mul(c, x).unwrap();
        let s = g.sum(y);
        let d = g.detach(x);
        let grads = g.backward(s).unwrap();
        assert!(grads.wrt(c).is_none());
        assert!(grads.wrt(d).is_none());
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn param_gradients_accumulate_into_slots() {
        let mut p0 = Param::new(Tensor::row(vec![1.0, 2.0]));
        let mut p1 = Param::new(Tensor::row(vec![3.0, 4.0]));
        for _ in 0..2 {
            let mut g = Graph::new();
            let a = g.param(0, &p0);
            let b = g.param(1, &p1);
            let m = g.mul(a, b).unwrap();
            let s = g.sum(m);
            let grads = g.backward(s).unwrap();
            grads.accumulate(&mut [&mut p0, &mut p1]).unwrap();
        }
        assert_eq!(p0.grad.data(), &[6.0, 8.0]);
        assert_eq!(p1.grad.data(), &[2.0, 4.0]);
        p0.zero_grad();
        assert_eq!(p0.grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn slice_and_concat_route_gradients() {
        let mut g = Graph::new();
        let a = g.input(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let b = g.input(Tensor::from_rows(&[vec![3.0]]).unwrap());
        let c = g.concat_rows(&[a, b]).unwrap();
        let tail = g.slice_rows(c, 1, 3).unwrap();
        let s = g.sum(tail);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(a).unwrap().data(), &[0.0, 1.0]);
        assert_eq!(grads.wrt(b).unwrap().data(), &[1.0]);
    }
}
