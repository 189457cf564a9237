//! Reverse-mode automatic differentiation over [`NdValue`] arrays.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its forward value
//! and whatever it needs to run its backward rule. Nodes only reference earlier
//! nodes, so the append order is already a topological order and
//! [`Graph::backward`] simply walks the tape in reverse.
//!
//! Parameters live outside the graph (see [`crate::networks::ParamSet`]); each
//! forward pass binds them as fresh leaves and reads their gradients back after
//! the backward pass.

mod adam;
mod conv;
mod gemm;
mod loss;
mod norm;

use std::sync::Arc;

pub use adam::AdamState;
pub use conv::ConvGeometry;
pub use norm::RunningStats;

use crate::error::{Error, Result};
use crate::tensor::NdValue;

pub(crate) use gemm::gemm;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a node plus the state saved for it during the forward pass.
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Sum(Var),
    Mean(Var),
    WeightedSum(Var, Arc<NdValue>),
    Reshape(Var),
    Relu(Var),
    LeakyRelu(Var, f32),
    Sigmoid(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: Arc<ConvGeometry>,
    },
    ConvTranspose {
        x: Var,
        w: Var,
        b: Var,
        geom: Arc<ConvGeometry>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: NdValue,
        inv_std: Vec<f32>,
        train: bool,
    },
    Bce {
        p: Var,
        targets: Vec<f32>,
    },
    Mse {
        pred: Var,
        target: NdValue,
    },
    Gather {
        x: Var,
        index: Arc<Vec<u32>>,
    },
    DepthProject {
        x: Var,
        transmittance: Vec<f32>,
    },
}

/// Index sentinel for gathers that read empty space.
pub const GATHER_ZERO: u32 = u32::MAX;

pub(crate) struct Node {
    value: NdValue,
    grad: Option<NdValue>,
    requires_grad: bool,
    op: Op,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: NdValue) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: NdValue) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: NdValue, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: NdValue, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &NdValue {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient; `None` means zero.
    pub fn grad(&self, v: Var) -> Option<&NdValue> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn grad_or_zeros(&self, v: Var) -> NdValue {
        match &self.nodes[v.0].grad {
            Some(g) => g.clone(),
            None => NdValue::zeros(self.shape(v)),
        }
    }

    /// Moves the gradient out, leaving zero behind.
    pub fn take_grad(&mut self, v: Var) -> NdValue {
        let shape = self.shape(v).to_vec();
        self.nodes[v.0]
            .grad
            .take()
            .unwrap_or_else(|| NdValue::zeros(&shape))
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ---- elementwise and reshaping ops ----

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = NdValue::new(va.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum() as f32;
        self.push(NdValue::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean() as f32;
        self.push(NdValue::scalar(s), Op::Mean(x), &[x])
    }

    /// `Σ x ⊙ w` against a constant weight array; handy for projecting a
    /// non-scalar output onto a scalar loss.
    pub fn weighted_sum(&mut self, x: Var, weights: NdValue) -> Result<Var> {
        if self.shape(x) != weights.shape() {
            return Err(Error::shape("weighted_sum", self.shape(x), weights.shape()));
        }
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        Ok(self.push(
            NdValue::scalar(s as f32),
            Op::WeightedSum(x, Arc::new(weights)),
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// `y = x·Wᵀ + b` for `x` of shape `[n_in]` or `[batch, n_in]`, `W` of shape
    /// `[n_out, n_in]` and `b` of shape `[n_out]`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if ws.len() != 2 || xs.is_empty() || xs.len() > 2 || xs[xs.len() - 1] != ws[1] {
            return Err(Error::shape("fully_connected", &xs, &ws));
        }
        if bs != [ws[0]] {
            return Err(Error::shape("fully_connected", &ws, &bs));
        }
        let (batch, n_in, n_out) = (if xs.len() == 2 { xs[0] } else { 1 }, ws[1], ws[0]);
        let bias = self.value(b).data();
        let mut out = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        gemm(
            batch,
            n_in,
            n_out,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            &mut out,
            1.0,
        );
        let shape = if xs.len() == 2 { vec![batch, n_out] } else { vec![n_out] };
        let out = NdValue::new(shape, out)?;
        Ok(self.push(out, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// `y[i] = x[index[i]]`, or 0 where `index[i] == GATHER_ZERO`. The adjoint is
    /// the matching scatter-add.
    pub fn gather(&mut self, x: Var, index: Arc<Vec<u32>>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::invalid(
                "gather",
                format!("output shape {shape:?} does not match {} indices", index.len()),
            ));
        }
        let src = self.value(x).data();
        if let Some(&bad) = index
            .iter()
            .find(|&&i| i != GATHER_ZERO && i as usize >= src.len())
        {
            return Err(Error::invalid(
                "gather",
                format!("index {bad} out of range for {} values", src.len()),
            ));
        }
        let data = index
            .iter()
            .map(|&i| if i == GATHER_ZERO { 0.0 } else { src[i as usize] })
            .collect();
        let out = NdValue::new(shape.to_vec(), data)?;
        Ok(self.push(out, Op::Gather { x, index }, &[x]))
    }

    /// `y = 1 − exp(−Σ_k x[..., k])` over the last axis.
    pub fn depth_project(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(Error::invalid("depth_project", "needs rank ≥ 2"));
        }
        let depth = shape[shape.len() - 1];
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(src.len() / depth);
        let mut transmittance = Vec::with_capacity(src.len() / depth);
        for column in src.chunks_exact(depth) {
            let total: f64 = column.iter().map(|&v| v as f64).sum();
            let t = (-total).exp();
            transmittance.push(t as f32);
            out.push((-(-total).exp_m1()) as f32);
        }
        let out = NdValue::new(shape[..shape.len() - 1].to_vec(), out)?;
        Ok(self.push(out, Op::DepthProject { x, transmittance }, &[x]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    // ---- backward ----

    /// Accumulates `∂root/∂node` into every node that requires a gradient.
    ///
    /// Gradients add up across calls; call [`Graph::zero_grad`] between passes
    /// unless accumulation is intended (a second call doubles every gradient).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("root must be scalar, has shape {:?}", self.shape(root)),
            ));
        }
        let mut adj: Vec<Option<NdValue>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(NdValue::full(self.shape(root), 1.0));
        for i in (0..=root.0).rev() {
            let Some(dy) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, &dy, &mut adj)?;
            match &mut self.nodes[i].grad {
                Some(g) => g.add_assign(&dy),
                slot @ None => *slot = Some(dy),
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, dy: &NdValue, adj: &mut [Option<NdValue>]) -> Result<()> {
        let node = &self.nodes[i];
        let mut acc = Accumulator { graph: self, adj };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc.add(*a, dy.clone());
                acc.add(*b, dy.clone());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc.add_with(*a, |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy.data()).zip(vb.data()) {
                        *g += d * y;
                    }
                });
                acc.add_with(*b, |g| {
                    for ((g, d), x) in g.iter_mut().zip(dy.data()).zip(va.data()) {
                        *g += d * x;
                    }
                });
            }
            Op::Scale(x, f) => acc.add(*x, dy.map(|d| d * f)),
            Op::Sum(x) => {
                let d = dy.data()[0];
                acc.add(*x, NdValue::full(self.shape(*x), d));
            }
            Op::Mean(x) => {
                let d = dy.data()[0] / self.value(*x).len() as f32;
                acc.add(*x, NdValue::full(self.shape(*x), d));
            }
            Op::WeightedSum(x, w) => {
                let d = dy.data()[0];
                acc.add(*x, w.map(|v| v * d));
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                acc.add(*x, dy.clone().reshape(&shape)?);
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc.add_with(*x, |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy.data()).zip(xv.data()) {
                        if *v > 0.0 {
                            *g += d;
                        }
                    }
                });
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x);
                acc.add_with(*x, |g| {
                    for ((g, d), v) in g.iter_mut().zip(dy.data()).zip(xv.data()) {
                        *g += if *v > 0.0 { *d } else { d * slope };
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc.add_with(*x, |g| {
                    for ((g, d), s) in g.iter_mut().zip(dy.data()).zip(y.data()) {
                        *g += d * s * (1.0 - s);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let ws = self.shape(*w);
                let (n_out, n_in) = (ws[0], ws[1]);
                let batch = dy.len() / n_out;
                let xv = self.value(*x);
                let wv = self.value(*w);
                acc.add_with(*x, |g| {
                    gemm(batch, n_out, n_in, dy.data(), false, wv.data(), false, g, 1.0)
                });
                acc.add_with(*w, |g| {
                    gemm(n_out, batch, n_in, dy.data(), true, xv.data(), false, g, 1.0)
                });
                acc.add_with(*b, |g| {
                    for row in dy.data().chunks_exact(n_out) {
                        for (g, d) in g.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                });
            }
            Op::Conv { x, w, b, geom } => conv::backward_conv(&mut acc, dy, *x, *w, *b, geom),
            Op::ConvTranspose { x, w, b, geom } => {
                conv::backward_conv_transpose(&mut acc, dy, *x, *w, *b, geom)
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => norm::backward_batch_norm(
                &mut acc, dy, *x, *gamma, *beta, xhat, inv_std, *train,
            ),
            Op::Bce { p, targets } => loss::backward_bce(&mut acc, dy, *p, targets),
            Op::Mse { pred, target } => loss::backward_mse(&mut acc, dy, *pred, target),
            Op::Gather { x, index } => {
                acc.add_with(*x, |g| {
                    for (&i, d) in index.iter().zip(dy.data()) {
                        if i != GATHER_ZERO {
                            g[i as usize] += d;
                        }
                    }
                });
            }
            Op::DepthProject { x, transmittance } => {
                let depth = *self.shape(*x).last().expect("rank checked in forward");
                acc.add_with(*x, |g| {
                    for ((col, d), t) in g
                        .chunks_exact_mut(depth)
                        .zip(dy.data())
                        .zip(transmittance)
                    {
                        let v = d * t;
                        col.iter_mut().for_each(|c| *c += v);
                    }
                });
            }
        }
        Ok(())
    }
}

/// Adds backward contributions into the per-pass adjoint table.
pub(crate) struct Accumulator<'a> {
    graph: &'a Graph,
    adj: &'a mut [Option<NdValue>],
}

impl Accumulator<'_> {
    pub(crate) fn value(&self, v: Var) -> &NdValue {
        self.graph.value(v)
    }

    pub(crate) fn wants(&self, v: Var) -> bool {
        self.graph.nodes[v.0].requires_grad
    }

    pub(crate) fn add(&mut self, v: Var, contribution: NdValue) {
        if !self.wants(v) {
            return;
        }
        match &mut self.adj[v.0] {
            Some(g) => g.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Hands `f` the adjoint buffer of `v` (zeroed on first touch) to add into.
    pub(crate) fn add_with(&mut self, v: Var, f: impl FnOnce(&mut [f32])) {
        if !self.wants(v) {
            return;
        }
        let shape = self.graph.shape(v);
        let slot = self.adj[v.0].get_or_insert_with(|| NdValue::zeros(shape));
        f(slot.data_mut());
    }
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut g = Graph::new();
        let x = g.param(NdValue::from_vec(vec![1.0, -2.0, 3.5]));
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_at_three_has_gradient_six() {
        let mut g = Graph::new();
        let x = g.param(NdValue::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn second_backward_doubles_gradients() {
        let mut g = Graph::new();
        let x = g.param(NdValue::from_vec(vec![0.5, 2.0]));
        let y = g.mul(x, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        let once = g.grad_or_zeros(x);
        g.backward(s).unwrap();
        let twice = g.grad_or_zeros(x);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(NdValue::from_vec(vec![1.0, 2.0]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn fc_identity_and_bias_only() {
        let mut g = Graph::new();
        let mut eye = NdValue::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let x = g.constant(NdValue::from_vec(vec![1.0, 2.0, 3.0]));
        let w = g.param(eye);
        let b = g.param(NdValue::zeros(&[3]));
        let y = g.fully_connected(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0]);

        let x = g.constant(NdValue::from_vec(vec![7.0, -1.0]));
        let w = g.param(NdValue::zeros(&[1, 2]));
        let b = g.param(NdValue::from_vec(vec![5.0]));
        let y = g.fully_connected(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[5.0]);
    }

    #[test]
    fn fc_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let x = g.constant(NdValue::zeros(&[4]));
        let w = g.param(NdValue::zeros(&[3, 5]));
        let b = g.param(NdValue::zeros(&[3]));
        let err = g.fully_connected(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[4]") && err.contains("[3, 5]"), "{err}");
    }

    #[test]
    fn activations_at_reference_points() {
        let mut g = Graph::new();
        let x = g.constant(NdValue::from_vec(vec![0.0, -1.0, 2.0]));
        let s = g.sigmoid(x);
        let l = g.leaky_relu(x, 0.2);
        let r = g.relu(x);
        assert_eq!(g.value(s).data()[0], 0.5);
        assert!((g.value(l).data()[1] + 0.2).abs() < 1e-7);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(NdValue::from_vec(vec![1.0, 2.0]));
        let p = g.param(NdValue::from_vec(vec![3.0, 4.0]));
        let y = g.mul(c, p).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(p).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn gather_scatters_back() {
        let mut g = Graph::new();
        let x = g.param(NdValue::from_vec(vec![1.0, 2.0, 3.0]));
        let idx = Arc::new(vec![2, 2, GATHER_ZERO, 0]);
        let y = g.gather(x, idx, &[4]).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 3.0, 0.0, 1.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 0.0, 2.0]);
    }
}
