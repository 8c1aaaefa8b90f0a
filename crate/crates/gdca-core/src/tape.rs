//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! A [`Tape`] is an arena of nodes in topological order: leaves are lifted
//! copies of [`Tensor`]s, every other node records the operation that
//! produced it together with the references it needs for its backward rule.
//! [`Var`] is a cheap handle (tape + index) with the op methods on it.
//!
//! `backward` walks the nodes once in reverse recording order and
//! accumulates gradients, so a value used k times receives exactly k
//! contributions. A tape and its tensors belong to one thread; independent
//! tapes may run concurrently.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::kernels;
use crate::kernels::ConvGeometry;
use crate::scalar::Scalar;
use crate::tensor::{shape_string, Tensor};

/// How the right operand of a binary op maps onto the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    /// Identical shapes.
    Same,
    /// Right operand is a single-element tensor.
    Scalar,
    /// Right is `[C]` against a left `[C,H,W]` map; one value per channel
    /// plane of `plane` elements.
    Channel { plane: usize },
}

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    Add { a: usize, b: usize, bcast: Broadcast },
    Sub { a: usize, b: usize, bcast: Broadcast },
    Mul { a: usize, b: usize, bcast: Broadcast },
    Scale { a: usize, c: S },
    MaxScalar { a: usize, c: S },
    Exp { a: usize },
    Log { a: usize },
    Neg { a: usize },
    Abs { a: usize },
    LeakyRelu { a: usize, slope: S },
    Sigmoid { a: usize },
    LogSigmoid { a: usize },
    Matmul { a: usize, b: usize, m: usize, k: usize, n: usize },
    Reshape { a: usize },
    Reduce { a: usize, axes: Vec<usize>, mean: bool },
    Conv2d { input: usize, weight: usize, bias: usize, geom: ConvGeometry },
    GlobalAvgPool { a: usize, c: usize, h: usize, w: usize },
    PixelShuffle { a: usize, c_out: usize, r: usize, h: usize, w: usize },
    Concat { parts: Vec<usize> },
}

struct Node<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires: bool,
    op: Op<S>,
}

struct TapeInner<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
}

/// Recording arena for one forward/backward pass.
pub struct Tape<S: Scalar> {
    inner: RefCell<TapeInner<S>>,
}

/// Handle to a value on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t, S: Scalar> {
    tape: &'t Tape<S>,
    id: usize,
}

impl<S: Scalar> core::fmt::Debug for Var<'_, S> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { inner: RefCell::new(TapeInner { nodes: Vec::new(), grads: Vec::new() }) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, data: Vec<S>, requires: bool, op: Op<S>) -> Var<'_, S> {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { shape, data, requires, op });
        Var { tape: self, id: inner.nodes.len() - 1 }
    }

    /// Lifts a tensor onto the tape as a leaf, copying its data. Gradient
    /// tracking follows the tensor's `requires_grad` flag.
    pub fn leaf(&self, t: &Tensor<S>) -> Var<'_, S> {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    /// Leaf that never tracks gradients, regardless of the tensor's flag.
    pub fn constant(&self, t: &Tensor<S>) -> Var<'_, S> {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    /// Non-tracked scalar literal of shape `[1]`.
    pub fn lit(&self, v: S) -> Var<'_, S> {
        self.push(vec![1], vec![v], false, Op::Leaf)
    }

    /// Concatenates 1-D values along their single axis.
    pub fn concat<'t>(&'t self, parts: &[Var<'t, S>]) -> Result<Var<'t, S>> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero parts"));
        }
        let mut data = Vec::new();
        let mut requires = false;
        let mut ids = Vec::with_capacity(parts.len());
        {
            let inner = self.inner.borrow();
            for p in parts {
                if !core::ptr::eq(p.tape, self) {
                    return Err(Error::contract("concat of values from another tape"));
                }
                let node = &inner.nodes[p.id];
                if node.shape.len() != 1 {
                    return Err(Error::shape(format!(
                        "concat expects 1-D parts, got {}",
                        shape_string(&node.shape)
                    )));
                }
                data.extend_from_slice(&node.data);
                requires |= node.requires;
                ids.push(p.id);
            }
        }
        let len = data.len();
        Ok(self.push(vec![len], data, requires, Op::Concat { parts: ids }))
    }

    /// Gradient of the last `backward` pass with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var<'_, S>) -> Option<Vec<S>> {
        let inner = self.inner.borrow();
        inner.grads.get(v.id).and_then(|g| g.clone())
    }

    /// Runs reverse-mode accumulation from a scalar loss. Each node is
    /// visited exactly once, in reverse recording order.
    pub fn backward(&self, loss: Var<'_, S>) -> Result<()> {
        if !core::ptr::eq(loss.tape, self) {
            return Err(Error::contract("loss was recorded on a different tape"));
        }
        let mut inner = self.inner.borrow_mut();
        let TapeInner { nodes, grads } = &mut *inner;
        if loss.id >= nodes.len() {
            return Err(Error::contract("loss is not on the tape"));
        }
        if nodes[loss.id].data.len() != 1 {
            return Err(Error::contract(format!(
                "loss must be scalar, got shape {}",
                shape_string(&nodes[loss.id].shape)
            )));
        }
        grads.clear();
        grads.resize(nodes.len(), None);
        grads[loss.id] = Some(vec![S::one()]);

        for id in (0..=loss.id).rev() {
            if grads[id].is_none() || !nodes[id].requires {
                continue;
            }
            let g = grads[id].take().unwrap();
            step_backward(nodes, grads, id, &g);
            grads[id] = Some(g);
        }
        Ok(())
    }
}

fn accumulate<S: Scalar>(grads: &mut [Option<Vec<S>>], id: usize, len: usize, add: impl Fn(&mut [S])) {
    let slot = grads[id].get_or_insert_with(|| vec![S::zero(); len]);
    add(slot);
}

/// Folds an output-shaped gradient down to the right operand of a broadcast
/// binary op.
fn fold_broadcast<S: Scalar>(g: &[S], bcast: Broadcast, b_len: usize) -> Vec<S> {
    match bcast {
        Broadcast::Same => g.to_vec(),
        Broadcast::Scalar => {
            let mut acc = S::zero();
            for &v in g {
                acc = acc + v;
            }
            vec![acc]
        }
        Broadcast::Channel { plane } => {
            let mut out = vec![S::zero(); b_len];
            for (ch, slot) in out.iter_mut().enumerate() {
                let mut acc = S::zero();
                for i in 0..plane {
                    acc = acc + g[ch * plane + i];
                }
                *slot = acc;
            }
            out
        }
    }
}

fn step_backward<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], id: usize, g: &[S]) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf => {}
        Op::Add { a, b, bcast } => {
            if nodes[*a].requires {
                accumulate(grads, *a, nodes[*a].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(g) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*b].requires {
                let fb = fold_broadcast(g, *bcast, nodes[*b].data.len());
                accumulate(grads, *b, nodes[*b].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&fb) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Sub { a, b, bcast } => {
            if nodes[*a].requires {
                accumulate(grads, *a, nodes[*a].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(g) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*b].requires {
                let fb = fold_broadcast(g, *bcast, nodes[*b].data.len());
                accumulate(grads, *b, nodes[*b].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&fb) {
                        *x = *x - gv;
                    }
                });
            }
        }
        Op::Mul { a, b, bcast } => {
            let (av, bv) = (&nodes[*a].data, &nodes[*b].data);
            if nodes[*a].requires {
                let da: Vec<S> = match bcast {
                    Broadcast::Same => g.iter().zip(bv.iter()).map(|(&gv, &b)| gv * b).collect(),
                    Broadcast::Scalar => g.iter().map(|&gv| gv * bv[0]).collect(),
                    Broadcast::Channel { plane } => g
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * bv[i / plane])
                        .collect(),
                };
                accumulate(grads, *a, av.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&da) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*b].requires {
                let ga: Vec<S> = g.iter().zip(av.iter()).map(|(&gv, &a)| gv * a).collect();
                let fb = fold_broadcast(&ga, *bcast, bv.len());
                accumulate(grads, *b, bv.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&fb) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Scale { a, c } => {
            if nodes[*a].requires {
                accumulate(grads, *a, nodes[*a].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(g) {
                        *x = *x + gv * *c;
                    }
                });
            }
        }
        Op::MaxScalar { a, c } => {
            if nodes[*a].requires {
                let av = &nodes[*a].data;
                accumulate(grads, *a, av.len(), |s| {
                    for i in 0..s.len() {
                        if av[i] >= *c {
                            s[i] = s[i] + g[i];
                        }
                    }
                });
            }
        }
        Op::Exp { a } => {
            if nodes[*a].requires {
                let out = &node.data;
                accumulate(grads, *a, out.len(), |s| {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * out[i];
                    }
                });
            }
        }
        Op::Log { a } => {
            if nodes[*a].requires {
                let av = &nodes[*a].data;
                accumulate(grads, *a, av.len(), |s| {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] / av[i];
                    }
                });
            }
        }
        Op::Neg { a } => {
            if nodes[*a].requires {
                accumulate(grads, *a, nodes[*a].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(g) {
                        *x = *x - gv;
                    }
                });
            }
        }
        Op::Abs { a } => {
            // subgradient at 0 is 0
            if nodes[*a].requires {
                let av = &nodes[*a].data;
                accumulate(grads, *a, av.len(), |s| {
                    for i in 0..s.len() {
                        if av[i] > S::zero() {
                            s[i] = s[i] + g[i];
                        } else if av[i] < S::zero() {
                            s[i] = s[i] - g[i];
                        }
                    }
                });
            }
        }
        Op::LeakyRelu { a, slope } => {
            // subgradient at 0 is 1
            if nodes[*a].requires {
                let av = &nodes[*a].data;
                accumulate(grads, *a, av.len(), |s| {
                    for i in 0..s.len() {
                        let f = if av[i] >= S::zero() { S::one() } else { *slope };
                        s[i] = s[i] + g[i] * f;
                    }
                });
            }
        }
        Op::Sigmoid { a } => {
            if nodes[*a].requires {
                let out = &node.data;
                accumulate(grads, *a, out.len(), |s| {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * out[i] * (S::one() - out[i]);
                    }
                });
            }
        }
        Op::LogSigmoid { a } => {
            // d/dx log σ(x) = σ(−x)
            if nodes[*a].requires {
                let av = &nodes[*a].data;
                accumulate(grads, *a, av.len(), |s| {
                    for i in 0..s.len() {
                        s[i] = s[i] + g[i] * sigmoid_stable(-av[i]);
                    }
                });
            }
        }
        Op::Matmul { a, b, m, k, n } => {
            if nodes[*a].requires {
                let da = kernels::matmul_backward_a(g, &nodes[*b].data, *m, *k, *n);
                accumulate(grads, *a, da.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&da) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*b].requires {
                let db = kernels::matmul_backward_b(&nodes[*a].data, g, *m, *k, *n);
                accumulate(grads, *b, db.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&db) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Reshape { a } => {
            if nodes[*a].requires {
                accumulate(grads, *a, nodes[*a].data.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(g) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Reduce { a, axes, mean } => {
            if nodes[*a].requires {
                let in_shape = &nodes[*a].shape;
                let scale = if *mean {
                    S::one() / S::from_usize(kernels::reduced_count(in_shape, axes))
                } else {
                    S::one()
                };
                let din = kernels::reduce_backward(g, in_shape, axes, scale);
                accumulate(grads, *a, din.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&din) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Conv2d { input, weight, bias, geom } => {
            if nodes[*input].requires {
                let din = kernels::conv2d_backward_input(geom, &nodes[*weight].data, g);
                accumulate(grads, *input, din.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&din) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*weight].requires {
                let dw = kernels::conv2d_backward_weight(geom, &nodes[*input].data, g);
                accumulate(grads, *weight, dw.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&dw) {
                        *x = *x + gv;
                    }
                });
            }
            if nodes[*bias].requires {
                let db = kernels::conv2d_backward_bias(geom, g);
                accumulate(grads, *bias, db.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&db) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::GlobalAvgPool { a, c, h, w } => {
            if nodes[*a].requires {
                let plane = h * w;
                let inv = S::one() / S::from_usize(plane);
                accumulate(grads, *a, c * plane, |s| {
                    for ch in 0..*c {
                        let gv = g[ch] * inv;
                        for i in 0..plane {
                            s[ch * plane + i] = s[ch * plane + i] + gv;
                        }
                    }
                });
            }
        }
        Op::PixelShuffle { a, c_out, r, h, w } => {
            if nodes[*a].requires {
                let din = kernels::pixel_unshuffle(g, *c_out, *r, *h, *w);
                accumulate(grads, *a, din.len(), |s| {
                    for (x, &gv) in s.iter_mut().zip(&din) {
                        *x = *x + gv;
                    }
                });
            }
        }
        Op::Concat { parts } => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].data.len();
                if nodes[p].requires {
                    let piece = &g[offset..offset + len];
                    accumulate(grads, p, len, |s| {
                        for (x, &gv) in s.iter_mut().zip(piece) {
                            *x = *x + gv;
                        }
                    });
                }
                offset += len;
            }
        }
    }
}

/// Overflow-free logistic function; exact saturation for |x| ≳ 100.
pub(crate) fn sigmoid_stable<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// log σ(x) without ever materializing σ then taking the log.
pub(crate) fn log_sigmoid_stable<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.id].data.len()
    }

    /// Copies the node's value out as a tensor.
    pub fn value(&self) -> Tensor<S> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        Tensor::new(node.shape.clone(), node.data.clone()).expect("node value is consistent")
    }

    /// Single element of a scalar node.
    pub fn item(&self) -> Result<S> {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        if node.data.len() != 1 {
            return Err(Error::contract(format!(
                "item() on non-scalar value of shape {}",
                shape_string(&node.shape)
            )));
        }
        Ok(node.data[0])
    }

    /// Gradient of the last backward pass w.r.t. this node.
    pub fn grad(&self) -> Option<Vec<S>> {
        self.tape.grad(*self)
    }

    /// New leaf with this node's value and gradient tracking severed.
    pub fn detach(&self) -> Var<'t, S> {
        let (shape, data) = {
            let inner = self.tape.inner.borrow();
            let node = &inner.nodes[self.id];
            (node.shape.clone(), node.data.clone())
        };
        self.tape.push(shape, data, false, Op::Leaf)
    }

    fn same_tape(&self, rhs: &Var<'t, S>) -> Result<()> {
        if core::ptr::eq(self.tape, rhs.tape) {
            Ok(())
        } else {
            Err(Error::contract("operands live on different tapes"))
        }
    }

    fn with<R>(&self, f: impl FnOnce(&Node<S>) -> R) -> R {
        let inner = self.tape.inner.borrow();
        f(&inner.nodes[self.id])
    }

    fn binary(
        &self,
        rhs: Var<'t, S>,
        make: impl Fn(usize, usize, Broadcast) -> Op<S>,
        eval: impl Fn(S, S) -> S,
    ) -> Result<Var<'t, S>> {
        self.same_tape(&rhs)?;
        let (shape, data, requires, bcast) = {
            let inner = self.tape.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[rhs.id];
            let bcast = resolve_broadcast(&a.shape, &b.shape)?;
            let data: Vec<S> = match bcast {
                Broadcast::Same => {
                    a.data.iter().zip(b.data.iter()).map(|(&x, &y)| eval(x, y)).collect()
                }
                Broadcast::Scalar => a.data.iter().map(|&x| eval(x, b.data[0])).collect(),
                Broadcast::Channel { plane } => a
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| eval(x, b.data[i / plane]))
                    .collect(),
            };
            (a.shape.clone(), data, a.requires || b.requires, bcast)
        };
        Ok(self.tape.push(shape, data, requires, make(self.id, rhs.id, bcast)))
    }

    fn unary(&self, op: Op<S>, eval: impl Fn(S) -> S) -> Var<'t, S> {
        let (shape, data, requires) = self.with(|n| {
            (n.shape.clone(), n.data.iter().map(|&x| eval(x)).collect::<Vec<S>>(), n.requires)
        });
        self.tape.push(shape, data, requires, op)
    }

    pub fn add(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(rhs, |a, b, bcast| Op::Add { a, b, bcast }, |x, y| x + y)
    }

    pub fn sub(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(rhs, |a, b, bcast| Op::Sub { a, b, bcast }, |x, y| x - y)
    }

    pub fn mul(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(rhs, |a, b, bcast| Op::Mul { a, b, bcast }, |x, y| x * y)
    }

    /// Elementwise multiplication by a compile-time constant.
    pub fn scale(&self, c: S) -> Var<'t, S> {
        self.unary(Op::Scale { a: self.id, c }, |x| x * c)
    }

    pub fn neg(&self) -> Var<'t, S> {
        self.unary(Op::Neg { a: self.id }, |x| -x)
    }

    pub fn abs(&self) -> Var<'t, S> {
        self.unary(Op::Abs { a: self.id }, |x| x.abs())
    }

    pub fn max_scalar(&self, c: S) -> Var<'t, S> {
        self.unary(Op::MaxScalar { a: self.id, c }, |x| if x > c { x } else { c })
    }

    pub fn exp(&self) -> Var<'t, S> {
        self.unary(Op::Exp { a: self.id }, |x| x.exp())
    }

    /// Elementwise natural log; rejects non-positive inputs.
    pub fn log(&self) -> Result<Var<'t, S>> {
        let bad = self.with(|n| n.data.iter().position(|&x| x <= S::zero()));
        if let Some(index) = bad {
            return Err(Error::Domain { op: "log", index });
        }
        Ok(self.unary(Op::Log { a: self.id }, |x| x.ln()))
    }

    pub fn leaky_relu(&self, slope: S) -> Var<'t, S> {
        self.unary(Op::LeakyRelu { a: self.id, slope }, |x| {
            if x >= S::zero() {
                x
            } else {
                x * slope
            }
        })
    }

    pub fn sigmoid(&self) -> Var<'t, S> {
        self.unary(Op::Sigmoid { a: self.id }, sigmoid_stable)
    }

    pub fn log_sigmoid(&self) -> Var<'t, S> {
        self.unary(Op::LogSigmoid { a: self.id }, log_sigmoid_stable)
    }

    pub fn matmul(&self, rhs: Var<'t, S>) -> Result<Var<'t, S>> {
        self.same_tape(&rhs)?;
        let inner = self.tape.inner.borrow();
        let a = &inner.nodes[self.id];
        let b = &inner.nodes[rhs.id];
        let ([m, k], [k2, n]) = (&a.shape[..], &b.shape[..]) else {
            return Err(Error::shape(format!(
                "matmul expects 2-D operands, got {} and {}",
                shape_string(&a.shape),
                shape_string(&b.shape)
            )));
        };
        let (m, k, k2, n) = (*m, *k, *k2, *n);
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions disagree: {} vs {}",
                shape_string(&a.shape),
                shape_string(&b.shape)
            )));
        }
        let data = kernels::matmul_forward(&a.data, &b.data, m, k, n);
        let requires = a.requires || b.requires;
        drop(inner);
        Ok(self.tape.push(vec![m, n], data, requires, Op::Matmul { a: self.id, b: rhs.id, m, k, n }))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t, S>> {
        let (data, requires, old) = self.with(|n| (n.data.clone(), n.requires, n.shape.clone()));
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {} into {}",
                shape_string(&old),
                shape_string(&shape)
            )));
        }
        Ok(self.tape.push(shape, data, requires, Op::Reshape { a: self.id }))
    }

    fn reduce(&self, axes: Option<&[usize]>, mean: bool) -> Result<Var<'t, S>> {
        let (in_shape, requires) = self.with(|n| (n.shape.clone(), n.requires));
        let axes = kernels::normalize_axes(&in_shape, axes)?;
        let (data, out_shape) = self.with(|n| {
            let mut sum = kernels::reduce_sum(&n.data, &in_shape, &axes);
            if mean && !axes.is_empty() {
                let count = S::from_usize(kernels::reduced_count(&in_shape, &axes));
                for v in sum.iter_mut() {
                    *v = *v / count;
                }
            }
            (sum, kernels::reduced_shape(&in_shape, &axes))
        });
        Ok(self.tape.push(out_shape, data, requires, Op::Reduce { a: self.id, axes, mean }))
    }

    /// Sum over the given axes; `None` reduces everything to shape `[1]`,
    /// an empty list is an identity copy.
    pub fn sum(&self, axes: Option<&[usize]>) -> Result<Var<'t, S>> {
        self.reduce(axes, false)
    }

    pub fn mean(&self, axes: Option<&[usize]>) -> Result<Var<'t, S>> {
        self.reduce(axes, true)
    }

    pub fn sum_all(&self) -> Var<'t, S> {
        self.reduce(None, false).expect("full reduction cannot fail")
    }

    pub fn mean_all(&self) -> Var<'t, S> {
        self.reduce(None, true).expect("full reduction cannot fail")
    }

    /// 2-D cross-correlation with zero padding and per-output-channel bias.
    pub fn conv2d(&self, weight: Var<'t, S>, bias: Var<'t, S>, stride: usize, padding: usize) -> Result<Var<'t, S>> {
        self.same_tape(&weight)?;
        self.same_tape(&bias)?;
        let inner = self.tape.inner.borrow();
        let x = &inner.nodes[self.id];
        let w = &inner.nodes[weight.id];
        let b = &inner.nodes[bias.id];
        let geom = ConvGeometry::resolve(&x.shape, &w.shape, &b.shape, stride, padding)?;
        let data = kernels::conv2d_forward(&geom, &x.data, &w.data, &b.data);
        let requires = x.requires || w.requires || b.requires;
        let shape = geom.output_shape();
        drop(inner);
        Ok(self.tape.push(
            shape,
            data,
            requires,
            Op::Conv2d { input: self.id, weight: weight.id, bias: bias.id, geom },
        ))
    }

    /// [C,H,W] → [C] spatial mean per channel.
    pub fn global_avg_pool(&self) -> Result<Var<'t, S>> {
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        let [c, h, w] = n.shape[..] else {
            return Err(Error::shape(format!(
                "global_avg_pool expects [C,H,W], got {}",
                shape_string(&n.shape)
            )));
        };
        let data = kernels::global_avg_pool_forward(&n.data, c, h, w);
        let requires = n.requires;
        drop(inner);
        Ok(self.tape.push(vec![c], data, requires, Op::GlobalAvgPool { a: self.id, c, h, w }))
    }

    /// Sub-pixel rearrangement [C·r²,H,W] → [C,rH,rW].
    pub fn pixel_shuffle(&self, r: usize) -> Result<Var<'t, S>> {
        if r == 0 {
            return Err(Error::shape("pixel_shuffle factor must be positive"));
        }
        let inner = self.tape.inner.borrow();
        let n = &inner.nodes[self.id];
        let [c_in, h, w] = n.shape[..] else {
            return Err(Error::shape(format!(
                "pixel_shuffle expects [C,H,W], got {}",
                shape_string(&n.shape)
            )));
        };
        if c_in % (r * r) != 0 {
            return Err(Error::shape(format!(
                "pixel_shuffle: {c_in} channels not divisible by r²={}",
                r * r
            )));
        }
        let c_out = c_in / (r * r);
        let data = kernels::pixel_shuffle_forward(&n.data, c_out, r, h, w);
        let requires = n.requires;
        drop(inner);
        Ok(self.tape.push(
            vec![c_out, h * r, w * r],
            data,
            requires,
            Op::PixelShuffle { a: self.id, c_out, r, h, w },
        ))
    }

    /// Dense layer W·x + b for a 1-D input.
    pub fn dense(&self, weight: Var<'t, S>, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        let in_features = {
            let shape = self.shape();
            let [f] = shape[..] else {
                return Err(Error::shape(format!(
                    "dense expects a 1-D input, got {}",
                    shape_string(&shape)
                )));
            };
            f
        };
        let w_shape = weight.shape();
        let [out_features, w_in] = w_shape[..] else {
            return Err(Error::shape(format!(
                "dense weight must be [out,in], got {}",
                shape_string(&w_shape)
            )));
        };
        if w_in != in_features {
            return Err(Error::shape(format!(
                "dense expects input of {w_in} features, got {in_features}"
            )));
        }
        let col = self.reshape(vec![in_features, 1])?;
        let prod = weight.matmul(col)?.reshape(vec![out_features])?;
        prod.add(bias)
    }
}

fn resolve_broadcast(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if b == [1] {
        return Ok(Broadcast::Scalar);
    }
    if let ([c, h, w], [bc]) = (a, b) {
        if c == bc {
            return Ok(Broadcast::Channel { plane: h * w });
        }
    }
    Err(Error::shape(format!(
        "operands not broadcastable: {} vs {}",
        shape_string(a),
        shape_string(b)
    )))
}
