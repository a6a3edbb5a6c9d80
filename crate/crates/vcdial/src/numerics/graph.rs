use std::cell::RefCell;

use super::store::ParameterStore;
use super::tensor::Tensor;
use super::NumericsError;

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Which slices a softmax-style op normalizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormAxis {
    /// Each row sums to one.
    Row,
    /// Each column sums to one.
    Col,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    None,
    /// rhs is a row vector applied to every row of lhs.
    Row,
    /// rhs is a scalar.
    Scalar,
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Neg(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    ClampMin(Var, f64),
    Softmax(Var, NormAxis),
    LogSoftmax(Var, NormAxis),
    Sum(Var),
    Mean(Var),
    Scale(Var, f64),
    AddConst(Var, f64),
    Concat(Vec<Var>, usize),
    Transpose(Var),
    Rows(Var, Vec<usize>),
    At(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Persistent gradient; accumulates across repeated backward passes.
    grad: Option<Vec<f64>>,
}

/// Dynamic computation tape. A fresh graph is built per forward pass and
/// the whole structure is confined to one thread.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    /// (parameter name, leaf var) pairs created by [`Graph::param`].
    bindings: RefCell<Vec<(String, Var)>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            bindings: RefCell::new(Vec::new()),
        }
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn any_requires(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.requires(*v))
    }

    /// Constant input; no gradient flows into it.
    pub fn leaf(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable input (used by the gradient checker and tests).
    pub fn leaf_grad(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Inject a named parameter from the store as a differentiable leaf and
    /// remember the binding so [`Graph::grads_into`] can route its gradient back.
    pub fn param(&self, store: &ParameterStore, name: &str) -> Result<Var, NumericsError> {
        let p = store
            .get(name)
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))?;
        let v = self.push(p.value.clone(), Op::Leaf, true);
        self.bindings.borrow_mut().push((name.to_string(), v));
        Ok(v)
    }

    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.item()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gradient of `v` accumulated by `backward`, shaped like its value.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let nodes = self.nodes.borrow();
        let node = &nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dims2()
    }

    // ── forward ops ─────────────────────────────────────────────────

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape_of(a),
                rhs: self.shape_of(b),
            });
        }
        let nodes = self.nodes.borrow();
        let out = matmul_raw(
            nodes[a.0].value.data(),
            nodes[b.0].value.data(),
            m,
            k,
            n,
        );
        drop(nodes);
        let rq = self.any_requires(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out).unwrap(), Op::Matmul(a, b), rq))
    }

    fn broadcast_kind(&self, a: Var, b: Var, op: &'static str) -> Result<Broadcast, NumericsError> {
        let (ra, ca) = self.dims2(a);
        let (rb, cb) = self.dims2(b);
        if ra == rb && ca == cb {
            Ok(Broadcast::None)
        } else if rb == 1 && cb == ca {
            Ok(Broadcast::Row)
        } else if rb == 1 && cb == 1 {
            Ok(Broadcast::Scalar)
        } else {
            Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.shape_of(a),
                rhs: self.shape_of(b),
            })
        }
    }

    fn binary_elementwise(
        &self,
        a: Var,
        b: Var,
        op_name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var, NumericsError> {
        let bc = self.broadcast_kind(a, b, op_name)?;
        let nodes = self.nodes.borrow();
        let av = nodes[a.0].value.data();
        let bv = nodes[b.0].value.data();
        let (_, ca) = nodes[a.0].value.dims2();
        let out: Vec<f64> = match bc {
            Broadcast::None => av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect(),
            Broadcast::Row => av
                .iter()
                .enumerate()
                .map(|(i, x)| f(*x, bv[i % ca]))
                .collect(),
            Broadcast::Scalar => av.iter().map(|x| f(*x, bv[0])).collect(),
        };
        let shape = nodes[a.0].value.shape().to_vec();
        drop(nodes);
        let rq = self.any_requires(&[a, b]);
        Ok(self.push(Tensor::new(shape, out).unwrap(), make(a, b, bc), rq))
    }

    /// Elementwise addition; rhs may be a broadcast row vector or scalar.
    pub fn add(&self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    /// Elementwise (Hadamard) product; rhs may broadcast like `add`.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary_elementwise(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let nodes = self.nodes.borrow();
        let out: Vec<f64> = nodes[x.0].value.data().iter().map(|v| f(*v)).collect();
        let shape = nodes[x.0].value.shape().to_vec();
        drop(nodes);
        let rq = self.requires(x);
        self.push(Tensor::new(shape, out).unwrap(), op, rq)
    }

    pub fn neg(&self, x: Var) -> Var {
        self.unary(x, |v| -v, Op::Neg(x))
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn relu(&self, x: Var) -> Var {
        // f64::max would swallow NaN; keep it so failures surface
        self.unary(x, |v| if v > 0.0 || v.is_nan() { v } else { 0.0 }, Op::Relu(x))
    }

    /// Natural log. Errors on any non-positive entry.
    pub fn log(&self, x: Var) -> Result<Var, NumericsError> {
        {
            let nodes = self.nodes.borrow();
            if let Some(bad) = nodes[x.0].value.data().iter().find(|v| **v <= 0.0) {
                return Err(NumericsError::LogDomain(*bad));
            }
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    /// max(x, c) elementwise; gradient is blocked where the clamp is active.
    /// NaN passes through rather than being clamped away.
    pub fn clamp_min(&self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| if v > c || v.is_nan() { v } else { c }, Op::ClampMin(x, c))
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_const(&self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddConst(x, c))
    }

    fn check_finite(&self, x: Var, op: &'static str) -> Result<(), NumericsError> {
        let nodes = self.nodes.borrow();
        if nodes[x.0].value.data().iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(op));
        }
        Ok(())
    }

    /// Max-subtracted softmax along `axis`. Output slices sum to one.
    pub fn softmax(&self, x: Var, axis: NormAxis) -> Result<Var, NumericsError> {
        self.check_finite(x, "softmax")?;
        let (r, c) = self.dims2(x);
        let nodes = self.nodes.borrow();
        let data = nodes[x.0].value.data();
        let mut out = vec![0.0; data.len()];
        for_each_slice(r, c, axis, |idx| {
            let max = idx.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &i in idx {
                out[i] = (data[i] - max).exp();
                z += out[i];
            }
            for &i in idx {
                out[i] /= z;
            }
        });
        let shape = nodes[x.0].value.shape().to_vec();
        drop(nodes);
        let rq = self.requires(x);
        Ok(self.push(Tensor::new(shape, out).unwrap(), Op::Softmax(x, axis), rq))
    }

    /// log(softmax(x)) computed stably in one op.
    pub fn log_softmax(&self, x: Var, axis: NormAxis) -> Result<Var, NumericsError> {
        self.check_finite(x, "log_softmax")?;
        let (r, c) = self.dims2(x);
        let nodes = self.nodes.borrow();
        let data = nodes[x.0].value.data();
        let mut out = vec![0.0; data.len()];
        for_each_slice(r, c, axis, |idx| {
            let max = idx.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = idx.iter().map(|&i| (data[i] - max).exp()).sum();
            let lz = z.ln() + max;
            for &i in idx {
                out[i] = data[i] - lz;
            }
        });
        let shape = nodes[x.0].value.shape().to_vec();
        drop(nodes);
        let rq = self.requires(x);
        Ok(self.push(Tensor::new(shape, out).unwrap(), Op::LogSoftmax(x, axis), rq))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self, x: Var) -> Var {
        let total: f64 = self.nodes.borrow()[x.0].value.data().iter().sum();
        let rq = self.requires(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rq)
    }

    pub fn mean(&self, x: Var) -> Var {
        let nodes = self.nodes.borrow();
        let n = nodes[x.0].value.numel() as f64;
        let total: f64 = nodes[x.0].value.data().iter().sum();
        drop(nodes);
        let rq = self.requires(x);
        self.push(Tensor::scalar(total / n), Op::Mean(x), rq)
    }

    /// Concatenate along `axis` (0 stacks rows, 1 widens columns).
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var, NumericsError> {
        if parts.is_empty() || axis > 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: vec![parts.len()],
                rhs: vec![axis],
            });
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|v| self.dims2(*v)).collect();
        let (r0, c0) = dims[0];
        let ok = match axis {
            0 => dims.iter().all(|&(_, c)| c == c0),
            _ => dims.iter().all(|&(r, _)| r == r0),
        };
        if !ok {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: vec![r0, c0],
                rhs: self.shape_of(parts[1]),
            });
        }
        let nodes = self.nodes.borrow();
        let out_shape;
        let mut out;
        if axis == 0 {
            let rows: usize = dims.iter().map(|&(r, _)| r).sum();
            out = Vec::with_capacity(rows * c0);
            for p in parts {
                out.extend_from_slice(nodes[p.0].value.data());
            }
            out_shape = vec![rows, c0];
        } else {
            let cols: usize = dims.iter().map(|&(_, c)| c).sum();
            out = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for (p, &(_, c)) in parts.iter().zip(&dims) {
                    let d = nodes[p.0].value.data();
                    out.extend_from_slice(&d[i * c..(i + 1) * c]);
                }
            }
            out_shape = vec![r0, cols];
        }
        drop(nodes);
        let rq = self.any_requires(parts);
        Ok(self.push(
            Tensor::new(out_shape, out).unwrap(),
            Op::Concat(parts.to_vec(), axis),
            rq,
        ))
    }

    pub fn transpose(&self, x: Var) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(x);
        let nodes = self.nodes.borrow();
        let d = nodes[x.0].value.data();
        let mut out = vec![0.0; d.len()];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        drop(nodes);
        let rq = self.requires(x);
        Ok(self.push(Tensor::new(vec![c, r], out).unwrap(), Op::Transpose(x), rq))
    }

    /// Gather rows by index (embedding lookup / row slicing). Gradient
    /// scatter-adds back into the source rows.
    pub fn rows(&self, x: Var, indices: &[usize]) -> Result<Var, NumericsError> {
        let (r, c) = self.dims2(x);
        if let Some(bad) = indices.iter().find(|&&i| i >= r) {
            return Err(NumericsError::IndexOutOfRange {
                index: *bad,
                len: r,
            });
        }
        let nodes = self.nodes.borrow();
        let d = nodes[x.0].value.data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&d[i * c..(i + 1) * c]);
        }
        drop(nodes);
        let rq = self.requires(x);
        Ok(self.push(
            Tensor::new(vec![indices.len(), c], out).unwrap(),
            Op::Rows(x, indices.to_vec()),
            rq,
        ))
    }

    /// Pick one entry (by flat index) as a scalar.
    pub fn at(&self, x: Var, flat: usize) -> Result<Var, NumericsError> {
        let nodes = self.nodes.borrow();
        let d = nodes[x.0].value.data();
        if flat >= d.len() {
            return Err(NumericsError::IndexOutOfRange {
                index: flat,
                len: d.len(),
            });
        }
        let v = d[flat];
        drop(nodes);
        let rq = self.requires(x);
        Ok(self.push(Tensor::scalar(v), Op::At(x, flat), rq))
    }

    /// Sum a list of scalars (or same-shape tensors).
    pub fn add_n(&self, parts: &[Var]) -> Result<Var, NumericsError> {
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p)?;
        }
        Ok(acc)
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Per-pass gradients are computed in
    /// scratch space and then added into each node's persistent grad slot, so
    /// repeated calls accumulate.
    pub fn backward(&self, loss: Var) -> Result<(), NumericsError> {
        {
            let nodes = self.nodes.borrow();
            let t = &nodes[loss.0].value;
            if !t.is_scalar() {
                return Err(NumericsError::NonScalarLoss(t.shape().to_vec()));
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        let n = nodes.len();
        let mut scratch: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        scratch[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !nodes[id].requires_grad {
                continue;
            }
            let Some(g) = scratch[id].take() else {
                continue;
            };
            self.propagate(&nodes, id, &g, &mut scratch);
            // flush into the persistent slot
            let node = &mut nodes[id];
            match &mut node.grad {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    /// Add the gradients of all parameter bindings into the store.
    pub fn grads_into(&self, store: &mut ParameterStore) -> Result<(), NumericsError> {
        let nodes = self.nodes.borrow();
        for (name, var) in self.bindings.borrow().iter() {
            if let Some(g) = &nodes[var.0].grad {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    fn propagate(&self, nodes: &[Node], id: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let add_to = |scratch: &mut [Option<Vec<f64>>], v: Var, upd: &[f64]| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut scratch[v.0] {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(upd) {
                        *a += b;
                    }
                }
                None => scratch[v.0] = Some(upd.to_vec()),
            }
        };
        let val = |v: Var| nodes[v.0].value.data();
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = nodes[a.0].value.dims2();
                let (_, nn) = nodes[b.0].value.dims2();
                if nodes[a.0].requires_grad {
                    // dA = dC @ B^T
                    let bt = transpose_raw(val(*b), k, nn);
                    let da = matmul_raw(g, &bt, m, nn, k);
                    add_to(scratch, *a, &da);
                }
                if nodes[b.0].requires_grad {
                    // dB = A^T @ dC
                    let at = transpose_raw(val(*a), m, k);
                    let db = matmul_raw(&at, g, k, m, nn);
                    add_to(scratch, *b, &db);
                }
            }
            Op::Add(a, b, bc) => {
                add_to(scratch, *a, g);
                if nodes[b.0].requires_grad {
                    let (_, ca) = nodes[a.0].value.dims2();
                    let red = reduce_broadcast(g, ca, *bc);
                    add_to(scratch, *b, &red);
                }
            }
            Op::Mul(a, b, bc) => {
                let (_, ca) = nodes[a.0].value.dims2();
                if nodes[a.0].requires_grad {
                    let bv = val(*b);
                    let da: Vec<f64> = g
                        .iter()
                        .enumerate()
                        .map(|(i, gi)| {
                            gi * match bc {
                                Broadcast::None => bv[i],
                                Broadcast::Row => bv[i % ca],
                                Broadcast::Scalar => bv[0],
                            }
                        })
                        .collect();
                    add_to(scratch, *a, &da);
                }
                if nodes[b.0].requires_grad {
                    let av = val(*a);
                    let prod: Vec<f64> = g.iter().zip(av).map(|(gi, ai)| gi * ai).collect();
                    let red = reduce_broadcast(&prod, ca, *bc);
                    add_to(scratch, *b, &red);
                }
            }
            Op::Neg(a) => {
                let da: Vec<f64> = g.iter().map(|v| -v).collect();
                add_to(scratch, *a, &da);
            }
            Op::Tanh(a) => {
                let y = nodes[id].value.data();
                let da: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect();
                add_to(scratch, *a, &da);
            }
            Op::Sigmoid(a) => {
                let y = nodes[id].value.data();
                let da: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect();
                add_to(scratch, *a, &da);
            }
            Op::Relu(a) => {
                let x = val(*a);
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                add_to(scratch, *a, &da);
            }
            Op::Log(a) => {
                let x = val(*a);
                let da: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi / xi).collect();
                add_to(scratch, *a, &da);
            }
            Op::ClampMin(a, c) => {
                let x = val(*a);
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gi, xi)| if *xi > *c { *gi } else { 0.0 })
                    .collect();
                add_to(scratch, *a, &da);
            }
            Op::Softmax(a, axis) => {
                let y = nodes[id].value.data();
                let (r, c) = nodes[id].value.dims2();
                let mut da = vec![0.0; y.len()];
                for_each_slice(r, c, *axis, |idx| {
                    let dot: f64 = idx.iter().map(|&i| g[i] * y[i]).sum();
                    for &i in idx {
                        da[i] = y[i] * (g[i] - dot);
                    }
                });
                add_to(scratch, *a, &da);
            }
            Op::LogSoftmax(a, axis) => {
                let y = nodes[id].value.data();
                let (r, c) = nodes[id].value.dims2();
                let mut da = vec![0.0; y.len()];
                for_each_slice(r, c, *axis, |idx| {
                    let gsum: f64 = idx.iter().map(|&i| g[i]).sum();
                    for &i in idx {
                        da[i] = g[i] - y[i].exp() * gsum;
                    }
                });
                add_to(scratch, *a, &da);
            }
            Op::Sum(a) => {
                let n = nodes[a.0].value.numel();
                add_to(scratch, *a, &vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = nodes[a.0].value.numel();
                add_to(scratch, *a, &vec![g[0] / n as f64; n]);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.iter().map(|v| v * c).collect();
                add_to(scratch, *a, &da);
            }
            Op::AddConst(a, _) => add_to(scratch, *a, g),
            Op::Concat(parts, axis) => {
                let dims: Vec<(usize, usize)> =
                    parts.iter().map(|p| nodes[p.0].value.dims2()).collect();
                if *axis == 0 {
                    let mut off = 0;
                    for (p, &(r, c)) in parts.iter().zip(&dims) {
                        add_to(scratch, *p, &g[off..off + r * c]);
                        off += r * c;
                    }
                } else {
                    let rows = dims[0].0;
                    let total_c: usize = dims.iter().map(|&(_, c)| c).sum();
                    let mut col_off = 0;
                    for (p, &(_, c)) in parts.iter().zip(&dims) {
                        if nodes[p.0].requires_grad {
                            let mut dp = Vec::with_capacity(rows * c);
                            for i in 0..rows {
                                dp.extend_from_slice(
                                    &g[i * total_c + col_off..i * total_c + col_off + c],
                                );
                            }
                            add_to(scratch, *p, &dp);
                        }
                        col_off += c;
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = nodes[id].value.dims2();
                let da = transpose_raw(g, r, c);
                add_to(scratch, *a, &da);
            }
            Op::Rows(a, indices) => {
                if nodes[a.0].requires_grad {
                    let (_, c) = nodes[a.0].value.dims2();
                    let mut da = vec![0.0; nodes[a.0].value.numel()];
                    for (row, &src) in indices.iter().enumerate() {
                        for j in 0..c {
                            da[src * c + j] += g[row * c + j];
                        }
                    }
                    add_to(scratch, *a, &da);
                }
            }
            Op::At(a, flat) => {
                if nodes[a.0].requires_grad {
                    let mut da = vec![0.0; nodes[a.0].value.numel()];
                    da[*flat] = g[0];
                    add_to(scratch, *a, &da);
                }
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn reduce_broadcast(g: &[f64], cols: usize, bc: Broadcast) -> Vec<f64> {
    match bc {
        Broadcast::None => g.to_vec(),
        Broadcast::Row => {
            let mut out = vec![0.0; cols];
            for (i, v) in g.iter().enumerate() {
                out[i % cols] += v;
            }
            out
        }
        Broadcast::Scalar => vec![g.iter().sum()],
    }
}

fn for_each_slice(r: usize, c: usize, axis: NormAxis, mut f: impl FnMut(&[usize])) {
    match axis {
        NormAxis::Row => {
            for i in 0..r {
                let idx: Vec<usize> = (0..c).map(|j| i * c + j).collect();
                f(&idx);
            }
        }
        NormAxis::Col => {
            for j in 0..c {
                let idx: Vec<usize> = (0..r).map(|i| i * c + j).collect();
                f(&idx);
            }
        }
    }
}
