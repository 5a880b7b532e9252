//! Dense `f64` tensors and a define-by-run reverse-mode graph.
//!
//! A [`Graph`] is an append-only list of nodes. Every operation reads nodes
//! that already exist, so node ids are a valid topological order and the
//! backward sweep is a single pass in descending id order. The graph is
//! rebuilt for every forward pass.

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} holds {numel} values but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks the tensor as a trainable leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Extent of the last axis (1 for a scalar-shaped tensor).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            _ => self.data.len() / self.last_dim().max(1),
        }
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Per-channel statistics observed by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, the quantity folded into running statistics.
    pub var: Vec<f64>,
}

impl BatchStats {
    pub fn update_running(&self, running_mean: &mut [f64], running_var: &mut [f64]) {
        for (r, &m) in running_mean.iter_mut().zip(&self.mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m;
        }
        for (r, &v) in running_var.iter_mut().zip(&self.var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    AddRow {
        x: Var,
        bias: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Relu {
        x: Var,
    },
    MaxOverAxis {
        x: Var,
        argmax: Vec<usize>,
    },
    ConcatLast {
        a: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
    Sum {
        x: Var,
    },
    GatherRows {
        x: Var,
        indices: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Mask {
        x: Var,
        mask: Vec<f64>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul { a, b } | Op::Add { a, b } | Op::ConcatLast { a, b } => vec![*a, *b],
            Op::AddRow { x, bias } => vec![*x, *bias],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            Op::Relu { x }
            | Op::MaxOverAxis { x, .. }
            | Op::Sum { x }
            | Op::GatherRows { x, .. }
            | Op::Reshape { x }
            | Op::Mask { x, .. } => vec![*x],
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf. Gradients are tracked iff `tensor.requires_grad`.
    pub fn leaf(&mut self, mut tensor: Tensor) -> Var {
        tensor.grad = None;
        self.push(tensor, Op::Leaf)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(op.inputs().iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].value.requires_grad)
    }

    fn derived(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        let requires_grad = self.tracked(&op.inputs());
        let value = Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        };
        self.push(value, op)
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let shape = self.value(v).shape();
        match shape {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::dim(format!("{what} must be 2-D, got {shape:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, n) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.derived(vec![m, n], out, Op::MatMul { a, b }))
    }

    /// Adds a length-`C` bias to every row of an `R×C` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.matrix_dims(x, "add_row input")?;
        if self.value(bias).numel() != c {
            return Err(Error::dim(format!(
                "bias {:?} does not match input {:?}",
                self.value(bias).shape(),
                self.value(x).shape()
            )));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_exact_mut(c.max(1)) {
            for (o, bb) in row.iter_mut().zip(b) {
                *o += bb;
            }
        }
        let shape = self.value(x).shape().to_vec();
        Ok(self.derived(shape, out, Op::AddRow { x, bias }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::dim(format!(
                "add of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.derived(shape, out, Op::Add { a, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.value(x).shape().to_vec();
        self.derived(shape, out, Op::Relu { x })
    }

    /// Maximum over the second-to-last axis: `[..., k, d] -> [..., d]`.
    ///
    /// Ties resolve to the first index along the reduced axis, so the
    /// backward pass is deterministic.
    pub fn max_over_axis(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() < 2 {
            return Err(Error::dim(format!(
                "max_over_axis needs a [.., k, d] tensor, got {shape:?}"
            )));
        }
        let d = shape[shape.len() - 1];
        let k = shape[shape.len() - 2];
        if k == 0 {
            return Err(Error::Degenerate("max over an empty neighbor axis".into()));
        }
        let outer: usize = shape[..shape.len() - 2].iter().product();
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * d);
        let mut argmax = Vec::with_capacity(outer * d);
        for o in 0..outer {
            let base = o * k * d;
            for c in 0..d {
                let mut best = base + c;
                for j in 1..k {
                    let idx = base + j * d + c;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
        let mut out_shape = shape[..shape.len() - 2].to_vec();
        out_shape.push(d);
        Ok(self.derived(out_shape, out, Op::MaxOverAxis { x, argmax }))
    }

    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::dim(format!("concat of {sa:?} and {sb:?}")));
        }
        let p = sa[sa.len() - 1];
        let q = sb[sb.len() - 1];
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(rows * (p + q));
        for r in 0..rows {
            out.extend_from_slice(&da[r * p..(r + 1) * p]);
            out.extend_from_slice(&db[r * q..(r + 1) * q]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = p + q;
        Ok(self.derived(shape, out, Op::ConcatLast { a, b }))
    }

    /// Batch normalization over the rows of a `B×C` matrix.
    ///
    /// In training mode the returned [`BatchStats`] carry the observed batch
    /// statistics; the caller decides whether to fold them into its running
    /// buffers.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (b, c) = self.matrix_dims(x, "batch_norm input")?;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::dim(format!(
                "batch_norm scale/shift of length {}/{} for {c} channels",
                self.value(gamma).numel(),
                self.value(beta).numel()
            )));
        }
        let data = self.value(x).data();
        let (mean, var, stats) = match mode {
            NormMode::Train => {
                if b < 2 {
                    return Err(Error::Degenerate(format!(
                        "batch norm in training mode needs at least 2 rows, got {b}"
                    )));
                }
                let mut mean = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0; c];
                for row in data.chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                let unbiased: Vec<f64> = var.iter().map(|s| s / (b - 1) as f64).collect();
                var.iter_mut().for_each(|s| *s /= b as f64);
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            NormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::dim(format!(
                        "running statistics of length {}/{} for {c} channels",
                        mean.len(),
                        var.len()
                    )));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; b * c];
        let mut out = vec![0.0; b * c];
        for ((row, hrow), orow) in data
            .chunks_exact(c)
            .zip(xhat.chunks_exact_mut(c))
            .zip(out.chunks_exact_mut(c))
        {
            for ((((h, o), x), (m, s)), (gj, bj)) in hrow
                .iter_mut()
                .zip(orow.iter_mut())
                .zip(row)
                .zip(mean.iter().zip(&inv_std))
                .zip(g.iter().zip(bt))
            {
                *h = (x - m) * s;
                *o = gj * *h + bj;
            }
        }
        let batch_stats = stats.is_some();
        let v = self.derived(
            vec![b, c],
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        );
        Ok((v, stats))
    }

    /// Mean softmax cross-entropy of `B×K` logits against class ids.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, k) = self.matrix_dims(logits, "logits")?;
        if labels.len() != b {
            return Err(Error::dim(format!("{} labels for a batch of {b}", labels.len())));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Label {
                index,
                label,
                classes: k,
            });
        }
        let data = self.value(logits).data();
        let mut probs = Vec::with_capacity(b * k);
        let mut loss = 0.0;
        for (row, &label) in data.chunks_exact(k).zip(labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            probs.extend(softmax(row));
        }
        loss /= b as f64;
        Ok(self.derived(
            vec![1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.derived(vec![1], vec![s], Op::Sum { x })
    }

    /// Row lookup: `[N×C]` indexed by `M` row ids gives `[M×C]`.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (n, c) = self.matrix_dims(x, "gather source")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&data[i * c..(i + 1) * c]);
        }
        Ok(self.derived(
            vec![indices.len(), c],
            out,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(Error::dim(format!("reshape {:?} to {shape:?}", self.value(x).shape())));
        }
        let data = self.value(x).data().to_vec();
        Ok(self.derived(shape, data, Op::Reshape { x }))
    }

    /// Elementwise product with a constant mask (inverted dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        if mask.len() != self.value(x).numel() {
            return Err(Error::dim(format!(
                "mask of length {} for {:?}",
                mask.len(),
                self.value(x).shape()
            )));
        }
        let out = self.value(x).data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.value(x).shape().to_vec();
        Ok(self.derived(shape, out, Op::Mask { x, mask }))
    }

    /// Reverse sweep from a scalar root. Gradients from any previous sweep
    /// are discarded first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].value.requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
            self.nodes[id].value.grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let wants = |v: Var| self.nodes[v.0].value.requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.matrix_dims(*a, "matmul lhs")?;
                let n = self.value(*b).shape()[1];
                if wants(*a) {
                    let da = matmul_nt(g, self.value(*b).data(), m, n, k);
                    accumulate_owned(grads, *a, da);
                }
                if wants(*b) {
                    let db = matmul_tn(self.value(*a).data(), g, m, k, n);
                    accumulate_owned(grads, *b, db);
                }
            }
            Op::AddRow { x, bias } => {
                if wants(*x) {
                    accumulate(grads, *x, g);
                }
                if wants(*bias) {
                    let c = self.value(*bias).numel();
                    let mut db = vec![0.0; c];
                    for row in g.chunks_exact(c.max(1)) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate_owned(grads, *bias, db);
                }
            }
            Op::Add { a, b } => {
                if wants(*a) {
                    accumulate(grads, *a, g);
                }
                if wants(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::Relu { x } => {
                let dx: Vec<f64> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect();
                accumulate_owned(grads, *x, dx);
            }
            Op::MaxOverAxis { x, argmax } => {
                let dx = grad_slot(grads, *x, self.value(*x).numel());
                for (&src, &d) in argmax.iter().zip(g) {
                    dx[src] += d;
                }
            }
            Op::ConcatLast { a, b } => {
                let p = self.value(*a).last_dim();
                let q = self.value(*b).last_dim();
                let rows = self.value(*a).rows();
                if wants(*a) {
                    let mut da = Vec::with_capacity(rows * p);
                    for r in 0..rows {
                        da.extend_from_slice(&g[r * (p + q)..r * (p + q) + p]);
                    }
                    accumulate_owned(grads, *a, da);
                }
                if wants(*b) {
                    let mut db = Vec::with_capacity(rows * q);
                    for r in 0..rows {
                        db.extend_from_slice(&g[r * (p + q) + p..(r + 1) * (p + q)]);
                    }
                    accumulate_owned(grads, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c) = self.matrix_dims(*x, "batch_norm input")?;
                let gam = self.value(*gamma).data();
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for (grow, hrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for j in 0..c {
                        sum_dy[j] += grow[j];
                        sum_dy_xhat[j] += grow[j] * hrow[j];
                    }
                }
                if wants(*gamma) {
                    accumulate(grads, *gamma, &sum_dy_xhat);
                }
                if wants(*beta) {
                    accumulate(grads, *beta, &sum_dy);
                }
                if wants(*x) {
                    let bf = b as f64;
                    let mut dx = Vec::with_capacity(b * c);
                    for (grow, hrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            let scale = gam[j] * inv_std[j];
                            dx.push(if *batch_stats {
                                scale / bf * (bf * grow[j] - sum_dy[j] - hrow[j] * sum_dy_xhat[j])
                            } else {
                                scale * grow[j]
                            });
                        }
                    }
                    accumulate_owned(grads, *x, dx);
                }
            }
            Op::SoftmaxCrossEntropy { logits, probs, labels } => {
                let k = self.value(*logits).last_dim();
                let scale = g[0] / labels.len() as f64;
                let mut dl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, &label) in labels.iter().enumerate() {
                    dl[r * k + label] -= scale;
                }
                accumulate_owned(grads, *logits, dl);
            }
            Op::Sum { x } => {
                let dx = vec![g[0]; self.value(*x).numel()];
                accumulate_owned(grads, *x, dx);
            }
            Op::GatherRows { x, indices } if wants(*x) => {
                let c = self.value(*x).last_dim();
                let dx = grad_slot(grads, *x, self.value(*x).numel());
                for (&i, grow) in indices.iter().zip(g.chunks_exact(c.max(1))) {
                    for (d, v) in dx[i * c..(i + 1) * c].iter_mut().zip(grow) {
                        *d += v;
                    }
                }
            }
            Op::GatherRows { .. } => {}
            Op::Reshape { x } => accumulate(grads, *x, g),
            Op::Mask { x, mask } => {
                let dx: Vec<f64> = g.iter().zip(mask).map(|(d, m)| d * m).collect();
                accumulate_owned(grads, *x, dx);
            }
        }
        Ok(())
    }
}

/// Like [`accumulate`], reusing `delta`'s buffer when the slot is empty.
fn accumulate_owned(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(&delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

/// Zero-initialized gradient slot for `v` with `len` entries.
fn grad_slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

/// Numerically stable softmax of one row.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Strided `C[m×n] = A[m×k] · B[k×n]` into a fresh row-major buffer.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    // SAFETY: the strides address exactly the m×k and k×n elements of `a`
    // and `b`, and `out` holds m×n row-major values.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

// C[m×n] = A[m×k] · B[k×n]
fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    gemm(m, k, n, a, (k, 1), b, (n, 1))
}

// C[m×k] = G[m×n] · B[k×n]ᵀ
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    gemm(m, n, k, g, (n, 1), b, (1, n))
}

// C[k×n] = A[m×k]ᵀ · G[m×n]
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    gemm(k, m, n, a, (1, k), g, (n, 1))
}
