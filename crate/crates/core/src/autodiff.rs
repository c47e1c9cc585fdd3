//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Each operation appends a node holding its forward value. A node requires
//! a gradient only when one of its inputs does, so work on frozen subgraphs is
//! recorded for the forward pass but never revisited by [`Tape::backward`].
//! Parameters are bound by reference and keep their identity, which lets the
//! caller route parameter gradients back into their owning [`Tensor`]s.

use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Additive bias placed on masked attention scores before the softmax.
pub const MASK_SENTINEL: f32 = -1e9;

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_CUBIC: f32 = 0.044_715;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, mean: Vec<f32>, rstd: Vec<f32> },
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { x: Var, mask: Vec<f32> },
    SplitHeads { x: Var, heads: usize },
    MergeHeads { x: Var, heads: usize },
    AttentionMask(Var),
    GatherRows { x: Var, rows: Vec<usize> },
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f32> },
    BceWithLogits { logits: Var, targets: Vec<f32> },
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f32]>,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grad_enabled: bool,
    bound: HashMap<usize, Var>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grad_enabled: true,
            bound: HashMap::new(),
        }
    }

    /// A tape on which no node ever requires a gradient (evaluation mode).
    pub fn inference() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f32] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.to_vec()).expect("tape node shape")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f32>, op: Op, wants_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value: Cow::Owned(value),
            op,
            requires_grad: self.grad_enabled && wants_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an owned tensor as a leaf; it requires a gradient iff the
    /// tensor does.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, rg)
    }

    /// Records a constant input that never receives a gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f32>) -> Var {
        self.push(shape, data, Op::Leaf, false)
    }

    /// Binds a parameter by reference under `key`. Binding the same key twice
    /// returns the original node.
    pub fn param(&mut self, key: usize, t: &'a Tensor) -> Var {
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.data()),
            op: Op::Param,
            requires_grad: self.grad_enabled && t.requires_grad(),
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(key, v);
        v
    }

    // ---- linear algebra -------------------------------------------------

    /// `x[..., k] · w[k×n] -> [..., n]`; leading extents of `x` are flattened
    /// into rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let k = *sa.last().unwrap_or(&1);
        if sa.is_empty() || sb.len() != 2 || sb[0] != k {
            return Err(Error::Shape { op: "matmul", lhs: sa, rhs: sb });
        }
        let (m, n) = (self.value(a).len() / k, sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(self.value(a), self.value(b), &mut out, m, k, n);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::MatMul(a, b), rg))
    }

    /// `x[..., k] · w[n×k]ᵀ -> [..., n]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let k = *sa.last().unwrap_or(&1);
        if sa.is_empty() || sb.len() != 2 || sb[1] != k {
            return Err(Error::Shape { op: "matmul_nt", lhs: sa, rhs: sb });
        }
        let (m, n) = (self.value(a).len() / k, sb[0]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nt(self.value(a), self.value(b), &mut out, m, k, n);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, out, Op::MatMulNt(a, b), rg))
    }

    /// Batched product of `[g×m×k]` with `[g×k×p]`, or with `[g×p×k]` when
    /// `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::Shape { op: "batch_matmul", lhs: sa.clone(), rhs: sb.clone() };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let p = if trans_b { sb[1] } else { sb[2] };
        let inner = if trans_b { sb[2] } else { sb[1] };
        if inner != k {
            return Err(bad());
        }
        let mut out = vec![0.0; g * m * p];
        {
            let (av, bv) = (self.value(a), self.value(b));
            for i in 0..g {
                let ai = &av[i * m * k..(i + 1) * m * k];
                let bi = &bv[i * k * p..(i + 1) * k * p];
                let ci = &mut out[i * m * p..(i + 1) * m * p];
                if trans_b {
                    kernels::gemm_nt(ai, bi, ci, m, k, p);
                } else {
                    kernels::gemm_nn(ai, bi, ci, m, k, p);
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![g, m, p], out, Op::BatchMatMul { a, b, trans_b }, rg))
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    /// Adds `bias[n]` to every length-`n` row of `x[..., n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&1);
        if self.shape(bias) != [n] {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bv = self.value(bias);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(n) {
            for (o, b) in row.iter_mut().zip(bv) {
                *o += b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(self.shape(x).to_vec(), out, Op::AddBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let out = self.value(x).iter().map(|v| v * s).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Scale(x, s), rg)
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Gelu(x), rg)
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let n = *self.shape(x).last().unwrap_or(&1);
        let mut out = self.value(x).to_vec();
        for row in out.chunks_exact_mut(n) {
            softmax_in_place(row);
        }
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), out, Op::Softmax(x), rg)
    }

    /// Layer normalization over the last axis with population variance.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let d = *self.shape(x).last().unwrap_or(&1);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let xs = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let rows = xs.len() / d;
        let mut out = vec![0.0; xs.len()];
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        for (xr, or) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let mu = xr.iter().sum::<f32>() / d as f32;
            let var = xr.iter().map(|v| (v - mu) * (v - mu)).sum::<f32>() / d as f32;
            let r = 1.0 / (var + eps).sqrt();
            for i in 0..d {
                or[i] = (xr[i] - mu) * r * gv[i] + bv[i];
            }
            mean.push(mu);
            rstd.push(r);
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::LayerNorm { x, gamma, beta, mean, rstd }, rg))
    }

    /// Row lookup: `ids` with shape `id_shape` index rows of `table[V×d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], id_shape: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 || id_shape.iter().product::<usize>() != ids.len() {
            return Err(Error::Shape { op: "embedding", lhs: ts, rhs: id_shape.to_vec() });
        }
        let (vocab, d) = (ts[0], ts[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Index { index: bad, extent: vocab });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        let mut shape = id_shape.to_vec();
        shape.push(d);
        let rg = self.rg(table);
        Ok(self.push(shape, out, Op::Embedding { table, ids: ids.to_vec() }, rg))
    }

    /// Inverted dropout. Without an RNG (evaluation) or with `p == 0` this is
    /// the identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f32, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
        }
        let Some(rng) = rng else { return Ok(x) };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f32> = (0..self.value(x).len())
            .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let rg = self.rg(x);
        Ok(self.push(self.shape(x).to_vec(), out, Op::Dropout { x, mask }, rg))
    }

    // ---- attention plumbing ---------------------------------------------

    /// `[B×T×d] -> [B·h × T × d/h]`
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || s[2] % heads != 0 {
            return Err(Error::Shape { op: "split_heads", lhs: s, rhs: vec![heads] });
        }
        let (b, t, d) = (s[0], s[1], s[2]);
        let dk = d / heads;
        let xs = self.value(x);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ti in 0..t {
                let src = &xs[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                for h in 0..heads {
                    let dst = ((bi * heads + h) * t + ti) * dk;
                    out[dst..dst + dk].copy_from_slice(&src[h * dk..(h + 1) * dk]);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![b * heads, t, dk], out, Op::SplitHeads { x, heads }, rg))
    }

    /// Inverse of [`Tape::split_heads`].
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || s[0] % heads != 0 {
            return Err(Error::Shape { op: "merge_heads", lhs: s, rhs: vec![heads] });
        }
        let (b, t, dk) = (s[0] / heads, s[1], s[2]);
        let d = dk * heads;
        let xs = self.value(x);
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            for ti in 0..t {
                for h in 0..heads {
                    let src = ((bi * heads + h) * t + ti) * dk;
                    let dst = (bi * t + ti) * d + h * dk;
                    out[dst..dst + dk].copy_from_slice(&xs[src..src + dk]);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![b, t, d], out, Op::MergeHeads { x, heads }, rg))
    }

    /// Adds [`MASK_SENTINEL`] to scores `[B·h × T × T]` at future keys
    /// (`j > i`) and at padded keys (`key_valid[b][j] == false`).
    pub fn attention_mask(&mut self, scores: Var, key_valid: &[bool], heads: usize) -> Result<Var> {
        let s = self.shape(scores).to_vec();
        if s.len() != 3 || s[1] != s[2] || heads == 0 || s[0] % heads != 0 || key_valid.len() != (s[0] / heads) * s[1] {
            return Err(Error::Shape {
                op: "attention_mask",
                lhs: s,
                rhs: vec![key_valid.len()],
            });
        }
        let t = s[1];
        let mut out = self.value(scores).to_vec();
        for (g, block) in out.chunks_exact_mut(t * t).enumerate() {
            let valid = &key_valid[(g / heads) * t..(g / heads + 1) * t];
            for i in 0..t {
                for j in 0..t {
                    if j > i || !valid[j] {
                        block[i * t + j] += MASK_SENTINEL;
                    }
                }
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(s, out, Op::AttentionMask(scores), rg))
    }

    /// Selects rows of `x[..., d]` (leading extents flattened) into `[len × d]`.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let d = *self.shape(x).last().unwrap_or(&1);
        let xs = self.value(x);
        let n = xs.len() / d;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::Index { index: bad, extent: n });
        }
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&xs[r * d..(r + 1) * d]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![rows.len(), d], out, Op::GatherRows { x, rows: rows.to_vec() }, rg))
    }

    // ---- reductions and losses --------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f32>() / v.len() as f32;
        let rg = self.rg(x);
        self.push(Vec::new(), vec![s], Op::Mean(x), rg)
    }

    /// Mean over rows of `-log softmax(logits[b])[y_b]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::Shape { op: "cross_entropy", lhs: s, rhs: vec![targets.len()] });
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&y| y >= c) {
            return Err(Error::contract(format!("class {bad} out of range for {c} classes")));
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0f64;
        for (row, &y) in probs.chunks_exact_mut(c).zip(targets) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
            total += (lse - row[y]) as f64;
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let loss = (total / b as f64) as f32;
        let rg = self.rg(logits);
        Ok(self.push(Vec::new(), vec![loss], Op::CrossEntropy { logits, targets: targets.to_vec(), probs }, rg))
    }

    /// Binary cross-entropy on raw logits `[B×C]` against 0/1 targets:
    /// summed over the `C` labels, averaged over the batch.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f32]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] * s[1] != targets.len() {
            return Err(Error::Shape { op: "bce_with_logits", lhs: s, rhs: vec![targets.len()] });
        }
        if let Some(bad) = targets.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::contract(format!("binary target {bad} is not 0 or 1")));
        }
        let total: f64 = self
            .value(logits)
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_term(z as f64, y as f64))
            .sum();
        let loss = (total / s[0] as f64) as f32;
        let rg = self.rg(logits);
        Ok(self.push(Vec::new(), vec![loss], Op::BceWithLogits { logits, targets: targets.to_vec() }, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape { op, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() });
        }
        Ok(())
    }

    // ---- backward --------------------------------------------------------

    /// Propagates `d loss / d node` from a scalar `loss` to every reachable
    /// node that requires a gradient, visiting nodes in reverse execution
    /// order. Nodes that do not require a gradient are never visited.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Param) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        let params = self
            .bound
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(&k, &v)| (k, v))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Param => {}
            &Op::MatMul(a, b) => {
                let k = self.shape(b)[0];
                let n = self.shape(b)[1];
                let m = self.value(a).len() / k;
                if rg(a) {
                    kernels::gemm_nt(g, self.value(b), slot(grads, a, m * k), m, n, k);
                }
                if rg(b) {
                    kernels::gemm_tn(self.value(a), g, slot(grads, b, k * n), m, k, n);
                }
            }
            &Op::MatMulNt(a, b) => {
                let n = self.shape(b)[0];
                let k = self.shape(b)[1];
                let m = self.value(a).len() / k;
                if rg(a) {
                    kernels::gemm_nn(g, self.value(b), slot(grads, a, m * k), m, n, k);
                }
                if rg(b) {
                    kernels::gemm_tn(g, self.value(a), slot(grads, b, n * k), m, n, k);
                }
            }
            &Op::BatchMatMul { a, b, trans_b } => {
                let sa = self.shape(a);
                let (groups, m, k) = (sa[0], sa[1], sa[2]);
                let p = node.shape[2];
                let (av, bv) = (self.value(a), self.value(b));
                if rg(a) {
                    let ga = slot(grads, a, groups * m * k);
                    for i in 0..groups {
                        let gi = &g[i * m * p..(i + 1) * m * p];
                        let bi = &bv[i * k * p..(i + 1) * k * p];
                        let out = &mut ga[i * m * k..(i + 1) * m * k];
                        if trans_b {
                            // b is [p×k]: dA = G · B
                            kernels::gemm_nn(gi, bi, out, m, p, k);
                        } else {
                            // b is [k×p]: dA = G · Bᵀ
                            kernels::gemm_nt(gi, bi, out, m, p, k);
                        }
                    }
                }
                if rg(b) {
                    let gb = slot(grads, b, groups * k * p);
                    for i in 0..groups {
                        let gi = &g[i * m * p..(i + 1) * m * p];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let out = &mut gb[i * k * p..(i + 1) * k * p];
                        if trans_b {
                            // dB[p×k] = Gᵀ · A
                            kernels::gemm_tn(gi, ai, out, m, p, k);
                        } else {
                            // dB[k×p] = Aᵀ · G
                            kernels::gemm_tn(ai, gi, out, m, k, p);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if rg(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            &Op::AddBias(x, bias) => {
                if rg(x) {
                    add_into(slot(grads, x, g.len()), g);
                }
                if rg(bias) {
                    let n = self.shape(bias)[0];
                    let gb = slot(grads, bias, n);
                    for row in g.chunks_exact(n) {
                        add_into(gb, row);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if rg(a) {
                    let bv = self.value(b);
                    let ga = slot(grads, a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if rg(b) {
                    let av = self.value(a);
                    let gb = slot(grads, b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            &Op::Scale(x, s) => {
                let gx = slot(grads, x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * s;
                }
            }
            &Op::Gelu(x) => {
                let xv = self.value(x);
                let gx = slot(grads, x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * gelu_grad(xv[i]);
                }
            }
            &Op::Softmax(x) => {
                let n = *node.shape.last().unwrap_or(&1);
                let y = &node.value;
                let gx = slot(grads, x, g.len());
                for ((yr, gr), out) in y.chunks_exact(n).zip(g.chunks_exact(n)).zip(gx.chunks_exact_mut(n)) {
                    let dotp = kernels::dot(yr, gr);
                    for j in 0..n {
                        out[j] += yr[j] * (gr[j] - dotp);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, mean, rstd } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let d = self.shape(gamma)[0];
                let xv = self.value(x);
                let gv = self.value(gamma);
                if rg(gamma) || rg(beta) {
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    for (r, (xr, gr)) in xv.chunks_exact(d).zip(g.chunks_exact(d)).enumerate() {
                        for i in 0..d {
                            let xhat = (xr[i] - mean[r]) * rstd[r];
                            dgamma[i] += gr[i] * xhat;
                            dbeta[i] += gr[i];
                        }
                    }
                    if rg(gamma) {
                        add_into(slot(grads, gamma, d), &dgamma);
                    }
                    if rg(beta) {
                        add_into(slot(grads, beta, d), &dbeta);
                    }
                }
                if rg(x) {
                    let gx = slot(grads, x, g.len());
                    let mut dxhat = vec![0.0; d];
                    for (r, ((xr, gr), out)) in xv
                        .chunks_exact(d)
                        .zip(g.chunks_exact(d))
                        .zip(gx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        let (mu, rs) = (mean[r], rstd[r]);
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for i in 0..d {
                            dxhat[i] = gr[i] * gv[i];
                            sum_d += dxhat[i];
                            sum_dx += dxhat[i] * (xr[i] - mu) * rs;
                        }
                        let (md, mdx) = (sum_d / d as f32, sum_dx / d as f32);
                        for i in 0..d {
                            let xhat = (xr[i] - mu) * rs;
                            out[i] += rs * (dxhat[i] - md - xhat * mdx);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                let len = self.value(*table).len();
                let gt = slot(grads, *table, len);
                for (pos, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[pos * d..(pos + 1) * d]);
                }
            }
            Op::Dropout { x, mask } => {
                let gx = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * mask[i];
                }
            }
            &Op::SplitHeads { x, heads } => {
                let (bh, t, dk) = (node.shape[0], node.shape[1], node.shape[2]);
                let (b, d) = (bh / heads, dk * heads);
                let gx = slot(grads, x, g.len());
                for bi in 0..b {
                    for ti in 0..t {
                        for h in 0..heads {
                            let src = ((bi * heads + h) * t + ti) * dk;
                            let dst = (bi * t + ti) * d + h * dk;
                            add_into(&mut gx[dst..dst + dk], &g[src..src + dk]);
                        }
                    }
                }
            }
            &Op::MergeHeads { x, heads } => {
                let (b, t, d) = (node.shape[0], node.shape[1], node.shape[2]);
                let dk = d / heads;
                let gx = slot(grads, x, g.len());
                for bi in 0..b {
                    for ti in 0..t {
                        for h in 0..heads {
                            let dst = ((bi * heads + h) * t + ti) * dk;
                            let src = (bi * t + ti) * d + h * dk;
                            add_into(&mut gx[dst..dst + dk], &g[src..src + dk]);
                        }
                    }
                }
            }
            &Op::AttentionMask(x) => add_into(slot(grads, x, g.len()), g),
            Op::GatherRows { x, rows } => {
                let d = node.shape[1];
                let len = self.value(*x).len();
                let gx = slot(grads, *x, len);
                for (i, &r) in rows.iter().enumerate() {
                    add_into(&mut gx[r * d..(r + 1) * d], &g[i * d..(i + 1) * d]);
                }
            }
            &Op::Sum(x) => {
                let len = self.value(x).len();
                slot(grads, x, len).iter_mut().for_each(|v| *v += g[0]);
            }
            &Op::Mean(x) => {
                let len = self.value(x).len();
                let share = g[0] / len as f32;
                slot(grads, x, len).iter_mut().for_each(|v| *v += share);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = self.shape(*logits)[1];
                let b = targets.len();
                let scale = g[0] / b as f32;
                let gl = slot(grads, *logits, probs.len());
                for (r, &y) in targets.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        gl[r * c + j] += (probs[r * c + j] - onehot) * scale;
                    }
                }
            }
            Op::BceWithLogits { logits, targets } => {
                let b = self.shape(*logits)[0];
                let scale = g[0] / b as f32;
                let zv = self.value(*logits);
                let gl = slot(grads, *logits, zv.len());
                for i in 0..zv.len() {
                    gl[i] += (sigmoid(zv[i]) - targets[i]) * scale;
                }
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`], addressable by node or by the
/// key a parameter was bound under.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    params: Vec<(usize, Var)>,
}

impl Gradients {
    /// Gradient of a leaf or bound parameter; `None` when it was not reached
    /// or does not require a gradient.
    pub fn of(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// `(key, gradient)` for every bound parameter that received one, in key order.
    pub fn params(&self) -> impl Iterator<Item = (usize, &[f32])> {
        let mut keyed: Vec<_> = self.params.iter().filter_map(|&(k, v)| self.of(v).map(|g| (k, g))).collect();
        keyed.sort_by_key(|&(k, _)| k);
        keyed.into_iter()
    }
}

fn slot(grads: &mut [Option<Vec<f32>>], v: Var, len: usize) -> &mut [f32] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh())
}

/// Exact derivative of [`gelu`].
pub fn gelu_grad(x: f32) -> f32 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
    let th = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

pub fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{-z}) + (1 - y) z`, written as `max(z, 0) - z y + log(1 + e^{-|z|})`.
pub fn bce_term(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests;
