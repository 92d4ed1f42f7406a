//! Reverse-mode gradient tape over [`Tensor2`] values.
//!
//! A `Tape` records each primitive as it is evaluated; `backward` replays
//! the record in exact reverse order and accumulates gradients into the
//! leaves.
//! Parameter leaves are snapshots of a [`ParamSet`] entry, so independent
//! tapes can run on independent threads while the registry is only touched
//! between steps.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor2;

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId {
    tape: u64,
    idx: usize,
}

/// Symmetric sparse matrix for graph propagation, stored as the upper
/// off-diagonal entries; `apply` adds both orientations.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub n: usize,
    /// (i, j, weight) with i < j, sorted.
    pub entries: Vec<(u32, u32, f64)>,
}

impl SparseSym {
    pub fn apply(&self, x: &Tensor2) -> Result<Tensor2> {
        if x.rows() != self.n {
            return Err(CoreError::ShapeMismatch {
                op: "spmm",
                left: format!("{}x{}", self.n, self.n),
                right: format!("{}x{}", x.rows(), x.cols()),
            });
        }
        let cols = x.cols();
        let mut out = Tensor2::zeros(self.n, cols);
        for &(i, j, w) in &self.entries {
            let (i, j) = (i as usize, j as usize);
            for c in 0..cols {
                let xi = x.get(i, c);
                let xj = x.get(j, c);
                out.data_mut()[i * cols + c] += w * xj;
                out.data_mut()[j * cols + c] += w * xi;
            }
        }
        Ok(out)
    }

    /// Dense materialization, used by the propagation oracles in tests.
    pub fn to_dense(&self) -> Tensor2 {
        let mut d = Tensor2::zeros(self.n, self.n);
        for &(i, j, w) in &self.entries {
            d.set(i as usize, j as usize, w);
            d.set(j as usize, i as usize, w);
        }
        d
    }
}

enum Op {
    Constant,
    Param(ParamId),
    MatMul(usize, usize),
    SpMM(Arc<SparseSym>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    MulElem(usize, usize),
    DivElem(usize, usize),
    AddBias(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows(usize, usize, usize),
    SliceCol(usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    MulRowConst(usize, Rc<Vec<f64>>),
    CosineRows(usize, usize),
    DivScalar(usize, usize),
    MulScalar(usize, usize),
    ScaleConst(usize, f64),
    ReduceMean(usize),
    ReduceSum(usize),
    SoftmaxRows(usize),
    MulColVec(usize, usize),
    BceWithLogits(usize, Rc<Vec<f64>>),
}

struct Node {
    value: Tensor2,
    op: Op,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    /// Accumulated parameter gradients across `backward` calls.
    param_accum: HashMap<ParamId, Tensor2>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const COSINE_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            param_accum: HashMap::new(),
        }
    }

    fn push(&mut self, value: Tensor2, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn check(&self, n: NodeId) -> Result<usize> {
        if n.tape != self.id || n.idx >= self.nodes.len() {
            return Err(CoreError::ForeignNode);
        }
        Ok(n.idx)
    }

    pub fn value(&self, n: NodeId) -> Result<&Tensor2> {
        let idx = self.check(n)?;
        Ok(&self.nodes[idx].value)
    }

    pub fn constant(&mut self, t: Tensor2) -> NodeId {
        self.push(t, Op::Constant)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.push(Tensor2::scalar(v), Op::Constant)
    }

    /// Leaf holding a snapshot of the parameter's current value.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.matmul(&self.nodes[b].value)?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn spmm(&mut self, adj: &Arc<SparseSym>, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = adj.apply(&self.nodes[x].value)?;
        Ok(self.push(v, Op::SpMM(Arc::clone(adj), x)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.add(&self.nodes[b].value)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.sub(&self.nodes[b].value)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.mul_elem(&self.nodes[b].value)?;
        Ok(self.push(v, Op::MulElem(a, b)))
    }

    pub fn div_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let v = self.nodes[a].value.div_elem(&self.nodes[b].value)?;
        Ok(self.push(v, Op::DivElem(a, b)))
    }

    /// `x (m x n) + bias (1 x n)` broadcast down the rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, bias) = (self.check(x)?, self.check(bias)?);
        let (xv, bv) = (&self.nodes[x].value, &self.nodes[bias].value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(CoreError::ShapeMismatch {
                op: "add_bias",
                left: format!("{}x{}", xv.rows(), xv.cols()),
                right: format!("{}x{}", bv.rows(), bv.cols()),
            });
        }
        let mut v = xv.clone();
        let cols = v.cols();
        for r in 0..v.rows() {
            for c in 0..cols {
                v.data_mut()[r * cols + c] += bv.get(0, c);
            }
        }
        Ok(self.push(v, Op::AddBias(x, bias)))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.map(|z| z.max(0.0));
        Ok(self.push(v, Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.map(sigmoid);
        Ok(self.push(v, Op::Sigmoid(x)))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.map(f64::exp);
        Ok(self.push(v, Op::Exp(x)))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.map(f64::ln);
        Ok(self.push(v, Op::Log(x)))
    }

    pub fn concat_cols(&mut self, blocks: &[NodeId]) -> Result<NodeId> {
        let idxs: Vec<usize> = blocks
            .iter()
            .map(|&b| self.check(b))
            .collect::<Result<_>>()?;
        let views: Vec<&Tensor2> = idxs.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor2::concat_cols(&views)?;
        Ok(self.push(v, Op::ConcatCols(idxs)))
    }

    pub fn concat_rows(&mut self, blocks: &[NodeId]) -> Result<NodeId> {
        let idxs: Vec<usize> = blocks
            .iter()
            .map(|&b| self.check(b))
            .collect::<Result<_>>()?;
        let views: Vec<&Tensor2> = idxs.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor2::concat_rows(&views)?;
        Ok(self.push(v, Op::ConcatRows(idxs)))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.slice_rows(start, end)?;
        Ok(self.push(v, Op::SliceRows(x, start, end)))
    }

    /// Extract one column as an m x 1 matrix.
    pub fn slice_col(&mut self, x: NodeId, col: usize) -> Result<NodeId> {
        let x = self.check(x)?;
        let xv = &self.nodes[x].value;
        if col >= xv.cols() {
            return Err(CoreError::InvalidArgument(format!(
                "slice_col {col} out of range for {} cols",
                xv.cols()
            )));
        }
        let mut v = Tensor2::zeros(xv.rows(), 1);
        for r in 0..xv.rows() {
            v.set(r, 0, xv.get(r, col));
        }
        Ok(self.push(v, Op::SliceCol(x, col)))
    }

    pub fn gather_rows(&mut self, x: NodeId, indices: Rc<Vec<usize>>) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.gather_rows(&indices)?;
        Ok(self.push(v, Op::GatherRows(x, indices)))
    }

    /// Scale each column c of `x` by `mask[c]`; this is how dropout masks
    /// (already folded with the 1/(1-rate) rescale) are applied.
    pub fn mul_row_const(&mut self, x: NodeId, mask: Rc<Vec<f64>>) -> Result<NodeId> {
        let x = self.check(x)?;
        let xv = &self.nodes[x].value;
        if mask.len() != xv.cols() {
            return Err(CoreError::ShapeMismatch {
                op: "mul_row_const",
                left: format!("{}x{}", xv.rows(), xv.cols()),
                right: format!("mask len {}", mask.len()),
            });
        }
        let cols = xv.cols();
        let mut v = xv.clone();
        for r in 0..v.rows() {
            for c in 0..cols {
                v.data_mut()[r * cols + c] *= mask[c];
            }
        }
        Ok(self.push(v, Op::MulRowConst(x, mask)))
    }

    /// Row-wise cosine similarity of two equally shaped matrices -> m x 1.
    /// A zero row yields similarity 0 (and no gradient through that row).
    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        if av.shape() != bv.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "cosine_rows",
                left: format!("{}x{}", av.rows(), av.cols()),
                right: format!("{}x{}", bv.rows(), bv.cols()),
            });
        }
        let mut v = Tensor2::zeros(av.rows(), 1);
        for r in 0..av.rows() {
            let (ar, br) = (av.row(r), bv.row(r));
            let dot: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
            let na: f64 = ar.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = br.iter().map(|x| x * x).sum::<f64>().sqrt();
            let denom = na * nb;
            v.set(r, 0, if denom < COSINE_EPS { 0.0 } else { dot / denom });
        }
        Ok(self.push(v, Op::CosineRows(a, b)))
    }

    /// Elementwise `x / s` where `s` is a 1x1 node (e.g. the temperature).
    pub fn div_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (x, s) = (self.check(x)?, self.check(s)?);
        let sv = self.nodes[s].value.item()?;
        let v = self.nodes[x].value.map(|z| z / sv);
        Ok(self.push(v, Op::DivScalar(x, s)))
    }

    /// Elementwise `x * s` where `s` is a 1x1 node.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (x, s) = (self.check(x)?, self.check(s)?);
        let sv = self.nodes[s].value.item()?;
        let v = self.nodes[x].value.map(|z| z * sv);
        Ok(self.push(v, Op::MulScalar(x, s)))
    }

    pub fn scale_const(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = self.nodes[x].value.scale(c);
        Ok(self.push(v, Op::ScaleConst(x, c)))
    }

    pub fn reduce_mean(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = Tensor2::scalar(self.nodes[x].value.mean());
        Ok(self.push(v, Op::ReduceMean(x)))
    }

    pub fn reduce_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let v = Tensor2::scalar(self.nodes[x].value.sum());
        Ok(self.push(v, Op::ReduceSum(x)))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let x = self.check(x)?;
        let xv = &self.nodes[x].value;
        let cols = xv.cols();
        let mut v = xv.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for e in row.iter_mut() {
                *e = (*e - m).exp();
                z += *e;
            }
            for e in row.iter_mut() {
                *e /= z;
            }
            debug_assert_eq!(row.len(), cols);
        }
        Ok(self.push(v, Op::SoftmaxRows(x)))
    }

    /// Scale row r of `x (m x d)` by `w[r]` where `w` is m x 1.
    pub fn mul_col_vec(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let (x, w) = (self.check(x)?, self.check(w)?);
        let (xv, wv) = (&self.nodes[x].value, &self.nodes[w].value);
        if wv.cols() != 1 || wv.rows() != xv.rows() {
            return Err(CoreError::ShapeMismatch {
                op: "mul_col_vec",
                left: format!("{}x{}", xv.rows(), xv.cols()),
                right: format!("{}x{}", wv.rows(), wv.cols()),
            });
        }
        let cols = xv.cols();
        let mut v = xv.clone();
        for r in 0..v.rows() {
            let s = wv.get(r, 0);
            for c in 0..cols {
                v.data_mut()[r * cols + c] *= s;
            }
        }
        Ok(self.push(v, Op::MulColVec(x, w)))
    }

    /// Mean binary cross-entropy of logits against fixed 0/1 labels,
    /// computed in the numerically stable softplus form.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: Rc<Vec<f64>>) -> Result<NodeId> {
        let logits = self.check(logits)?;
        let lv = &self.nodes[logits].value;
        if lv.data().is_empty() {
            return Err(CoreError::EmptyInput("prediction batch"));
        }
        if labels.len() != lv.data().len() {
            return Err(CoreError::ShapeMismatch {
                op: "bce_with_logits",
                left: format!("{} logits", lv.data().len()),
                right: format!("{} labels", labels.len()),
            });
        }
        let mut total = 0.0;
        for (&z, &l) in lv.data().iter().zip(labels.iter()) {
            total += softplus(z) - l * z;
        }
        let v = Tensor2::scalar(total / labels.len() as f64);
        Ok(self.push(v, Op::BceWithLogits(logits, labels)))
    }

    /// Accumulate gradients of a scalar loss into the tape's parameter
    /// registry. Calling twice without a fresh tape accumulates.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let loss = self.check(loss)?;
        {
            let lv = &self.nodes[loss].value;
            if lv.rows() != 1 || lv.cols() != 1 {
                return Err(CoreError::NonScalarLoss(lv.rows(), lv.cols()));
            }
        }
        let mut grads: Vec<Option<Tensor2>> = (0..=loss).map(|_| None).collect();
        grads[loss] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_one(idx, &g, &mut grads)?;
            if let Op::Param(pid) = self.nodes[idx].op {
                match self.param_accum.get_mut(&pid) {
                    Some(acc) => acc.add_assign(&g)?,
                    None => {
                        self.param_accum.insert(pid, g);
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradients aligned with the registry; parameters never touched by a
    /// `backward` call get zeros.
    pub fn grads(&self, params: &ParamSet) -> Vec<Tensor2> {
        params
            .ids()
            .map(|pid| match self.param_accum.get(&pid) {
                Some(g) => g.clone(),
                None => {
                    let v = params.value(pid);
                    Tensor2::zeros(v.rows(), v.cols())
                }
            })
            .collect()
    }

    fn backprop_one(&self, idx: usize, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        fn acc(grads: &mut [Option<Tensor2>], idx: usize, delta: Tensor2) -> Result<()> {
            match &mut grads[idx] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        }

        match &self.nodes[idx].op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul_transpose(&self.nodes[*b].value)?;
                let gb = self.nodes[*a].value.transpose_matmul(g)?;
                acc(grads, *a, ga)?;
                acc(grads, *b, gb)?;
            }
            Op::SpMM(adj, x) => {
                // adjacency is symmetric, so the backward map is the same spmm
                acc(grads, *x, adj.apply(g)?)?;
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone())?;
                acc(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone())?;
                acc(grads, *b, g.scale(-1.0))?;
            }
            Op::MulElem(a, b) => {
                acc(grads, *a, g.mul_elem(&self.nodes[*b].value)?)?;
                acc(grads, *b, g.mul_elem(&self.nodes[*a].value)?)?;
            }
            Op::DivElem(a, b) => {
                let bv = &self.nodes[*b].value;
                let ga = g.div_elem(bv)?;
                let y = &self.nodes[idx].value;
                let gb = g.mul_elem(y)?.div_elem(bv)?.scale(-1.0);
                acc(grads, *a, ga)?;
                acc(grads, *b, gb)?;
            }
            Op::AddBias(x, bias) => {
                let cols = g.cols();
                let mut gb = Tensor2::zeros(1, cols);
                for r in 0..g.rows() {
                    for c in 0..cols {
                        gb.data_mut()[c] += g.get(r, c);
                    }
                }
                acc(grads, *x, g.clone())?;
                acc(grads, *bias, gb)?;
            }
            Op::Relu(x) => {
                let xv = &self.nodes[*x].value;
                let mut gx = g.clone();
                for (gi, &xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    if xi <= 0.0 {
                        *gi = 0.0;
                    }
                }
                acc(grads, *x, gx)?;
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[idx].value;
                let mut gx = g.clone();
                for (gi, &yi) in gx.data_mut().iter_mut().zip(y.data()) {
                    *gi *= yi * (1.0 - yi);
                }
                acc(grads, *x, gx)?;
            }
            Op::Exp(x) => {
                acc(grads, *x, g.mul_elem(&self.nodes[idx].value)?)?;
            }
            Op::Log(x) => {
                acc(grads, *x, g.div_elem(&self.nodes[*x].value)?)?;
            }
            Op::ConcatCols(blocks) => {
                let mut offset = 0;
                for &b in blocks {
                    let bc = self.nodes[b].value.cols();
                    let mut gb = Tensor2::zeros(g.rows(), bc);
                    for r in 0..g.rows() {
                        for c in 0..bc {
                            gb.set(r, c, g.get(r, offset + c));
                        }
                    }
                    acc(grads, b, gb)?;
                    offset += bc;
                }
            }
            Op::ConcatRows(blocks) => {
                let mut offset = 0;
                for &b in blocks {
                    let br = self.nodes[b].value.rows();
                    acc(grads, b, g.slice_rows(offset, offset + br)?)?;
                    offset += br;
                }
            }
            Op::SliceRows(x, start, end) => {
                let xv = &self.nodes[*x].value;
                let mut gx = Tensor2::zeros(xv.rows(), xv.cols());
                for r in *start..*end {
                    let src = g.row(r - start).to_vec();
                    gx.row_mut(r).copy_from_slice(&src);
                }
                acc(grads, *x, gx)?;
            }
            Op::SliceCol(x, col) => {
                let xv = &self.nodes[*x].value;
                let mut gx = Tensor2::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    gx.set(r, *col, g.get(r, 0));
                }
                acc(grads, *x, gx)?;
            }
            Op::GatherRows(x, indices) => {
                let xv = &self.nodes[*x].value;
                let mut gx = Tensor2::zeros(xv.rows(), xv.cols());
                for (k, &r) in indices.iter().enumerate() {
                    // scatter with accumulation: duplicate rows sum
                    let cols = gx.cols();
                    for c in 0..cols {
                        gx.data_mut()[r * cols + c] += g.get(k, c);
                    }
                }
                acc(grads, *x, gx)?;
            }
            Op::MulRowConst(x, mask) => {
                let mut gx = g.clone();
                let cols = gx.cols();
                for r in 0..gx.rows() {
                    for c in 0..cols {
                        gx.data_mut()[r * cols + c] *= mask[c];
                    }
                }
                acc(grads, *x, gx)?;
            }
            Op::CosineRows(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let y = &self.nodes[idx].value;
                let mut ga = Tensor2::zeros(av.rows(), av.cols());
                let mut gb = Tensor2::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let (ar, br) = (av.row(r), bv.row(r));
                    let na2: f64 = ar.iter().map(|x| x * x).sum();
                    let nb2: f64 = br.iter().map(|x| x * x).sum();
                    let denom = (na2 * nb2).sqrt();
                    if denom < COSINE_EPS {
                        continue;
                    }
                    let yr = y.get(r, 0);
                    let gr = g.get(r, 0);
                    for c in 0..av.cols() {
                        ga.set(r, c, gr * (br[c] / denom - yr * ar[c] / na2));
                        gb.set(r, c, gr * (ar[c] / denom - yr * br[c] / nb2));
                    }
                }
                acc(grads, *a, ga)?;
                acc(grads, *b, gb)?;
            }
            Op::DivScalar(x, s) => {
                let sv = self.nodes[*s].value.item()?;
                acc(grads, *x, g.scale(1.0 / sv))?;
                let xv = &self.nodes[*x].value;
                let dot: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                acc(grads, *s, Tensor2::scalar(-dot / (sv * sv)))?;
            }
            Op::MulScalar(x, s) => {
                let sv = self.nodes[*s].value.item()?;
                acc(grads, *x, g.scale(sv))?;
                let xv = &self.nodes[*x].value;
                let dot: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                acc(grads, *s, Tensor2::scalar(dot))?;
            }
            Op::ScaleConst(x, c) => {
                acc(grads, *x, g.scale(*c))?;
            }
            Op::ReduceMean(x) => {
                let xv = &self.nodes[*x].value;
                let n = xv.data().len() as f64;
                let gv = g.item()?;
                acc(grads, *x, Tensor2::filled(xv.rows(), xv.cols(), gv / n))?;
            }
            Op::ReduceSum(x) => {
                let xv = &self.nodes[*x].value;
                let gv = g.item()?;
                acc(grads, *x, Tensor2::filled(xv.rows(), xv.cols(), gv))?;
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[idx].value;
                let mut gx = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        gx.set(r, c, yr[c] * (gr[c] - dot));
                    }
                }
                acc(grads, *x, gx)?;
            }
            Op::MulColVec(x, w) => {
                let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                let mut gx = g.clone();
                let mut gw = Tensor2::zeros(wv.rows(), 1);
                let cols = gx.cols();
                for r in 0..gx.rows() {
                    let s = wv.get(r, 0);
                    let mut acc_w = 0.0;
                    for c in 0..cols {
                        acc_w += g.get(r, c) * xv.get(r, c);
                        gx.data_mut()[r * cols + c] *= s;
                    }
                    gw.set(r, 0, acc_w);
                }
                acc(grads, *x, gx)?;
                acc(grads, *w, gw)?;
            }
            Op::BceWithLogits(logits, labels) => {
                let zv = &self.nodes[*logits].value;
                let n = labels.len() as f64;
                let gv = g.item()?;
                let mut gz = Tensor2::zeros(zv.rows(), zv.cols());
                for (i, (&z, &l)) in zv.data().iter().zip(labels.iter()).enumerate() {
                    gz.data_mut()[i] = gv * (sigmoid(z) - l) / n;
                }
                acc(grads, *logits, gz)?;
            }
        }
        Ok(())
    }
}

/// Dense layer helper: `relu(x W + b)` or the linear version.
pub fn dense(
    tape: &mut Tape,
    x: NodeId,
    w: NodeId,
    b: NodeId,
    relu_activation: bool,
) -> Result<NodeId> {
    let z = tape.matmul(x, w)?;
    let z = tape.add_bias(z, b)?;
    if relu_activation {
        tape.relu(z)
    } else {
        Ok(z)
    }
}
