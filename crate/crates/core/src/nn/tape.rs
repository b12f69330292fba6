//! Reverse-mode tape over row-major matrices.

use super::kernels::{matmul, matmul_at_acc, matmul_bt};
use super::{Grads, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Scalar};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    /// `x · W[off..off+k, :] (+ b)`
    Linear { x: Var, w: ParamId, b: Option<ParamId>, row_offset: usize },
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Gather { x: Var, idx: Vec<usize> },
    SegmentMean { x: Var, groups: Vec<Vec<usize>> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    SumAll(Var),
    Bce { p: Var, y: Vec<T>, rho: T },
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    op: Op<T>,
}

/// Records a forward computation against a read-only parameter store.
pub struct Tape<'a, T> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Positive-weight binary cross-entropy, mean-reduced:
/// `−(1/n) Σ [ρ·y·log p + (1 − y)·log(1 − p)]` with `p` clamped.
pub fn bce_pos_weight<T: Scalar>(p: &[T], y: &[T], rho: T) -> Result<T> {
    if p.len() != y.len() {
        return Err(Error::Shape { expected: vec![p.len()], got: vec![y.len()] });
    }
    if p.is_empty() {
        return Ok(T::zero());
    }
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    let terms: Vec<T> = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.max(lo).min(hi);
            -(rho * y * p.ln() + (T::one() - y) * (T::one() - p).ln())
        })
        .collect();
    Ok(pairwise_sum(&terms) / T::from_usize_(p.len()))
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Tape { store, nodes: Vec::new() }
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::Shape { expected: vec![rows, cols], got: vec![data.len()] });
        }
        Ok(self.push(data, rows, cols, Op::Input))
    }

    /// A parameter tensor as a value (1-D tensors become one row).
    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.store.get(id);
        let (r, c) = t.rows_cols();
        self.push(t.data.clone(), r, c, Op::Param(id))
    }

    /// `x · W + b`, `W` stored `k × c`.
    pub fn affine(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let k = self.store.get(w).rows_cols().0;
        self.linear(x, w, Some(b), 0, k)
    }

    /// `x · W[row_offset..row_offset + k, :] (+ b)` where `k` is the width of
    /// `x`. Splits a layer applied to a concatenation into per-block products.
    pub fn linear_rows(&mut self, x: Var, w: ParamId, b: Option<ParamId>, row_offset: usize) -> Result<Var> {
        let k = self.dims(x).1;
        self.linear(x, w, b, row_offset, k)
    }

    fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>, row_offset: usize, k: usize) -> Result<Var> {
        let (r, xk) = self.dims(x);
        let wt = self.store.get(w);
        let (wk, c) = wt.rows_cols();
        if xk != k || row_offset + k > wk {
            return Err(Error::Shape { expected: vec![r, k], got: vec![r, xk] });
        }
        let wslice = &wt.data[row_offset * c..(row_offset + k) * c];
        let mut out = matmul(&self.nodes[x.0].value, wslice, r, k, c);
        if let Some(b) = b {
            let bias = &self.store.get(b).data;
            if bias.len() != c {
                return Err(Error::Shape { expected: vec![c], got: vec![bias.len()] });
            }
            for row in out.chunks_mut(c) {
                for (o, &bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        Ok(self.push(out, r, c, Op::Linear { x, w, b, row_offset }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(out, r, c, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let out = self.value(x).iter().map(|&v| sigmoid(v)).collect();
        self.push(out, r, c, Op::Sigmoid(x))
    }

    /// Column-wise concatenation of equally tall blocks.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.dims(parts[0]).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.dims(p).0 != rows) {
            let (br, bc) = self.dims(bad);
            return Err(Error::Shape { expected: vec![rows, bc], got: vec![br, bc] });
        }
        let cols: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.dims(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(out, rows, cols, Op::Concat(parts.to_vec())))
    }

    /// Row gather: `out[i] = x[idx[i]]`.
    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let (r, c) = self.dims(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::Shape { expected: vec![r, c], got: vec![bad + 1, c] });
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let n = idx.len();
        Ok(self.push(out, n, c, Op::Gather { x, idx }))
    }

    /// `out[g] = mean of x rows in groups[g]` (zero for an empty group),
    /// summed pairwise so the result hardly depends on row order.
    pub fn segment_mean(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let (r, c) = self.dims(x);
        if groups.iter().flatten().any(|&i| i >= r) {
            return Err(Error::Shape { expected: vec![r, c], got: vec![r + 1, c] });
        }
        let src = self.value(x);
        let mut out = vec![T::zero(); groups.len() * c];
        let mut column = Vec::new();
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let inv = T::one() / T::from_usize_(rows.len());
            for j in 0..c {
                column.clear();
                column.extend(rows.iter().map(|&i| src[i * c + j]));
                out[g * c + j] = pairwise_sum(&column) * inv;
            }
        }
        let n = groups.len();
        Ok(self.push(out, n, c, Op::SegmentMean { x, groups }))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(Error::Shape { expected: vec![da.0, da.1], got: vec![db.0, db.1] });
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.push(out, r, c, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.push(out, r, c, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|&x| x * s).collect();
        self.push(out, r, c, Op::Scale(a, s))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = pairwise_sum(self.value(a));
        self.push(vec![s], 1, 1, Op::SumAll(a))
    }

    /// Recorded [`bce_pos_weight`] of probabilities `p` against labels `y`.
    pub fn bce(&mut self, p: Var, y: Vec<T>, rho: T) -> Result<Var> {
        let loss = bce_pos_weight(self.value(p), &y, rho)?;
        Ok(self.push(vec![loss], 1, 1, Op::Bce { p, y, rho }))
    }

    /// Gradients of a scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let mut grads = self.store.zero_grads();
        self.backward_into(loss, T::one(), &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale · ∂loss/∂θ` into `grads`.
    pub fn backward_into(&self, loss: Var, scale: T, grads: &mut Grads<T>) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State("backward called before any forward pass".into()));
        }
        if self.dims(loss) != (1, 1) {
            let (r, c) = self.dims(loss);
            return Err(Error::Shape { expected: vec![1, 1], got: vec![r, c] });
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![scale]);

        fn acc<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            adj[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (a, &b) in grads.0[p.0].iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Linear { x, w, b, row_offset } => {
                    let (r, k) = self.dims(*x);
                    let c = node.cols;
                    let wt = self.store.get(*w);
                    let wslice = &wt.data[row_offset * c..(row_offset + k) * c];
                    let dx = matmul_bt(&g, wslice, r, k, c);
                    let ax = acc(&mut adj, *x, r * k);
                    for (a, d) in ax.iter_mut().zip(dx) {
                        *a += d;
                    }
                    let gw = &mut grads.0[w.0][row_offset * c..(row_offset + k) * c];
                    matmul_at_acc(gw, &self.nodes[x.0].value, &g, r, k, c);
                    if let Some(b) = b {
                        let gb = &mut grads.0[b.0];
                        for row in g.chunks(c) {
                            for (a, &d) in gb.iter_mut().zip(row) {
                                *a += d;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let ax = acc(&mut adj, *x, g.len());
                    for ((a, &d), &y) in ax.iter_mut().zip(&g).zip(&node.value) {
                        if y > T::zero() {
                            *a += d;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let ax = acc(&mut adj, *x, g.len());
                    for ((a, &d), &y) in ax.iter_mut().zip(&g).zip(&node.value) {
                        *a += d * y * (T::one() - y);
                    }
                }
                Op::Concat(parts) => {
                    let rows = node.rows;
                    let mut off = 0;
                    for &p in parts {
                        let c = self.dims(p).1;
                        let ap = acc(&mut adj, p, rows * c);
                        for i in 0..rows {
                            let src = &g[i * node.cols + off..i * node.cols + off + c];
                            for (a, &d) in ap[i * c..(i + 1) * c].iter_mut().zip(src) {
                                *a += d;
                            }
                        }
                        off += c;
                    }
                }
                Op::Gather { x, idx } => {
                    let (r, c) = self.dims(*x);
                    let ax = acc(&mut adj, *x, r * c);
                    for (row, &i) in idx.iter().enumerate() {
                        for (a, &d) in ax[i * c..(i + 1) * c].iter_mut().zip(&g[row * c..(row + 1) * c]) {
                            *a += d;
                        }
                    }
                }
                Op::SegmentMean { x, groups } => {
                    let (r, c) = self.dims(*x);
                    let ax = acc(&mut adj, *x, r * c);
                    for (gi, rows) in groups.iter().enumerate() {
                        if rows.is_empty() {
                            continue;
                        }
                        let inv = T::one() / T::from_usize_(rows.len());
                        let up = &g[gi * c..(gi + 1) * c];
                        for &i in rows {
                            for (a, &d) in ax[i * c..(i + 1) * c].iter_mut().zip(up) {
                                *a += d * inv;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let av = acc(&mut adj, v, g.len());
                        for (x, &d) in av.iter_mut().zip(&g) {
                            *x += d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (v, other) in [(*a, *b), (*b, *a)] {
                        let ov = &self.nodes[other.0].value;
                        let av = acc(&mut adj, v, g.len());
                        for ((x, &d), &o) in av.iter_mut().zip(&g).zip(ov) {
                            *x += d * o;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let av = acc(&mut adj, *a, g.len());
                    for (x, &d) in av.iter_mut().zip(&g) {
                        *x += d * *s;
                    }
                }
                Op::SumAll(a) => {
                    let len = self.nodes[a.0].value.len();
                    let av = acc(&mut adj, *a, len);
                    for x in av.iter_mut() {
                        *x += g[0];
                    }
                }
                Op::Bce { p, y, rho } => {
                    let pv = &self.nodes[p.0].value;
                    let n = T::from_usize_(pv.len().max(1));
                    let lo = T::lit(PROB_CLAMP);
                    let hi = T::one() - lo;
                    let ap = acc(&mut adj, *p, pv.len());
                    for ((a, &pi), &yi) in ap.iter_mut().zip(pv).zip(y) {
                        // clamping has zero derivative outside the band
                        if pi < lo || pi > hi {
                            continue;
                        }
                        let d = -(*rho * yi / pi - (T::one() - yi) / (T::one() - pi)) / n;
                        *a += g[0] * d;
                    }
                }
            }
        }
        Ok(())
    }
}
