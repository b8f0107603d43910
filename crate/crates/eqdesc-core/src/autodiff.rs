//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records primitive operations as they execute; [`Graph::backward`]
//! walks the tape once in reverse, accumulating exact analytic gradients into
//! every node that requires them. Graphs are single-threaded and cheap:
//! training builds one per example and reduces gradients in index order.
//!
//! Everything is generic over [`Scalar`]: `f32` for training, `f64` for
//! finite-difference gradient checks.

use crate::error::{Error, Result as CrateResult};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn shape_err<T>(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Result<T> {
    Err(TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    })
}

fn invalid<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Invalid {
        op,
        msg: msg.into(),
    })
}

/// Element type of tensors: `f32` (training) or `f64` (gradient checks).
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    const PRECISION: u8;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: u8 = 4;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: u8 = 8;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Plain tensor storage: a shape and a flat row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData<S> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> TensorData<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<TensorData<S>> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return invalid(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            );
        }
        Ok(TensorData { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> TensorData<S> {
        let n: usize = shape.iter().product();
        TensorData {
            shape,
            data: vec![S::zero(); n],
        }
    }

    pub fn scalar(v: S) -> TensorData<S> {
        TensorData {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map_precision<T: Scalar>(&self) -> TensorData<T> {
        TensorData {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| T::from_f64(Scalar::to_f64(v)))
                .collect(),
        }
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxLast(Var),
    MeanRows(Var),
    RowAdd(Var, Var),
    Scale(Var, S),
    SumAll(Var),
    Concat(Vec<Var>),
    EmbedCol(Var, usize),
    Dropout(Var, Vec<S>),
    CrossEntropy(Var, usize),
    ChannelsToRows(Var),
}

struct Node<S> {
    shape: Vec<usize>,
    values: Vec<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Grads<S> {
    by_node: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Grads<S> {
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.by_node[v.0].as_deref()
    }
}

/// A recording tape. Operations return handles; `backward` fills gradients.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Graph<S> {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[S] {
        &self.nodes[v.0].values
    }

    pub fn scalar_value(&self, v: Var) -> S {
        self.nodes[v.0].values[0]
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            values,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Install a leaf tensor; `requires_grad` marks trainable parameters.
    pub fn leaf(&mut self, t: &TensorData<S>, requires_grad: bool) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, requires_grad)
    }

    /// Matrix product: `[a,b]x[b,c] -> [a,c]`, `[a,b]x[b] -> [a]`,
    /// `[a]x[a,c] -> [c]`.
    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (ls, rs) = (self.shape(lhs).to_vec(), self.shape(rhs).to_vec());
        let needs = self.needs(lhs) || self.needs(rhs);
        let (shape, values) = match (ls.as_slice(), rs.as_slice()) {
            ([a, b], [b2, c]) if b == b2 => {
                let (a, b, c) = (*a, *b, *c);
                let mut out = vec![S::zero(); a * c];
                let lv = self.values(lhs);
                let rv = self.values(rhs);
                for i in 0..a {
                    for k in 0..b {
                        let x = lv[i * b + k];
                        let rrow = &rv[k * c..(k + 1) * c];
                        let orow = &mut out[i * c..(i + 1) * c];
                        for (o, r) in orow.iter_mut().zip(rrow) {
                            *o += x * *r;
                        }
                    }
                }
                (vec![a, c], out)
            }
            ([a, b], [b2]) if b == b2 => {
                let (a, b) = (*a, *b);
                let lv = self.values(lhs);
                let rv = self.values(rhs);
                let out = (0..a)
                    .map(|i| {
                        lv[i * b..(i + 1) * b]
                            .iter()
                            .zip(rv)
                            .map(|(x, y)| *x * *y)
                            .sum()
                    })
                    .collect();
                (vec![a], out)
            }
            ([a], [a2, c]) if a == a2 => {
                let (a, c) = (*a, *c);
                let lv = self.values(lhs);
                let rv = self.values(rhs);
                let mut out = vec![S::zero(); c];
                for k in 0..a {
                    let x = lv[k];
                    for (o, r) in out.iter_mut().zip(&rv[k * c..(k + 1) * c]) {
                        *o += x * *r;
                    }
                }
                (vec![c], out)
            }
            _ => return shape_err("matmul", &ls, &rs),
        };
        Ok(self.push(shape, values, Op::MatMul(lhs, rhs), needs))
    }

    /// Valid-padding 2-d convolution over `[C,H,W]` with weights
    /// `[Cout,Cin,kh,kw]` and optional per-channel bias `[Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (&[ci, h, wd], &[co, ci2, kh, kw]) = match (xs.as_slice(), ws.as_slice()) {
            (a @ [_, _, _], b @ [_, _, _, _]) => (
                <&[usize; 3]>::try_from(a).unwrap(),
                <&[usize; 4]>::try_from(b).unwrap(),
            ),
            _ => return shape_err("conv2d", &xs, &ws),
        };
        if ci != ci2 || h < kh || wd < kw || stride == 0 {
            return shape_err("conv2d", &xs, &ws);
        }
        if let Some(bv) = b {
            let bs = self.shape(bv);
            if bs != [co] {
                return shape_err("conv2d bias", &[co], bs);
            }
        }
        let ho = (h - kh) / stride + 1;
        let wo = (wd - kw) / stride + 1;
        let mut out = vec![S::zero(); co * ho * wo];
        {
            let xv = self.values(x);
            let wv = self.values(w);
            if kh == 2 && kw == 2 && stride == 2 {
                // the encoder's halving convolution, written without
                // per-pixel slicing so the inner loop stays tight
                for c in 0..co {
                    for cin in 0..ci {
                        let wbase = c * ci * 4 + cin * 4;
                        let (w00, w01, w10, w11) =
                            (wv[wbase], wv[wbase + 1], wv[wbase + 2], wv[wbase + 3]);
                        for oy in 0..ho {
                            let r0 = &xv[cin * h * wd + 2 * oy * wd..][..wd];
                            let r1 = &xv[cin * h * wd + (2 * oy + 1) * wd..][..wd];
                            let orow = &mut out[c * ho * wo + oy * wo..][..wo];
                            for ox in 0..wo {
                                orow[ox] += r0[2 * ox] * w00
                                    + r0[2 * ox + 1] * w01
                                    + r1[2 * ox] * w10
                                    + r1[2 * ox + 1] * w11;
                            }
                        }
                    }
                }
            } else {
                for c in 0..co {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = S::zero();
                            for cin in 0..ci {
                                for ky in 0..kh {
                                    let iy = oy * stride + ky;
                                    let xrow = &xv[cin * h * wd + iy * wd + ox * stride..];
                                    let wrow = &wv[c * ci * kh * kw + cin * kh * kw + ky * kw..];
                                    for kx in 0..kw {
                                        acc += xrow[kx] * wrow[kx];
                                    }
                                }
                            }
                            out[c * ho * wo + oy * wo + ox] = acc;
                        }
                    }
                }
            }
            if let Some(bv) = b {
                let bvals = self.values(bv).to_vec();
                for c in 0..co {
                    for v in &mut out[c * ho * wo..(c + 1) * ho * wo] {
                        *v += bvals[c];
                    }
                }
            }
        }
        let needs =
            self.needs(x) || self.needs(w) || b.map(|bv| self.needs(bv)).unwrap_or(false);
        Ok(self.push(
            vec![co, ho, wo],
            out,
            Op::Conv2d { x, w, b, stride },
            needs,
        ))
    }

    fn elementwise2(
        &mut self,
        op_name: &'static str,
        lhs: Var,
        rhs: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        if self.shape(lhs) != self.shape(rhs) {
            return shape_err(op_name, self.shape(lhs), self.shape(rhs));
        }
        let values = self
            .values(lhs)
            .iter()
            .zip(self.values(rhs))
            .map(|(a, b)| f(*a, *b))
            .collect();
        let needs = self.needs(lhs) || self.needs(rhs);
        Ok(self.push(self.shape(lhs).to_vec(), values, op, needs))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.elementwise2("add", lhs, rhs, |a, b| a + b, Op::Add(lhs, rhs))
    }

    pub fn sub(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.elementwise2("sub", lhs, rhs, |a, b| a - b, Op::Sub(lhs, rhs))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.elementwise2("mul", lhs, rhs, |a, b| a * b, Op::Mul(lhs, rhs))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let one = S::one();
        let values = self
            .values(x)
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), values, Op::Sigmoid(x), needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let values = self.values(x).iter().map(|v| v.tanh()).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), values, Op::Tanh(x), needs)
    }

    /// Softmax over the last axis of a 1-d or 2-d tensor; rows sum to one.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, cols) = match shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => return shape_err("softmax", &shape, &[]),
        };
        if cols == 0 {
            return invalid("softmax", "empty axis");
        }
        let mut values = vec![S::zero(); rows * cols];
        let xv = self.values(x);
        for r in 0..rows {
            let row = &xv[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(row[0], S::max);
            let exps: Vec<S> = row.iter().map(|&v| (v - m).exp()).collect();
            let denom: S = exps.iter().cloned().sum();
            for (o, e) in values[r * cols..(r + 1) * cols].iter_mut().zip(&exps) {
                *o = *e / denom;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(shape, values, Op::SoftmaxLast(x), needs))
    }

    /// Mean over axis 0 of `[rows, cols]`, producing `[cols]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let [rows, cols] = match shape.as_slice() {
            [r, c] => [*r, *c],
            _ => return shape_err("mean_rows", &shape, &[]),
        };
        if rows == 0 {
            return invalid("mean_rows", "no rows");
        }
        let inv = S::from_f64(1.0 / rows as f64);
        let xv = self.values(x);
        let mut out = vec![S::zero(); cols];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(&xv[r * cols..(r + 1) * cols]) {
                *o += *v;
            }
        }
        for o in &mut out {
            *o *= inv;
        }
        let needs = self.needs(x);
        Ok(self.push(vec![cols], out, Op::MeanRows(x), needs))
    }

    /// Add a `[cols]` vector to every row of `[rows, cols]`.
    pub fn row_add(&mut self, x: Var, v: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let vs = self.shape(v).to_vec();
        let [rows, cols] = match xs.as_slice() {
            [r, c] => [*r, *c],
            _ => return shape_err("row_add", &xs, &vs),
        };
        if vs != [cols] {
            return shape_err("row_add", &xs, &vs);
        }
        let xv = self.values(x);
        let vv = self.values(v);
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (a, b) in xv[r * cols..(r + 1) * cols].iter().zip(vv) {
                out.push(*a + *b);
            }
        }
        let needs = self.needs(x) || self.needs(v);
        Ok(self.push(xs, out, Op::RowAdd(x, v), needs))
    }

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let values = self.values(x).iter().map(|&v| v * c).collect();
        let needs = self.needs(x);
        self.push(self.shape(x).to_vec(), values, Op::Scale(x, c), needs)
    }

    /// Sum of all elements, producing `[1]`.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: S = self.values(x).iter().cloned().sum();
        let needs = self.needs(x);
        self.push(vec![1], vec![s], Op::SumAll(x), needs)
    }

    /// Concatenate 1-d tensors.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return invalid("concat", "no inputs");
        }
        let mut values = Vec::new();
        let mut needs = false;
        for &v in xs {
            if self.shape(v).len() != 1 {
                return shape_err("concat", self.shape(v), &[]);
            }
            values.extend_from_slice(self.values(v));
            needs |= self.needs(v);
        }
        let n = values.len();
        Ok(self.push(vec![n], values, Op::Concat(xs.to_vec()), needs))
    }

    /// Column `col` of an `[m, k]` embedding matrix, as `[m]`.
    pub fn embed_col(&mut self, table: Var, col: usize) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        let [m, k] = match ts.as_slice() {
            [m, k] => [*m, *k],
            _ => return shape_err("embed_col", &ts, &[]),
        };
        if col >= k {
            return invalid("embed_col", format!("column {col} out of {k}"));
        }
        let tv = self.values(table);
        let values = (0..m).map(|i| tv[i * k + col]).collect();
        let needs = self.needs(table);
        Ok(self.push(vec![m], values, Op::EmbedCol(table, col), needs))
    }

    /// Inverted dropout: scales kept elements by `1/(1-rate)` so inference
    /// needs no rescaling. Identity when not training or `rate == 0`.
    pub fn dropout<R: rand::Rng>(
        &mut self,
        x: Var,
        rate: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return invalid("dropout", format!("rate {rate} outside [0,1)"));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = S::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<S> = (0..self.values(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let values = self
            .values(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| *v * *m)
            .collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), values, Op::Dropout(x, mask), needs))
    }

    /// Negative log-likelihood of `target` under a probability vector.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let shape = self.shape(probs).to_vec();
        let [k] = match shape.as_slice() {
            [k] => [*k],
            _ => return shape_err("cross_entropy", &shape, &[]),
        };
        if target >= k {
            return invalid("cross_entropy", format!("target {target} out of {k}"));
        }
        // clamp away exact zeros so a fully-wrong prediction yields a large
        // finite loss instead of poisoning the run with infinities
        let p = self.values(probs)[target].max(S::min_positive_value());
        let loss = -p.ln();
        let needs = self.needs(probs);
        Ok(self.push(vec![1], vec![loss], Op::CrossEntropy(probs, target), needs))
    }

    /// Rearrange `[C,H,W]` features into an `[H*W, C]` annotation grid.
    pub fn channels_to_rows(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [c, h, w] = match xs.as_slice() {
            [c, h, w] => [*c, *h, *w],
            _ => return shape_err("channels_to_rows", &xs, &[]),
        };
        let xv = self.values(x);
        let mut out = vec![S::zero(); c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                out[p * c + ch] = xv[ch * h * w + p];
            }
        }
        let needs = self.needs(x);
        Ok(self.push(vec![h * w, c], out, Op::ChannelsToRows(x), needs))
    }

    /// Reverse sweep from a scalar loss. Visits every recorded node once.
    pub fn backward(&mut self, loss: Var) -> Result<Grads<S>> {
        if self.shape(loss) != [1] {
            return shape_err("backward", self.shape(loss), &[1]);
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.accumulate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Grads { by_node: grads })
    }

    fn grad_buf<'a>(&self, grads: &'a mut [Option<Vec<S>>], v: Var) -> &'a mut [S] {
        let n = self.nodes[v.0].values.len();
        grads[v.0].get_or_insert_with(|| vec![S::zero(); n])
    }

    fn accumulate(&self, id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(lhs, rhs) => {
                let ls = self.shape(*lhs).to_vec();
                let rs = self.shape(*rhs).to_vec();
                match (ls.as_slice(), rs.as_slice()) {
                    ([a, b], [_, c]) => {
                        let (a, b, c) = (*a, *b, *c);
                        if self.needs(*lhs) {
                            let rv = self.values(*rhs);
                            let dl = self.grad_buf(grads, *lhs);
                            for i in 0..a {
                                for k in 0..b {
                                    let mut acc = S::zero();
                                    for j in 0..c {
                                        acc += g[i * c + j] * rv[k * c + j];
                                    }
                                    dl[i * b + k] += acc;
                                }
                            }
                        }
                        if self.needs(*rhs) {
                            let lv = self.values(*lhs);
                            let dr = self.grad_buf(grads, *rhs);
                            for i in 0..a {
                                for k in 0..b {
                                    let x = lv[i * b + k];
                                    for j in 0..c {
                                        dr[k * c + j] += x * g[i * c + j];
                                    }
                                }
                            }
                        }
                    }
                    ([a, b], [_]) => {
                        let (a, b) = (*a, *b);
                        if self.needs(*lhs) {
                            let rv = self.values(*rhs);
                            let dl = self.grad_buf(grads, *lhs);
                            for i in 0..a {
                                for k in 0..b {
                                    dl[i * b + k] += g[i] * rv[k];
                                }
                            }
                        }
                        if self.needs(*rhs) {
                            let lv = self.values(*lhs);
                            let dr = self.grad_buf(grads, *rhs);
                            for i in 0..a {
                                for k in 0..b {
                                    dr[k] += lv[i * b + k] * g[i];
                                }
                            }
                        }
                    }
                    ([a], [_, c]) => {
                        let (a, c) = (*a, *c);
                        if self.needs(*lhs) {
                            let rv = self.values(*rhs);
                            let dl = self.grad_buf(grads, *lhs);
                            for k in 0..a {
                                let mut acc = S::zero();
                                for j in 0..c {
                                    acc += g[j] * rv[k * c + j];
                                }
                                dl[k] += acc;
                            }
                        }
                        if self.needs(*rhs) {
                            let lv = self.values(*lhs);
                            let dr = self.grad_buf(grads, *rhs);
                            for k in 0..a {
                                let x = lv[k];
                                for j in 0..c {
                                    dr[k * c + j] += x * g[j];
                                }
                            }
                        }
                    }
                    _ => unreachable!("shapes validated at record time"),
                }
            }
            Op::Conv2d { x, w, b, stride } => {
                let xs = self.shape(*x).to_vec();
                let ws = self.shape(*w).to_vec();
                let (ci, h, wd) = (xs[0], xs[1], xs[2]);
                let (co, kh, kw) = (ws[0], ws[2], ws[3]);
                let ho = (h - kh) / stride + 1;
                let wo = (wd - kw) / stride + 1;
                if let Some(bv) = b {
                    if self.needs(*bv) {
                        let db = self.grad_buf(grads, *bv);
                        for c in 0..co {
                            db[c] += g[c * ho * wo..(c + 1) * ho * wo].iter().cloned().sum();
                        }
                    }
                }
                let fast = kh == 2 && kw == 2 && *stride == 2;
                if self.needs(*w) {
                    let xv = self.values(*x);
                    let dw = self.grad_buf(grads, *w);
                    if fast {
                        for c in 0..co {
                            for cin in 0..ci {
                                let (mut a00, mut a01, mut a10, mut a11) =
                                    (S::zero(), S::zero(), S::zero(), S::zero());
                                for oy in 0..ho {
                                    let r0 = &xv[cin * h * wd + 2 * oy * wd..][..wd];
                                    let r1 = &xv[cin * h * wd + (2 * oy + 1) * wd..][..wd];
                                    let grow = &g[c * ho * wo + oy * wo..][..wo];
                                    for ox in 0..wo {
                                        let gv = grow[ox];
                                        a00 += gv * r0[2 * ox];
                                        a01 += gv * r0[2 * ox + 1];
                                        a10 += gv * r1[2 * ox];
                                        a11 += gv * r1[2 * ox + 1];
                                    }
                                }
                                let wbase = c * ci * 4 + cin * 4;
                                dw[wbase] += a00;
                                dw[wbase + 1] += a01;
                                dw[wbase + 2] += a10;
                                dw[wbase + 3] += a11;
                            }
                        }
                    } else {
                        for c in 0..co {
                            for cin in 0..ci {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let mut acc = S::zero();
                                        for oy in 0..ho {
                                            let iy = oy * stride + ky;
                                            for ox in 0..wo {
                                                acc += g[c * ho * wo + oy * wo + ox]
                                                    * xv[cin * h * wd
                                                        + iy * wd
                                                        + ox * stride
                                                        + kx];
                                            }
                                        }
                                        dw[c * ci * kh * kw + cin * kh * kw + ky * kw + kx] +=
                                            acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if self.needs(*x) {
                    let wv = self.values(*w);
                    let dx = self.grad_buf(grads, *x);
                    if fast {
                        for c in 0..co {
                            for cin in 0..ci {
                                let wbase = c * ci * 4 + cin * 4;
                                let (w00, w01, w10, w11) =
                                    (wv[wbase], wv[wbase + 1], wv[wbase + 2], wv[wbase + 3]);
                                for oy in 0..ho {
                                    let grow = &g[c * ho * wo + oy * wo..][..wo];
                                    let (d0, d1) = dx[cin * h * wd + 2 * oy * wd..]
                                        [..2 * wd]
                                        .split_at_mut(wd);
                                    for ox in 0..wo {
                                        let gv = grow[ox];
                                        d0[2 * ox] += gv * w00;
                                        d0[2 * ox + 1] += gv * w01;
                                        d1[2 * ox] += gv * w10;
                                        d1[2 * ox + 1] += gv * w11;
                                    }
                                }
                            }
                        }
                    } else {
                        for c in 0..co {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let gv = g[c * ho * wo + oy * wo + ox];
                                    for cin in 0..ci {
                                        for ky in 0..kh {
                                            let iy = oy * stride + ky;
                                            for kx in 0..kw {
                                                dx[cin * h * wd + iy * wd + ox * stride + kx] +=
                                                    gv * wv[c * ci * kh * kw
                                                        + cin * kh * kw
                                                        + ky * kw
                                                        + kx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(lhs, rhs) => {
                for (&v, sign) in [(lhs, 1), (rhs, 1)].iter().map(|(v, s)| (*v, *s)) {
                    let _ = sign;
                    if self.needs(v) {
                        let d = self.grad_buf(grads, v);
                        for (o, gi) in d.iter_mut().zip(g) {
                            *o += *gi;
                        }
                    }
                }
            }
            Op::Sub(lhs, rhs) => {
                if self.needs(*lhs) {
                    let d = self.grad_buf(grads, *lhs);
                    for (o, gi) in d.iter_mut().zip(g) {
                        *o += *gi;
                    }
                }
                if self.needs(*rhs) {
                    let d = self.grad_buf(grads, *rhs);
                    for (o, gi) in d.iter_mut().zip(g) {
                        *o -= *gi;
                    }
                }
            }
            Op::Mul(lhs, rhs) => {
                if self.needs(*lhs) {
                    let rv = self.values(*rhs);
                    let d = self.grad_buf(grads, *lhs);
                    for ((o, gi), r) in d.iter_mut().zip(g).zip(rv) {
                        *o += *gi * *r;
                    }
                }
                if self.needs(*rhs) {
                    let lv = self.values(*lhs);
                    let d = self.grad_buf(grads, *rhs);
                    for ((o, gi), l) in d.iter_mut().zip(g).zip(lv) {
                        *o += *gi * *l;
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.needs(*x) {
                    let y = &node.values;
                    let d = self.grad_buf(grads, *x);
                    for ((o, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *o += *gi * *yi * (S::one() - *yi);
                    }
                }
            }
            Op::Tanh(x) => {
                if self.needs(*x) {
                    let y = &node.values;
                    let d = self.grad_buf(grads, *x);
                    for ((o, gi), yi) in d.iter_mut().zip(g).zip(y) {
                        *o += *gi * (S::one() - *yi * *yi);
                    }
                }
            }
            Op::SoftmaxLast(x) => {
                if self.needs(*x) {
                    let y = &node.values;
                    let cols = *node.shape.last().unwrap();
                    let rows = y.len() / cols;
                    let d = self.grad_buf(grads, *x);
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: S = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for ((o, yi), gi) in d[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(yr)
                            .zip(gr)
                        {
                            *o += *yi * (*gi - dot);
                        }
                    }
                }
            }
            Op::MeanRows(x) => {
                if self.needs(*x) {
                    let cols = node.shape[0];
                    let rows = self.values(*x).len() / cols;
                    let inv = S::from_f64(1.0 / rows as f64);
                    let d = self.grad_buf(grads, *x);
                    for r in 0..rows {
                        for (o, gi) in d[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                            *o += *gi * inv;
                        }
                    }
                }
            }
            Op::RowAdd(x, v) => {
                if self.needs(*x) {
                    let d = self.grad_buf(grads, *x);
                    for (o, gi) in d.iter_mut().zip(g) {
                        *o += *gi;
                    }
                }
                if self.needs(*v) {
                    let cols = self.values(*v).len();
                    let rows = g.len() / cols;
                    let d = self.grad_buf(grads, *v);
                    for r in 0..rows {
                        for (o, gi) in d.iter_mut().zip(&g[r * cols..(r + 1) * cols]) {
                            *o += *gi;
                        }
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.needs(*x) {
                    let c = *c;
                    let d = self.grad_buf(grads, *x);
                    for (o, gi) in d.iter_mut().zip(g) {
                        *o += *gi * c;
                    }
                }
            }
            Op::SumAll(x) => {
                if self.needs(*x) {
                    let gv = g[0];
                    let d = self.grad_buf(grads, *x);
                    for o in d.iter_mut() {
                        *o += gv;
                    }
                }
            }
            Op::Concat(xs) => {
                let mut offset = 0;
                for &v in xs {
                    let n = self.values(v).len();
                    if self.needs(v) {
                        let d = self.grad_buf(grads, v);
                        for (o, gi) in d.iter_mut().zip(&g[offset..offset + n]) {
                            *o += *gi;
                        }
                    }
                    offset += n;
                }
            }
            Op::EmbedCol(table, col) => {
                if self.needs(*table) {
                    let k = self.shape(*table)[1];
                    let col = *col;
                    let d = self.grad_buf(grads, *table);
                    for (i, gi) in g.iter().enumerate() {
                        d[i * k + col] += *gi;
                    }
                }
            }
            Op::Dropout(x, mask) => {
                if self.needs(*x) {
                    let d = self.grad_buf(grads, *x);
                    for ((o, gi), m) in d.iter_mut().zip(g).zip(mask) {
                        *o += *gi * *m;
                    }
                }
            }
            Op::CrossEntropy(probs, target) => {
                if self.needs(*probs) {
                    let p = self.values(*probs)[*target].max(S::min_positive_value());
                    let target = *target;
                    let d = self.grad_buf(grads, *probs);
                    d[target] -= g[0] / p;
                }
            }
            Op::ChannelsToRows(x) => {
                if self.needs(*x) {
                    let xs = self.shape(*x).to_vec();
                    let (c, hw) = (xs[0], xs[1] * xs[2]);
                    let d = self.grad_buf(grads, *x);
                    for p in 0..hw {
                        for ch in 0..c {
                            d[ch * hw + p] += g[p * c + ch];
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Max relative error between analytic and central-difference gradients of a
/// scalar-valued graph builder over the given inputs. 64-bit only.
pub fn grad_check<F>(build: F, inputs: &[TensorData<f64>]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let h = 1e-5;
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t, true)).collect();
    let loss = build(&mut g, &vars)?;
    if g.shape(loss) != [1] {
        return invalid("grad_check", "builder must produce a scalar");
    }
    let grads = g.backward(loss)?;

    let eval = |perturbed: &[TensorData<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t, false)).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.scalar_value(loss))
    };

    let mut worst = 0.0f64;
    let mut work: Vec<TensorData<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[i])
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; input.len()]);
        for j in 0..input.len() {
            let orig = work[i].data[j];
            work[i].data[j] = orig + h;
            let up = eval(&work)?;
            work[i].data[j] = orig - h;
            let down = eval(&work)?;
            work[i].data[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Momentum-SGD state: one velocity buffer per parameter.
#[derive(Debug, Clone, Default)]
pub struct SgdState<S> {
    pub velocity: BTreeMap<String, Vec<S>>,
}

impl<S: Scalar> SgdState<S> {
    pub fn new() -> SgdState<S> {
        SgdState {
            velocity: BTreeMap::new(),
        }
    }
}

/// One SGD step with momentum and weight decay, in place:
/// `v <- momentum*v + grad + weight_decay*param; param <- param - lr*v`.
/// Parameters without a gradient entry (frozen) are left untouched.
pub fn sgd_step<S: Scalar>(
    params: &mut BTreeMap<String, TensorData<S>>,
    grads: &BTreeMap<String, Vec<S>>,
    state: &mut SgdState<S>,
    lr: S,
    momentum: S,
    weight_decay: S,
) -> Result<()> {
    for (name, p) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        if g.len() != p.data.len() {
            return shape_err("sgd_step", &p.shape, &[g.len()]);
        }
        let v = state
            .velocity
            .entry(name.clone())
            .or_insert_with(|| vec![S::zero(); g.len()]);
        for ((vi, gi), pi) in v.iter_mut().zip(g).zip(p.data.iter_mut()) {
            *vi = momentum * *vi + *gi + weight_decay * *pi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"EQDC";
const CHECKPOINT_VERSION: u32 = 1;

/// Write named tensors: magic, version, precision, then (name, shape, data)
/// triples in sorted-name order.
pub fn save_tensors<S: Scalar>(
    path: &Path,
    tensors: &BTreeMap<String, TensorData<S>>,
) -> CrateResult<()> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(S::PRECISION);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            v.write_le(&mut out);
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_tensors<S: Scalar>(path: &Path) -> CrateResult<BTreeMap<String, TensorData<S>>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    let mut at = 0usize;
    let mut take = |n: usize| -> CrateResult<&[u8]> {
        let s = buf
            .get(at..at + n)
            .ok_or_else(|| bad("truncated checkpoint"))?;
        at += n;
        Ok(s)
    };
    if take(4)? != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let precision = take(1)?[0];
    if precision != S::PRECISION {
        return Err(bad(&format!(
            "precision {precision} does not match requested {}",
            S::PRECISION
        )));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len)?.to_vec())
            .map_err(|_| bad("non-utf8 tensor name"))?;
        let ndim = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let width = S::PRECISION as usize;
        for _ in 0..n {
            data.push(S::read_le(take(width)?));
        }
        out.insert(name, TensorData { shape, data });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randt(shape: &[usize], rng: &mut ChaCha8Rng) -> TensorData<f64> {
        let n: usize = shape.iter().product();
        TensorData::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Weighted sum against a fixed non-trainable tensor, so every output
    /// coordinate feeds the scalar loss with a distinct coefficient.
    fn weighted_sum(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
        let n = g.values(out).len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = TensorData::new(
            g.shape(out).to_vec(),
            (0..n).map(|_| rng.random_range(0.5..1.5)).collect(),
        )
        .unwrap();
        let wv = g.leaf(&w, false);
        let prod = g.mul(out, wv)?;
        Ok(g.sum_all(prod))
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(&TensorData::new(vec![3], vec![0.0; 3]).unwrap(), false);
        let y = g.softmax(x).unwrap();
        for &v in g.values(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let s: f64 = g.values(y).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_at_zero_value_and_grad() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(&TensorData::scalar(0.0), true);
        let y = g.sigmoid(x);
        assert!((g.scalar_value(y) - 0.5).abs() < 1e-15);
        let grads = g.backward(y).unwrap();
        assert!((grads.get(x).unwrap()[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn matmul_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = randt(&[3, 4], &mut rng);
        let b = randt(&[4, 2], &mut rng);
        let err = grad_check(
            |g, vars| {
                let c = g.matmul(vars[0], vars[1])?;
                weighted_sum(g, c, 7)
            },
            &[a, b],
        )
        .unwrap();
        assert!(err < 1e-6, "matmul rel err {err}");
    }

    #[test]
    fn every_primitive_passes_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cases: Vec<(&str, f64)> = vec![
            (
                "matvec",
                grad_check(
                    |g, v| {
                        let y = g.matmul(v[0], v[1])?;
                        weighted_sum(g, y, 1)
                    },
                    &[randt(&[5, 3], &mut rng), randt(&[3], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "vecmat",
                grad_check(
                    |g, v| {
                        let y = g.matmul(v[0], v[1])?;
                        weighted_sum(g, y, 2)
                    },
                    &[randt(&[4], &mut rng), randt(&[4, 2], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "matmul degenerate dims",
                grad_check(
                    |g, v| {
                        let y = g.matmul(v[0], v[1])?;
                        weighted_sum(g, y, 3)
                    },
                    &[randt(&[1, 3], &mut rng), randt(&[3, 1], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "conv2d stride 2 with bias",
                grad_check(
                    |g, v| {
                        let y = g.conv2d(v[0], v[1], Some(v[2]), 2)?;
                        weighted_sum(g, y, 4)
                    },
                    &[
                        randt(&[2, 6, 8], &mut rng),
                        randt(&[3, 2, 2, 2], &mut rng),
                        randt(&[3], &mut rng),
                    ],
                )
                .unwrap(),
            ),
            (
                "conv2d stride 1 no bias",
                grad_check(
                    |g, v| {
                        let y = g.conv2d(v[0], v[1], None, 1)?;
                        weighted_sum(g, y, 5)
                    },
                    &[randt(&[1, 4, 4], &mut rng), randt(&[2, 1, 3, 3], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "add/sub/mul chain",
                grad_check(
                    |g, v| {
                        let s = g.add(v[0], v[1])?;
                        let d = g.sub(s, v[2])?;
                        let m = g.mul(d, v[0])?;
                        weighted_sum(g, m, 6)
                    },
                    &[
                        randt(&[4], &mut rng),
                        randt(&[4], &mut rng),
                        randt(&[4], &mut rng),
                    ],
                )
                .unwrap(),
            ),
            (
                "sigmoid/tanh",
                grad_check(
                    |g, v| {
                        let a = g.sigmoid(v[0]);
                        let b = g.tanh(a);
                        weighted_sum(g, b, 7)
                    },
                    &[randt(&[6], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "softmax 1d",
                grad_check(
                    |g, v| {
                        let y = g.softmax(v[0])?;
                        weighted_sum(g, y, 8)
                    },
                    &[randt(&[5], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "softmax rows",
                grad_check(
                    |g, v| {
                        let y = g.softmax(v[0])?;
                        weighted_sum(g, y, 9)
                    },
                    &[randt(&[3, 4], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "mean_rows",
                grad_check(
                    |g, v| {
                        let y = g.mean_rows(v[0])?;
                        weighted_sum(g, y, 10)
                    },
                    &[randt(&[4, 3], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "row_add",
                grad_check(
                    |g, v| {
                        let y = g.row_add(v[0], v[1])?;
                        weighted_sum(g, y, 11)
                    },
                    &[randt(&[3, 4], &mut rng), randt(&[4], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "scale/sum",
                grad_check(
                    |g, v| {
                        let y = g.scale(v[0], 0.37);
                        weighted_sum(g, y, 12)
                    },
                    &[randt(&[7], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "concat",
                grad_check(
                    |g, v| {
                        let y = g.concat(&[v[0], v[1], v[2]])?;
                        weighted_sum(g, y, 13)
                    },
                    &[
                        randt(&[2], &mut rng),
                        randt(&[3], &mut rng),
                        randt(&[1], &mut rng),
                    ],
                )
                .unwrap(),
            ),
            (
                "embedding column",
                grad_check(
                    |g, v| {
                        let y = g.embed_col(v[0], 2)?;
                        weighted_sum(g, y, 14)
                    },
                    &[randt(&[4, 5], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "dropout fixed mask",
                grad_check(
                    |g, v| {
                        let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
                        let y = g.dropout(v[0], 0.4, true, &mut mask_rng)?;
                        weighted_sum(g, y, 15)
                    },
                    &[randt(&[10], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "softmax + cross entropy",
                grad_check(
                    |g, v| {
                        let p = g.softmax(v[0])?;
                        g.cross_entropy(p, 2)
                    },
                    &[randt(&[6], &mut rng)],
                )
                .unwrap(),
            ),
            (
                "channels_to_rows",
                grad_check(
                    |g, v| {
                        let y = g.channels_to_rows(v[0])?;
                        weighted_sum(g, y, 16)
                    },
                    &[randt(&[3, 2, 4], &mut rng)],
                )
                .unwrap(),
            ),
        ];
        for (name, err) in cases {
            assert!(err < 1e-6, "{name}: rel err {err}");
        }
    }

    #[test]
    fn linear_function_has_near_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = grad_check(|g, v| Ok(g.sum_all(v[0])), &[randt(&[8], &mut rng)]).unwrap();
        assert!(err < 1e-10, "rel err {err}");
    }

    #[test]
    fn elementwise_square_gradient() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(&TensorData::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn value_reused_twice_accumulates() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(&TensorData::scalar(3.0), true);
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn dropout_identities() {
        let mut g: Graph<f64> = Graph::new();
        let t = TensorData::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = g.leaf(&t, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eval_off = g.dropout(x, 0.5, false, &mut rng).unwrap();
        assert_eq!(eval_off, x, "eval-time dropout must be the identity");
        let zero_rate = g.dropout(x, 0.0, true, &mut rng).unwrap();
        assert_eq!(zero_rate, x);
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn cross_entropy_of_uniform_is_log_k() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(&TensorData::new(vec![7], vec![0.0; 7]).unwrap(), false);
        let p = g.softmax(x).unwrap();
        let l = g.cross_entropy(p, 3).unwrap();
        assert!((g.scalar_value(l) - (7.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatches_name_both_shapes() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(&TensorData::zeros(vec![3, 4]), false);
        let b = g.leaf(&TensorData::zeros(vec![5, 2]), false);
        match g.matmul(a, b) {
            Err(TensorError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![3, 4]);
                assert_eq!(rhs, vec![5, 2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn sgd_zero_lr_is_identity() {
        let mut params = BTreeMap::new();
        params.insert(
            "w".to_owned(),
            TensorData::new(vec![2], vec![1.0f64, -2.0]).unwrap(),
        );
        let before = params.clone();
        let mut grads = BTreeMap::new();
        grads.insert("w".to_owned(), vec![10.0, 10.0]);
        let mut st = SgdState::new();
        sgd_step(&mut params, &grads, &mut st, 0.0, 0.5, 1e-4).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn sgd_plain_step_is_exact() {
        let mut params = BTreeMap::new();
        params.insert(
            "w".to_owned(),
            TensorData::new(vec![2], vec![1.0f64, -2.0]).unwrap(),
        );
        let mut grads = BTreeMap::new();
        grads.insert("w".to_owned(), vec![0.5, -1.0]);
        let mut st = SgdState::new();
        sgd_step(&mut params, &grads, &mut st, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(params["w"].data, vec![1.0 - 0.05, -2.0 + 0.1]);
    }

    #[test]
    fn sgd_momentum_matches_hand_recurrence() {
        let (lr, mu, wd) = (0.1f64, 0.5f64, 0.01f64);
        let g1 = 0.3f64;
        let g2 = -0.7f64;
        let mut p = 2.0f64;
        let mut v = 0.0f64;
        v = mu * v + g1 + wd * p;
        p -= lr * v;
        v = mu * v + g2 + wd * p;
        p -= lr * v;

        let mut params = BTreeMap::new();
        params.insert("w".to_owned(), TensorData::new(vec![1], vec![2.0f64]).unwrap());
        let mut st = SgdState::new();
        let step = |g: f64, params: &mut BTreeMap<String, TensorData<f64>>,
                    st: &mut SgdState<f64>| {
            let mut grads = BTreeMap::new();
            grads.insert("w".to_owned(), vec![g]);
            sgd_step(params, &grads, st, lr, mu, wd).unwrap();
        };
        step(g1, &mut params, &mut st);
        step(g2, &mut params, &mut st);
        assert!((params["w"].data[0] - p).abs() < 1e-12);
    }

    #[test]
    fn frozen_params_skip_update_and_velocity() {
        let mut params = BTreeMap::new();
        params.insert(
            "enc.w".to_owned(),
            TensorData::new(vec![1], vec![1.0f64]).unwrap(),
        );
        params.insert(
            "dec.w".to_owned(),
            TensorData::new(vec![1], vec![1.0f64]).unwrap(),
        );
        let mut grads = BTreeMap::new();
        grads.insert("dec.w".to_owned(), vec![1.0]);
        let mut st = SgdState::new();
        sgd_step(&mut params, &grads, &mut st, 0.1, 0.5, 0.0).unwrap();
        assert_eq!(params["enc.w"].data[0], 1.0);
        assert!(params["dec.w"].data[0] < 1.0);
        assert!(!st.velocity.contains_key("enc.w"));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = std::env::temp_dir().join(format!("eqdesc-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.ckpt");
        let mut tensors = BTreeMap::new();
        tensors.insert(
            "b.weight".to_owned(),
            TensorData::new(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap(),
        );
        tensors.insert(
            "a.bias".to_owned(),
            TensorData::new(vec![3], vec![-1.0f32, 0.5, 9.0]).unwrap(),
        );
        save_tensors(&path, &tensors).unwrap();
        let back: BTreeMap<String, TensorData<f32>> = load_tensors(&path).unwrap();
        assert_eq!(back, tensors);
        // precision mismatch is refused
        assert!(load_tensors::<f64>(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = std::env::temp_dir().join(format!("eqdesc-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_tensors::<f32>(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
