//! Reverse-mode tape. Every op appends a node holding its value; `backward`
//! walks the nodes in reverse and accumulates adjoints.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::ops::Range;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Logit given to masked entries before normalization.
pub const MASKED_LOGIT: f64 = -1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// rhs is `R x 1`.
    Col,
    /// rhs is `1 x C`.
    Row,
}

fn broadcast_kind(a: [usize; 2], b: [usize; 2], op: &str) -> Result<Bcast> {
    if a == b {
        Ok(Bcast::Same)
    } else if b == [1, 1] {
        Ok(Bcast::Scalar)
    } else if b == [a[0], 1] {
        Ok(Bcast::Col)
    } else if b == [1, a[1]] {
        Ok(Bcast::Row)
    } else {
        Err(Error::Shape(format!("{op} of {a:?} with {b:?}")))
    }
}

fn bcast_index(kind: Bcast, cols: usize, i: usize) -> usize {
    match kind {
        Bcast::Same => i,
        Bcast::Scalar => 0,
        Bcast::Col => i / cols,
        Bcast::Row => i % cols,
    }
}

/// Sums `g` down to the rhs shape implied by `kind`.
fn reduce_to<T: Real>(g: &Tensor<T>, kind: Bcast) -> Tensor<T> {
    let (r, c) = (g.rows(), g.cols());
    let mut out = match kind {
        Bcast::Same => return g.clone(),
        Bcast::Scalar => Tensor::zeros(1, 1),
        Bcast::Col => Tensor::zeros(r, 1),
        Bcast::Row => Tensor::zeros(1, c),
    };
    let o = out.data_mut();
    for (i, &x) in g.data().iter().enumerate() {
        o[bcast_index(kind, c, i)] += x;
    }
    out
}

enum Op<T: Real> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize, Bcast),
    Relu(usize),
    Sigmoid(usize),
    Log(usize),
    Exp(usize),
    Scale(usize, T),
    ConcatCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    SegmentSum(usize, Rc<[usize]>),
    Sum(usize),
    Mean(usize),
    MaskedSoftmax(usize, Rc<[Range<usize>]>, Rc<[bool]>),
    MaskedLogSoftmax {
        x: usize,
        groups: Rc<[Range<usize>]>,
        mask: Rc<[bool]>,
        probs: Vec<T>,
    },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        q_groups: Rc<[Range<usize>]>,
        k_groups: Rc<[Range<usize>]>,
        heads: usize,
        probs: Vec<T>,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Tape<T: Real = f32> {
    nodes: RefCell<Vec<Node<T>>>,
    recording: bool,
    consumed: Cell<bool>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("recording", &self.recording)
            .finish()
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real = f32> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Adjoints of every node reached by one backward pass.
pub struct Gradients<T: Real> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<[usize; 2]>,
}

impl<T: Real> Gradients<T> {
    /// d loss / d `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var<'_, T>) -> Tensor<T> {
        match self.grads.get(v.id) {
            Some(Some(g)) => g.clone(),
            Some(None) => {
                let [r, c] = self.shapes[v.id];
                Tensor::zeros(r, c)
            }
            // Recorded after the backward pass.
            None => {
                let [r, c] = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn reaches(&self, v: Var<'_, T>) -> bool {
        matches!(self.grads.get(v.id), Some(Some(_)))
    }
}

fn ensure_partition(groups: &[Range<usize>], len: usize, what: &str) -> Result<()> {
    let mut next = 0;
    for g in groups {
        if g.start != next || g.end <= g.start {
            return Err(Error::Contract(format!(
                "{what} groups must be consecutive non-empty ranges"
            )));
        }
        next = g.end;
    }
    if next != len {
        return Err(Error::Contract(format!(
            "{what} groups cover {next} of {len} entries"
        )));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    /// A recording tape.
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            consumed: Cell::new(false),
        }
    }

    /// A tape that evaluates ops but keeps no backward information.
    pub fn no_grad() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input leaf. Gradients flow to leaves like to any other node.
    pub fn leaf(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let op = if self.recording { op } else { Op::Leaf };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn own(&self, v: Var<'_, T>) -> Result<usize> {
        if std::ptr::eq(self, v.tape) {
            Ok(v.id)
        } else {
            Err(Error::Contract("variables from different tapes".into()))
        }
    }

    /// Multi-head scaled dot-product attention within groups: queries in
    /// `q_groups[i]` attend to the keys and values in `k_groups[i]`.
    pub fn attention<'t>(
        &'t self,
        q: Var<'t, T>,
        k: Var<'t, T>,
        v: Var<'t, T>,
        q_groups: &[Range<usize>],
        k_groups: &[Range<usize>],
        heads: usize,
    ) -> Result<Var<'t, T>> {
        let (qi, ki, vi) = (self.own(q)?, self.own(k)?, self.own(v)?);
        let (qs, ks, vs) = (q.shape(), k.shape(), v.shape());
        let d = qs[1];
        if ks != vs || ks[1] != d {
            return Err(Error::Shape(format!("attention q {qs:?} k {ks:?} v {vs:?}")));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Contract(format!("{heads} heads do not divide width {d}")));
        }
        if q_groups.len() != k_groups.len() {
            return Err(Error::Contract("query and key group counts differ".into()));
        }
        ensure_partition(q_groups, qs[0], "query")?;
        ensure_partition(k_groups, ks[0], "key")?;
        let dh = d / heads;
        let scale = T::lit(1.0 / (dh as f64).sqrt());
        let mut out = Tensor::zeros(qs[0], d);
        let mut probs = Vec::new();
        {
            let (qv, kv, vv) = (self.value(qi), self.value(ki), self.value(vi));
            for (qr, kr) in q_groups.iter().zip(k_groups) {
                let (nq, nk) = (qr.len(), kr.len());
                for h in 0..heads {
                    let c0 = h * dh;
                    let qb = &qv.data()[qr.start * d + c0..];
                    let kb = &kv.data()[kr.start * d + c0..];
                    let vb = &vv.data()[kr.start * d + c0..];
                    let mut s = vec![T::zero(); nq * nk];
                    T::gemm(nq, dh, nk, qb, (d as isize, 1), kb, (1, d as isize), T::zero(), &mut s);
                    for row in s.chunks_mut(nk) {
                        let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x * scale));
                        let mut z = T::zero();
                        for x in row.iter_mut() {
                            *x = (*x * scale - m).exp();
                            z += *x;
                        }
                        for x in row.iter_mut() {
                            *x /= z;
                        }
                    }
                    let mut o = vec![T::zero(); nq * dh];
                    T::gemm(nq, nk, dh, &s, (nk as isize, 1), vb, (d as isize, 1), T::zero(), &mut o);
                    let od = out.data_mut();
                    for (r, chunk) in o.chunks(dh).enumerate() {
                        let at = (qr.start + r) * d + c0;
                        od[at..at + dh].copy_from_slice(chunk);
                    }
                    probs.extend_from_slice(&s);
                }
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                q: qi,
                k: ki,
                v: vi,
                q_groups: q_groups.into(),
                k_groups: k_groups.into(),
                heads,
                probs,
            },
        ))
    }

    /// Reverse pass from the scalar `loss`. A tape supports one backward pass.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let root = self.own(loss)?;
        if !self.recording {
            return Err(Error::Contract("backward on a no-grad tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(Error::Contract("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[root].value.shape() != [1, 1] {
            self.consumed.set(false);
            return Err(Error::Contract(format!(
                "loss must be scalar, got {:?}",
                nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root] = Some(Tensor::scalar(T::one()));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            backward_node(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) {
    match &mut grads[id] {
        Some(acc) => {
            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn backward_node<T: Real>(nodes: &[Node<T>], id: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
    let val = |i: usize| &nodes[i].value;
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            accumulate(grads, *a, Tensor::matmul_t(g, false, val(*b), true));
            accumulate(grads, *b, Tensor::matmul_t(val(*a), true, g, false));
        }
        Op::Add(a, b, kind) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, reduce_to(g, *kind));
        }
        Op::Sub(a, b, kind) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, reduce_to(&g.map(|x| -x), *kind));
        }
        Op::Mul(a, b, kind) => {
            let (av, bv) = (val(*a), val(*b));
            let cols = av.cols();
            let mut ga = g.clone();
            let mut gb_full = g.clone();
            for (i, (x, y)) in ga.data_mut().iter_mut().zip(gb_full.data_mut()).enumerate() {
                *x *= bv.data()[bcast_index(*kind, cols, i)];
                *y *= av.data()[i];
            }
            accumulate(grads, *a, ga);
            accumulate(grads, *b, reduce_to(&gb_full, *kind));
        }
        Op::Relu(a) => {
            let mut ga = g.clone();
            for (x, &v) in ga.data_mut().iter_mut().zip(val(*a).data()) {
                if v <= T::zero() {
                    *x = T::zero();
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::Sigmoid(a) => {
            let mut ga = g.clone();
            for (x, &y) in ga.data_mut().iter_mut().zip(out.data()) {
                *x *= y * (T::one() - y);
            }
            accumulate(grads, *a, ga);
        }
        Op::Log(a) => {
            let mut ga = g.clone();
            for (x, &v) in ga.data_mut().iter_mut().zip(val(*a).data()) {
                *x /= v;
            }
            accumulate(grads, *a, ga);
        }
        Op::Exp(a) => {
            let mut ga = g.clone();
            for (x, &y) in ga.data_mut().iter_mut().zip(out.data()) {
                *x *= y;
            }
            accumulate(grads, *a, ga);
        }
        Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * *c)),
        Op::ConcatCols(a, b) => {
            let (ca, cb) = (val(*a).cols(), val(*b).cols());
            let rows = g.rows();
            let mut ga = Vec::with_capacity(rows * ca);
            let mut gb = Vec::with_capacity(rows * cb);
            for r in 0..rows {
                let row = g.row(r);
                ga.extend_from_slice(&row[..ca]);
                gb.extend_from_slice(&row[ca..]);
            }
            accumulate(grads, *a, Tensor::from_vec(rows, ca, ga).expect("shape"));
            accumulate(grads, *b, Tensor::from_vec(rows, cb, gb).expect("shape"));
        }
        Op::GatherRows(a, idx) => {
            let src = val(*a);
            let c = src.cols();
            let mut ga = Tensor::zeros(src.rows(), c);
            let gd = ga.data_mut();
            for (r, &i) in idx.iter().enumerate() {
                for (x, &y) in gd[i * c..(i + 1) * c].iter_mut().zip(g.row(r)) {
                    *x += y;
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::SegmentSum(a, seg) => {
            let src = val(*a);
            let c = src.cols();
            let mut data = Vec::with_capacity(src.len());
            for &s in seg.iter() {
                data.extend_from_slice(g.row(s));
            }
            accumulate(grads, *a, Tensor::from_vec(src.rows(), c, data).expect("shape"));
        }
        Op::Sum(a) => {
            let [r, c] = val(*a).shape();
            accumulate(grads, *a, Tensor::filled(r, c, g.data()[0]));
        }
        Op::Mean(a) => {
            let [r, c] = val(*a).shape();
            let n = T::lit((r * c).max(1) as f64);
            accumulate(grads, *a, Tensor::filled(r, c, g.data()[0] / n));
        }
        Op::MaskedSoftmax(a, groups, mask) => {
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            let (y, gd) = (out.data(), g.data());
            let gad = ga.data_mut();
            for grp in groups.iter() {
                let dot: T = grp.clone().map(|i| y[i] * gd[i]).sum();
                for i in grp.clone() {
                    if mask[i] {
                        gad[i] = y[i] * (gd[i] - dot);
                    }
                }
            }
            accumulate(grads, *a, ga);
        }
        Op::MaskedLogSoftmax { x, groups, mask, probs } => {
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            let gd = g.data();
            let gad = ga.data_mut();
            for grp in groups.iter() {
                let total: T = grp.clone().map(|i| gd[i]).sum();
                for i in grp.clone() {
                    let direct = if mask[i] { gd[i] } else { T::zero() };
                    gad[i] = direct - probs[i] * total;
                }
            }
            accumulate(grads, *x, ga);
        }
        Op::Attention {
            q,
            k,
            v,
            q_groups,
            k_groups,
            heads,
            probs,
        } => {
            let (qv, kv, vv) = (val(*q), val(*k), val(*v));
            let d = qv.cols();
            let dh = d / heads;
            let scale = T::lit(1.0 / (dh as f64).sqrt());
            let mut gq = Tensor::zeros(qv.rows(), d);
            let mut gk = Tensor::zeros(kv.rows(), d);
            let mut gv = Tensor::zeros(vv.rows(), d);
            let mut offset = 0;
            let ds = (d as isize, 1);
            let dst = (1, d as isize);
            for (qr, kr) in q_groups.iter().zip(k_groups.iter()) {
                let (nq, nk) = (qr.len(), kr.len());
                for h in 0..*heads {
                    let c0 = h * dh;
                    let p = &probs[offset..offset + nq * nk];
                    offset += nq * nk;
                    let go = &g.data()[qr.start * d + c0..];
                    let qb = &qv.data()[qr.start * d + c0..];
                    let kb = &kv.data()[kr.start * d + c0..];
                    let vb = &vv.data()[kr.start * d + c0..];
                    // dP = dO V^T
                    let mut dp = vec![T::zero(); nq * nk];
                    T::gemm(nq, dh, nk, go, ds, vb, dst, T::zero(), &mut dp);
                    // dV = P^T dO
                    let mut dv = vec![T::zero(); nk * dh];
                    T::gemm(nk, nq, dh, p, (1, nk as isize), go, ds, T::zero(), &mut dv);
                    // dS = P (dP - rowsum(dP P)) * scale
                    for (prow, drow) in p.chunks(nk).zip(dp.chunks_mut(nk)) {
                        let dot: T = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum();
                        for (x, &pp) in drow.iter_mut().zip(prow) {
                            *x = pp * (*x - dot) * scale;
                        }
                    }
                    let mut dq = vec![T::zero(); nq * dh];
                    T::gemm(nq, nk, dh, &dp, (nk as isize, 1), kb, ds, T::zero(), &mut dq);
                    let mut dk = vec![T::zero(); nk * dh];
                    T::gemm(nk, nq, dh, &dp, (1, nk as isize), qb, ds, T::zero(), &mut dk);
                    add_block(&mut gq, qr.start, c0, dh, &dq);
                    add_block(&mut gk, kr.start, c0, dh, &dk);
                    add_block(&mut gv, kr.start, c0, dh, &dv);
                }
            }
            accumulate(grads, *q, gq);
            accumulate(grads, *k, gk);
            accumulate(grads, *v, gv);
        }
    }
}

fn add_block<T: Real>(t: &mut Tensor<T>, row0: usize, c0: usize, width: usize, block: &[T]) {
    let d = t.cols();
    let data = t.data_mut();
    for (r, chunk) in block.chunks(width).enumerate() {
        let at = (row0 + r) * d + c0;
        for (x, &y) in data[at..at + width].iter_mut().zip(chunk) {
            *x += y;
        }
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn tensor(&self) -> Tensor<T> {
        self.value().clone()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.value().shape()
    }

    pub fn item(&self) -> Result<T> {
        self.value().item()
    }

    /// Same value, cut from the graph.
    pub fn detach(self) -> Var<'t, T> {
        let v = self.tensor();
        self.tape.leaf(v)
    }

    fn other(&self, o: Var<'t, T>) -> Result<usize> {
        self.tape.own(o)
    }

    fn unary(self, f: impl Fn(T) -> T, op: impl FnOnce(usize) -> Op<T>) -> Var<'t, T> {
        let v = self.value().map(f);
        self.tape.push(v, op(self.id))
    }

    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let b = self.other(rhs)?;
        let v = {
            let (av, bv) = (self.value(), rhs.value());
            if av.cols() != bv.rows() {
                return Err(Error::Shape(format!(
                    "matmul {:?} x {:?}",
                    av.shape(),
                    bv.shape()
                )));
            }
            Tensor::matmul_t(&av, false, &bv, false)
        };
        Ok(self.tape.push(v, Op::MatMul(self.id, b)))
    }

    fn binary(
        self,
        rhs: Var<'t, T>,
        name: &str,
        f: impl Fn(T, T) -> T,
        op: impl FnOnce(usize, usize, Bcast) -> Op<T>,
    ) -> Result<Var<'t, T>> {
        let b = self.other(rhs)?;
        let (v, kind) = {
            let (av, bv) = (self.value(), rhs.value());
            let kind = broadcast_kind(av.shape(), bv.shape(), name)?;
            let cols = av.cols();
            let mut v = av.clone();
            for (i, x) in v.data_mut().iter_mut().enumerate() {
                *x = f(*x, bv.data()[bcast_index(kind, cols, i)]);
            }
            (v, kind)
        };
        Ok(self.tape.push(v, op(self.id, b, kind)))
    }

    /// Elementwise sum; `rhs` may be `1x1`, `Rx1` or `1xC`.
    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(rhs, "mul", |a, b| a * b, Op::Mul)
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary(|x| x.max(T::zero()), Op::Relu)
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(|x| T::one() / (T::one() + (-x).exp()), Op::Sigmoid)
    }

    pub fn log(self) -> Var<'t, T> {
        self.unary(|x| x.ln(), Op::Log)
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary(|x| x.exp(), Op::Exp)
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary(|x| x * c, |a| Op::Scale(a, c))
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn concat_cols(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let b = self.other(rhs)?;
        let v = {
            let (av, bv) = (self.value(), rhs.value());
            if av.rows() != bv.rows() {
                return Err(Error::Shape(format!(
                    "concat {:?} with {:?}",
                    av.shape(),
                    bv.shape()
                )));
            }
            let mut data = Vec::with_capacity(av.len() + bv.len());
            for r in 0..av.rows() {
                data.extend_from_slice(av.row(r));
                data.extend_from_slice(bv.row(r));
            }
            Tensor::from_vec(av.rows(), av.cols() + bv.cols(), data)?
        };
        Ok(self.tape.push(v, Op::ConcatCols(self.id, b)))
    }

    /// Rows `idx[0], idx[1], ...` of `self`.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t, T>> {
        let v = {
            let av = self.value();
            let mut data = Vec::with_capacity(idx.len() * av.cols());
            for &i in idx {
                if i >= av.rows() {
                    return Err(Error::Shape(format!("row {i} of {:?}", av.shape())));
                }
                data.extend_from_slice(av.row(i));
            }
            Tensor::from_vec(idx.len(), av.cols(), data)?
        };
        Ok(self.tape.push(v, Op::GatherRows(self.id, idx.into())))
    }

    /// Row `s` of the result is the sum of the rows `r` with `segments[r] == s`.
    pub fn segment_sum(self, segments: &[usize], count: usize) -> Result<Var<'t, T>> {
        let v = {
            let av = self.value();
            if segments.len() != av.rows() {
                return Err(Error::Shape(format!(
                    "{} segment ids for {} rows",
                    segments.len(),
                    av.rows()
                )));
            }
            let c = av.cols();
            let mut out = Tensor::zeros(count, c);
            let od = out.data_mut();
            for (r, &s) in segments.iter().enumerate() {
                if s >= count {
                    return Err(Error::Shape(format!("segment {s} of {count}")));
                }
                for (x, &y) in od[s * c..(s + 1) * c].iter_mut().zip(av.row(r)) {
                    *x += y;
                }
            }
            out
        };
        Ok(self.tape.push(v, Op::SegmentSum(self.id, segments.into())))
    }

    pub fn sum(self) -> Var<'t, T> {
        let s = self.value().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t, T> {
        let s = {
            let v = self.value();
            v.sum() / T::lit(v.len().max(1) as f64)
        };
        self.tape.push(Tensor::scalar(s), Op::Mean(self.id))
    }

    fn softmax_parts(&self, groups: &[Range<usize>], mask: &[bool]) -> Result<(Vec<T>, Vec<T>)> {
        let v = self.value();
        if mask.len() != v.len() {
            return Err(Error::Shape(format!("{} mask entries for {} logits", mask.len(), v.len())));
        }
        ensure_partition(groups, v.len(), "softmax")?;
        let masked = T::lit(MASKED_LOGIT);
        let x: Vec<T> = v
            .data()
            .iter()
            .zip(mask)
            .map(|(&x, &m)| if m { x } else { masked })
            .collect();
        let mut probs = vec![T::zero(); x.len()];
        let mut logp = vec![T::zero(); x.len()];
        for g in groups {
            if !mask[g.clone()].iter().any(|&m| m) {
                return Err(Error::Contract("softmax group without a valid entry".into()));
            }
            let m = x[g.clone()].iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            for i in g.clone() {
                probs[i] = (x[i] - m).exp();
            }
            let z: T = probs[g.clone()].iter().copied().sum();
            let log_z = z.ln();
            for i in g.clone() {
                probs[i] /= z;
                logp[i] = x[i] - m - log_z;
            }
        }
        Ok((probs, logp))
    }

    /// Softmax over each group of flat entries, masked entries at [`MASKED_LOGIT`].
    pub fn masked_softmax(self, groups: &[Range<usize>], mask: &[bool]) -> Result<Var<'t, T>> {
        let (probs, _) = self.softmax_parts(groups, mask)?;
        let [r, c] = self.shape();
        Ok(self.tape.push(
            Tensor::from_vec(r, c, probs)?,
            Op::MaskedSoftmax(self.id, groups.into(), mask.into()),
        ))
    }

    /// Log of [`Var::masked_softmax`], computed stably.
    pub fn masked_log_softmax(self, groups: &[Range<usize>], mask: &[bool]) -> Result<Var<'t, T>> {
        let (probs, logp) = self.softmax_parts(groups, mask)?;
        let [r, c] = self.shape();
        Ok(self.tape.push(
            Tensor::from_vec(r, c, logp)?,
            Op::MaskedLogSoftmax {
                x: self.id,
                groups: groups.into(),
                mask: mask.into(),
                probs,
            },
        ))
    }
}

/// One group per row of an `R x C` tensor.
pub fn row_groups(rows: usize, cols: usize) -> Vec<Range<usize>> {
    (0..rows).map(|r| r * cols..(r + 1) * cols).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn relu_values() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[vec![-2.0, 3.0]]));
        assert_eq!(x.relu().tensor().data(), &[0.0, 3.0]);
    }

    #[test]
    fn masked_softmax_example() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[vec![0.0, 0.0, 0.0]]));
        let y = x.masked_softmax(&row_groups(1, 3), &[true, false, true]).unwrap().tensor();
        assert!((y.at(0, 0) - 0.5).abs() < 1e-15);
        assert!(y.at(0, 1) < 1e-12);
        assert!((y.at(0, 2) - 0.5).abs() < 1e-15);
        assert!(x.masked_softmax(&row_groups(1, 3), &[false; 3]).is_err());
        let tape32 = Tape::<f32>::new();
        let x = tape32.leaf(Tensor::zeros(1, 3));
        let y = x.masked_softmax(&row_groups(1, 3), &[true, false, true]).unwrap().tensor();
        assert!(y.at(0, 1) < 1e-12);
    }

    #[test]
    fn segment_sum_example() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[vec![1.0], vec![2.0], vec![3.0]]));
        let y = x.segment_sum(&[0, 0, 1], 2).unwrap();
        assert_eq!(y.tensor().data(), &[3.0, 3.0]);
    }

    #[test]
    fn shape_mismatches_are_errors() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        assert!(matches!(a.matmul(b), Err(Error::Shape(_))));
        assert!(a.add(tape.leaf(Tensor::zeros(3, 2))).is_err());
        assert!(a.add(tape.leaf(Tensor::zeros(2, 1))).is_ok());
        assert!(a.add(tape.leaf(Tensor::zeros(1, 3))).is_ok());
        assert!(a.gather_rows(&[2]).is_err());
        assert!(a.segment_sum(&[0], 1).is_err());
        assert!(a.concat_cols(tape.leaf(Tensor::zeros(1, 1))).is_err());
    }

    #[test]
    fn linear_loss_gradient_is_the_input() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf(t(&[vec![0.3, -0.7]]));
        let x = tape.leaf(Tensor::scalar(2.5));
        let loss = x.matmul(w).unwrap().sum();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(w).data(), &[2.5, 2.5]);
        let unused = tape.leaf(Tensor::ones(2, 2));
        assert_eq!(g.get(unused).data(), &[0.0; 4]);
    }

    #[test]
    fn backward_contracts() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::ones(2, 1));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
        let s = x.sum();
        assert!(tape.backward(s).is_ok());
        assert!(matches!(tape.backward(s), Err(Error::Contract(_))));
        let ng = Tape::<f64>::no_grad();
        let y = ng.leaf(Tensor::ones(1, 1)).relu();
        assert!(ng.backward(y).is_err());
        let other = Tape::<f64>::new();
        let z = other.leaf(Tensor::ones(1, 1));
        assert!(x.add(z).is_err());
    }

    #[test]
    fn attention_rows_are_convex_combinations() {
        let tape = Tape::<f64>::new();
        let q = tape.leaf(t(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]]));
        let v = tape.leaf(t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![7.0, 7.0]]));
        let groups = [0..2, 2..3];
        let o = tape.attention(q, q, v, &groups, &groups, 1).unwrap().tensor();
        // Single-key group copies its value.
        assert_eq!(o.row(2), &[7.0, 7.0]);
        for r in 0..2 {
            assert!(o.at(r, 0) > 1.0 && o.at(r, 0) < 3.0);
        }
        assert!(tape.attention(q, q, v, &groups, &groups, 3).is_err());
        assert!(tape.attention(q, q, v, &[0..3], &groups, 1).is_err());
    }
}
