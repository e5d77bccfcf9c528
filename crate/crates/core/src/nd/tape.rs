//! Reverse-mode differentiation over dense 2-D tensors.
//!
//! A [`Tape`] borrows a [`ParamStore`] and records every operation applied
//! to [`Var`] handles. Parameters are never copied onto the tape: `Param`
//! and `Lookup` nodes read straight from the store. [`Tape::backward`]
//! walks the recorded nodes in reverse creation order (a valid reverse
//! topological order, since inputs always precede outputs) and
//! accumulates parameter gradients into a [`ParamGrads`].

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{matmul_nt_acc, matmul_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup {
        table: ParamId,
        ids: Vec<usize>,
    },
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows {
        src: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    MeanRows(Var),
    Sum(Var),
    Pick(Var, usize, usize),
    Reshape(Var),
    LinComb(Vec<(Var, f64)>),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        softmax_row(x.row(r), out.row_mut(r));
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Gathers rows `ids` of the parameter table `table`.
    pub fn lookup(&mut self, table: ParamId, ids: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        let cols = t.cols();
        let mut out = Tensor::zeros(ids.len(), cols);
        for (k, &id) in ids.iter().enumerate() {
            if id >= t.rows() {
                return Err(Error::OutOfRange {
                    what: "embedding table",
                    index: id,
                    size: t.rows(),
                });
            }
            out.row_mut(k).copy_from_slice(t.row(id));
        }
        self.nodes.push(Node {
            value: Some(out),
            op: Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            needs_grad: true,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a), &[a])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data).expect("shape checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// `a (n×m) + row (1×m)`, broadcasting the row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr[0] != 1 || sr[1] != sa[1] {
            return Err(Error::shape("add_row", format!("{sa:?} + {sr:?}")));
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..sa[0] {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.affine(a, k, 0.0)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax(self.value(a));
        self.push(out, Op::Softmax(a), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            log_softmax_row(x.row(r), out.row_mut(r));
        }
        self.push(out, Op::LogSoftmax(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&v| self.shape(v)[0])
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        if parts.iter().any(|&v| self.shape(v)[0] != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&v| self.shape(v)[1]).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &v in parts {
                let src = self.value(v).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&v| self.shape(v)[1])
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        if parts.iter().any(|&v| self.shape(v)[1] != cols) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut data = Vec::new();
        for &v in parts {
            data.extend_from_slice(self.value(v).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(a);
        if start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {cols} columns", start + len),
            ));
        }
        let mut out = Tensor::zeros(rows, len);
        for r in 0..rows {
            out.row_mut(r)
                .copy_from_slice(&self.value(a).row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let mut out = Tensor::zeros(idx.len(), src.cols());
        for (k, &i) in idx.iter().enumerate() {
            if i >= src.rows() {
                return Err(Error::OutOfRange {
                    what: "gather_rows",
                    index: i,
                    size: src.rows(),
                });
            }
            out.row_mut(k).copy_from_slice(src.row(i));
        }
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), &[a]))
    }

    /// `out[targets[k]] += weights[k] · src[k]` into a zero `rows × cols`
    /// tensor.
    pub fn scatter_rows(&mut self, src: Var, targets: &[usize], weights: &[f64], rows: usize) -> Result<Var> {
        let s = self.value(src);
        if targets.len() != s.rows() || weights.len() != s.rows() {
            return Err(Error::shape(
                "scatter_rows",
                format!(
                    "{} source rows, {} targets, {} weights",
                    s.rows(),
                    targets.len(),
                    weights.len()
                ),
            ));
        }
        let mut out = Tensor::zeros(rows, s.cols());
        for (k, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if t >= rows {
                return Err(Error::OutOfRange {
                    what: "scatter_rows",
                    index: t,
                    size: rows,
                });
            }
            for (o, &x) in out.row_mut(t).iter_mut().zip(s.row(k)) {
                *o += w * x;
            }
        }
        let op = Op::ScatterRows {
            src,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
        };
        Ok(self.push(out, op, &[src]))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(Error::shape("mean_rows", "input has zero rows"));
        }
        let mut out = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (o, &v) in out.row_mut(0).iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        out.scale_assign(1.0 / n);
        Ok(self.push(out, Op::MeanRows(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    /// The scalar `a[r][c]` as a `1 × 1` node.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let [rows, cols] = self.shape(a);
        if r >= rows || c >= cols {
            return Err(Error::OutOfRange {
                what: "pick",
                index: r * cols + c,
                size: rows * cols,
            });
        }
        let out = Tensor::scalar(self.value(a).get(r, c));
        Ok(self.push(out, Op::Pick(a, r, c), &[a]))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let data = self.value(a).data().to_vec();
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// `Σ w_k · v_k` over same-shaped nodes.
    pub fn lin_comb(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let first = terms.first().ok_or_else(|| Error::shape("lin_comb", "no terms"))?;
        let [rows, cols] = self.shape(first.0);
        let mut out = Tensor::zeros(rows, cols);
        for &(v, w) in terms {
            let x = self.value(v);
            if x.shape() != [rows, cols] {
                return Err(Error::shape("lin_comb", "term shapes differ"));
            }
            for (o, &y) in out.data_mut().iter_mut().zip(x.data()) {
                *o += w * y;
            }
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        Ok(self.push(out, Op::LinComb(terms.to_vec()), &inputs))
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<ParamGrads> {
        let mut grads = ParamGrads::for_store(self.params);
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Tape::backward`], adding into an existing accumulator.
    pub fn backward_into(&self, loss: Var, out: &mut ParamGrads) -> Result<()> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop_node(node, i, &dy, &mut grads, out);
        }
        Ok(())
    }

    /// Gradient buffer for `v`. Parameter nodes accumulate straight into
    /// `out`, so large weights never get a per-node copy.
    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], out: &'g mut ParamGrads, v: Var) -> Option<&'g mut Tensor> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        if let Op::Param(id) = node.op {
            return Some(out.slot(id));
        }
        let [r, c] = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
    }

    fn backprop_node(
        &self,
        node: &Node,
        index: usize,
        dy: &Tensor,
        grads: &mut [Option<Tensor>],
        out: &mut ParamGrads,
    ) {
        let value = |v: Var| self.value(v);
        let y = self.value(Var(index));
        match &node.op {
            Op::Constant => {}
            Op::Param(id) => out.slot(*id).add_assign(dy),
            Op::Lookup { table, ids } => {
                let g = out.slot(*table);
                for (k, &id) in ids.iter().enumerate() {
                    for (o, &d) in g.row_mut(id).iter_mut().zip(dy.row(k)) {
                        *o += d;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (value(*a), value(*b));
                if let Some(ga) = self.slot(grads, out, *a) {
                    matmul_nt_acc(dy, tb, ga);
                }
                if let Some(gb) = self.slot(grads, out, *b) {
                    matmul_tn_acc(ta, dy, gb);
                }
            }
            Op::Transpose(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    ga.add_assign(&dy.transpose());
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(g) = self.slot(grads, out, *v) {
                        g.add_assign(dy);
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    ga.add_assign(dy);
                }
                if let Some(gr) = self.slot(grads, out, *row) {
                    for r in 0..dy.rows() {
                        for (o, &d) in gr.row_mut(0).iter_mut().zip(dy.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    ga.add_assign(dy);
                }
                if let Some(gb) = self.slot(grads, out, *b) {
                    for (o, &d) in gb.data_mut().iter_mut().zip(dy.data()) {
                        *o -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (value(*a), value(*b));
                if let Some(ga) = self.slot(grads, out, *a) {
                    for ((o, &d), &x) in ga.data_mut().iter_mut().zip(dy.data()).zip(tb.data()) {
                        *o += d * x;
                    }
                }
                if let Some(gb) = self.slot(grads, out, *b) {
                    for ((o, &d), &x) in gb.data_mut().iter_mut().zip(dy.data()).zip(ta.data()) {
                        *o += d * x;
                    }
                }
            }
            Op::Affine(a, k) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for (o, &d) in ga.data_mut().iter_mut().zip(dy.data()) {
                        *o += k * d;
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for ((o, &d), &s) in ga.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        *o += d * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for ((o, &d), &t) in ga.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        *o += d * (1.0 - t * t);
                    }
                }
            }
            Op::Relu(a) => {
                let x = value(*a);
                if let Some(ga) = self.slot(grads, out, *a) {
                    for ((o, &d), &v) in ga.data_mut().iter_mut().zip(dy.data()).zip(x.data()) {
                        if v > 0.0 {
                            *o += d;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for r in 0..y.rows() {
                        let (s, d) = (y.row(r), dy.row(r));
                        let dot: f64 = s.iter().zip(d).map(|(a, b)| a * b).sum();
                        for ((o, &si), &di) in ga.row_mut(r).iter_mut().zip(s).zip(d) {
                            *o += si * (di - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for r in 0..y.rows() {
                        let (ls, d) = (y.row(r), dy.row(r));
                        let total: f64 = d.iter().sum();
                        for ((o, &l), &di) in ga.row_mut(r).iter_mut().zip(ls).zip(d) {
                            *o += di - l.exp() * total;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &v in parts {
                    let w = self.shape(v)[1];
                    if let Some(g) = self.slot(grads, out, v) {
                        for r in 0..dy.rows() {
                            for (o, &d) in g.row_mut(r).iter_mut().zip(&dy.row(r)[off..off + w]) {
                                *o += d;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = dy.cols();
                let mut off = 0;
                for &v in parts {
                    let n = self.shape(v)[0] * cols;
                    if let Some(g) = self.slot(grads, out, v) {
                        for (o, &d) in g.data_mut().iter_mut().zip(&dy.data()[off..off + n]) {
                            *o += d;
                        }
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    let w = dy.cols();
                    for r in 0..dy.rows() {
                        for (o, &d) in ga.row_mut(r)[*start..*start + w].iter_mut().zip(dy.row(r)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &d) in ga.row_mut(i).iter_mut().zip(dy.row(k)) {
                            *o += d;
                        }
                    }
                }
            }
            Op::ScatterRows { src, targets, weights } => {
                if let Some(gs) = self.slot(grads, out, *src) {
                    for (k, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                        for (o, &d) in gs.row_mut(k).iter_mut().zip(dy.row(t)) {
                            *o += w * d;
                        }
                    }
                }
            }
            Op::MeanRows(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    let n = ga.rows() as f64;
                    for r in 0..ga.rows() {
                        for (o, &d) in ga.row_mut(r).iter_mut().zip(dy.row(0)) {
                            *o += d / n;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    let d = dy.item();
                    for o in ga.data_mut() {
                        *o += d;
                    }
                }
            }
            Op::Pick(a, r, c) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    let cols = ga.cols();
                    ga.data_mut()[r * cols + c] += dy.item();
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.slot(grads, out, *a) {
                    for (o, &d) in ga.data_mut().iter_mut().zip(dy.data()) {
                        *o += d;
                    }
                }
            }
            Op::LinComb(terms) => {
                for &(v, w) in terms {
                    if let Some(g) = self.slot(grads, out, v) {
                        for (o, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                            *o += w * d;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values.iter().map(|(n, t)| s.add(*n, t.clone()).unwrap()).collect();
        (s, ids)
    }

    #[test]
    fn activations_basic_values() {
        let (s, _) = store_with(&[]);
        let mut tape = Tape::new(&s);
        let x = tape.constant(Tensor::row_vector(vec![0.0, -1.0]));
        let sg = tape.sigmoid(x);
        assert_eq!(tape.value(sg).data()[0], 0.5);
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data()[1], 0.0);
        let z = tape.constant(Tensor::row_vector(vec![0.0, 0.0]));
        let sm = tape.softmax(z);
        assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_shift_invariant() {
        let (s, _) = store_with(&[]);
        let mut tape = Tape::new(&s);
        let a = tape.constant(Tensor::row_vector(vec![1.0, 2.0, -3.0]));
        let b = tape.affine(a, 1.0, 1000.0);
        let (sa, sb) = (tape.softmax(a), tape.softmax(b));
        let total: f64 = tape.value(sa).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (x, y) in tape.value(sa).data().iter().zip(tape.value(sb).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lookup_accumulates_duplicates() {
        let table = Tensor::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let (s, ids) = store_with(&[("emb", table)]);
        let mut tape = Tape::new(&s);
        let first = tape.lookup(ids[0], &[0]).unwrap();
        assert_eq!(tape.value(first).data(), &[1.0, 2.0]);
        let rows = tape.lookup(ids[0], &[1, 1]).unwrap();
        let w = tape.constant(Tensor::from_vec(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let prod = tape.mul(rows, w).unwrap();
        let loss = tape.sum(prod);
        let g = tape.backward(loss).unwrap();
        let gt = g.get(ids[0]).unwrap();
        assert_eq!(gt.row(1), &[4.0, 6.0]);
        assert_eq!(gt.row(0), &[0.0, 0.0]);
        assert!(tape.lookup(ids[0], &[3]).is_err());
    }

    #[test]
    fn unused_params_get_zero_gradient() {
        let (s, ids) = store_with(&[("a", Tensor::scalar(2.0)), ("b", Tensor::scalar(5.0))]);
        let mut tape = Tape::new(&s);
        let a = tape.param(ids[0]);
        let b = tape.param(ids[1]);
        let _unused = tape.mul(b, b).unwrap();
        let loss = tape.mul(a, a).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.dense(ids[0]).item(), 4.0);
        assert_eq!(g.dense(ids[1]).item(), 0.0);
    }

    #[test]
    fn reused_tensor_gradients_add() {
        // d/dx (x·x + 3x) at 2 = 7
        let (s, ids) = store_with(&[("x", Tensor::scalar(2.0))]);
        let mut tape = Tape::new(&s);
        let x = tape.param(ids[0]);
        let sq = tape.mul(x, x).unwrap();
        let lin = tape.scale(x, 3.0);
        let loss = tape.add(sq, lin).unwrap();
        assert_eq!(tape.backward(loss).unwrap().dense(ids[0]).item(), 7.0);
    }

    #[test]
    fn mean_rows_rejects_empty() {
        let (s, _) = store_with(&[]);
        let mut tape = Tape::new(&s);
        let e = tape.constant(Tensor::zeros(0, 3));
        assert!(tape.mean_rows(e).is_err());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let (s, ids) = store_with(&[("x", Tensor::zeros(1, 2))]);
        let mut tape = Tape::new(&s);
        let x = tape.param(ids[0]);
        assert!(tape.backward(x).is_err());
    }
}
