//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation as it is evaluated. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates gradients for every node. All values are 2-D (`rows x cols`);
//! vectors are single rows.

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Sin(Var),
    SoftmaxRows(Var),
    /// Row softmax where entry `(i, j)` is forced to zero for `j > i`.
    CausalSoftmax(Var),
    LayerNormRows { a: Var, normalized: Vec<f64>, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols { a: Var, start: usize },
    ConcatRows(Vec<Var>),
    SliceRows { a: Var, start: usize },
    GatherRows { table: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Clone, Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `a (n x k) * b (k x m)`. Zero entries of `a` are skipped, so masked
/// attention weights never touch the values they mask.
fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.shape(v), (1, 1), "not a scalar");
        self.nodes[v.0].value[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let (r, c) = self.shape(v);
        Tensor::new(vec![r, c], self.value(v).to_vec())
    }

    /// Records a constant or parameter.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let (r, c) = t.dims();
        self.push(r, c, t.data.clone(), Op::Leaf)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Var {
        assert_eq!(rows * cols, data.len());
        self.push(rows, cols, data, Op::Leaf)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, value, op)
    }

    fn row_broadcast(&self, a: Var, b: Var, what: &str) {
        let (_, ca) = self.shape(a);
        assert_eq!(self.shape(b), (1, ca), "{what}: expected a 1 x {ca} row");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(r, c, value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        self.row_broadcast(a, b, "add_row");
        let (r, c) = self.shape(a);
        let bv = self.value(b);
        let value = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % c])
            .collect();
        self.push(r, c, value, Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push(r, c, value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let (r, c) = self.shape(a);
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push(r, c, value, Op::Mul(a, b))
    }

    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        self.row_broadcast(a, b, "mul_row");
        let (r, c) = self.shape(a);
        let bv = self.value(b);
        let value = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x * bv[i % c])
            .collect();
        self.push(r, c, value, Op::MulRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dimensions {k} vs {k2}");
        let value = matmul(self.value(a), self.value(b), n, k, m);
        self.push(n, m, value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = transpose(self.value(a), r, c);
        self.push(c, r, value, Op::Transpose(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.map(a, f64::sin, Op::Sin(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut value = vec![0.0; r * c];
        let av = self.value(a);
        for i in 0..r {
            softmax_row(&av[i * c..(i + 1) * c], &mut value[i * c..(i + 1) * c]);
        }
        self.push(r, c, value, Op::SoftmaxRows(a))
    }

    /// Softmax of row `i` over columns `0..=i`; later columns are exactly 0
    /// and never read.
    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut value = vec![0.0; r * c];
        let av = self.value(a);
        for i in 0..r {
            let keep = (i + 1).min(c);
            softmax_row(&av[i * c..i * c + keep], &mut value[i * c..i * c + keep]);
        }
        self.push(r, c, value, Op::CausalSoftmax(a))
    }

    /// Per-row standardization (population variance, eps = 1e-5), no affine.
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let av = self.value(a);
        let mut normalized = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                normalized[i * c + j] = (row[j] - mean) * is;
            }
        }
        let value = normalized.clone();
        self.push(
            r,
            c,
            value,
            Op::LayerNormRows {
                a,
                normalized,
                inv_std,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: nothing to concatenate");
        let r = self.shape(parts[0]).0;
        let mut c = 0;
        for &p in parts {
            assert_eq!(self.shape(p).0, r, "concat_cols: row mismatch");
            c += self.shape(p).1;
        }
        let mut value = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p).1;
                value.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        self.push(r, c, value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= c, "slice_cols: {start}+{len} exceeds {c}");
        let av = self.value(a);
        let mut value = Vec::with_capacity(r * len);
        for i in 0..r {
            value.extend_from_slice(&av[i * c + start..i * c + start + len]);
        }
        self.push(r, len, value, Op::SliceCols { a, start })
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: nothing to concatenate");
        let c = self.shape(parts[0]).1;
        let mut r = 0;
        let mut value = Vec::new();
        for &p in parts {
            assert_eq!(self.shape(p).1, c, "concat_rows: column mismatch");
            r += self.shape(p).0;
            value.extend_from_slice(self.value(p));
        }
        self.push(r, c, value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (r, c) = self.shape(a);
        assert!(start + len <= r, "slice_rows: {start}+{len} exceeds {r}");
        let value = self.value(a)[start * c..(start + len) * c].to_vec();
        self.push(len, c, value, Op::SliceRows { a, start })
    }

    /// Stacks rows `idx` of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let (r, c) = self.shape(table);
        let tv = self.value(table);
        let mut value = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < r, "gather_rows: index {i} out of {r} rows");
            value.extend_from_slice(&tv[i * c..(i + 1) * c]);
        }
        self.push(idx.len(), c, value, Op::GatherRows { table, idx: idx.to_vec() })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(1, 1, vec![s], Op::Mean(a))
    }

    /// Mean over rows of `-log softmax(logits[r])[labels[r]]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(labels.len(), r, "cross_entropy: one label per row");
        let lv = self.value(logits);
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = &lv[i * c..(i + 1) * c];
            assert!(labels[i] < c, "cross_entropy: label {} out of {c}", labels[i]);
            softmax_row(row, &mut probs[i * c..(i + 1) * c]);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[labels[i]];
        }
        loss /= r as f64;
        self.push(
            1,
            1,
            vec![loss],
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Gradients of the scalar `root` with respect to every recorded node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[root.0][0] = 1.0;
        for id in (0..=root.0).rev() {
            let g = std::mem::take(&mut grads[id]);
            if g.iter().all(|&x| x == 0.0) {
                grads[id] = g;
                continue;
            }
            let node = &self.nodes[id];
            let (rows, cols) = (node.rows, node.cols);
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], 1.0, &g);
                }
                Op::AddRow(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    let gb = &mut grads[b.0];
                    for (i, &x) in g.iter().enumerate() {
                        gb[i % cols] += x;
                    }
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads[a.0], 1.0, &g);
                    axpy(&mut grads[b.0], -1.0, &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for i in 0..g.len() {
                        grads[a.0][i] += g[i] * bv[i];
                        grads[b.0][i] += g[i] * av[i];
                    }
                }
                Op::MulRow(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for i in 0..g.len() {
                        grads[a.0][i] += g[i] * bv[i % cols];
                        grads[b.0][i % cols] += g[i] * av[i];
                    }
                }
                Op::Scale(a, s) => axpy(&mut grads[a.0], *s, &g),
                Op::MatMul(a, b) => {
                    let (n, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let m = cols;
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    // dA = G B^T, dB = A^T G
                    let bt = transpose(bv, k, m);
                    let da = matmul(&g, &bt, n, m, k);
                    axpy(&mut grads[a.0], 1.0, &da);
                    let at = transpose(av, n, k);
                    let db = matmul(&at, &g, k, n, m);
                    axpy(&mut grads[b.0], 1.0, &db);
                }
                Op::Transpose(a) => {
                    let gt = transpose(&g, rows, cols);
                    axpy(&mut grads[a.0], 1.0, &gt);
                }
                Op::Sigmoid(a) => {
                    for i in 0..g.len() {
                        let y = node.value[i];
                        grads[a.0][i] += g[i] * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for i in 0..g.len() {
                        let y = node.value[i];
                        grads[a.0][i] += g[i] * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    for i in 0..g.len() {
                        if av[i] > 0.0 {
                            grads[a.0][i] += g[i];
                        }
                    }
                }
                Op::Exp(a) => {
                    for i in 0..g.len() {
                        grads[a.0][i] += g[i] * node.value[i];
                    }
                }
                Op::Sin(a) => {
                    let av = &self.nodes[a.0].value;
                    for i in 0..g.len() {
                        grads[a.0][i] += g[i] * av[i].cos();
                    }
                }
                Op::SoftmaxRows(a) | Op::CausalSoftmax(a) => {
                    let y = &node.value;
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(g, y)| g * y).sum();
                        for j in r {
                            grads[a.0][j] += y[j] * (g[j] - dot);
                        }
                    }
                }
                Op::LayerNormRows {
                    a,
                    normalized,
                    inv_std,
                } => {
                    let n = cols as f64;
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let gm = g[r.clone()].iter().sum::<f64>() / n;
                        let gxm = g[r.clone()]
                            .iter()
                            .zip(&normalized[r.clone()])
                            .map(|(g, x)| g * x)
                            .sum::<f64>()
                            / n;
                        for j in r {
                            grads[a.0][j] += inv_std[i] * (g[j] - gm - normalized[j] * gxm);
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.nodes[p.0].cols;
                        for i in 0..rows {
                            for j in 0..pc {
                                grads[p.0][i * pc + j] += g[i * cols + offset + j];
                            }
                        }
                        offset += pc;
                    }
                }
                Op::SliceCols { a, start } => {
                    let ac = self.nodes[a.0].cols;
                    for i in 0..rows {
                        for j in 0..cols {
                            grads[a.0][i * ac + start + j] += g[i * cols + j];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        axpy(&mut grads[p.0], 1.0, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceRows { a, start } => {
                    let off = start * cols;
                    for (i, &x) in g.iter().enumerate() {
                        grads[a.0][off + i] += x;
                    }
                }
                Op::GatherRows { table, idx } => {
                    for (r, &t) in idx.iter().enumerate() {
                        for j in 0..cols {
                            grads[table.0][t * cols + j] += g[r * cols + j];
                        }
                    }
                }
                Op::Sum(a) => {
                    for x in grads[a.0].iter_mut() {
                        *x += g[0];
                    }
                }
                Op::Mean(a) => {
                    let n = grads[a.0].len() as f64;
                    for x in grads[a.0].iter_mut() {
                        *x += g[0] / n;
                    }
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let c = self.nodes[logits.0].cols;
                    let n = labels.len() as f64;
                    for (i, &l) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == l { 1.0 } else { 0.0 };
                            grads[logits.0][i * c + j] += g[0] * (probs[i * c + j] - onehot) / n;
                        }
                    }
                }
            }
            grads[id] = g;
        }
        Gradients { grads }
    }
}

fn axpy(dst: &mut [f64], s: f64, src: &[f64]) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_values_and_grads() {
        let mut t = Tape::new();
        let a = t.constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = t.constant(2, 1, vec![5.0, 6.0]);
        let c = t.matmul(a, b);
        assert_eq!(t.value(c), &[17.0, 39.0]);
        let s = t.sum(c);
        let g = t.backward(s);
        assert_eq!(g.of(b), &[4.0, 6.0]);
        assert_eq!(g.of(a), &[5.0, 6.0, 5.0, 6.0]);
    }

    #[test]
    fn causal_softmax_zeroes_future() {
        let mut t = Tape::new();
        let a = t.constant(2, 2, vec![0.3, 100.0, 1.0, 1.0]);
        let s = t.causal_softmax(a);
        assert_eq!(t.value(s), &[1.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn cross_entropy_uniform() {
        let mut t = Tape::new();
        let l = t.constant(1, 26, vec![0.0; 26]);
        let ce = t.cross_entropy(l, &[3]);
        assert!((t.scalar(ce) - 26f64.ln()).abs() < 1e-12);
    }
}
