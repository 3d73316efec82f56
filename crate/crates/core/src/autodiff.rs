//! A small tape-based reverse-mode automatic differentiation engine over
//! dense row-major matrices.
//!
//! Each forward pass records nodes on a [`Graph`]; [`Graph::backward`]
//! walks the tape in reverse and accumulates exact gradients. Besides the
//! usual dense ops the tape has fused kernels for the band-pass sinc
//! filter bank and its strided convolution, which dominate the cost of the
//! overlap detector.

use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self::from_vec(1, data.len(), data)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `out += a · b`.
fn matmul_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    debug_assert_eq!(a.cols, b.rows);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a · bᵀ`.
fn matmul_bt_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    debug_assert_eq!(a.cols, b.cols);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] += ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out += aᵀ · b`.
fn matmul_at_acc(a: &Tensor, b: &Tensor, out: &mut Tensor) {
    debug_assert_eq!(a.rows, b.rows);
    for k in 0..a.rows {
        let br = b.row(k);
        for (i, &av) in a.row(k).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Band-pass sinc filter bank settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SincSpec {
    pub kernel: usize,
    pub sample_rate: f64,
    pub min_low_hz: f64,
    pub min_band_hz: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulScalar(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Swish(Var),
    Abs(Var),
    SoftmaxRows(Var),
    /// Normalizes rows, or columns when `by_cols`; stores 1/σ per line.
    Normalize { x: Var, by_cols: bool, inv_std: Vec<f64> },
    MeanAll(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Row(Var, usize),
    StackRows(Vec<Var>),
    MaxPoolRows { x: Var, argmax: Vec<usize> },
    DepthwiseConv(Var, Var),
    SincKernels { low: Var, band: Var, spec: SincSpec },
    SincConv { kernels: Var, signal: Arc<Vec<f64>>, stride: usize },
    Bce { probs: Var, labels: Vec<f64> },
    Sum(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.cols, bv.rows, "matmul {}x{} by {}x{}", av.rows, av.cols, bv.rows, bv.cols);
        let mut out = Tensor::zeros(av.rows, bv.cols);
        matmul_acc(av, bv, &mut out);
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.cols, bv.cols);
        let mut out = Tensor::zeros(av.rows, bv.rows);
        matmul_bt_acc(av, bv, &mut out);
        self.push(out, Op::MatMulBt(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.val(a), self.val(b));
        assert!(av.same_shape(bv));
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.val(a), self.val(b));
        assert!(av.same_shape(bv));
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(av.rows, av.cols, data);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1 × cols` row to every row.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.val(x), self.val(b));
        assert!(bv.rows == 1 && bv.cols == xv.cols);
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, &b) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&bv.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x, b), &[x, b])
    }

    /// Multiplies every row elementwise by a `1 × cols` row.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Var {
        let (xv, gv) = (self.val(x), self.val(g));
        assert!(gv.rows == 1 && gv.cols == xv.cols);
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, &g) in out.data[r * out.cols..(r + 1) * out.cols].iter_mut().zip(&gv.data) {
                *o *= g;
            }
        }
        self.push(out, Op::MulRow(x, g), &[x, g])
    }

    /// Multiplies by a `1 × 1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.val(s);
        assert!(sv.rows == 1 && sv.cols == 1);
        let k = sv.data[0];
        let out = self.val(x).map(|v| v * k);
        self.push(out, Op::MulScalar(x, s), &[x, s])
    }

    pub fn add_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.val(s);
        assert!(sv.rows == 1 && sv.cols == 1);
        let k = sv.data[0];
        let out = self.val(x).map(|v| v + k);
        self.push(out, Op::AddScalar(x, s), &[x, s])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.val(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.val(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.val(x).map(f64::tanh);
        self.push(out, Op::Tanh(x), &[x])
    }

    /// `x · sigmoid(x)`.
    pub fn swish(&mut self, x: Var) -> Var {
        let out = self.val(x).map(|v| v * sigmoid(v));
        self.push(out, Op::Swish(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.val(x).map(f64::abs);
        self.push(out, Op::Abs(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.val(x);
        let mut out = xv.clone();
        for r in 0..out.rows {
            let row = &mut out.data[r * out.cols..(r + 1) * out.cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(out, Op::SoftmaxRows(x), &[x])
    }

    fn normalize(&mut self, x: Var, by_cols: bool, eps: f64) -> Var {
        let xv = self.val(x);
        let (lines, n) = if by_cols { (xv.cols, xv.rows) } else { (xv.rows, xv.cols) };
        let idx = |line: usize, i: usize| if by_cols { i * xv.cols + line } else { line * xv.cols + i };
        let mut out = xv.clone();
        let mut inv_std = Vec::with_capacity(lines);
        for line in 0..lines {
            let mean = (0..n).map(|i| xv.data[idx(line, i)]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (xv.data[idx(line, i)] - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for i in 0..n {
                out.data[idx(line, i)] = (xv.data[idx(line, i)] - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(out, Op::Normalize { x, by_cols, inv_std }, &[x])
    }

    /// Zero-mean, unit-variance rows (layer normalization without affine).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        self.normalize(x, false, eps)
    }

    /// Normalizes each column over time (instance normalization).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        self.normalize(x, true, eps)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = self.val(x);
        let m = xv.data.iter().sum::<f64>() / xv.len() as f64;
        self.push(Tensor::scalar(m), Op::MeanAll(x), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.val(x);
        assert!(start + len <= xv.cols);
        let mut out = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(x, start), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.val(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.val(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.val(p);
                assert_eq!(pv.rows, rows);
                out.data[r * cols + off..r * cols + off + pv.cols].copy_from_slice(pv.row(r));
                off += pv.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn row(&mut self, x: Var, r: usize) -> Var {
        let out = Tensor::row_vector(self.val(x).row(r).to_vec());
        self.push(out, Op::Row(x, r), &[x])
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        let cols = self.val(rows[0]).cols;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let rv = self.val(r);
            assert!(rv.rows == 1 && rv.cols == cols);
            data.extend_from_slice(&rv.data);
        }
        let out = Tensor::from_vec(rows.len(), cols, data);
        self.push(out, Op::StackRows(rows.to_vec()), rows)
    }

    /// Non-overlapping max pooling over groups of `size` rows; a trailing
    /// partial group is dropped.
    pub fn max_pool_rows(&mut self, x: Var, size: usize) -> Var {
        let xv = self.val(x);
        let out_rows = xv.rows / size;
        let mut out = Tensor::zeros(out_rows, xv.cols);
        let mut argmax = vec![0usize; out_rows * xv.cols];
        for o in 0..out_rows {
            for c in 0..xv.cols {
                let mut best = o * size;
                for r in o * size + 1..(o + 1) * size {
                    if xv.at(r, c) > xv.at(best, c) {
                        best = r;
                    }
                }
                out.data[o * xv.cols + c] = xv.at(best, c);
                argmax[o * xv.cols + c] = best * xv.cols + c;
            }
        }
        self.push(out, Op::MaxPoolRows { x, argmax }, &[x])
    }

    /// Per-column convolution over rows with "same" zero padding; the
    /// kernel is `k × cols` with odd `k`.
    pub fn depthwise_conv(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.val(x), self.val(w));
        assert!(wv.cols == xv.cols && wv.rows % 2 == 1);
        let pad = wv.rows / 2;
        let mut out = Tensor::zeros(xv.rows, xv.cols);
        for t in 0..xv.rows {
            let orow = &mut out.data[t * xv.cols..(t + 1) * xv.cols];
            for i in 0..wv.rows {
                let src = t as isize + i as isize - pad as isize;
                if src < 0 || src as usize >= xv.rows {
                    continue;
                }
                for ((o, &xv), &wv) in orow.iter_mut().zip(xv.row(src as usize)).zip(wv.row(i)) {
                    *o += xv * wv;
                }
            }
        }
        self.push(out, Op::DepthwiseConv(x, w), &[x, w])
    }

    /// Builds `F × kernel` Hamming-windowed band-pass sinc filters from raw
    /// `1 × F` low-cutoff and bandwidth parameters (Hz). Band edges are
    /// `low = min_low + |low_raw|`, `high = min(low + min_band + |band_raw|, fs/2)`;
    /// each filter is normalized to unit center tap before windowing.
    pub fn sinc_kernels(&mut self, low: Var, band: Var, spec: SincSpec) -> Var {
        let (lv, bv) = (self.val(low), self.val(band));
        assert!(lv.rows == 1 && bv.rows == 1 && lv.cols == bv.cols);
        assert!(spec.kernel % 2 == 1, "sinc kernel length must be odd");
        let f = lv.cols;
        let k = spec.kernel;
        let mut out = Tensor::zeros(f, k);
        for i in 0..f {
            let (nu1, nu2, _) = band_edges(lv.data[i], bv.data[i], spec);
            for j in 0..k {
                let n = j as f64 - (k / 2) as f64;
                out.data[i * k + j] = hamming(j, k) * (band_pass(nu2, n) - band_pass(nu1, n)) / (2.0 * (nu2 - nu1));
            }
        }
        self.push(out, Op::SincKernels { low, band, spec }, &[low, band])
    }

    /// Strided valid convolution of a constant signal with each kernel row:
    /// `out[t][f] = Σ_k kernels[f][k] · signal[t·stride + k]`.
    pub fn sinc_conv(&mut self, kernels: Var, signal: Arc<Vec<f64>>, stride: usize) -> Var {
        let kv = self.val(kernels);
        let (f, k) = (kv.rows, kv.cols);
        assert!(signal.len() >= k, "signal shorter than the kernel");
        let t_out = (signal.len() - k) / stride + 1;
        let mut out = Tensor::zeros(t_out, f);
        for t in 0..t_out {
            let seg = &signal[t * stride..t * stride + k];
            for i in 0..f {
                out.data[t * f + i] = kv.row(i).iter().zip(seg).map(|(a, b)| a * b).sum();
            }
        }
        self.push(out, Op::SincConv { kernels, signal, stride }, &[kernels])
    }

    /// Mean binary cross-entropy of a `T × 1` probability column, with
    /// probabilities clamped to `[1e-7, 1 − 1e-7]`.
    pub fn bce(&mut self, probs: Var, labels: &[f64]) -> Var {
        let pv = self.val(probs);
        assert!(pv.cols == 1 && pv.rows == labels.len());
        let loss = bce_value(&pv.data, labels);
        self.push(Tensor::scalar(loss), Op::Bce { probs, labels: labels.to_vec() }, &[probs])
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let first = self.val(parts[0]).clone();
        let mut out = first;
        for &p in &parts[1..] {
            let pv = self.val(p);
            assert!(pv.same_shape(&out));
            for (o, v) in out.data.iter_mut().zip(&pv.data) {
                *o += v;
            }
        }
        self.push(out, Op::Sum(parts.to_vec()), parts)
    }

    /// Reverse pass from a scalar node. Returns one gradient slot per node;
    /// nodes that do not depend on any parameter have `None`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let lv = self.val(loss);
        assert!(lv.rows == 1 && lv.cols == 1, "backward needs a scalar");
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut Tensor)| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let shape = &self.nodes[v.0].value;
            let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.rows, shape.cols));
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(*a, &mut |ga| matmul_bt_acc(g, bv, ga));
                acc(*b, &mut |gb| matmul_at_acc(av, g, gb));
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(*a, &mut |ga| matmul_acc(g, bv, ga));
                acc(*b, &mut |gb| matmul_at_acc(g, av, gb));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v));
                acc(*b, &mut |gb| gb.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                acc(*a, &mut |ga| {
                    for ((o, gv), b) in ga.data.iter_mut().zip(&g.data).zip(&bv.data) {
                        *o += gv * b;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, gv), a) in gb.data.iter_mut().zip(&g.data).zip(&av.data) {
                        *o += gv * a;
                    }
                });
            }
            Op::AddRow(x, b) => {
                acc(*x, &mut |gx| gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v));
                acc(*b, &mut |gb| {
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::MulRow(x, gamma) => {
                let (xv, gv) = (self.val(*x), self.val(*gamma));
                acc(*x, &mut |gx| {
                    for r in 0..g.rows {
                        for ((o, v), s) in gx.data[r * g.cols..(r + 1) * g.cols].iter_mut().zip(g.row(r)).zip(&gv.data) {
                            *o += v * s;
                        }
                    }
                });
                acc(*gamma, &mut |gg| {
                    for r in 0..g.rows {
                        for ((o, v), x) in gg.data.iter_mut().zip(g.row(r)).zip(xv.row(r)) {
                            *o += v * x;
                        }
                    }
                });
            }
            Op::MulScalar(x, s) => {
                let (xv, k) = (self.val(*x), self.val(*s).data[0]);
                acc(*x, &mut |gx| gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v * k));
                acc(*s, &mut |gs| gs.data[0] += g.data.iter().zip(&xv.data).map(|(a, b)| a * b).sum::<f64>());
            }
            Op::AddScalar(x, s) => {
                acc(*x, &mut |gx| gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v));
                acc(*s, &mut |gs| gs.data[0] += g.data.iter().sum::<f64>());
            }
            Op::Scale(x, c) => {
                acc(*x, &mut |gx| gx.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v * c));
            }
            Op::Sigmoid(x) => acc(*x, &mut |gx| {
                for ((o, v), y) in gx.data.iter_mut().zip(&g.data).zip(&y.data) {
                    *o += v * y * (1.0 - y);
                }
            }),
            Op::Tanh(x) => acc(*x, &mut |gx| {
                for ((o, v), y) in gx.data.iter_mut().zip(&g.data).zip(&y.data) {
                    *o += v * (1.0 - y * y);
                }
            }),
            Op::Swish(x) => {
                let xv = self.val(*x);
                acc(*x, &mut |gx| {
                    for ((o, v), &x) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        let s = sigmoid(x);
                        *o += v * (s + x * s * (1.0 - s));
                    }
                })
            }
            Op::Abs(x) => {
                let xv = self.val(*x);
                acc(*x, &mut |gx| {
                    for ((o, v), &x) in gx.data.iter_mut().zip(&g.data).zip(&xv.data) {
                        *o += v * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
                    }
                })
            }
            Op::SoftmaxRows(x) => acc(*x, &mut |gx| {
                for r in 0..y.rows {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yv), gv) in gx.data[r * y.cols..(r + 1) * y.cols].iter_mut().zip(yr).zip(gr) {
                        *o += yv * (gv - dot);
                    }
                }
            }),
            Op::Normalize { x, by_cols, inv_std } => {
                let by_cols = *by_cols;
                let (lines, n) = if by_cols { (y.cols, y.rows) } else { (y.rows, y.cols) };
                let idx = |line: usize, i: usize| if by_cols { i * y.cols + line } else { line * y.cols + i };
                acc(*x, &mut |gx| {
                    for (line, &inv) in inv_std.iter().enumerate().take(lines) {
                        let mut sum_g = 0.0;
                        let mut sum_gy = 0.0;
                        for i in 0..n {
                            let j = idx(line, i);
                            sum_g += g.data[j];
                            sum_gy += g.data[j] * y.data[j];
                        }
                        let nf = n as f64;
                        for i in 0..n {
                            let j = idx(line, i);
                            gx.data[j] += inv * (g.data[j] - sum_g / nf - y.data[j] * sum_gy / nf);
                        }
                    }
                })
            }
            Op::MeanAll(x) => {
                let n = self.val(*x).len() as f64;
                let gv = g.data[0] / n;
                acc(*x, &mut |gx| gx.data.iter_mut().for_each(|o| *o += gv));
            }
            Op::SliceCols(x, start) => {
                let start = *start;
                acc(*x, &mut |gx| {
                    for r in 0..g.rows {
                        let cols = gx.cols;
                        for (o, v) in gx.data[r * cols + start..r * cols + start + g.cols].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.val(p).cols;
                    acc(p, &mut |gp| {
                        for r in 0..g.rows {
                            for (o, v) in gp.data[r * w..(r + 1) * w].iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += v;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::Row(x, r) => {
                let r = *r;
                acc(*x, &mut |gx| {
                    let cols = gx.cols;
                    for (o, v) in gx.data[r * cols..(r + 1) * cols].iter_mut().zip(&g.data) {
                        *o += v;
                    }
                })
            }
            Op::StackRows(rows) => {
                for (r, &p) in rows.iter().enumerate() {
                    acc(p, &mut |gp| {
                        for (o, v) in gp.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    });
                }
            }
            Op::MaxPoolRows { x, argmax } => acc(*x, &mut |gx| {
                for (&src, v) in argmax.iter().zip(&g.data) {
                    gx.data[src] += v;
                }
            }),
            Op::DepthwiseConv(x, w) => {
                let (xv, wv) = (self.val(*x), self.val(*w));
                let pad = wv.rows / 2;
                let cols = xv.cols;
                acc(*x, &mut |gx| {
                    for t in 0..xv.rows {
                        for i in 0..wv.rows {
                            let src = t as isize + i as isize - pad as isize;
                            if src < 0 || src as usize >= xv.rows {
                                continue;
                            }
                            let s = src as usize;
                            for ((o, gv), wv) in gx.data[s * cols..(s + 1) * cols].iter_mut().zip(g.row(t)).zip(wv.row(i)) {
                                *o += gv * wv;
                            }
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for t in 0..xv.rows {
                        for i in 0..wv.rows {
                            let src = t as isize + i as isize - pad as isize;
                            if src < 0 || src as usize >= xv.rows {
                                continue;
                            }
                            for ((o, gv), xv) in gw.data[i * cols..(i + 1) * cols].iter_mut().zip(g.row(t)).zip(xv.row(src as usize)) {
                                *o += gv * xv;
                            }
                        }
                    }
                });
            }
            Op::SincKernels { low, band, spec } => {
                let (lv, bv) = (self.val(*low), self.val(*band));
                let k = spec.kernel;
                let mut d_low = vec![0.0; lv.cols];
                let mut d_band = vec![0.0; lv.cols];
                for i in 0..lv.cols {
                    let (nu1, nu2, clamped) = band_edges(lv.data[i], bv.data[i], *spec);
                    let d = 2.0 * (nu2 - nu1);
                    let mut g1 = 0.0;
                    let mut g2 = 0.0;
                    for j in 0..k {
                        let n = j as f64 - (k / 2) as f64;
                        let num = band_pass(nu2, n) - band_pass(nu1, n);
                        let w = hamming(j, k);
                        let gv = g.data[i * k + j];
                        // ∂/∂ν of sin(2πνn)/(πn) is 2cos(2πνn), also at n = 0
                        g2 += gv * w * (2.0 * (2.0 * PI * nu2 * n).cos() * d - 2.0 * num) / (d * d);
                        g1 += gv * w * (-2.0 * (2.0 * PI * nu1 * n).cos() * d + 2.0 * num) / (d * d);
                    }
                    let g2 = if clamped { 0.0 } else { g2 };
                    let fs = spec.sample_rate;
                    d_low[i] = (g1 + g2) * signum(lv.data[i]) / fs;
                    d_band[i] = g2 * signum(bv.data[i]) / fs;
                }
                acc(*low, &mut |gl| gl.data.iter_mut().zip(&d_low).for_each(|(o, v)| *o += v));
                acc(*band, &mut |gb| gb.data.iter_mut().zip(&d_band).for_each(|(o, v)| *o += v));
            }
            Op::SincConv { kernels, signal, stride } => {
                let stride = *stride;
                acc(*kernels, &mut |gk| {
                    let (f, k) = (gk.rows, gk.cols);
                    for t in 0..g.rows {
                        let seg = &signal[t * stride..t * stride + k];
                        for i in 0..f {
                            let gv = g.data[t * f + i];
                            if gv == 0.0 {
                                continue;
                            }
                            for (o, s) in gk.data[i * k..(i + 1) * k].iter_mut().zip(seg) {
                                *o += gv * s;
                            }
                        }
                    }
                })
            }
            Op::Bce { probs, labels } => {
                let pv = self.val(*probs);
                let scale = g.data[0] / labels.len() as f64;
                acc(*probs, &mut |gp| {
                    for ((o, &p), &y) in gp.data.iter_mut().zip(&pv.data).zip(labels) {
                        if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                            *o += scale * (-y / p + (1.0 - y) / (1.0 - p));
                        }
                    }
                })
            }
            Op::Sum(parts) => {
                for &p in parts {
                    acc(p, &mut |gp| gp.data.iter_mut().zip(&g.data).for_each(|(o, v)| *o += v));
                }
            }
        }
    }
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn hamming(j: usize, k: usize) -> f64 {
    0.54 - 0.46 * (2.0 * PI * j as f64 / (k - 1) as f64).cos()
}

/// `sin(2πνn)/(πn)`, equal to `2ν` at `n = 0`.
fn band_pass(nu: f64, n: f64) -> f64 {
    if n == 0.0 {
        2.0 * nu
    } else {
        (2.0 * PI * nu * n).sin() / (PI * n)
    }
}

/// Normalized band edges and whether the upper edge hit Nyquist.
fn band_edges(low_raw: f64, band_raw: f64, spec: SincSpec) -> (f64, f64, bool) {
    let fs = spec.sample_rate;
    let low = spec.min_low_hz + low_raw.abs();
    let high = low + spec.min_band_hz + band_raw.abs();
    let nyq = fs / 2.0;
    if high >= nyq {
        (low / fs, 0.5, true)
    } else {
        (low / fs, high / fs, false)
    }
}

/// Actual band edges in Hz for raw sinc parameters.
pub fn sinc_band_hz(low_raw: f64, band_raw: f64, spec: SincSpec) -> (f64, f64) {
    let (a, b, _) = band_edges(low_raw, band_raw, spec);
    (a * spec.sample_rate, b * spec.sample_rate)
}

pub fn bce_value(probs: &[f64], labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    -probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / n
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf, zeros when it did not influence the loss.
    pub fn of(&self, v: Var, shape: &Tensor) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(shape.rows, shape.cols))
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}
