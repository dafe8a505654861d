//! Tape-based reverse-mode differentiation over row-major `f64` matrices.
//!
//! Rows are time steps, columns are features.

use ndarray::{s, Array1, Array2, Axis, Zip};

/// Trainable tensors, addressed by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.values.iter().map(|v| Array2::zeros(v.raw_dim())).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Array2<f64>),
    Sigmoid(Var),
    Swish(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Unfold(Var, usize),
    DepthwiseConv(Var, Var),
    Nll(Var, Vec<usize>, f64),
    BceLogits(Var, Array2<f64>, f64),
    DotConst(Var, Array2<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Records operations for one forward pass.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub const LN_EPS: f64 = 1e-5;

fn row_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn row_log_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// `out[t, j*C + c] = x[t + j - k/2, c]`, zero outside the sequence.
fn unfold(x: &Array2<f64>, k: usize) -> Array2<f64> {
    let (t, c) = x.dim();
    let pad = k / 2;
    let mut out = Array2::zeros((t, k * c));
    for j in 0..k {
        let lo = pad.saturating_sub(j);
        let hi = (t + pad).saturating_sub(j).min(t);
        if lo >= hi {
            continue;
        }
        out.slice_mut(s![lo..hi, j * c..(j + 1) * c])
            .assign(&x.slice(s![lo + j - pad..hi + j - pad, ..]));
    }
    out
}

fn depthwise(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (t, _) = x.dim();
    let k = w.nrows();
    let pad = k / 2;
    let mut out = Array2::zeros(x.raw_dim());
    for j in 0..k {
        let lo = pad.saturating_sub(j);
        let hi = (t + pad).saturating_sub(j).min(t);
        if lo >= hi {
            continue;
        }
        let wj = w.row(j);
        let src = x.slice(s![lo + j - pad..hi + j - pad, ..]);
        let mut dst = out.slice_mut(s![lo..hi, ..]);
        Zip::from(dst.rows_mut()).and(src.rows()).for_each(|mut d, s| {
            Zip::from(&mut d).and(&s).and(&wj).for_each(|d, &s, &w| *d += s * w);
        });
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: usize) -> Var {
        let value = self.params.values[id].clone();
        self.push(value, Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Add a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn mul_const(&mut self, a: Var, m: Array2<f64>) -> Var {
        let v = self.value(a) * &m;
        self.push(v, Op::MulConst(a, m))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn swish(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        self.push(v, Op::Swish(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mean = xv.sum_axis(Axis(1)) / n;
        let centered = xv - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        let v = &xhat * self.value(gamma) + self.value(beta);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = row_softmax(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = row_log_softmax(self.value(a));
        self.push(v, Op::LogSoftmax(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("matching row counts");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Stack `k` time-shifted copies side by side (same padding).
    pub fn unfold(&mut self, a: Var, k: usize) -> Var {
        let v = unfold(self.value(a), k);
        self.push(v, Op::Unfold(a, k))
    }

    /// Per-channel convolution over time with a `k x C` kernel (same padding).
    pub fn depthwise_conv(&mut self, a: Var, w: Var) -> Var {
        let v = depthwise(self.value(a), self.value(w));
        self.push(v, Op::DepthwiseConv(a, w))
    }

    /// `-scale * sum_t logp[t, targets[t]]`.
    pub fn nll(&mut self, logp: Var, targets: Vec<usize>, scale: f64) -> Var {
        let lp = self.value(logp);
        let s: f64 = targets.iter().enumerate().map(|(t, &y)| lp[[t, y]]).sum();
        self.push(Array2::from_elem((1, 1), -scale * s), Op::Nll(logp, targets, scale))
    }

    /// Binary cross-entropy on logits against 0/1 targets, summed and scaled.
    pub fn bce_logits(&mut self, z: Var, targets: Array2<f64>, scale: f64) -> Var {
        let s: f64 = Zip::from(self.value(z))
            .and(&targets)
            .fold(0.0, |acc, &z, &y| acc + softplus(z) - y * z);
        self.push(Array2::from_elem((1, 1), scale * s), Op::BceLogits(z, targets, scale))
    }

    /// `sum(a * c)` as a scalar.
    pub fn dot_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let s = (self.value(a) * &c).sum();
        self.push(Array2::from_elem((1, 1), s), Op::DotConst(a, c))
    }

    /// Gradients of scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Vec<Array2<f64>> {
        let mut param_grads = self.params.zeros_like();
        self.backward_into(loss, &mut param_grads);
        param_grads
    }

    /// Accumulate gradients of `loss` into `param_grads`.
    pub fn backward_into(&self, loss: Var, param_grads: &mut [Array2<f64>]) {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones(self.nodes[loss.0].value.raw_dim()));
        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(x) => *x += &g,
                slot => *slot = Some(g),
            }
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(id) => param_grads[*id] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::MulConst(a, m) => acc(&mut grads, *a, g * m),
                Op::Sigmoid(a) => {
                    let gx = Zip::from(&g).and(&node.value).map_collect(|&g, &y| g * y * (1.0 - y));
                    acc(&mut grads, *a, gx);
                }
                Op::Swish(a) => {
                    let gx = Zip::from(&g).and(self.value(*a)).map_collect(|&g, &x| {
                        let s = sigmoid(x);
                        g * (s + x * s * (1.0 - s))
                    });
                    acc(&mut grads, *a, gx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.ncols() as f64;
                    acc(&mut grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gamma, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gxhat = &g * self.value(*gamma);
                    let sum_g = gxhat.sum_axis(Axis(1));
                    let sum_gx = (&gxhat * xhat).sum_axis(Axis(1));
                    let mut gx = gxhat * n;
                    gx -= &sum_g.insert_axis(Axis(1));
                    gx -= &(xhat * &sum_gx.insert_axis(Axis(1)));
                    gx *= &(inv_std / n).insert_axis(Axis(1));
                    acc(&mut grads, *x, gx);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot = (&g * y).sum_axis(Axis(1));
                    let gx = (g - &dot.insert_axis(Axis(1))) * y;
                    acc(&mut grads, *a, gx);
                }
                Op::LogSoftmax(a) => {
                    let p = node.value.mapv(f64::exp);
                    let total = g.sum_axis(Axis(1));
                    let gx = g - &(p * &total.insert_axis(Axis(1)));
                    acc(&mut grads, *a, gx);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut grads, p, g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::Unfold(a, k) => {
                    let (t, c) = self.value(*a).dim();
                    let pad = k / 2;
                    let mut ga = Array2::zeros((t, c));
                    for j in 0..*k {
                        let lo = pad.saturating_sub(j);
                        let hi = (t + pad).saturating_sub(j).min(t);
                        if lo >= hi {
                            continue;
                        }
                        let mut dst = ga.slice_mut(s![lo + j - pad..hi + j - pad, ..]);
                        dst += &g.slice(s![lo..hi, j * c..(j + 1) * c]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::DepthwiseConv(a, w) => {
                    let x = self.value(*a);
                    let wv = self.value(*w);
                    let (t, c) = x.dim();
                    let k = wv.nrows();
                    let pad = k / 2;
                    let mut gx = Array2::zeros((t, c));
                    let mut gw = Array2::zeros((k, c));
                    for j in 0..k {
                        let lo = pad.saturating_sub(j);
                        let hi = (t + pad).saturating_sub(j).min(t);
                        if lo >= hi {
                            continue;
                        }
                        let gs = g.slice(s![lo..hi, ..]);
                        let xs = x.slice(s![lo + j - pad..hi + j - pad, ..]);
                        gw.row_mut(j).assign(&(&gs * &xs).sum_axis(Axis(0)));
                        let mut dst = gx.slice_mut(s![lo + j - pad..hi + j - pad, ..]);
                        dst += &(&gs * &wv.row(j));
                    }
                    acc(&mut grads, *a, gx);
                    acc(&mut grads, *w, gw);
                }
                Op::Nll(logp, targets, scale) => {
                    let g0 = g[[0, 0]];
                    let mut gl = Array2::zeros(self.value(*logp).raw_dim());
                    for (t, &y) in targets.iter().enumerate() {
                        gl[[t, y]] = -scale * g0;
                    }
                    acc(&mut grads, *logp, gl);
                }
                Op::BceLogits(z, targets, scale) => {
                    let g0 = g[[0, 0]] * scale;
                    let gz = Zip::from(self.value(*z))
                        .and(targets)
                        .map_collect(|&z, &y| g0 * (sigmoid(z) - y));
                    acc(&mut grads, *z, gz);
                }
                Op::DotConst(a, c) => acc(&mut grads, *a, c * g[[0, 0]]),
            }
        }
    }
}
