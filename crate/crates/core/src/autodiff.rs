//! A small reverse-mode tape over dense `f64` tensors in NCHW layout.
//!
//! A [`Graph`] records every op as it is evaluated; [`Graph::backward`]
//! walks the tape in reverse. The graph is rebuilt on every step, so
//! parameters are bound as fresh leaves each time.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{exp, ln, sigmoid, softplus, tanh};

/// Dense tensor, shape `[n, c, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], v: f64) -> Self {
        Self { shape, data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Self::full([1, 1, 1, 1], v)
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, hh, ww] = self.shape;
        ((n * cc + c) * hh + y) * ww + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Tensor {
        let [_, c, h, w] = items[0].shape;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        let mut n = 0;
        for t in items {
            assert_eq!([t.shape[1], t.shape[2], t.shape[3]], [c, h, w], "stack shape mismatch");
            data.extend_from_slice(&t.data);
            n += t.shape[0];
        }
        Tensor::from_vec([n, c, h, w], data)
    }

    /// Batch entry `n` as a `[1, c, h, w]` tensor.
    pub fn batch_item(&self, n: usize) -> Tensor {
        let [_, c, h, w] = self.shape;
        let sz = c * h * w;
        Tensor::from_vec([1, c, h, w], self.data[n * sz..(n + 1) * sz].to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    /// `x * sigmoid(x)`; smooth everywhere.
    Silu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Silu => x * sigmoid(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => tanh(x),
        }
    }

    /// Derivative given the input `x` and the output `y`.
    #[inline]
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Upsample2x(Var),
    ConcatChannels(Var, Var),
    Act(Var, Activation),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    SubConst(Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    MulScalar(Var, Var),
    OneMinus(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    MeanSpatial(Var),
    LogClamped(Var, f64),
    BceWithLogits { x: Var, target: Tensor, weight: Tensor },
    SoftmaxXent { x: Var, labels: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not affect the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Index bookkeeping shared by the convolution forward and backward passes.
struct ConvGeometry {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new([n, ci, h, w]: [usize; 4], k: usize, stride: usize, pad: usize) -> Self {
        Self { n, ci, h, w, k, stride, pad, oh: conv_out(h, k, stride, pad), ow: conv_out(w, k, stride, pad) }
    }

    /// Visits every (column row, column position, input index) triple that lies inside the image.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ohw, len) = (self.oh * self.ow, self.n * self.oh * self.ow);
        for i in 0..self.ci {
            for ky in 0..self.k {
                let (y_lo, y_hi) = valid_range(self.oh, self.h, self.stride, ky, self.pad);
                for kx in 0..self.k {
                    let (x_lo, x_hi) = valid_range(self.ow, self.w, self.stride, kx, self.pad);
                    let row = (i * self.k + ky) * self.k + kx;
                    for b in 0..self.n {
                        let xbase = (b * self.ci + i) * self.h * self.w;
                        for oy in y_lo..y_hi {
                            let xrow = xbase + (oy * self.stride + ky - self.pad) * self.w;
                            let cbase = row * len + b * ohw + oy * self.ow;
                            for ox in x_lo..x_hi {
                                f(row, cbase + ox, xrow + ox * self.stride + kx - self.pad);
                            }
                        }
                    }
                }
            }
        }
    }

    /// `[ci * k * k, n * oh * ow]` patch matrix; out-of-image taps are zero.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.ci * self.k * self.k * self.n * self.oh * self.ow];
        self.for_each_tap(|_, c, xi| cols[c] = x[xi]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n * self.ci * self.h * self.w];
        self.for_each_tap(|_, c, xi| x[xi] += cols[c]);
        x
    }

    /// `[co, n, oh, ow]` to `[n, co, oh, ow]`.
    fn to_nchw(&self, flat: &[f64], co: usize) -> Vec<f64> {
        let ohw = self.oh * self.ow;
        let mut out = vec![0.0; flat.len()];
        for o in 0..co {
            for b in 0..self.n {
                let src = (o * self.n + b) * ohw;
                let dst = (b * co + o) * ohw;
                out[dst..dst + ohw].copy_from_slice(&flat[src..src + ohw]);
            }
        }
        out
    }

    fn nchw_to_rows(&self, data: &[f64], co: usize) -> Vec<f64> {
        let ohw = self.oh * self.ow;
        let mut out = vec![0.0; data.len()];
        for o in 0..co {
            for b in 0..self.n {
                let dst = (o * self.n + b) * ohw;
                let src = (b * co + o) * ohw;
                out[dst..dst + ohw].copy_from_slice(&data[src..src + ohw]);
            }
        }
        out
    }
}

/// Output positions `o` in `0..out_len` whose input `o * stride + tap - pad` lies in `0..in_len`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, tap: usize, pad: usize) -> (usize, usize) {
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    let hi = if in_len + pad <= tap { 0 } else { ((in_len - 1 + pad - tap) / stride + 1).min(out_len) };
    (lo, hi.max(lo))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// 2-D convolution, zero padding. `w`: `[co, ci, k, k]`, `b`: `[1, co, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        let [n, ci, _, _] = xv.shape;
        let [co, wci, k, _] = wv.shape;
        assert_eq!(ci, wci, "conv2d channel mismatch");
        let geo = ConvGeometry::new(xv.shape, k, stride, pad);
        let cols = geo.im2col(&xv.data);
        let len = n * geo.oh * geo.ow;
        let rows = ci * k * k;
        // out[o] = bias[o] + sum_r w[o, r] * cols[r], laid out as [co, n * oh * ow]
        let mut flat = vec![0.0; co * len];
        for o in 0..co {
            let dst = &mut flat[o * len..(o + 1) * len];
            dst.fill(bv.data[o]);
            for r in 0..rows {
                let wt = wv.data[o * rows + r];
                if wt != 0.0 {
                    for (d, &c) in dst.iter_mut().zip(&cols[r * len..(r + 1) * len]) {
                        *d += wt * c;
                    }
                }
            }
        }
        let out = Tensor::from_vec([n, co, geo.oh, geo.ow], geo.to_nchw(&flat, co));
        self.push(out, Op::Conv2d { x, w, b, stride, pad })
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let [n, c, h, w] = xv.shape;
        let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
        for p in 0..n * c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out.data[(p * 2 * h + y) * 2 * w + xx] = xv.data[(p * h + y / 2) * w + xx / 2];
                }
            }
        }
        self.push(out, Op::Upsample2x(x))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let [n, ca, h, w] = av.shape;
        let [nb, cb, hb, wb] = bv.shape;
        assert_eq!([n, h, w], [nb, hb, wb], "concat shape mismatch");
        let hw = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            data.extend_from_slice(&av.data[i * ca * hw..(i + 1) * ca * hw]);
            data.extend_from_slice(&bv.data[i * cb * hw..(i + 1) * cb * hw]);
        }
        self.push(Tensor::from_vec([n, ca + cb, h, w], data), Op::ConcatChannels(a, b))
    }

    pub fn act(&mut self, x: Var, a: Activation) -> Var {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| a.eval(v)).collect();
        let out = Tensor::from_vec(xv.shape, data);
        self.push(out, Op::Act(x, a))
    }

    fn zip_op(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape, bv.shape, "elementwise shape mismatch");
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.shape, data);
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_op(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn sub_const(&mut self, a: Var, c: Tensor) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape, c.shape, "sub_const shape mismatch");
        let data = av.data.iter().zip(&c.data).map(|(x, y)| x - y).collect();
        let out = Tensor::from_vec(av.shape, data);
        self.push(out, Op::SubConst(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape, c.shape, "mul_const shape mismatch");
        let data = av.data.iter().zip(&c.data).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(av.shape, data);
        self.push(out, Op::MulConst(a, c))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.shape, av.data.iter().map(|x| x * k).collect());
        self.push(out, Op::Scale(a, k))
    }

    /// Multiplies every element of `a` by the single-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.value(s).item();
        let av = self.value(a);
        let out = Tensor::from_vec(av.shape, av.data.iter().map(|x| x * k).collect());
        self.push(out, Op::MulScalar(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.shape, av.data.iter().map(|x| 1.0 - x).collect());
        self.push(out, Op::OneMinus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.shape, av.data.iter().map(|x| x * x).collect());
        self.push(out, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let s = av.data.iter().sum::<f64>() / av.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Global average pool: `[n, c, h, w] -> [n, c, 1, 1]`.
    pub fn mean_spatial(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let [n, c, h, w] = av.shape;
        let hw = h * w;
        let data = av.data.chunks_exact(hw).map(|ch| ch.iter().sum::<f64>() / hw as f64).collect();
        self.push(Tensor::from_vec([n, c, 1, 1], data), Op::MeanSpatial(a))
    }

    /// `ln(clamp(a, eps, 1 - eps))`; zero gradient where clamped.
    pub fn log_clamped(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let out = Tensor::from_vec(av.shape, av.data.iter().map(|&x| ln(x.clamp(eps, 1.0 - eps))).collect());
        self.push(out, Op::LogClamped(a, eps))
    }

    /// `sum(weight * bce(sigmoid(x), target))`, computed from logits.
    pub fn bce_with_logits(&mut self, x: Var, target: Tensor, weight: Tensor) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape, target.shape, "bce target shape mismatch");
        assert_eq!(xv.shape, weight.shape, "bce weight shape mismatch");
        let mut s = 0.0;
        for i in 0..xv.len() {
            let z = xv.data[i];
            let t = target.data[i];
            // -(t ln s(z) + (1 - t) ln(1 - s(z))) = softplus(z) - t z
            s += weight.data[i] * (softplus(z) - t * z);
        }
        self.push(Tensor::scalar(s), Op::BceWithLogits { x, target, weight })
    }

    /// Mean softmax cross-entropy over the batch; `x` is `[n, k, 1, 1]` logits.
    pub fn softmax_xent(&mut self, x: Var, labels: Vec<usize>) -> Var {
        let xv = self.value(x);
        let [n, k, h, w] = xv.shape;
        assert_eq!(h * w, 1, "softmax_xent expects [n, k, 1, 1]");
        assert_eq!(labels.len(), n, "label count mismatch");
        let mut s = 0.0;
        for (i, &lbl) in labels.iter().enumerate() {
            let row = &xv.data[i * k..(i + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + ln(row.iter().map(|v| exp(v - m)).sum::<f64>());
            s += lse - row[lbl];
        }
        self.push(Tensor::scalar(s / n as f64), Op::SoftmaxXent { x, labels })
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, f: &dyn Fn(&mut Tensor)| {
            let slot = &mut grads[v.0];
            if slot.is_none() {
                *slot = Some(Tensor::zeros(self.nodes[v.0].value.shape));
            }
            f(slot.as_mut().unwrap());
        };
        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d { x, w, b, stride, pad } => {
                let xv = self.value(x);
                let wv = self.value(w);
                let [n, ci, _, _] = xv.shape;
                let [co, _, k, _] = wv.shape;
                let geo = ConvGeometry::new(xv.shape, k, stride, pad);
                let cols = geo.im2col(&xv.data);
                let len = n * geo.oh * geo.ow;
                let rows = ci * k * k;
                let gflat = geo.nchw_to_rows(&g.data, co);
                let mut gw = Tensor::zeros(wv.shape);
                let mut gb = Tensor::zeros([1, co, 1, 1]);
                let mut gcols = vec![0.0; rows * len];
                for o in 0..co {
                    let go = &gflat[o * len..(o + 1) * len];
                    gb.data[o] = go.iter().sum();
                    for r in 0..rows {
                        let c = &cols[r * len..(r + 1) * len];
                        gw.data[o * rows + r] = go.iter().zip(c).map(|(a, b)| a * b).sum();
                        let wt = wv.data[o * rows + r];
                        if wt != 0.0 {
                            for (d, &gv) in gcols[r * len..(r + 1) * len].iter_mut().zip(go) {
                                *d += wt * gv;
                            }
                        }
                    }
                }
                let gx = Tensor::from_vec(xv.shape, geo.col2im(&gcols));
                acc(x, &|t| add_into(t, &gx));
                acc(w, &|t| add_into(t, &gw));
                acc(b, &|t| add_into(t, &gb));
            }
            &Op::Upsample2x(x) => {
                let [n, c, h, w] = self.value(x).shape;
                acc(x, &|t| {
                    for p in 0..n * c {
                        for y in 0..2 * h {
                            for xx in 0..2 * w {
                                t.data[(p * h + y / 2) * w + xx / 2] += g.data[(p * 2 * h + y) * 2 * w + xx];
                            }
                        }
                    }
                });
            }
            &Op::ConcatChannels(a, b) => {
                let [n, ca, h, w] = self.value(a).shape;
                let cb = self.value(b).shape[1];
                let hw = h * w;
                acc(a, &|t| {
                    for i in 0..n {
                        let src = &g.data[i * (ca + cb) * hw..i * (ca + cb) * hw + ca * hw];
                        for (d, s) in t.data[i * ca * hw..(i + 1) * ca * hw].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
                acc(b, &|t| {
                    for i in 0..n {
                        let start = i * (ca + cb) * hw + ca * hw;
                        let src = &g.data[start..start + cb * hw];
                        for (d, s) in t.data[i * cb * hw..(i + 1) * cb * hw].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
            }
            &Op::Act(x, a) => {
                let xv = self.value(x);
                let yv = &node.value;
                acc(x, &|t| {
                    for i in 0..t.data.len() {
                        t.data[i] += g.data[i] * a.deriv(xv.data[i], yv.data[i]);
                    }
                });
            }
            &Op::Add(a, b) => {
                acc(a, &|t| add_into(t, g));
                acc(b, &|t| add_into(t, g));
            }
            &Op::Sub(a, b) => {
                acc(a, &|t| add_into(t, g));
                acc(b, &|t| add_scaled(t, g, -1.0));
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                acc(a, &|t| {
                    for i in 0..t.data.len() {
                        t.data[i] += g.data[i] * bv.data[i];
                    }
                });
                acc(b, &|t| {
                    for i in 0..t.data.len() {
                        t.data[i] += g.data[i] * av.data[i];
                    }
                });
            }
            &Op::SubConst(a) => acc(a, &|t| add_into(t, g)),
            Op::MulConst(a, c) => acc(*a, &|t| {
                for i in 0..t.data.len() {
                    t.data[i] += g.data[i] * c.data[i];
                }
            }),
            &Op::Scale(a, k) => acc(a, &|t| add_scaled(t, g, k)),
            &Op::MulScalar(a, s) => {
                let k = self.value(s).item();
                let av = self.value(a);
                acc(a, &|t| add_scaled(t, g, k));
                let ds: f64 = g.data.iter().zip(&av.data).map(|(x, y)| x * y).sum();
                acc(s, &|t| t.data[0] += ds);
            }
            &Op::OneMinus(a) => acc(a, &|t| add_scaled(t, g, -1.0)),
            &Op::Square(a) => {
                let av = self.value(a);
                acc(a, &|t| {
                    for i in 0..t.data.len() {
                        t.data[i] += 2.0 * av.data[i] * g.data[i];
                    }
                });
            }
            &Op::Sum(a) => {
                let gs = g.item();
                acc(a, &|t| t.data.iter_mut().for_each(|v| *v += gs));
            }
            &Op::Mean(a) => {
                let gs = g.item() / self.value(a).len() as f64;
                acc(a, &|t| t.data.iter_mut().for_each(|v| *v += gs));
            }
            &Op::MeanSpatial(a) => {
                let [_, _, h, w] = self.value(a).shape;
                let hw = h * w;
                acc(a, &|t| {
                    for (p, ch) in t.data.chunks_exact_mut(hw).enumerate() {
                        let gv = g.data[p] / hw as f64;
                        ch.iter_mut().for_each(|v| *v += gv);
                    }
                });
            }
            &Op::LogClamped(a, eps) => {
                let av = self.value(a);
                acc(a, &|t| {
                    for i in 0..t.data.len() {
                        let x = av.data[i];
                        if x > eps && x < 1.0 - eps {
                            t.data[i] += g.data[i] / x;
                        }
                    }
                });
            }
            Op::BceWithLogits { x, target, weight } => {
                let xv = self.value(*x);
                let gs = g.item();
                acc(*x, &|t| {
                    for i in 0..t.data.len() {
                        t.data[i] += gs * weight.data[i] * (sigmoid(xv.data[i]) - target.data[i]);
                    }
                });
            }
            Op::SoftmaxXent { x, labels } => {
                let xv = self.value(*x);
                let k = xv.shape[1];
                let n = labels.len();
                let gs = g.item() / n as f64;
                acc(*x, &|t| {
                    for (i, &lbl) in labels.iter().enumerate() {
                        let row = &xv.data[i * k..(i + 1) * k];
                        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let z: f64 = row.iter().map(|v| exp(v - m)).sum();
                        for (j, &v) in row.iter().enumerate() {
                            let p = exp(v - m) / z;
                            let onehot = if j == lbl { 1.0 } else { 0.0 };
                            t.data[i * k + j] += gs * (p - onehot);
                        }
                    }
                });
            }
        }
    }
}

fn add_into(t: &mut Tensor, g: &Tensor) {
    for (a, b) in t.data.iter_mut().zip(&g.data) {
        *a += b;
    }
}

fn add_scaled(t: &mut Tensor, g: &Tensor, k: f64) {
    for (a, b) in t.data.iter_mut().zip(&g.data) {
        *a += k * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = seeded(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Central-difference check of d(loss)/d(leaf) for every element of each leaf.
    fn check(leaves: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &vars);
        let grads = g.backward(loss);
        let eval = |ls: &[Tensor]| {
            let mut g = Graph::new();
            let vs: Vec<Var> = ls.iter().map(|t| g.leaf(t.clone())).collect();
            let l = build(&mut g, &vs);
            g.value(l).item()
        };
        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get_or_zeros(vars[li], leaf);
            for i in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li].data[i] += h;
                let mut minus = leaves.to_vec();
                minus[li].data[i] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data[i];
                assert!((a - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "leaf {li}[{i}]: analytic {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn conv_stride_pad_gradients() {
        for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
            check(&[random([2, 2, 5, 6], 1), random([3, 2, 3, 3], 2), random([1, 3, 1, 1], 3)], |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, pad);
                let y = g.square(y);
                g.sum(y)
            });
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let x = random([1, 1, 3, 3], 4);
        let w = random([1, 1, 3, 3], 5);
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.leaf(x.clone()), g.leaf(w.clone()), g.leaf(Tensor::scalar(0.25)));
        let y = g.conv2d(xv, wv, bv, 1, 0);
        let want: f64 = x.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>() + 0.25;
        assert!((g.value(y).item() - want).abs() < 1e-12);
    }

    #[test]
    fn structural_op_gradients() {
        check(&[random([2, 2, 2, 3], 6), random([2, 1, 4, 6], 7)], |g, v| {
            let u = g.upsample2x(v[0]);
            let c = g.concat_channels(u, v[1]);
            let a = g.act(c, Activation::Silu);
            let m = g.mean_spatial(a);
            let s = g.square(m);
            g.mean(s)
        });
    }

    #[test]
    fn elementwise_and_loss_gradients() {
        let t = random([1, 2, 2, 2], 8);
        let mask = Tensor::from_vec([1, 2, 2, 2], alloc::vec![1., 0., 1., 1., 0., 0., 1., 0.]);
        check(&[random([1, 2, 2, 2], 9), random([1, 2, 2, 2], 10), Tensor::scalar(0.3)], move |g, v| {
            let s = g.act(v[0], Activation::Sigmoid);
            let d = g.sub(s, v[1]);
            let d = g.sub_const(d, t.clone());
            let q = g.square(d);
            let q = g.mul_const(q, mask.clone());
            let q = g.mul_scalar(q, v[2]);
            let l = g.log_clamped(s, 1e-7);
            let om = g.one_minus(v[2]);
            let l = g.mul_scalar(l, om);
            let th = g.act(v[1], Activation::Tanh);
            let p = g.mul(th, v[0]);
            let all = g.add(q, l);
            let all = g.add(all, p);
            let all = g.scale(all, 0.7);
            g.sum(all)
        });
    }

    #[test]
    fn fused_loss_gradients() {
        let target = Tensor::from_vec([1, 2, 1, 2], alloc::vec![1., 0., 0., 1.]);
        let weight = Tensor::from_vec([1, 2, 1, 2], alloc::vec![1., 2., 0.5, 1.]);
        check(&[random([1, 2, 1, 2], 11)], |g, v| g.bce_with_logits(v[0], target.clone(), weight.clone()));
        check(&[random([3, 4, 1, 1], 12)], |g, v| g.softmax_xent(v[0], alloc::vec![0, 3, 1]));
    }

    #[test]
    fn bce_matches_definition() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_vec([1, 1, 1, 2], alloc::vec![0.3, -1.2]));
        let l = g.bce_with_logits(
            x,
            Tensor::from_vec([1, 1, 1, 2], alloc::vec![1.0, 0.0]),
            Tensor::full([1, 1, 1, 2], 1.0),
        );
        let want = -ln(sigmoid(0.3)) - ln(1.0 - sigmoid(-1.2));
        assert!((g.value(l).item() - want).abs() < 1e-12);
    }
}
