//! Tape-based reverse-mode differentiation.
//!
//! Every primitive appends a node to the tape; nodes only ever reference
//! earlier nodes, so walking the tape backwards is a valid topological order.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    pub padding: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self { stride: 1, padding: 0 }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        opts: Conv2dOptions,
        // im2col buffers for every sample, kept only when the weight needs a gradient
        cols: Option<Vec<T>>,
    },
    Upsample2x(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    ChannelAffine {
        x: Var,
        scale: Var,
        shift: Var,
    },
    GlobalAvgPool(Var),
    Reshape(Var),
    IndexSelect {
        x: Var,
        indices: Vec<usize>,
    },
    L1PerSample(Var, Var),
    L1(Var, Var),
    Sum(Var),
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded computation plus the gradients accumulated by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

fn sign<T: Scalar>(v: T) -> T {
    // subgradient of |v| at 0 is taken as 0
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn dims4(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::shape(op, format!("expected [N, C, H, W], got {shape:?}"))),
    }
}

fn dims2(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [a, b] => Ok((a, b)),
        _ => Err(Error::shape(op, format!("expected a matrix, got {shape:?}"))),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input tensor that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input tensor treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated for a leaf, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("shape checked")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let va = self.value(a);
        Tensor::new(va.shape(), va.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.map(a, |x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(T::zero()));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| T::one() / (T::one() + (-x).exp()));
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.tanh());
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Plain matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.shape(a))?;
        let (k2, n) = dims2("matmul", self.shape(b))?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(false, false, m, n, k, T::one(), self.value(a).data(), self.value(b).data(), T::zero(), &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Fully connected layer: `x [N, in]`, `w [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, fin) = dims2("linear", self.shape(x))?;
        let (fout, fin2) = dims2("linear", self.shape(w))?;
        if fin != fin2 {
            return Err(Error::shape(
                "linear",
                format!("input {:?} vs weight {:?}", self.shape(x), self.shape(w)),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [fout] {
                return Err(Error::shape("linear", format!("bias {:?} vs {fout} outputs", self.shape(b))));
            }
        }
        let mut out = vec![T::zero(); n * fout];
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in out.chunks_mut(fout) {
                row.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        T::gemm(false, true, n, fout, fin, T::one(), self.value(x).data(), self.value(w).data(), beta, &mut out);
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&[n, fout], out)?, Op::Linear { x, w, b }, rg))
    }

    /// Zero-padded strided 2-D convolution (cross-correlation, as in every
    /// deep-learning framework). `x [N, Cin, H, W]`, `w [Cout, Cin, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, opts: Conv2dOptions) -> Result<Var> {
        let (n, cin, h, wd) = dims4("conv2d", self.shape(x))?;
        let (cout, cin2, kh, kw) = dims4("conv2d", self.shape(w))?;
        if cin != cin2 || kh != kw || opts.stride == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} vs kernel {:?} (stride {})", self.shape(x), self.shape(w), opts.stride),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv2d", format!("bias {:?} vs {cout} channels", self.shape(b))));
            }
        }
        let geo = ConvGeometry::new(cin, h, wd, kh, opts).ok_or_else(|| {
            Error::shape("conv2d", format!("kernel {kh} does not fit input {:?} with padding {}", self.shape(x), opts.padding))
        })?;
        let keep_cols = self.rg(w);
        let kdim = geo.kdim();
        let npix = geo.out_pixels();
        let mut out = vec![T::zero(); n * cout * npix];
        let pointwise = geo.is_pointwise();
        let mut saved = if keep_cols { vec![T::zero(); n * kdim * npix] } else { Vec::new() };
        let mut cols = vec![T::zero(); if pointwise || keep_cols { 0 } else { kdim * npix }];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bias = b.map(|b| self.value(b).data());
            let in_len = cin * h * wd;
            for s in 0..n {
                let xs = &xv[s * in_len..(s + 1) * in_len];
                let col: &[T] = if pointwise {
                    if keep_cols {
                        saved[s * kdim * npix..(s + 1) * kdim * npix].copy_from_slice(xs);
                    }
                    xs
                } else if keep_cols {
                    let dst = &mut saved[s * kdim * npix..(s + 1) * kdim * npix];
                    geo.im2col(xs, dst);
                    dst
                } else {
                    geo.im2col(xs, &mut cols);
                    &cols
                };
                let os = &mut out[s * cout * npix..(s + 1) * cout * npix];
                let beta = if let Some(bias) = bias {
                    for (co, row) in os.chunks_mut(npix).enumerate() {
                        row.iter_mut().for_each(|v| *v = bias[co]);
                    }
                    T::one()
                } else {
                    T::zero()
                };
                T::gemm(false, false, cout, npix, kdim, T::one(), wv, col, beta, os);
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(&[n, cout, geo.out_h, geo.out_w], out)?;
        Ok(self.push(value, Op::Conv2d { x, w, b, opts, cols: keep_cols.then_some(saved) }, rg))
    }

    /// Nearest-neighbour upsampling by two in both spatial axes.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("upsample2x", self.shape(x))?;
        let xv = self.value(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for (plane, src) in out.chunks_mut(oh * ow).zip(xv.chunks(h * w)) {
            for y in 0..oh {
                let srow = &src[(y / 2) * w..(y / 2 + 1) * w];
                let drow = &mut plane[y * ow..(y + 1) * ow];
                for (xx, d) in drow.iter_mut().enumerate() {
                    *d = srow[xx / 2];
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[n, c, oh, ow], out)?, Op::Upsample2x(x), rg))
    }

    /// Per-sample, per-channel normalisation to zero mean and unit variance
    /// (biased variance, `eps` added before the square root). No affine terms.
    pub fn instance_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let (n, c, h, w) = dims4("instance_norm", self.shape(x))?;
        let hw = h * w;
        let count = T::from_usize(hw).expect("pixel count");
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * hw];
        let mut inv_std = Vec::with_capacity(n * c);
        for (plane, src) in out.chunks_mut(hw).zip(xv.chunks(hw)) {
            let mean = src.iter().copied().sum::<T>() / count;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let is = T::one() / (var + eps).sqrt();
            for (o, &v) in plane.iter_mut().zip(src) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[n, c, h, w], out)?, Op::InstanceNorm { x, inv_std }, rg))
    }

    /// `x [N, C, H, W] * scale[n, c] + shift[n, c]`, with `scale`, `shift` of shape `[N, C]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("channel_affine", self.shape(x))?;
        for v in [scale, shift] {
            if self.shape(v) != [n, c] {
                return Err(Error::shape(
                    "channel_affine",
                    format!("input {:?} needs [{n}, {c}] modulation, got {:?}", self.shape(x), self.shape(v)),
                ));
            }
        }
        let hw = h * w;
        let (xv, sv, tv) = (self.value(x).data(), self.value(scale).data(), self.value(shift).data());
        let mut out = vec![T::zero(); n * c * hw];
        for (i, (plane, src)) in out.chunks_mut(hw).zip(xv.chunks(hw)).enumerate() {
            let (a, b) = (sv[i], tv[i]);
            for (o, &v) in plane.iter_mut().zip(src) {
                *o = v * a + b;
            }
        }
        let rg = self.rg(x) || self.rg(scale) || self.rg(shift);
        Ok(self.push(Tensor::new(&[n, c, h, w], out)?, Op::ChannelAffine { x, scale, shift }, rg))
    }

    /// `[N, C, H, W] -> [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4("global_avg_pool", self.shape(x))?;
        let count = T::from_usize(h * w).expect("pixel count");
        let out = self.value(x).data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / count).collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[n, c], out)?, Op::GlobalAvgPool(x), rg))
    }

    /// Gathers rows along the leading axis; indices may repeat.
    pub fn index_select(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rows = shape[0];
        if indices.is_empty() || indices.iter().any(|&i| i >= rows) {
            return Err(Error::shape("index_select", format!("indices {indices:?} for leading extent {rows}")));
        }
        let stride: usize = shape[1..].iter().product();
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            out.extend_from_slice(&xv[i * stride..(i + 1) * stride]);
        }
        let mut oshape = shape;
        oshape[0] = indices.len();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::IndexSelect { x, indices: indices.to_vec() }, rg))
    }

    /// Mean absolute difference per leading-axis sample: `[N, ...] -> [N]`.
    pub fn l1_per_sample(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_per_sample", a, b)?;
        let n = self.shape(a)[0];
        let per = self.value(a).len() / n;
        let count = T::from_usize(per).expect("count");
        let out = self
            .value(a)
            .data()
            .chunks(per)
            .zip(self.value(b).data().chunks(per))
            .map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| (p - q).abs()).sum::<T>() / count)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[n], out)?, Op::L1PerSample(a, b), rg))
    }

    /// Mean absolute difference over all elements, as a one-element tensor.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("l1_loss", a, b)?;
        let count = T::from_usize(self.value(a).len()).expect("count");
        let total = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| (p - q).abs())
            .sum::<T>();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(total / count), Op::L1(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// `sum_i weights[i] * x[i]` over the flattened tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} weights for {:?}", weights.len(), self.shape(x)),
            ));
        }
        let total = self.value(x).data().iter().zip(weights).map(|(&v, &w)| v * w).sum::<T>();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { x, weights: weights.to_vec() }, rg))
    }

    /// Accumulates `d loss / d v` into every leaf created with [`Graph::param`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut work: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        work[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = work[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                    slot => *slot = Some(g),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut work)?;
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], work: &mut [Option<Vec<T>>]) -> Result<()> {
        let nodes = &self.nodes;
        let node = &nodes[i];
        let val = |v: Var| nodes[v.0].value.data();
        let needs = |v: Var| nodes[v.0].requires_grad;
        // returns the accumulation buffer for `v`, zero-initialised on first use
        fn buf<'a, T: Scalar>(work: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut Vec<T> {
            work[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                if needs(*a) {
                    buf(work, nodes, *a).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if needs(*b) {
                    let db = buf(work, nodes, *b);
                    if neg {
                        db.iter_mut().zip(g).for_each(|(d, &v)| *d -= v);
                    } else {
                        db.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let bv = val(*b);
                    buf(work, nodes, *a).iter_mut().zip(g).zip(bv).for_each(|((d, &v), &o)| *d += v * o);
                }
                if needs(*b) {
                    let av = val(*a);
                    buf(work, nodes, *b).iter_mut().zip(g).zip(av).for_each(|((d, &v), &o)| *d += v * o);
                }
            }
            Op::Scale(a, c) => {
                buf(work, nodes, *a).iter_mut().zip(g).for_each(|(d, &v)| *d += v * *c);
            }
            Op::Relu(a) => {
                let av = val(*a);
                buf(work, nodes, *a).iter_mut().zip(g).zip(av).for_each(|((d, &v), &x)| {
                    if x > T::zero() {
                        *d += v
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                buf(work, nodes, *a).iter_mut().zip(g).zip(y).for_each(|((d, &v), &s)| *d += v * s * (T::one() - s));
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                buf(work, nodes, *a).iter_mut().zip(g).zip(y).for_each(|((d, &v), &t)| *d += v * (T::one() - t * t));
            }
            Op::Reshape(a) => {
                buf(work, nodes, *a).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
            }
            Op::MatMul(a, b) => {
                let (m, k) = dims2("matmul", nodes[a.0].value.shape())?;
                let n = nodes[b.0].value.shape()[1];
                if needs(*a) {
                    let bv = val(*b);
                    T::gemm(false, true, m, k, n, T::one(), g, bv, T::one(), buf(work, nodes, *a));
                }
                if needs(*b) {
                    let av = val(*a);
                    T::gemm(true, false, k, n, m, T::one(), av, g, T::one(), buf(work, nodes, *b));
                }
            }
            Op::Linear { x, w, b } => {
                let (n, fin) = dims2("linear", nodes[x.0].value.shape())?;
                let fout = nodes[w.0].value.shape()[0];
                if needs(*x) {
                    let wv = val(*w);
                    T::gemm(false, false, n, fin, fout, T::one(), g, wv, T::one(), buf(work, nodes, *x));
                }
                if needs(*w) {
                    let xv = val(*x);
                    T::gemm(true, false, fout, fin, n, T::one(), g, xv, T::one(), buf(work, nodes, *w));
                }
                if let Some(b) = b.filter(|b| needs(*b)) {
                    let db = buf(work, nodes, b);
                    for row in g.chunks(fout) {
                        db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                    }
                }
            }
            Op::Conv2d { x, w, b, opts, cols } => {
                let (n, cin, h, wd) = dims4("conv2d", nodes[x.0].value.shape())?;
                let (cout, _, k, _) = dims4("conv2d", nodes[w.0].value.shape())?;
                let geo = ConvGeometry::new(cin, h, wd, k, *opts).expect("validated in forward");
                let (kdim, npix) = (geo.kdim(), geo.out_pixels());
                if let Some(b) = b.filter(|b| needs(*b)) {
                    let db = buf(work, nodes, b);
                    for (idx, row) in g.chunks(npix).enumerate() {
                        db[idx % cout] += row.iter().copied().sum::<T>();
                    }
                }
                if needs(*w) {
                    let cols = cols.as_ref().expect("columns saved when the kernel needs a gradient");
                    let dw = buf(work, nodes, *w);
                    for s in 0..n {
                        let gs = &g[s * cout * npix..(s + 1) * cout * npix];
                        let cs = &cols[s * kdim * npix..(s + 1) * kdim * npix];
                        T::gemm(false, true, cout, kdim, npix, T::one(), gs, cs, T::one(), dw);
                    }
                }
                if needs(*x) {
                    let wv = val(*w);
                    let in_len = cin * h * wd;
                    let mut dcol = vec![T::zero(); kdim * npix];
                    let dx = buf(work, nodes, *x);
                    for s in 0..n {
                        let gs = &g[s * cout * npix..(s + 1) * cout * npix];
                        let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                        if geo.is_pointwise() {
                            T::gemm(true, false, kdim, npix, cout, T::one(), wv, gs, T::one(), dxs);
                        } else {
                            T::gemm(true, false, kdim, npix, cout, T::one(), wv, gs, T::zero(), &mut dcol);
                            geo.col2im_add(&dcol, dxs);
                        }
                    }
                }
            }
            Op::Upsample2x(a) => {
                let (_, _, h, w) = dims4("upsample2x", nodes[a.0].value.shape())?;
                let ow = 2 * w;
                let da = buf(work, nodes, *a);
                for (plane, gp) in da.chunks_mut(h * w).zip(g.chunks(4 * h * w)) {
                    for (y, grow) in gp.chunks(ow).enumerate() {
                        let drow = &mut plane[(y / 2) * w..(y / 2 + 1) * w];
                        for (xx, &v) in grow.iter().enumerate() {
                            drow[xx / 2] += v;
                        }
                    }
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let shape = nodes[x.0].value.shape();
                let hw = shape[2] * shape[3];
                let count = T::from_usize(hw).expect("count");
                let y = node.value.data();
                let dx = buf(work, nodes, *x);
                for (((dp, gp), yp), &is) in dx.chunks_mut(hw).zip(g.chunks(hw)).zip(y.chunks(hw)).zip(inv_std) {
                    let mg = gp.iter().copied().sum::<T>() / count;
                    let mgy = gp.iter().zip(yp).map(|(&a, &b)| a * b).sum::<T>() / count;
                    for ((d, &gv), &yv) in dp.iter_mut().zip(gp).zip(yp) {
                        *d += is * (gv - mg - yv * mgy);
                    }
                }
            }
            Op::ChannelAffine { x, scale, shift } => {
                let shape = nodes[x.0].value.shape();
                let hw = shape[2] * shape[3];
                if needs(*x) {
                    let sv = val(*scale);
                    let dx = buf(work, nodes, *x);
                    for ((dp, gp), &a) in dx.chunks_mut(hw).zip(g.chunks(hw)).zip(sv) {
                        dp.iter_mut().zip(gp).for_each(|(d, &v)| *d += v * a);
                    }
                }
                if needs(*scale) {
                    let xv = val(*x);
                    let ds = buf(work, nodes, *scale);
                    for ((d, gp), xp) in ds.iter_mut().zip(g.chunks(hw)).zip(xv.chunks(hw)) {
                        *d += gp.iter().zip(xp).map(|(&a, &b)| a * b).sum::<T>();
                    }
                }
                if needs(*shift) {
                    let dt = buf(work, nodes, *shift);
                    for (d, gp) in dt.iter_mut().zip(g.chunks(hw)) {
                        *d += gp.iter().copied().sum::<T>();
                    }
                }
            }
            Op::GlobalAvgPool(a) => {
                let shape = nodes[a.0].value.shape();
                let hw = shape[2] * shape[3];
                let count = T::from_usize(hw).expect("count");
                let da = buf(work, nodes, *a);
                for (dp, &v) in da.chunks_mut(hw).zip(g) {
                    let share = v / count;
                    dp.iter_mut().for_each(|d| *d += share);
                }
            }
            Op::IndexSelect { x, indices } => {
                let stride = node.value.len() / indices.len();
                let dx = buf(work, nodes, *x);
                for (&src, gr) in indices.iter().zip(g.chunks(stride)) {
                    dx[src * stride..(src + 1) * stride].iter_mut().zip(gr).for_each(|(d, &v)| *d += v);
                }
            }
            Op::L1PerSample(a, b) => {
                let n = node.value.len();
                let per = nodes[a.0].value.len() / n;
                let count = T::from_usize(per).expect("count");
                let (av, bv) = (val(*a), val(*b));
                let signs: Vec<T> = av
                    .iter()
                    .zip(bv)
                    .enumerate()
                    .map(|(idx, (&p, &q))| sign(p - q) * g[idx / per] / count)
                    .collect();
                if needs(*a) {
                    buf(work, nodes, *a).iter_mut().zip(&signs).for_each(|(d, &s)| *d += s);
                }
                if needs(*b) {
                    buf(work, nodes, *b).iter_mut().zip(&signs).for_each(|(d, &s)| *d -= s);
                }
            }
            Op::L1(a, b) => {
                let count = T::from_usize(nodes[a.0].value.len()).expect("count");
                let scale = g[0] / count;
                let (av, bv) = (val(*a), val(*b));
                if needs(*a) {
                    buf(work, nodes, *a)
                        .iter_mut()
                        .zip(av.iter().zip(bv))
                        .for_each(|(d, (&p, &q))| *d += sign(p - q) * scale);
                }
                if needs(*b) {
                    buf(work, nodes, *b)
                        .iter_mut()
                        .zip(av.iter().zip(bv))
                        .for_each(|(d, (&p, &q))| *d -= sign(p - q) * scale);
                }
            }
            Op::Sum(a) => {
                buf(work, nodes, *a).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::WeightedSum { x, weights } => {
                buf(work, nodes, *x).iter_mut().zip(weights).for_each(|(d, &w)| *d += w * g[0]);
            }
        }
        Ok(())
    }
}

/// Index arithmetic shared by the convolution forward and backward passes.
#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(cin: usize, h: usize, w: usize, k: usize, opts: Conv2dOptions) -> Option<Self> {
        let (ph, pw) = (h + 2 * opts.padding, w + 2 * opts.padding);
        if k == 0 || ph < k || pw < k || opts.stride == 0 {
            return None;
        }
        Some(Self {
            cin,
            h,
            w,
            k,
            stride: opts.stride,
            pad: opts.padding,
            out_h: (ph - k) / opts.stride + 1,
            out_w: (pw - k) / opts.stride + 1,
        })
    }

    fn kdim(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source index for output position `o` at kernel offset `kk`, if inside the image.
    #[inline]
    fn src(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output positions `[lo, hi)` whose tap at offset `kk` lands inside `extent`.
    #[inline]
    fn valid(&self, kk: usize, extent: usize, out: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kk).div_ceil(self.stride);
        let hi = (extent + self.pad).saturating_sub(kk).div_ceil(self.stride).min(out);
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let npix = self.out_pixels();
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let dst = &mut cols[row * npix..(row + 1) * npix];
                    let (lo, hi) = self.valid(kx, self.w, self.out_w);
                    for oy in 0..self.out_h {
                        let drow = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        let Some(iy) = self.src(oy, ky, self.h) else {
                            drow.fill(T::zero());
                            continue;
                        };
                        let srow = &plane[iy * self.w..(iy + 1) * self.w];
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        if lo < hi {
                            let first = lo * self.stride + kx - self.pad;
                            if self.stride == 1 {
                                drow[lo..hi].copy_from_slice(&srow[first..first + hi - lo]);
                            } else {
                                for (d, ix) in drow[lo..hi].iter_mut().zip((first..).step_by(self.stride)) {
                                    *d = srow[ix];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let npix = self.out_pixels();
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &mut dx[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let src = &cols[row * npix..(row + 1) * npix];
                    let (lo, hi) = self.valid(kx, self.w, self.out_w);
                    row += 1;
                    if lo >= hi {
                        continue;
                    }
                    let first = lo * self.stride + kx - self.pad;
                    for oy in 0..self.out_h {
                        let Some(iy) = self.src(oy, ky, self.h) else { continue };
                        let srow = &src[oy * self.out_w + lo..oy * self.out_w + hi];
                        let drow = &mut plane[iy * self.w..(iy + 1) * self.w];
                        if self.stride == 1 {
                            for (d, &v) in drow[first..first + srow.len()].iter_mut().zip(srow) {
                                *d += v;
                            }
                        } else {
                            for (&v, ix) in srow.iter().zip((first..).step_by(self.stride)) {
                                drow[ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}
