use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::{Real, Tensor};
use crate::error::{ensure, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with the given negative-side slope in (0, 1).
    LeakyRelu(f64),
}

enum Op<T> {
    Leaf,
    Conv1d { x: usize, k: usize, b: usize, geom: ConvGeom },
    Deconv1d { x: usize, k: usize, b: usize, geom: ConvGeom },
    Affine { x: usize, w: usize, b: usize },
    Activation { x: usize, slope: T },
    Softmax { x: usize },
    Dropout { x: usize, mask: Vec<T> },
    StopGradient,
    StraightThrough { x: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { x: usize, c: T },
    Sum { x: usize },
    Mse { a: usize, b: usize },
    MatMul { a: usize, b: usize, transpose_b: bool },
    Reshape { x: usize },
    Permute { x: usize, axes: Vec<usize> },
    Concat { parts: Vec<usize>, axis: usize },
    Embedding { table: usize, indices: Vec<usize> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records differentiable operations in execution order.
///
/// Nodes are appended as operations run, so inputs always precede outputs and
/// a reverse walk over the node list is a valid backward schedule.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `[B, Cin, T] * [Cout, Cin, W] + [Cout]` with "same" padding, output length `ceil(T / stride)`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(kernel), self.shape(bias));
        ensure!(xs.len() == 3 && ks.len() == 3, "conv1d expects [B,C,T] input and [Cout,Cin,W] kernel, got {:?} and {:?}", xs, ks);
        ensure!(xs[1] == ks[1], "conv1d input has {} channels but kernel expects {}", xs[1], ks[1]);
        ensure!(bs == [ks[0]], "conv1d bias shape {:?} does not match {} output channels", bs, ks[0]);
        ensure!(stride >= 1, "conv1d stride must be positive");
        ensure!(xs[2] >= 1 && ks[2] >= 1, "conv1d needs non-empty input and kernel");
        let geom = ConvGeom::conv(xs[0], xs[1], ks[0], ks[2], stride, xs[2]);
        let out = kernels::conv1d_forward(&geom, self.value(x).data(), self.value(kernel).data(), self.value(bias).data());
        let value = Tensor::new(&[geom.batch, geom.cout, geom.len_short], out)?;
        Ok(self.push(value, Op::Conv1d { x: x.0, k: kernel.0, b: bias.0, geom }, &[x.0, kernel.0, bias.0]))
    }

    /// Transposed convolution `[B, Cin, T] -> [B, Cout, T * stride]`; kernel is `[Cin, Cout, W]`.
    ///
    /// This is the adjoint of [`Tape::conv1d`] with the same kernel memory and stride.
    pub fn deconv1d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let (xs, ks, bs) = (self.shape(x), self.shape(kernel), self.shape(bias));
        ensure!(stride >= 1, "deconv1d stride must be positive, got {}", stride);
        ensure!(xs.len() == 3 && ks.len() == 3, "deconv1d expects [B,C,T] input and [Cin,Cout,W] kernel, got {:?} and {:?}", xs, ks);
        ensure!(xs[1] == ks[0], "deconv1d input has {} channels but kernel expects {}", xs[1], ks[0]);
        ensure!(bs == [ks[1]], "deconv1d bias shape {:?} does not match {} output channels", bs, ks[1]);
        ensure!(ks[2] >= 1, "deconv1d needs a non-empty kernel");
        let geom = ConvGeom::deconv(xs[0], xs[1], ks[1], ks[2], stride, xs[2]);
        let out = kernels::deconv1d_forward(&geom, self.value(x).data(), self.value(kernel).data(), self.value(bias).data());
        let value = Tensor::new(&[geom.batch, geom.cout, geom.len_long], out)?;
        Ok(self.push(value, Op::Deconv1d { x: x.0, k: kernel.0, b: bias.0, geom }, &[x.0, kernel.0, bias.0]))
    }

    /// `x · w + b` along the last axis.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(weight), self.shape(bias));
        ensure!(!xs.is_empty() && ws.len() == 2, "affine expects [...,Din] input and [Din,Dout] weight, got {:?} and {:?}", xs, ws);
        let din = *xs.last().unwrap();
        ensure!(ws[0] == din, "affine input width {} does not match weight rows {}", din, ws[0]);
        ensure!(bs == [ws[1]], "affine bias shape {:?} does not match output width {}", bs, ws[1]);
        let dout = ws[1];
        let rows = self.value(x).len() / din.max(1);
        let out = kernels::affine_forward(self.value(x).data(), self.value(weight).data(), self.value(bias).data(), rows, din, dout);
        let mut shape = xs;
        *shape.last_mut().unwrap() = dout;
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Affine { x: x.0, w: weight.0, b: bias.0 }, &[x.0, weight.0, bias.0]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let slope = match kind {
            Activation::Relu => T::zero(),
            Activation::LeakyRelu(s) => {
                ensure!(s > 0.0 && s < 1.0, "leaky-relu slope must lie in (0,1), got {}", s);
                T::lit(s)
            }
        };
        let data = self.value(x).data().iter().map(|&v| if v >= T::zero() { v } else { slope * v }).collect();
        let value = Tensor::new(self.shape(x), data)?;
        Ok(self.push(value, Op::Activation { x: x.0, slope }, &[x.0]))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        ensure!(!shape.is_empty() && *shape.last().unwrap() >= 1, "softmax needs a non-empty last axis, got {:?}", shape);
        let k = *shape.last().unwrap();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(k) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Softmax { x: x.0 }, &[x.0]))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`; identity when not training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        ensure!((0.0..1.0).contains(&rate), "dropout rate must lie in [0,1), got {}", rate);
        if !training || rate == 0.0 {
            let value = self.value(x).clone();
            let mask = vec![T::one(); value.len()];
            return Ok(self.push(value, Op::Dropout { x: x.0, mask }, &[x.0]));
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(self.shape(x), data)?;
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, &[x.0]))
    }

    /// Identity forward, zero gradient backward.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.nodes.push(Node {
            value,
            op: Op::StopGradient,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x + stop_gradient(replacement - x)`, evaluated so that the forward
    /// value is `replacement` bit for bit and the backward pass hands the
    /// incoming gradient to `x` unchanged.
    pub fn straight_through(&mut self, x: Var, replacement: Tensor<T>) -> Result<Var> {
        ensure!(replacement.shape() == self.shape(x), "straight-through replacement shape {:?} differs from input {:?}", replacement.shape(), self.shape(x));
        Ok(self.push(replacement, Op::StraightThrough { x: x.0 }, &[x.0]))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Vec<T>> {
        ensure!(self.shape(a) == self.shape(b), "{} operands differ in shape: {:?} vs {:?}", name, self.shape(a), self.shape(b));
        Ok(self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| f(p, q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.binary(a, b, "add", |p, q| p + q)?;
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.binary(a, b, "sub", |p, q| p - q)?;
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Sub { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.binary(a, b, "mul", |p, q| p * q)?;
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Mul { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::lit(c);
        let data = self.value(x).data().iter().map(|&v| v * c).collect();
        let value = Tensor::new(self.shape(x), data).expect("same shape");
        self.push(value, Op::Scale { x: x.0, c }, &[x.0])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(total), Op::Sum { x: x.0 }, &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.binary(a, b, "mse", |p, q| p - q)?;
        let n = T::lit(diff.len().max(1) as f64);
        let total = diff.iter().map(|&d| d * d).sum::<T>() / n;
        Ok(self.push(Tensor::scalar(total), Op::Mse { a: a.0, b: b.0 }, &[a.0, b.0]))
    }

    /// Batched `[..., M, K] · [..., K, N]`; with `transpose_b` the right operand is `[..., N, K]`.
    pub fn matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        ensure!(as_.len() >= 2 && as_.len() == bs.len(), "matmul needs equal-rank operands of rank >= 2, got {:?} and {:?}", as_, bs);
        let r = as_.len();
        ensure!(as_[..r - 2] == bs[..r - 2], "matmul batch dims differ: {:?} vs {:?}", as_, bs);
        let (m, k) = (as_[r - 2], as_[r - 1]);
        let (kb, n) = if transpose_b { (bs[r - 1], bs[r - 2]) } else { (bs[r - 2], bs[r - 1]) };
        ensure!(k == kb, "matmul inner dims differ: {} vs {}", k, kb);
        let batch: usize = as_[..r - 2].iter().product();
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![T::zero(); batch * m * n];
        for (i, c) in out.chunks_mut((m * n).max(1)).enumerate().take(batch) {
            kernels::gemm(m, k, n, &ad[i * m * k..(i + 1) * m * k], false, &bd[i * k * n..(i + 1) * k * n], transpose_b, c, false);
        }
        let mut shape = as_;
        shape[r - 1] = n;
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::MatMul { a: a.0, b: b.0, transpose_b }, &[a.0, b.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { x: x.0 }, &[x.0]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        ensure!(axes.len() == shape.len(), "permute axes {:?} do not match rank {}", axes, shape.len());
        let mut seen = vec![false; axes.len()];
        for &a in axes {
            ensure!(a < axes.len() && !seen[a], "permute axes {:?} are not a permutation", axes);
            seen[a] = true;
        }
        let (data, out_shape) = permute_data(self.value(x).data(), &shape, axes);
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(value, Op::Permute { x: x.0, axes: axes.to_vec() }, &[x.0]))
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        ensure!(!parts.is_empty(), "concat needs at least one part");
        let first = self.shape(parts[0]).to_vec();
        ensure!(axis < first.len(), "concat axis {} out of range for rank {}", axis, first.len());
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            ensure!(
                s.len() == first.len() && s.iter().enumerate().all(|(i, &d)| i == axis || d == first[i]),
                "concat part shape {:?} incompatible with {:?} on axis {}",
                s,
                first,
                axis
            );
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::Concat { parts: ids.clone(), axis }, &ids))
    }

    /// Row lookup: `table` is `[V, D]`, output is `[index_shape..., D]`.
    pub fn embedding(&mut self, table: Var, indices: &[usize], index_shape: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        ensure!(ts.len() == 2, "embedding table must be [V,D], got {:?}", ts);
        ensure!(index_shape.iter().product::<usize>() == indices.len(), "embedding index shape {:?} does not hold {} indices", index_shape, indices.len());
        let (v, d) = (ts[0], ts[1]);
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            ensure!(i < v, "embedding index {} out of range for {} rows", i, v);
            data.extend_from_slice(&self.value(table).data()[i * d..(i + 1) * d]);
        }
        let mut shape = index_shape.to_vec();
        shape.push(d);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, Op::Embedding { table: table.0, indices: indices.to_vec() }, &[table.0]))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        ensure!(self.value(loss).len() == 1, "backward needs a scalar loss, got shape {:?}", self.shape(loss));
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: usize, f: impl FnOnce(&mut [T])) {
        if !self.nodes[id].needs_grad {
            return;
        }
        let len = self.nodes[id].value.len();
        let slot = grads[id].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }

    fn add_into(&self, grads: &mut [Option<Vec<T>>], id: usize, src: &[T]) {
        self.accumulate(grads, id, |d| d.iter_mut().zip(src).for_each(|(a, &b)| *a += b));
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let val = |i: usize| self.nodes[i].value.data();
        match &self.nodes[id].op {
            Op::Leaf | Op::StopGradient => {}
            Op::Conv1d { x, k, b, geom } => {
                let r = kernels::conv1d_backward(geom, val(*x), val(*k), g, [self.needs(*x), self.needs(*k), self.needs(*b)]);
                self.scatter_conv(grads, r, [*x, *k, *b]);
            }
            Op::Deconv1d { x, k, b, geom } => {
                let r = kernels::deconv1d_backward(geom, val(*x), val(*k), g, [self.needs(*x), self.needs(*k), self.needs(*b)]);
                self.scatter_conv(grads, r, [*x, *k, *b]);
            }
            Op::Affine { x, w, b } => {
                let ws = self.nodes[*w].value.shape();
                let (din, dout) = (ws[0], ws[1]);
                let rows = self.nodes[*x].value.len() / din.max(1);
                let r = kernels::affine_backward(val(*x), val(*w), g, rows, din, dout, [self.needs(*x), self.needs(*w), self.needs(*b)]);
                self.scatter_conv(grads, r, [*x, *w, *b]);
            }
            Op::Activation { x, slope } => {
                let xv = val(*x);
                self.accumulate(grads, *x, |d| {
                    for ((d, &gi), &xi) in d.iter_mut().zip(g).zip(xv) {
                        *d += if xi >= T::zero() { gi } else { *slope * gi };
                    }
                });
            }
            Op::Softmax { x } => {
                let y = val(id);
                let k = *self.nodes[id].value.shape().last().unwrap();
                self.accumulate(grads, *x, |d| {
                    for ((dr, gr), yr) in d.chunks_mut(k).zip(g.chunks(k)).zip(y.chunks(k)) {
                        let dot = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum::<T>();
                        for ((di, &gi), &yi) in dr.iter_mut().zip(gr).zip(yr) {
                            *di += yi * (gi - dot);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, |d| {
                    d.iter_mut().zip(g).zip(mask).for_each(|((d, &gi), &m)| *d += gi * m);
                });
            }
            Op::StraightThrough { x } | Op::Reshape { x } => self.add_into(grads, *x, g),
            Op::Add { a, b } => {
                self.add_into(grads, *a, g);
                self.add_into(grads, *b, g);
            }
            Op::Sub { a, b } => {
                self.add_into(grads, *a, g);
                self.accumulate(grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, &gi)| *d -= gi));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                self.accumulate(grads, *a, |d| {
                    d.iter_mut().zip(g).zip(bv).for_each(|((d, &gi), &q)| *d += gi * q);
                });
                self.accumulate(grads, *b, |d| {
                    d.iter_mut().zip(g).zip(av).for_each(|((d, &gi), &p)| *d += gi * p);
                });
            }
            Op::Scale { x, c } => {
                self.accumulate(grads, *x, |d| d.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * *c));
            }
            Op::Sum { x } => {
                let g0 = g[0];
                self.accumulate(grads, *x, |d| d.iter_mut().for_each(|d| *d += g0));
            }
            Op::Mse { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let scale = T::lit(2.0) * g[0] / T::lit(av.len().max(1) as f64);
                self.accumulate(grads, *a, |d| {
                    d.iter_mut().zip(av).zip(bv).for_each(|((d, &p), &q)| *d += scale * (p - q));
                });
                self.accumulate(grads, *b, |d| {
                    d.iter_mut().zip(av).zip(bv).for_each(|((d, &p), &q)| *d -= scale * (p - q));
                });
            }
            Op::MatMul { a, b, transpose_b } => self.matmul_backward(grads, id, *a, *b, *transpose_b, g),
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let (back, _) = permute_data(g, self.nodes[id].value.shape(), &inverse);
                self.add_into(grads, *x, &back);
            }
            Op::Concat { parts, axis } => {
                let shape = self.nodes[id].value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = self.nodes[p].value.shape()[*axis] * inner;
                    self.accumulate(grads, p, |d| {
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            d[o * chunk..(o + 1) * chunk].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                        }
                    });
                    offset += chunk;
                }
            }
            Op::Embedding { table, indices } => {
                let d_model = self.nodes[*table].value.shape()[1];
                self.accumulate(grads, *table, |d| {
                    for (r, &i) in indices.iter().enumerate() {
                        let src = &g[r * d_model..(r + 1) * d_model];
                        d[i * d_model..(i + 1) * d_model].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                    }
                });
            }
        }
        Ok(())
    }

    fn scatter_conv(&self, grads: &mut [Option<Vec<T>>], r: kernels::ConvGrads<T>, ids: [usize; 3]) {
        for (g, id) in [r.dx, r.dk, r.db].into_iter().zip(ids) {
            if let Some(g) = g {
                self.add_into(grads, id, &g);
            }
        }
    }

    fn matmul_backward(&self, grads: &mut [Option<Vec<T>>], id: usize, a: usize, b: usize, transpose_b: bool, g: &[T]) {
        let as_ = self.nodes[a].value.shape();
        let r = as_.len();
        let (m, k) = (as_[r - 2], as_[r - 1]);
        let n = self.nodes[id].value.shape()[r - 1];
        let batch: usize = as_[..r - 2].iter().product();
        let (av, bv) = (self.nodes[a].value.data(), self.nodes[b].value.data());
        self.accumulate(grads, a, |d| {
            for i in 0..batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                let bi = &bv[i * k * n..(i + 1) * k * n];
                // dA = G · Bᵀ, or G · B when B is stored transposed.
                kernels::gemm(m, n, k, gi, false, bi, !transpose_b, &mut d[i * m * k..(i + 1) * m * k], true);
            }
        });
        self.accumulate(grads, b, |d| {
            for i in 0..batch {
                let gi = &g[i * m * n..(i + 1) * m * n];
                let ai = &av[i * m * k..(i + 1) * m * k];
                let di = &mut d[i * k * n..(i + 1) * k * n];
                if transpose_b {
                    // dB = Gᵀ · A, shape [n, k].
                    kernels::gemm(n, m, k, gi, true, ai, false, di, true);
                } else {
                    // dB = Aᵀ · G, shape [k, n].
                    kernels::gemm(k, m, n, ai, true, gi, false, di, true);
                }
            }
        });
    }
}

fn permute_data<T: Copy>(data: &[T], shape: &[usize], axes: &[usize]) -> (Vec<T>, Vec<usize>) {
    let rank = shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..data.len() {
        let src: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(data[src]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    (out, out_shape)
}

/// Per-node gradients from one backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` is not on any path to the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn has(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}
