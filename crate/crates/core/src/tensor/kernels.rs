//! Dense kernels behind the tape operations.

use super::Real;
use crate::par;

/// `c = a · b` (or `c += a · b`), row-major, with optional transposed operands.
///
/// `a` is stored `[m, k]` (or `[k, m]` when `trans_a`), `b` is `[k, n]`
/// (or `[n, k]` when `trans_b`), `c` is `[m, n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|x| *x = T::zero());
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided 1-D (de)convolution over `[batch, channels, time]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub width: usize,
    pub stride: usize,
    pub pad_left: usize,
    /// Length of the long signal (conv input, deconv output).
    pub len_long: usize,
    /// Length of the short signal (conv output, deconv input).
    pub len_short: usize,
}

impl ConvGeom {
    pub fn conv(batch: usize, cin: usize, cout: usize, width: usize, stride: usize, len_in: usize) -> Self {
        ConvGeom {
            batch,
            cin,
            cout,
            width,
            stride,
            pad_left: (width - 1) / 2,
            len_long: len_in,
            len_short: len_in.div_ceil(stride),
        }
    }

    pub fn deconv(batch: usize, cin: usize, cout: usize, width: usize, stride: usize, len_in: usize) -> Self {
        ConvGeom {
            batch,
            cin,
            cout,
            width,
            stride,
            pad_left: (width - 1) / 2,
            len_long: len_in * stride,
            len_short: len_in,
        }
    }

    /// Long-signal position read by short position `o` at tap `w`.
    #[inline]
    fn tap(&self, o: usize, w: usize) -> Option<usize> {
        let p = (o * self.stride + w) as isize - self.pad_left as isize;
        (p >= 0 && (p as usize) < self.len_long).then_some(p as usize)
    }

    /// Gathers `[channels, len_long]` into columns `[channels * width, len_short]`.
    fn im2col<T: Real>(&self, src: &[T], channels: usize, cols: &mut [T]) {
        let (w_n, count) = (self.width, self.len_short);
        for c in 0..channels {
            let row = &src[c * self.len_long..(c + 1) * self.len_long];
            for w in 0..w_n {
                let dst = &mut cols[(c * w_n + w) * count..(c * w_n + w + 1) * count];
                for (o, d) in dst.iter_mut().enumerate() {
                    *d = match self.tap(o, w) {
                        Some(p) => row[p],
                        None => T::zero(),
                    };
                }
            }
        }
    }

    /// Scatter-adds columns `[channels * width, len_short]` into `[channels, len_long]`.
    fn col2im<T: Real>(&self, cols: &[T], channels: usize, dst: &mut [T]) {
        let (w_n, count) = (self.width, self.len_short);
        for c in 0..channels {
            let row = &mut dst[c * self.len_long..(c + 1) * self.len_long];
            for w in 0..w_n {
                let src = &cols[(c * w_n + w) * count..(c * w_n + w + 1) * count];
                for (o, &v) in src.iter().enumerate() {
                    if let Some(p) = self.tap(o, w) {
                        row[p] += v;
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], len: usize) {
    for (row, &b) in out.chunks_mut(len).zip(bias) {
        row.iter_mut().for_each(|x| *x += b);
    }
}

fn bias_grad<T: Real>(g: &[T], batch: usize, channels: usize, len: usize) -> Vec<T> {
    let mut db = vec![T::zero(); channels];
    for b in 0..batch {
        for (c, d) in db.iter_mut().enumerate() {
            let off = (b * channels + c) * len;
            *d += g[off..off + len].iter().copied().sum::<T>();
        }
    }
    db
}

fn sum_partials<T: Real>(partials: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); len];
    for p in partials {
        acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
    }
    acc
}

/// Strided "same" convolution. `kernel` is `[cout, cin, width]`.
pub(crate) fn conv1d_forward<T: Real>(g: &ConvGeom, x: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let ckw = g.cin * g.width;
    let mut out = vec![T::zero(); g.batch * g.cout * g.len_short];
    par::for_each_chunk(&mut out, g.cout * g.len_short, |b, out_b| {
        let mut cols = vec![T::zero(); ckw * g.len_short];
        g.im2col(&x[b * g.cin * g.len_long..(b + 1) * g.cin * g.len_long], g.cin, &mut cols);
        gemm(g.cout, ckw, g.len_short, kernel, false, &cols, false, out_b, false);
        add_bias(out_b, bias, g.len_short);
    });
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dk: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub(crate) fn conv1d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    kernel: &[T],
    gout: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let ckw = g.cin * g.width;
    let out_len = g.cout * g.len_short;
    let dx = want[0].then(|| {
        let mut dx = vec![T::zero(); g.batch * g.cin * g.len_long];
        par::for_each_chunk(&mut dx, g.cin * g.len_long, |b, dx_b| {
            let mut dcols = vec![T::zero(); ckw * g.len_short];
            gemm(ckw, g.cout, g.len_short, kernel, true, &gout[b * out_len..(b + 1) * out_len], false, &mut dcols, false);
            g.col2im(&dcols, g.cin, dx_b);
        });
        dx
    });
    let dk = want[1].then(|| {
        let partials = par::map_range(g.batch, |b| {
            let mut cols = vec![T::zero(); ckw * g.len_short];
            g.im2col(&x[b * g.cin * g.len_long..(b + 1) * g.cin * g.len_long], g.cin, &mut cols);
            let mut dk = vec![T::zero(); g.cout * ckw];
            gemm(g.cout, g.len_short, ckw, &gout[b * out_len..(b + 1) * out_len], false, &cols, true, &mut dk, false);
            dk
        });
        sum_partials(partials, g.cout * ckw)
    });
    let db = want[2].then(|| bias_grad(gout, g.batch, g.cout, g.len_short));
    ConvGrads { dx, dk, db }
}

/// Strided transposed convolution producing exactly `len_in * stride` samples.
/// `kernel` is `[cin, cout, width]`.
pub(crate) fn deconv1d_forward<T: Real>(g: &ConvGeom, x: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
    let ckw = g.cout * g.width;
    let in_len = g.cin * g.len_short;
    let mut out = vec![T::zero(); g.batch * g.cout * g.len_long];
    par::for_each_chunk(&mut out, g.cout * g.len_long, |b, out_b| {
        let mut cols = vec![T::zero(); ckw * g.len_short];
        gemm(ckw, g.cin, g.len_short, kernel, true, &x[b * in_len..(b + 1) * in_len], false, &mut cols, false);
        g.col2im(&cols, g.cout, out_b);
        add_bias(out_b, bias, g.len_long);
    });
    out
}

pub(crate) fn deconv1d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    kernel: &[T],
    gout: &[T],
    want: [bool; 3],
) -> ConvGrads<T> {
    let ckw = g.cout * g.width;
    let in_len = g.cin * g.len_short;
    let out_len = g.cout * g.len_long;
    let gcols = |b: usize| {
        let mut cols = vec![T::zero(); ckw * g.len_short];
        g.im2col(&gout[b * out_len..(b + 1) * out_len], g.cout, &mut cols);
        cols
    };
    let dx = want[0].then(|| {
        let mut dx = vec![T::zero(); g.batch * in_len];
        par::for_each_chunk(&mut dx, in_len, |b, dx_b| {
            let cols = gcols(b);
            gemm(g.cin, ckw, g.len_short, kernel, false, &cols, false, dx_b, false);
        });
        dx
    });
    let dk = want[1].then(|| {
        let partials = par::map_range(g.batch, |b| {
            let cols = gcols(b);
            let mut dk = vec![T::zero(); g.cin * ckw];
            gemm(g.cin, g.len_short, ckw, &x[b * in_len..(b + 1) * in_len], false, &cols, true, &mut dk, false);
            dk
        });
        sum_partials(partials, g.cin * ckw)
    });
    let db = want[2].then(|| bias_grad(gout, g.batch, g.cout, g.len_long));
    ConvGrads { dx, dk, db }
}

/// Rows per parallel block in row-wise matrix products.
const ROW_BLOCK: usize = 64;

/// `[rows, din] · [din, dout] + bias`.
pub(crate) fn affine_forward<T: Real>(x: &[T], w: &[T], bias: &[T], rows: usize, din: usize, dout: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * dout];
    par::for_each_chunk(&mut out, ROW_BLOCK * dout, |i, out_blk| {
        let r0 = i * ROW_BLOCK;
        let nr = out_blk.len() / dout;
        gemm(nr, din, dout, &x[r0 * din..(r0 + nr) * din], false, w, false, out_blk, false);
        for row in out_blk.chunks_mut(dout) {
            row.iter_mut().zip(bias).for_each(|(o, &b)| *o += b);
        }
    });
    out
}

pub(crate) fn affine_backward<T: Real>(
    x: &[T],
    w: &[T],
    gout: &[T],
    rows: usize,
    din: usize,
    dout: usize,
    want: [bool; 3],
) -> ConvGrads<T> {
    let dx = want[0].then(|| {
        let mut dx = vec![T::zero(); rows * din];
        par::for_each_chunk(&mut dx, ROW_BLOCK * din, |i, dx_blk| {
            let r0 = i * ROW_BLOCK;
            let nr = dx_blk.len() / din;
            gemm(nr, dout, din, &gout[r0 * dout..(r0 + nr) * dout], false, w, true, dx_blk, false);
        });
        dx
    });
    let dk = want[1].then(|| {
        let mut dw = vec![T::zero(); din * dout];
        gemm(din, rows, dout, x, true, gout, false, &mut dw, false);
        dw
    });
    let db = want[2].then(|| {
        let mut db = vec![T::zero(); dout];
        for row in gout.chunks(dout) {
            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
        }
        db
    });
    ConvGrads { dx, dk, db }
}
