//! 2-D convolution and its adjoint via im2col + GEMM.

use crate::error::{shape_err, Result};
use crate::ops::nchw;
use crate::scalar::{gemm, Mat, Scalar};
use crate::tape::Var;

/// Geometry of a cross-correlation from a `c×h×w` image to `ho×wo`.
#[derive(Clone, Copy, Debug)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 || k == 0 {
            return shape_err("kernel size and stride must be positive");
        }
        let span = |d: usize| -> Result<usize> {
            let padded = d + 2 * pad;
            if padded < k || (padded - k) % stride != 0 {
                return shape_err(format!(
                    "extent {d} with kernel {k}, stride {stride}, pad {pad} is not integral"
                ));
            }
            Ok((padded - k) / stride + 1)
        };
        let (ho, wo) = (span(h)?, span(w)?);
        Ok(Geom { c, h, w, k, stride, pad, ho, wo })
    }

    fn col_rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source coordinate for output index `o` and kernel tap `t`, if inside.
    #[inline]
    fn src(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + t) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < extent).then_some(p as usize)
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let (ho, wo) = (self.ho, self.wo);
        for c in 0..self.c {
            let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let dst = &mut col[row * ho * wo..(row + 1) * ho * wo];
                    for oi in 0..ho {
                        let d = &mut dst[oi * wo..(oi + 1) * wo];
                        match self.src(oi, ki, self.h) {
                            None => d.fill(T::zero()),
                            Some(ii) => {
                                let src_row = &plane[ii * self.w..(ii + 1) * self.w];
                                for (oj, v) in d.iter_mut().enumerate() {
                                    *v = match self.src(oj, kj, self.w) {
                                        Some(jj) => src_row[jj],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatter-adds columns back into `x`.
    fn col2im<T: Scalar>(&self, col: &[T], x: &mut [T]) {
        let (ho, wo) = (self.ho, self.wo);
        for c in 0..self.c {
            let plane = &mut x[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.k {
                for kj in 0..self.k {
                    let row = (c * self.k + ki) * self.k + kj;
                    let src = &col[row * ho * wo..(row + 1) * ho * wo];
                    for oi in 0..ho {
                        let Some(ii) = self.src(oi, ki, self.h) else { continue };
                        let dst_row = &mut plane[ii * self.w..(ii + 1) * self.w];
                        for (oj, &v) in src[oi * wo..(oi + 1) * wo].iter().enumerate() {
                            if let Some(jj) = self.src(oj, kj, self.w) {
                                dst_row[jj] = dst_row[jj] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn kernel_dims(ws: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *ws {
        [a, b, k, k2] if k == k2 => Ok((a, b, k)),
        _ => shape_err(format!("{what}: weight must be [A,B,k,k], got {ws:?}")),
    }
}

/// Forward of a plain convolution for all `n` examples.
fn conv_forward<T: Scalar>(x: &[T], w: &[T], n: usize, f: usize, g: &Geom) -> Vec<T> {
    let (in_len, out_len) = (g.c * g.h * g.w, g.out_len());
    let mut out = vec![T::zero(); n * f * out_len];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.col_rows() * out_len] };
    for i in 0..n {
        let xi = &x[i * in_len..(i + 1) * in_len];
        let cols: &[T] = if g.is_pointwise() {
            xi
        } else {
            g.im2col(xi, &mut col);
            &col
        };
        gemm(
            Mat::new(w, f, g.col_rows()),
            Mat::new(cols, g.col_rows(), out_len),
            T::zero(),
            &mut out[i * f * out_len..(i + 1) * f * out_len],
        );
    }
    out
}

/// Adjoint of `conv_forward` with respect to its input.
fn conv_adjoint<T: Scalar>(y: &[T], w: &[T], n: usize, f: usize, g: &Geom) -> Vec<T> {
    let (in_len, out_len) = (g.c * g.h * g.w, g.out_len());
    let mut x = vec![T::zero(); n * in_len];
    let mut col = vec![T::zero(); g.col_rows() * out_len];
    for i in 0..n {
        let yi = &y[i * f * out_len..(i + 1) * f * out_len];
        let xi = &mut x[i * in_len..(i + 1) * in_len];
        if g.is_pointwise() {
            gemm(Mat::new(w, f, g.c).t(), Mat::new(yi, f, out_len), T::zero(), xi);
        } else {
            gemm(Mat::new(w, f, g.col_rows()).t(), Mat::new(yi, f, out_len), T::zero(), &mut col);
            g.col2im(&col, xi);
        }
    }
    x
}

/// Weight gradient shared by both directions: `Σ_n y_n · im2col(x_n)ᵀ`.
fn conv_weight_grad<T: Scalar>(x: &[T], y: &[T], n: usize, f: usize, g: &Geom) -> Vec<T> {
    let (in_len, out_len) = (g.c * g.h * g.w, g.out_len());
    let mut gw = vec![T::zero(); f * g.col_rows()];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.col_rows() * out_len] };
    for i in 0..n {
        let xi = &x[i * in_len..(i + 1) * in_len];
        let cols: &[T] = if g.is_pointwise() {
            xi
        } else {
            g.im2col(xi, &mut col);
            &col
        };
        gemm(
            Mat::new(&y[i * f * out_len..(i + 1) * f * out_len], f, out_len),
            Mat::new(cols, g.col_rows(), out_len).t(),
            T::one(),
            &mut gw,
        );
    }
    gw
}

impl<'t, T: Scalar> Var<'t, T> {
    /// Cross-correlation of `[N,C,H,W]` with `[F,C,k,k]` → `[N,F,H',W']`.
    pub fn conv2d(self, weight: Var<'t, T>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        self.same_tape(&weight);
        let (n, c, h, w) = nchw(&self.shape(), "conv2d")?;
        let (f, cw, k) = kernel_dims(&weight.shape(), "conv2d")?;
        if c != cw {
            return shape_err(format!("conv2d: input has {c} channels, weight expects {cw}"));
        }
        let g = Geom::new(c, h, w, k, stride, pad)?;
        let (xid, wid) = (self.id, weight.id);
        let out = {
            let x = self.tape.nodes_value(xid);
            let wv = self.tape.nodes_value(wid);
            conv_forward(&x, &wv, n, f, &g)
        };
        Ok(self.tape.push(
            vec![n, f, g.ho, g.wo],
            out,
            &[xid, wid],
            Box::new(move |ctx, _, gy| {
                let gx = ctx.needs_grad(xid).then(|| conv_adjoint(gy, ctx.value(wid), n, f, &g));
                let gw = ctx.needs_grad(wid).then(|| conv_weight_grad(ctx.value(xid), gy, n, f, &g));
                vec![gx, gw]
            }),
        ))
    }

    /// Adjoint of [`conv2d`](Self::conv2d) with the same `[F,C,k,k]` weight:
    /// maps `[N,F,H,W]` to `[N,C,(H-1)·s-2p+k, (W-1)·s-2p+k]`.
    pub fn conv_transpose2d(self, weight: Var<'t, T>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        self.same_tape(&weight);
        let (n, f, hi, wi) = nchw(&self.shape(), "conv_transpose2d")?;
        let (fw, c, k) = kernel_dims(&weight.shape(), "conv_transpose2d")?;
        if f != fw {
            return shape_err(format!("conv_transpose2d: input has {f} channels, weight expects {fw}"));
        }
        if stride == 0 {
            return shape_err("stride must be positive");
        }
        let extent = |d: usize| -> Result<usize> {
            let full = (d - 1) * stride + k;
            if full <= 2 * pad {
                return shape_err(format!("conv_transpose2d: padding {pad} consumes extent {full}"));
            }
            Ok(full - 2 * pad)
        };
        let (ho, wo) = (extent(hi)?, extent(wi)?);
        let g = Geom::new(c, ho, wo, k, stride, pad)?;
        debug_assert_eq!((g.ho, g.wo), (hi, wi));
        let (yid, wid) = (self.id, weight.id);
        let out = {
            let y = self.tape.nodes_value(yid);
            let wv = self.tape.nodes_value(wid);
            conv_adjoint(&y, &wv, n, f, &g)
        };
        Ok(self.tape.push(
            vec![n, c, ho, wo],
            out,
            &[yid, wid],
            Box::new(move |ctx, _, gout| {
                let gy = ctx.needs_grad(yid).then(|| conv_forward(gout, ctx.value(wid), n, f, &g));
                let gw = ctx.needs_grad(wid).then(|| conv_weight_grad(gout, ctx.value(yid), n, f, &g));
                vec![gy, gw]
            }),
        ))
    }
}
