use crate::error::{shape_err, Result};
use crate::ops::nchw;
use crate::scalar::{gemm, Mat, Scalar};
use crate::tape::Var;

impl<'t, T: Scalar> Var<'t, T> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return shape_err(format!("cannot reshape {:?} to {shape:?}", self.shape()));
        }
        Ok(self.tape.push(
            shape.to_vec(),
            self.value(),
            &[self.id],
            Box::new(|_, _, g| vec![Some(g.to_vec())]),
        ))
    }

    /// `len` consecutive values starting at `start` of the flattened tensor.
    pub fn narrow_flat(self, start: usize, shape: &[usize]) -> Result<Var<'t, T>> {
        let len: usize = shape.iter().product();
        let total = self.numel();
        if start + len > total {
            return shape_err(format!("narrow {start}+{len} beyond {total} values"));
        }
        let out = self.with_value(|v| v[start..start + len].to_vec());
        Ok(self.tape.push(
            shape.to_vec(),
            out,
            &[self.id],
            Box::new(move |_, _, g| {
                let mut full = vec![T::zero(); total];
                full[start..start + len].copy_from_slice(g);
                vec![Some(full)]
            }),
        ))
    }

    /// Concatenation along axis 1 (channels or features).
    pub fn concat(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return shape_err(format!("concat: incompatible {sa:?} and {sb:?}"));
        }
        let n = sa[0];
        let inner: usize = sa[2..].iter().product();
        let (ba, bb) = (sa[1] * inner, sb[1] * inner);
        let mut out = Vec::with_capacity(n * (ba + bb));
        {
            let a = self.tape.nodes_value(self.id);
            let b = self.tape.nodes_value(other.id);
            for i in 0..n {
                out.extend_from_slice(&a[i * ba..(i + 1) * ba]);
                out.extend_from_slice(&b[i * bb..(i + 1) * bb]);
            }
        }
        let mut shape = sa.clone();
        shape[1] += sb[1];
        Ok(self.tape.push(
            shape,
            out,
            &[self.id, other.id],
            Box::new(move |_, _, g| {
                let mut ga = Vec::with_capacity(n * ba);
                let mut gb = Vec::with_capacity(n * bb);
                for row in g.chunks(ba + bb) {
                    ga.extend_from_slice(&row[..ba]);
                    gb.extend_from_slice(&row[ba..]);
                }
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Adds a per-channel bias `[C]` to `[N, C, ...]`.
    pub fn add_channel_bias(self, bias: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&bias);
        let s = self.shape();
        if s.len() < 2 || bias.shape() != [s[1]] {
            return shape_err(format!("bias {:?} for input {s:?}", bias.shape()));
        }
        let c = s[1];
        let inner: usize = s[2..].iter().product();
        let out = {
            let x = self.tape.nodes_value(self.id);
            let b = self.tape.nodes_value(bias.id);
            x.iter().enumerate().map(|(i, &v)| v + b[(i / inner) % c]).collect()
        };
        Ok(self.tape.push(
            s,
            out,
            &[self.id, bias.id],
            Box::new(move |_, _, g| {
                let mut gb = vec![T::zero(); c];
                for (i, &v) in g.iter().enumerate() {
                    gb[(i / inner) % c] = gb[(i / inner) % c] + v;
                }
                vec![Some(g.to_vec()), Some(gb)]
            }),
        ))
    }

    /// Dense layer: `x [N, I]`, `weight [O, I]`, `bias [O]` → `[N, O]`.
    pub fn linear(self, weight: Var<'t, T>, bias: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(&weight);
        let (xs, ws) = (self.shape(), weight.shape());
        let (&[n, i], &[o, i2]) = (xs.as_slice(), ws.as_slice()) else {
            return shape_err(format!("linear: input {xs:?}, weight {ws:?}"));
        };
        if i != i2 {
            return shape_err(format!("linear: input {xs:?}, weight {ws:?}"));
        }
        let (xid, wid) = (self.id, weight.id);
        let mut out = vec![T::zero(); n * o];
        {
            let x = self.tape.nodes_value(xid);
            let w = self.tape.nodes_value(wid);
            gemm(Mat::new(&x, n, i), Mat::new(&w, o, i).t(), T::zero(), &mut out);
        }
        let y = self.tape.push(
            vec![n, o],
            out,
            &[xid, wid],
            Box::new(move |ctx, _, g| {
                let gx = ctx.needs_grad(xid).then(|| {
                    let mut gx = vec![T::zero(); n * i];
                    gemm(Mat::new(g, n, o), Mat::new(ctx.value(wid), o, i), T::zero(), &mut gx);
                    gx
                });
                let gw = ctx.needs_grad(wid).then(|| {
                    let mut gw = vec![T::zero(); o * i];
                    gemm(Mat::new(g, n, o).t(), Mat::new(ctx.value(xid), n, i), T::zero(), &mut gw);
                    gw
                });
                vec![gx, gw]
            }),
        );
        y.add_channel_bias(bias)
    }

    /// Mean over the spatial axes: `[N, C, H, W]` → `[N, C]`.
    pub fn global_avg_pool(self) -> Result<Var<'t, T>> {
        let (n, c, h, w) = nchw(&self.shape(), "global_avg_pool")?;
        let m = h * w;
        let inv = T::c(1.0 / m as f64);
        let out = self.with_value(|v| v.chunks(m).map(|p| p.iter().copied().sum::<T>() * inv).collect());
        Ok(self.tape.push(
            vec![n, c],
            out,
            &[self.id],
            Box::new(move |_, _, g| {
                vec![Some(g.iter().flat_map(|&gi| std::iter::repeat_n(gi * inv, m)).collect())]
            }),
        ))
    }

    /// 2×2 max pooling with stride 2. Ties resolve to the first element in
    /// row-major order.
    pub fn max_pool2d(self) -> Result<Var<'t, T>> {
        let (n, c, h, w) = nchw(&self.shape(), "max_pool2d")?;
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err(format!("max_pool2d needs even spatial dims, got {h}x{w}"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let total = n * c * h * w;
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        self.with_value(|x| {
            for plane in 0..n * c {
                let base = plane * h * w;
                for i in 0..ho {
                    for j in 0..wo {
                        let mut best = base + 2 * i * w + 2 * j;
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = base + (2 * i + di) * w + 2 * j + dj;
                            if x[idx] > x[best] || (x[idx].is_nan() && !x[best].is_nan()) {
                                best = idx;
                            }
                        }
                        out.push(x[best]);
                        argmax.push(best);
                    }
                }
            }
        });
        Ok(self.tape.push(
            vec![n, c, ho, wo],
            out,
            &[self.id],
            Box::new(move |_, _, g| {
                let mut gx = vec![T::zero(); total];
                for (&idx, &gi) in argmax.iter().zip(g) {
                    gx[idx] = gx[idx] + gi;
                }
                vec![Some(gx)]
            }),
        ))
    }
}
