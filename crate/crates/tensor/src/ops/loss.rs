use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::Var;

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside [`Var::bce`].
pub const BCE_EPS: f64 = 1e-7;

impl<'t, T: Scalar> Var<'t, T> {
    fn loss_operands(&self, target: &Var<'_, T>, what: &str) -> Result<usize> {
        self.same_tape(target);
        let (a, b) = (self.shape(), target.shape());
        if a != b {
            return shape_err(format!("{what}: prediction {a:?} vs target {b:?}"));
        }
        Ok(self.numel())
    }

    /// Mean squared difference.
    pub fn mse(self, target: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.loss_operands(&target, "mse")?;
        let (pid, tid) = (self.id, target.id);
        let value = {
            let p = self.tape.nodes_value(pid);
            let t = self.tape.nodes_value(tid);
            p.iter().zip(t.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::c(n as f64)
        };
        let k = T::c(2.0 / n as f64);
        Ok(self.tape.push(
            vec![1],
            vec![value],
            &[pid, tid],
            Box::new(move |ctx, _, g| {
                let (p, t) = (ctx.value(pid), ctx.value(tid));
                let d: Vec<T> = p.iter().zip(t).map(|(&a, &b)| g[0] * k * (a - b)).collect();
                let gt = ctx.needs_grad(tid).then(|| d.iter().map(|&v| -v).collect());
                vec![Some(d), gt]
            }),
        ))
    }

    /// Mean absolute difference; the subgradient at zero is zero.
    pub fn l1(self, target: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.loss_operands(&target, "l1")?;
        let (pid, tid) = (self.id, target.id);
        let value = {
            let p = self.tape.nodes_value(pid);
            let t = self.tape.nodes_value(tid);
            p.iter().zip(t.iter()).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::c(n as f64)
        };
        let k = T::c(1.0 / n as f64);
        Ok(self.tape.push(
            vec![1],
            vec![value],
            &[pid, tid],
            Box::new(move |ctx, _, g| {
                let (p, t) = (ctx.value(pid), ctx.value(tid));
                let d: Vec<T> = p
                    .iter()
                    .zip(t)
                    .map(|(&a, &b)| {
                        let s = if a > b {
                            T::one()
                        } else if a < b {
                            -T::one()
                        } else {
                            T::zero()
                        };
                        g[0] * k * s
                    })
                    .collect();
                let gt = ctx.needs_grad(tid).then(|| d.iter().map(|&v| -v).collect());
                vec![Some(d), gt]
            }),
        ))
    }

    /// Binary cross-entropy of probabilities against targets in `{0, 1}`:
    /// `-mean[t·ln p + (1-t)·ln(1-p)]` with `p` clamped by [`BCE_EPS`].
    pub fn bce(self, target: Var<'t, T>) -> Result<Var<'t, T>> {
        let n = self.loss_operands(&target, "bce")?;
        let (pid, tid) = (self.id, target.id);
        let (lo, hi) = (T::c(BCE_EPS), T::one() - T::c(BCE_EPS));
        let clamp = move |p: T| if p.is_nan() { p } else { p.max(lo).min(hi) };
        let value = {
            let p = self.tape.nodes_value(pid);
            let t = self.tape.nodes_value(tid);
            let s: T = p
                .iter()
                .zip(t.iter())
                .map(|(&a, &b)| {
                    let a = clamp(a);
                    b * a.ln() + (T::one() - b) * (T::one() - a).ln()
                })
                .sum();
            -s / T::c(n as f64)
        };
        let k = T::c(1.0 / n as f64);
        Ok(self.tape.push(
            vec![1],
            vec![value],
            &[pid, tid],
            Box::new(move |ctx, _, g| {
                let (p, t) = (ctx.value(pid), ctx.value(tid));
                let gp = p
                    .iter()
                    .zip(t)
                    .map(|(&a, &b)| {
                        if a < lo || a > hi {
                            T::zero()
                        } else {
                            g[0] * k * (-b / a + (T::one() - b) / (T::one() - a))
                        }
                    })
                    .collect();
                let gt = ctx.needs_grad(tid).then(|| {
                    p.iter()
                        .map(|&a| {
                            let a = clamp(a);
                            -g[0] * k * (a.ln() - (T::one() - a).ln())
                        })
                        .collect()
                });
                vec![Some(gp), gt]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn mse_of_equal_is_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(&Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        assert_eq!(x.mse(x).unwrap().item(), 0.0);
    }

    #[test]
    fn bce_at_chance_is_ln2() {
        let tape = Tape::<f64>::new();
        let p = tape.constant(&Tensor::full(&[4], 0.5));
        for t in [0.0, 1.0] {
            let tt = tape.constant(&Tensor::full(&[4], t));
            assert!((p.bce(tt).unwrap().item() - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_clamps_saturated_probabilities() {
        let tape = Tape::<f64>::new();
        let p = tape.constant(&Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
        let t = tape.constant(&Tensor::new(&[2], vec![1.0, 0.0]).unwrap());
        let v = p.bce(t).unwrap().item();
        assert!(v.is_finite());
        assert!((v - -(1e-7f64).ln()).abs() < 1e-6);
    }
}
