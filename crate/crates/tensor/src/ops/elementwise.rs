use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tape::Var;

impl<'t, T: Scalar> Var<'t, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        // derivative from (input, output)
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<'t, T> {
        let x = self.id;
        let out: Vec<T> = self.with_value(|v| v.iter().map(|&a| f(a)).collect());
        self.tape.push(
            self.shape(),
            out,
            &[x],
            Box::new(move |ctx, y, g| {
                let xv = ctx.value(x);
                vec![Some(xv.iter().zip(y).zip(g).map(|((&a, &b), &gi)| gi * df(a, b)).collect())]
            }),
        )
    }

    fn check_same_shape(&self, other: &Var<'_, T>, what: &str) -> Result<()> {
        self.same_tape(other);
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return shape_err(format!("{what}: shape {a:?} vs {b:?}"));
        }
        Ok(())
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_same_shape(&other, "add")?;
        let out = {
            let a = self.tape.nodes_value(self.id);
            let b = self.tape.nodes_value(other.id);
            a.iter().zip(b.iter()).map(|(&x, &y)| x + y).collect()
        };
        Ok(self.tape.push(
            self.shape(),
            out,
            &[self.id, other.id],
            Box::new(|_, _, g| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.add(other.scale(-1.0))
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.check_same_shape(&other, "mul")?;
        let (a, b) = (self.id, other.id);
        let out = {
            let x = self.tape.nodes_value(a);
            let y = self.tape.nodes_value(b);
            x.iter().zip(y.iter()).map(|(&p, &q)| p * q).collect()
        };
        Ok(self.tape.push(
            self.shape(),
            out,
            &[a, b],
            Box::new(move |ctx, _, g| {
                let (x, y) = (ctx.value(a), ctx.value(b));
                let ga = ctx
                    .needs_grad(a)
                    .then(|| g.iter().zip(y).map(|(&gi, &yi)| gi * yi).collect());
                let gb = ctx
                    .needs_grad(b)
                    .then(|| g.iter().zip(x).map(|(&gi, &xi)| gi * xi).collect());
                vec![ga, gb]
            }),
        ))
    }

    pub fn scale(self, c: f64) -> Var<'t, T> {
        let c = T::c(c);
        self.unary(move |a| a * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t, T> {
        let c = T::c(c);
        self.unary(move |a| a + c, |_, _| T::one())
    }

    pub fn relu(self) -> Var<'t, T> {
        // relu'(0) = 0; NaN passes through so divergence stays visible
        self.unary(
            |a| if a > T::zero() || a.is_nan() { a } else { T::zero() },
            |a, _| if a > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t, T> {
        let s = T::c(slope);
        self.unary(
            move |a| if a > T::zero() { a } else { a * s },
            move |a, _| if a > T::zero() { T::one() } else { s },
        )
    }

    pub fn tanh(self) -> Var<'t, T> {
        self.unary(|a| a.tanh(), |_, y| T::one() - y * y)
    }

    pub fn sigmoid(self) -> Var<'t, T> {
        self.unary(
            |a| {
                if a >= T::zero() {
                    T::one() / (T::one() + (-a).exp())
                } else {
                    let e = a.exp();
                    e / (T::one() + e)
                }
            },
            |_, y| y * (T::one() - y),
        )
    }

    pub fn sum(self) -> Var<'t, T> {
        let n = self.numel();
        let s: T = self.with_value(|v| v.iter().copied().sum());
        self.tape.push(vec![1], vec![s], &[self.id], Box::new(move |_, _, g| vec![Some(vec![g[0]; n])]))
    }

    pub fn mean(self) -> Var<'t, T> {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use crate::{Tape, Tensor};

    #[test]
    fn activation_values() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(&Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        assert_eq!(x.relu().value(), vec![0.0, 0.0, 2.0]);
        assert_eq!(x.tanh().value()[1], 0.0);
        assert_eq!(x.sigmoid().value()[1], 0.5);
        let big = tape.constant(&Tensor::new(&[2], vec![-800.0, 800.0]).unwrap());
        let s = big.sigmoid().value();
        assert!(s[0] >= 0.0 && s[0] < 1e-300 && s[1] == 1.0);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.param(&Tensor::new(&[2], vec![0.0, 1.0]).unwrap());
        let g = tape.backward(x.relu().sum()).unwrap();
        assert_eq!(g.get(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn nan_survives_relu_pool_and_bce() {
        let tape = Tape::<f64>::new();
        let mut v = vec![1.0; 8];
        v[5] = f64::NAN;
        let x = tape.constant(&Tensor::new(&[1, 2, 2, 2], v).unwrap());
        assert!(x.relu().value()[5].is_nan());
        assert!(x.max_pool2d().unwrap().value()[1].is_nan());
        let p = tape.constant(&Tensor::new(&[2], vec![f64::NAN, 0.5]).unwrap());
        let t = tape.constant(&Tensor::new(&[2], vec![1.0, 0.0]).unwrap());
        assert!(p.bce(t).unwrap().item().is_nan());
    }
}
