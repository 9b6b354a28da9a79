use std::sync::Arc;

use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<S: Scalar> Tensor<S> {
    /// Pointwise map whose derivative is a function of (input, output).
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(S) -> S,
        df: impl Fn(S, S) -> S + Send + Sync + 'static,
    ) -> Tensor<S> {
        let out: Arc<Vec<S>> = Arc::new(self.data().iter().map(|&v| f(v)).collect());
        let saved = Arc::clone(&out);
        Tensor::from_op(
            op,
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].data();
                let dx = g
                    .iter()
                    .zip(x)
                    .zip(saved.iter())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(dx)]
            }),
        )
    }

    fn binary(
        &self,
        rhs: &Tensor<S>,
        op: &'static str,
        f: impl Fn(S, S) -> S,
        // partial derivatives (d/da, d/db) at (a, b)
        df: impl Fn(S, S) -> (S, S) + Send + Sync + 'static,
    ) -> Result<Tensor<S>> {
        if self.shape() != rhs.shape() {
            return shape_err(op, self.shape(), rhs.shape());
        }
        let out: Vec<S> = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_op(
            op,
            self.shape().to_vec(),
            Arc::new(out),
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, parents| {
                let (a, b) = (parents[0].data(), parents[1].data());
                let mut da = Vec::with_capacity(g.len());
                let mut db = Vec::with_capacity(g.len());
                for i in 0..g.len() {
                    let (pa, pb) = df(a[i], b[i]);
                    da.push(g[i] * pa);
                    db.push(g[i] * pb);
                }
                vec![
                    parents[0].requires_grad().then_some(da),
                    parents[1].requires_grad().then_some(db),
                ]
            }),
        ))
    }

    pub fn add(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "add", |a, b| a + b, |_, _| (S::one(), S::one()))
    }

    pub fn sub(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "sub", |a, b| a - b, |_, _| (S::one(), -S::one()))
    }

    pub fn mul(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(rhs, "mul", |a, b| a * b, |a, b| (b, a))
    }

    pub fn div(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(
            rhs,
            "div",
            |a, b| a / b,
            |a, b| (S::one() / b, -a / (b * b)),
        )
    }

    /// Elementwise minimum; ties send the gradient to `self`.
    pub fn min_elementwise(&self, rhs: &Tensor<S>) -> Result<Tensor<S>> {
        self.binary(
            rhs,
            "min_elementwise",
            |a, b| if a <= b { a } else { b },
            |a, b| {
                if a <= b {
                    (S::one(), S::zero())
                } else {
                    (S::zero(), S::one())
                }
            },
        )
    }

    pub fn neg(&self) -> Tensor<S> {
        self.unary("neg", |v| -v, |_, _| -S::one())
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor<S> {
        let c = S::of(c);
        self.unary("mul_scalar", move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor<S> {
        let c = S::of(c);
        self.unary("add_scalar", move |v| v + c, |_, _| S::one())
    }

    pub fn relu(&self) -> Tensor<S> {
        self.unary(
            "relu",
            |v| if v > S::zero() { v } else { S::zero() },
            |x, _| if x > S::zero() { S::one() } else { S::zero() },
        )
    }

    pub fn sigmoid(&self) -> Tensor<S> {
        self.unary(
            "sigmoid",
            |v| {
                if v >= S::zero() {
                    S::one() / (S::one() + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (S::one() + e)
                }
            },
            |_, y| y * (S::one() - y),
        )
    }

    /// Natural logarithm.
    pub fn ln(&self) -> Tensor<S> {
        self.unary("ln", |v| v.ln(), |x, _| S::one() / x)
    }

    pub fn exp(&self) -> Tensor<S> {
        self.unary("exp", |v| v.exp(), |_, y| y)
    }

    pub fn sqrt(&self) -> Tensor<S> {
        self.unary("sqrt", |v| v.sqrt(), |_, y| S::of(0.5) / y)
    }

    pub fn square(&self) -> Tensor<S> {
        self.unary("square", |v| v * v, |x, _| S::of(2.0) * x)
    }

    /// Clamp into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor<S> {
        let (lo, hi) = (S::of(lo), S::of(hi));
        self.unary(
            "clamp",
            move |v| v.max(lo).min(hi),
            move |x, _| {
                if x < lo || x > hi {
                    S::zero()
                } else {
                    S::one()
                }
            },
        )
    }

    /// Broadcast a one-element tensor `s` onto every entry: `self ∘ s`.
    pub fn mul_by_scalar_tensor(&self, s: &Tensor<S>) -> Result<Tensor<S>> {
        self.scalar_broadcast(s, "mul_by_scalar_tensor", false)
    }

    /// `self / s` for a one-element tensor `s`.
    pub fn div_by_scalar_tensor(&self, s: &Tensor<S>) -> Result<Tensor<S>> {
        self.scalar_broadcast(s, "div_by_scalar_tensor", true)
    }

    fn scalar_broadcast(&self, s: &Tensor<S>, op: &'static str, divide: bool) -> Result<Tensor<S>> {
        if s.numel() != 1 {
            return shape_err(op, self.shape(), s.shape());
        }
        let c = s.item();
        let out: Vec<S> = if divide {
            self.data().iter().map(|&v| v / c).collect()
        } else {
            self.data().iter().map(|&v| v * c).collect()
        };
        Ok(Tensor::from_op(
            op,
            self.shape().to_vec(),
            Arc::new(out),
            vec![self.clone(), s.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].data();
                let c = parents[1].item();
                let dx = parents[0].requires_grad().then(|| {
                    if divide {
                        g.iter().map(|&g| g / c).collect()
                    } else {
                        g.iter().map(|&g| g * c).collect()
                    }
                });
                let dc = parents[1].requires_grad().then(|| {
                    let dot: S = g.iter().zip(x).map(|(&g, &x)| g * x).sum();
                    if divide {
                        vec![-dot / (c * c)]
                    } else {
                        vec![dot]
                    }
                });
                vec![dx, dc]
            }),
        ))
    }

    /// `self + s` for a one-element tensor `s`.
    pub fn add_scalar_tensor(&self, s: &Tensor<S>) -> Result<Tensor<S>> {
        if s.numel() != 1 {
            return shape_err("add_scalar_tensor", self.shape(), s.shape());
        }
        let c = s.item();
        let out: Vec<S> = self.data().iter().map(|&v| v + c).collect();
        Ok(Tensor::from_op(
            "add_scalar_tensor",
            self.shape().to_vec(),
            Arc::new(out),
            vec![self.clone(), s.clone()],
            Box::new(move |g, parents| {
                vec![
                    parents[0].requires_grad().then(|| g.to_vec()),
                    parents[1]
                        .requires_grad()
                        .then(|| vec![g.iter().copied().sum()]),
                ]
            }),
        ))
    }

    /// Adds `bias[C]` to every row of a `[..., C]` tensor.
    pub fn add_bias(&self, bias: &Tensor<S>) -> Result<Tensor<S>> {
        let c = *self.shape().last().unwrap_or(&1);
        if bias.numel() != c || self.rank() == 0 {
            return shape_err("add_bias", self.shape(), bias.shape());
        }
        let b = bias.data();
        let mut out = self.to_vec();
        for row in out.chunks_mut(c) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
        Ok(Tensor::from_op(
            "add_bias",
            self.shape().to_vec(),
            Arc::new(out),
            vec![self.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let db = parents[1].requires_grad().then(|| {
                    let mut db = vec![S::zero(); c];
                    for row in g.chunks(c) {
                        for (d, &gv) in db.iter_mut().zip(row) {
                            *d = *d + gv;
                        }
                    }
                    db
                });
                vec![parents[0].requires_grad().then(|| g.to_vec()), db]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::Tensor;

    #[test]
    fn relu_and_sigmoid_values() {
        let x = Tensor::<f64>::from_vec(vec![-1.0, 2.0, 0.0], &[3]).unwrap();
        assert_eq!(x.relu().data(), &[0.0, 2.0, 0.0]);
        assert_eq!(x.sigmoid().data()[2], 0.5);
    }

    #[test]
    fn binary_ops_reject_mismatched_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[3, 2]);
        assert!(a.add(&b).is_err());
        assert!(a.min_elementwise(&b).is_err());
    }

    #[test]
    fn min_elementwise_routes_gradient() {
        let a = Tensor::<f64>::leaf(vec![1.0, 5.0], &[2]).unwrap();
        let b = Tensor::<f64>::leaf(vec![3.0, 2.0], &[2]).unwrap();
        let m = a.min_elementwise(&b).unwrap();
        assert_eq!(m.data(), &[1.0, 2.0]);
        let g = m.sum().backward().unwrap();
        assert_eq!(g.get(&a).unwrap(), &[1.0, 0.0]);
        assert_eq!(g.get(&b).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let x = Tensor::<f32>::from_vec(vec![-200.0, 200.0], &[2]).unwrap();
        let y = x.sigmoid();
        assert!(y.is_finite());
        assert_eq!(y.data()[1], 1.0);
    }
}
