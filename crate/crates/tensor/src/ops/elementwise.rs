use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::{Result, RngStream, Scalar};

impl<T: Scalar> Tape<T> {
    fn unary(
        &mut self,
        v: Var,
        f: impl Fn(T) -> T + Sync,
        // derivative as a function of (input, output)
        df: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Var {
        let out = self.value(v).map(f);
        self.push_op(
            out,
            &[v],
            Box::new(move |g, parents, y, _| {
                let x = parents[0];
                let mut data = Vec::with_capacity(g.numel());
                for i in 0..g.numel() {
                    data.push(g.data()[i] * df(x.data()[i], y.data()[i]));
                }
                Ok(vec![Some(Tensor::from_vec(x.shape().to_vec(), data)?)])
            }),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).binary_broadcast(self.value(b), |x, y| x + y, "add")?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |g, parents, _, needs| {
                let ga = needs[0].then(|| g.reduce_to_shape(parents[0].shape())).transpose()?;
                let gb = needs[1].then(|| g.reduce_to_shape(parents[1].shape())).transpose()?;
                Ok(vec![ga, gb])
            }),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).binary_broadcast(self.value(b), |x, y| x - y, "sub")?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |g, parents, _, needs| {
                let ga = needs[0].then(|| g.reduce_to_shape(parents[0].shape())).transpose()?;
                let gb = needs[1]
                    .then(|| g.map(|x| -x).reduce_to_shape(parents[1].shape()))
                    .transpose()?;
                Ok(vec![ga, gb])
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).binary_broadcast(self.value(b), |x, y| x * y, "mul")?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |g, parents, _, needs| {
                let (a, b) = (parents[0], parents[1]);
                let ga = needs[0]
                    .then(|| {
                        g.binary_broadcast(b, |g, b| g * b, "mul_bwd")?
                            .reduce_to_shape(a.shape())
                    })
                    .transpose()?;
                let gb = needs[1]
                    .then(|| {
                        g.binary_broadcast(a, |g, a| g * a, "mul_bwd")?
                            .reduce_to_shape(b.shape())
                    })
                    .transpose()?;
                Ok(vec![ga, gb])
            }),
        ))
    }

    pub fn neg(&mut self, v: Var) -> Var {
        self.unary(v, |x| -x, |_, _| -T::one())
    }

    pub fn scale(&mut self, v: Var, c: T) -> Var {
        self.unary(v, move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(&mut self, v: Var, c: T) -> Var {
        self.unary(v, move |x| x + c, |_, _| T::one())
    }

    pub fn exp(&mut self, v: Var) -> Var {
        self.unary(v, |x| x.exp(), |_, y| y)
    }

    pub fn ln(&mut self, v: Var) -> Var {
        self.unary(v, |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&mut self, v: Var) -> Var {
        self.unary(v, |x| x.sqrt(), |_, y| T::of_f64(0.5) / y)
    }

    pub fn square(&mut self, v: Var) -> Var {
        self.unary(v, |x| x * x, |x, _| T::of_f64(2.0) * x)
    }

    pub fn sigmoid(&mut self, v: Var) -> Var {
        self.unary(
            v,
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&mut self, v: Var) -> Var {
        self.unary(v, |x| x.tanh(), |_, y| T::one() - y * y)
    }

    /// GELU, tanh approximation (smooth, exact analytic derivative of the
    /// same approximation).
    pub fn gelu(&mut self, v: Var) -> Var {
        let c = T::of_f64((2.0 / std::f64::consts::PI).sqrt());
        let a = T::of_f64(0.044715);
        let half = T::of_f64(0.5);
        let three = T::of_f64(3.0);
        self.unary(
            v,
            move |x| half * x * (T::one() + (c * (x + a * x * x * x)).tanh()),
            move |x, _| {
                let u = c * (x + a * x * x * x);
                let th = u.tanh();
                let sech2 = T::one() - th * th;
                half * (T::one() + th) + half * x * sech2 * c * (T::one() + three * a * x * x)
            },
        )
    }

    /// max(x, c); the boundary point carries zero gradient.
    pub fn clamp_min(&mut self, v: Var, c: T) -> Var {
        self.unary(
            v,
            move |x| if x > c { x } else { c },
            move |x, _| if x > c { T::one() } else { T::zero() },
        )
    }

    /// Cut the graph: same value, no gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    /// Inverted dropout: active only when `training`; the mask is drawn
    /// from `rng` so runs replay exactly.
    pub fn dropout(&mut self, v: Var, rate: f64, training: bool, rng: &mut RngStream) -> Var {
        if !training || rate <= 0.0 {
            return self.unary(v, |x| x, |_, _| T::one());
        }
        let keep = 1.0 - rate;
        let scale = T::of_f64(1.0 / keep);
        let n = self.value(v).numel();
        let mask: Vec<T> = (0..n)
            .map(|_| if rng.uniform_f64() < keep { scale } else { T::zero() })
            .collect();
        let mask = Tensor::from_vec(self.value(v).shape().to_vec(), mask)
            .expect("dropout mask shape");
        let out = self
            .value(v)
            .zip_map(&mask, |x, m| x * m, "dropout")
            .expect("dropout apply");
        self.push_op(
            out,
            &[v],
            Box::new(move |g, _, _, _| {
                Ok(vec![Some(g.zip_map(&mask, |g, m| g * m, "dropout_bwd")?)])
            }),
        )
    }
}
