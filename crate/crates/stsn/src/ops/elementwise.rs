//! Elementwise arithmetic and activations.

use crate::graph::{Graph, Var};
use crate::tensor::Element;

impl<T: Element> Graph<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let y = av.zip(&bv, |x, z| x + z);
        let (ai, bi) = (a.0, b.0);
        self.push_op(&[a, b], y, move |dy| vec![(ai, dy.clone()), (bi, dy.clone())])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let y = av.zip(&bv, |x, z| x - z);
        let (ai, bi) = (a.0, b.0);
        self.push_op(&[a, b], y, move |dy| {
            vec![(ai, dy.clone()), (bi, dy.map(|v| -v))]
        })
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let y = av.zip(&bv, |x, z| x * z);
        let (ai, bi) = (a.0, b.0);
        self.push_op(&[a, b], y, move |dy| {
            vec![(ai, dy.zip(&bv, |d, z| d * z)), (bi, dy.zip(&av, |d, x| d * x))]
        })
    }

    pub fn neg(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| -v);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| vec![(xi, dy.map(|v| -v))])
    }

    /// Multiplication by a compile-time-known constant.
    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let y = self.value(x).map(|v| v * c);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| vec![(xi, dy.map(|v| v * c))])
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let y = self.value(x).map(|v| v + c);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| vec![(xi, dy.clone())])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v.abs());
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&xv, |d, v| {
                if v > T::ZERO {
                    d
                } else if v < T::ZERO {
                    -d
                } else {
                    T::ZERO
                }
            }))]
        })
    }

    /// Natural logarithm; callers clamp their own arguments away from zero.
    pub fn log(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v.ln());
        let xi = x.0;
        self.push_op(&[x], y, move |dy| vec![(xi, dy.zip(&xv, |d, v| d / v))])
    }

    /// Clamp to `[lo, hi]`; gradient passes only strictly inside the range.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| if v < lo { lo } else if v > hi { hi } else { v });
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&xv, |d, v| if v > lo && v < hi { d } else { T::ZERO }))]
        })
    }

    pub fn square(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| v * v);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&xv, |d, v| d * (v + v)))]
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| if v > T::ZERO { v } else { T::ZERO });
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&xv, |d, v| if v > T::ZERO { d } else { T::ZERO }))]
        })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let xv = self.value(x).clone();
        let y = xv.map(|v| if v > T::ZERO { v } else { v * slope });
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&xv, |d, v| if v > T::ZERO { d } else { d * slope }))]
        })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.tanh());
        let yv = y.clone();
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&yv, |d, t| d * (T::ONE - t * t)))]
        })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| T::ONE / (T::ONE + (-v).exp()));
        let yv = y.clone();
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            vec![(xi, dy.zip(&yv, |d, s| d * s * (T::ONE - s)))]
        })
    }

    /// Mean absolute difference — the elementwise-mean L1 distance used by
    /// the perceptual and reconstruction terms.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.mean_all(d)
    }
}

#[cfg(test)]
mod tests {
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn clamp_saturates_and_blocks_gradient_outside_range() {
        let mut g: Graph<f64> = Graph::new(true);
        let p = crate::graph::Param::new("x", Tensor::from_vec(&[3], vec![-2.0, 0.5, 2.0]));
        let x = g.param(&p);
        let y = g.clamp(x, 0.0, 1.0);
        assert_eq!(g.value(y).data(), &[0.0, 0.5, 1.0]);
        let m = g.mean_all(y);
        let grads = g.backward(m);
        let gx = grads.get(&p).unwrap();
        assert_eq!(gx.data(), &[0.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn abs_gradient_is_sign_with_zero_at_zero() {
        let mut g: Graph<f64> = Graph::new(true);
        let p = crate::graph::Param::new("x", Tensor::from_vec(&[3], vec![-1.5, 0.0, 2.0]));
        let x = g.param(&p);
        let y = g.abs(x);
        let s = g.mean_all(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(&p).unwrap().data(), &[-1.0 / 3.0, 0.0, 1.0 / 3.0]);
    }
}
