//! Reductions and broadcasts.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// Mean over every element, yielding a scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let n = xv.len();
        let inv = T::from_f64(1.0 / n as f64);
        let mut acc = T::ZERO;
        for &v in xv.data() {
            acc += v;
        }
        let y = Tensor::scalar_tensor(acc * inv);
        let xi = x.0;
        let shape = xv.shape().to_vec();
        self.push_op(&[x], y, move |dy| {
            vec![(xi, Tensor::full(&shape, dy.scalar() * inv))]
        })
    }

    /// Sum over every element, yielding a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let mut acc = T::ZERO;
        for &v in xv.data() {
            acc += v;
        }
        let y = Tensor::scalar_tensor(acc);
        let xi = x.0;
        let shape = xv.shape().to_vec();
        self.push_op(&[x], y, move |dy| {
            vec![(xi, Tensor::full(&shape, dy.scalar()))]
        })
    }

    /// NHWC → (N,1,1,C) spatial mean. Reshape to (N,C) for vector heads.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.value(x).clone();
        let [n, h, w, c] = dims4(&xv);
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let mut out = vec![T::ZERO; n * c];
        let xd = xv.data();
        for ni in 0..n {
            let base = ni * h * w * c;
            for p in 0..h * w {
                let row = base + p * c;
                for ci in 0..c {
                    out[ni * c + ci] += xd[row + ci];
                }
            }
        }
        for v in &mut out {
            *v *= inv;
        }
        let y = Tensor::from_vec(&[n, 1, 1, c], out);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            let dyd = dy.data();
            let mut dx = vec![T::ZERO; n * h * w * c];
            for ni in 0..n {
                let base = ni * h * w * c;
                for p in 0..h * w {
                    let row = base + p * c;
                    for ci in 0..c {
                        dx[row + ci] = dyd[ni * c + ci] * inv;
                    }
                }
            }
            vec![(xi, Tensor::from_vec(&[n, h, w, c], dx))]
        })
    }

    /// Tiles a (N,1,1,C) code over an H×W grid, the spatial broadcast used to
    /// assemble generator inputs.
    pub fn broadcast_hw(&mut self, x: Var, h: usize, w: usize) -> Var {
        let xv = self.value(x).clone();
        let [n, xh, xw, c] = dims4(&xv);
        assert_eq!((xh, xw), (1, 1), "broadcast_hw expects a (N,1,1,C) input");
        let xd = xv.data();
        let mut out = vec![T::ZERO; n * h * w * c];
        for ni in 0..n {
            let src = &xd[ni * c..(ni + 1) * c];
            let base = ni * h * w * c;
            for p in 0..h * w {
                out[base + p * c..base + (p + 1) * c].copy_from_slice(src);
            }
        }
        let y = Tensor::from_vec(&[n, h, w, c], out);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| {
            let dyd = dy.data();
            let mut dx = vec![T::ZERO; n * c];
            for ni in 0..n {
                let base = ni * h * w * c;
                for p in 0..h * w {
                    let row = base + p * c;
                    for ci in 0..c {
                        dx[ni * c + ci] += dyd[row + ci];
                    }
                }
            }
            vec![(xi, Tensor::from_vec(&[n, 1, 1, c], dx))]
        })
    }

    /// Adds a length-C bias along the last axis of any tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let xv = self.value(x).clone();
        let bv = self.value(b).clone();
        let c = *xv.shape().last().expect("add_bias on 0-d tensor");
        assert_eq!(bv.shape(), &[c], "bias shape");
        let rows = xv.len() / c;
        let mut out = xv.data().to_vec();
        let bd = bv.data();
        for r in 0..rows {
            for ci in 0..c {
                out[r * c + ci] += bd[ci];
            }
        }
        let y = Tensor::from_vec(xv.shape(), out);
        let (xi, bi) = (x.0, b.0);
        self.push_op(&[x, b], y, move |dy| {
            let dyd = dy.data();
            let mut db = vec![T::ZERO; c];
            for r in 0..rows {
                for ci in 0..c {
                    db[ci] += dyd[r * c + ci];
                }
            }
            vec![(xi, dy.clone()), (bi, Tensor::from_vec(&[c], db))]
        })
    }
}

/// Unpacks a rank-4 shape.
pub(crate) fn dims4<T: Element>(t: &Tensor<T>) -> [usize; 4] {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected rank-4 NHWC tensor, got {s:?}");
    [s[0], s[1], s[2], s[3]]
}

#[cfg(test)]
mod tests {
    use crate::graph::{Graph, Param};
    use crate::tensor::Tensor;

    #[test]
    fn global_avg_pool_then_broadcast_round_trips_constants() {
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::full(&[2, 3, 3, 4], 2.5));
        let p = g.global_avg_pool(x);
        assert_eq!(g.value(p).shape(), &[2, 1, 1, 4]);
        let b = g.broadcast_hw(p, 3, 3);
        assert_eq!(g.value(b).data(), g.value(x).data());
    }

    #[test]
    fn broadcast_backward_sums_over_positions() {
        let mut g: Graph<f64> = Graph::new(true);
        let p = Param::new("code", Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, -1.0]));
        let x = g.param(&p);
        let y = g.broadcast_hw(x, 2, 2);
        let s = g.sum_all(y);
        let grads = g.backward(s);
        assert_eq!(grads.get(&p).unwrap().data(), &[4.0, 4.0]);
    }
}
