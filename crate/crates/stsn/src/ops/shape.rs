//! Shape manipulation: reshape and channel concatenation.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// View with a new shape (same element count, shared storage).
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let xv = self.value(x).clone();
        let y = xv.reshape(shape);
        let xi = x.0;
        let old = xv.shape().to_vec();
        self.push_op(&[x], y, move |dy| vec![(xi, dy.reshape(&old))])
    }

    /// Concatenates tensors along the last axis; leading axes must agree.
    /// This is the channel concatenation of NHWC feature maps.
    pub fn concat_last(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_last of nothing");
        let vals: Vec<Tensor<T>> = parts.iter().map(|&p| self.value(p).clone()).collect();
        let lead = &vals[0].shape()[..vals[0].shape().len() - 1];
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = vals
            .iter()
            .map(|v| {
                assert_eq!(
                    &v.shape()[..v.shape().len() - 1],
                    lead,
                    "concat_last leading-shape mismatch"
                );
                *v.shape().last().unwrap()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![T::ZERO; rows * total];
        for r in 0..rows {
            let mut off = 0;
            for (v, &w) in vals.iter().zip(&widths) {
                out[r * total + off..r * total + off + w]
                    .copy_from_slice(&v.data()[r * w..(r + 1) * w]);
                off += w;
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let y = Tensor::from_vec(&shape, out);
        let idxs: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let widths_b = widths.clone();
        self.push_op(parts, y, move |dy| {
            let dyd = dy.data();
            let mut grads = Vec::with_capacity(idxs.len());
            let mut off = 0;
            for (&i, &w) in idxs.iter().zip(&widths_b) {
                let mut part = vec![T::ZERO; rows * w];
                for r in 0..rows {
                    part[r * w..(r + 1) * w]
                        .copy_from_slice(&dyd[r * total + off..r * total + off + w]);
                }
                let mut shape = dy.shape().to_vec();
                *shape.last_mut().unwrap() = w;
                grads.push((i, Tensor::from_vec(&shape, part)));
                off += w;
            }
            grads
        })
    }
}
