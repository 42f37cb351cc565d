//! Max pooling with optional padding and ceil-mode output sizing.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

use super::reduce::dims4;

/// Pooled output size. Ceil mode rounds the window count up but drops a last
/// window that would start entirely inside the padding.
pub fn pool_out_dim(in_dim: usize, k: usize, stride: usize, pad: usize, ceil: bool) -> usize {
    let span = in_dim as i64 + 2 * pad as i64 - k as i64;
    let mut out = if ceil {
        // ceil division that is exact for negative spans (span ≥ −k is given).
        (span + stride as i64 - 1).div_euclid(stride as i64) + 1
    } else {
        assert!(span >= 0, "pool window k={k} larger than padded input {in_dim}+2·{pad}");
        span.div_euclid(stride as i64) + 1
    };
    if ceil && (out - 1) * stride as i64 >= in_dim as i64 + pad as i64 {
        out -= 1;
    }
    assert!(out >= 1, "pooling eliminated all spatial positions");
    out as usize
}

impl<T: Element> Graph<T> {
    /// Max pooling over k×k windows. Padding cells and (in ceil mode) window
    /// parts beyond the input edge are ignored rather than compared.
    pub fn max_pool2d(&mut self, x: Var, k: usize, stride: usize, pad: usize, ceil: bool) -> Var {
        let xv = self.value(x).clone();
        let [n, h, w, c] = dims4(&xv);
        let ho = pool_out_dim(h, k, stride, pad, ceil);
        let wo = pool_out_dim(w, k, stride, pad, ceil);
        let xd = xv.data();
        let mut out = vec![T::ZERO; n * ho * wo * c];
        // Flat input index of each output's maximum, for the backward scatter.
        let mut argmax = vec![0usize; n * ho * wo * c];
        for ni in 0..n {
            for oy in 0..ho {
                let y0 = (oy * stride) as isize - pad as isize;
                let (y_lo, y_hi) = (y0.max(0) as usize, ((y0 + k as isize).min(h as isize)) as usize);
                for ox in 0..wo {
                    let x0 = (ox * stride) as isize - pad as isize;
                    let (x_lo, x_hi) =
                        (x0.max(0) as usize, ((x0 + k as isize).min(w as isize)) as usize);
                    let dst = ((ni * ho + oy) * wo + ox) * c;
                    for ci in 0..c {
                        let mut best = T::from_f64(f64::NEG_INFINITY);
                        let mut best_at = 0usize;
                        for iy in y_lo..y_hi {
                            for ix in x_lo..x_hi {
                                let src = ((ni * h + iy) * w + ix) * c + ci;
                                if xd[src] > best {
                                    best = xd[src];
                                    best_at = src;
                                }
                            }
                        }
                        out[dst + ci] = best;
                        argmax[dst + ci] = best_at;
                    }
                }
            }
        }
        let y = Tensor::from_vec(&[n, ho, wo, c], out);
        let xi = x.0;
        let in_len = xv.len();
        self.push_op(&[x], y, move |dy| {
            let dyd = dy.data();
            let mut dx = vec![T::ZERO; in_len];
            for (i, &a) in argmax.iter().enumerate() {
                dx[a] += dyd[i];
            }
            vec![(xi, Tensor::from_vec(&[n, h, w, c], dx))]
        })
    }
}
