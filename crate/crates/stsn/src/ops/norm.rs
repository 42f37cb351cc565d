//! Normalization layers: batch norm (train/eval), instance norm, and
//! per-position layer norm over channels.
//!
//! All use the biased variance (divide by the group size) inside the
//! normalizer, matching the usual deep-learning convention.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

use super::reduce::dims4;

impl<T: Element> Graph<T> {
    /// Training-mode batch normalization over (N,H,W) per channel with affine
    /// parameters γ, β of shape (C). Returns the output together with the
    /// batch mean and biased batch variance so the owning layer can update
    /// its running statistics.
    pub fn batch_norm2d_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
    ) -> (Var, Tensor<T>, Tensor<T>) {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let [n, h, w, c] = dims4(&xv);
        assert_eq!(gv.shape(), &[c], "batch norm gamma shape");
        assert_eq!(bv.shape(), &[c], "batch norm beta shape");
        let m = n * h * w;
        let inv_m = T::from_f64(1.0 / m as f64);
        let xd = xv.data();

        let mut mean = vec![T::ZERO; c];
        for r in 0..m {
            for ci in 0..c {
                mean[ci] += xd[r * c + ci];
            }
        }
        for v in &mut mean {
            *v *= inv_m;
        }
        let mut var = vec![T::ZERO; c];
        for r in 0..m {
            for ci in 0..c {
                let d = xd[r * c + ci] - mean[ci];
                var[ci] += d * d;
            }
        }
        for v in &mut var {
            *v *= inv_m;
        }
        let inv: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();

        let mut xhat = vec![T::ZERO; m * c];
        let mut out = vec![T::ZERO; m * c];
        let (gd, bd) = (gv.data(), bv.data());
        for r in 0..m {
            for ci in 0..c {
                let xh = (xd[r * c + ci] - mean[ci]) * inv[ci];
                xhat[r * c + ci] = xh;
                out[r * c + ci] = gd[ci] * xh + bd[ci];
            }
        }
        let y = Tensor::from_vec(&[n, h, w, c], out);
        let mean_t = Tensor::from_vec(&[c], mean);
        let var_t = Tensor::from_vec(&[c], var);

        let xhat = Tensor::from_vec(&[m, c], xhat);
        let inv_t = Tensor::from_vec(&[c], inv);
        let (xi, gi, bi) = (x.0, gamma.0, beta.0);
        let shape = [n, h, w, c];
        let out_var = self.push_op(&[x, gamma, beta], y, move |dy| {
            let dyd = dy.data();
            let xh = xhat.data();
            let invd = inv_t.data();
            let gd = gv.data();
            let mut sg = vec![T::ZERO; c];
            let mut sgx = vec![T::ZERO; c];
            for r in 0..m {
                for ci in 0..c {
                    let g = dyd[r * c + ci];
                    sg[ci] += g;
                    sgx[ci] += g * xh[r * c + ci];
                }
            }
            let m_t = T::from_f64(m as f64);
            let mut dx = vec![T::ZERO; m * c];
            for r in 0..m {
                for ci in 0..c {
                    let g = dyd[r * c + ci];
                    dx[r * c + ci] = gd[ci] * invd[ci] * inv_m
                        * (m_t * g - sg[ci] - xh[r * c + ci] * sgx[ci]);
                }
            }
            vec![
                (xi, Tensor::from_vec(&shape, dx)),
                (gi, Tensor::from_vec(&[c], sgx)),
                (bi, Tensor::from_vec(&[c], sg)),
            ]
        });
        (out_var, mean_t, var_t)
    }

    /// Evaluation-mode batch normalization with frozen statistics.
    pub fn batch_norm2d_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor<T>,
        running_var: &Tensor<T>,
        eps: T,
    ) -> Var {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let [n, h, w, c] = dims4(&xv);
        assert_eq!(running_mean.shape(), &[c]);
        assert_eq!(running_var.shape(), &[c]);
        let m = n * h * w;
        let inv: Vec<T> = running_var.data().iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let (xd, rm) = (xv.data(), running_mean.data());
        let (gd, bd) = (gv.data(), bv.data());
        let mut xhat = vec![T::ZERO; m * c];
        let mut out = vec![T::ZERO; m * c];
        for r in 0..m {
            for ci in 0..c {
                let xh = (xd[r * c + ci] - rm[ci]) * inv[ci];
                xhat[r * c + ci] = xh;
                out[r * c + ci] = gd[ci] * xh + bd[ci];
            }
        }
        let y = Tensor::from_vec(&[n, h, w, c], out);
        let xhat = Tensor::from_vec(&[m, c], xhat);
        let inv_t = Tensor::from_vec(&[c], inv);
        let (xi, gi, bi) = (x.0, gamma.0, beta.0);
        let shape = [n, h, w, c];
        self.push_op(&[x, gamma, beta], y, move |dy| {
            let dyd = dy.data();
            let xh = xhat.data();
            let invd = inv_t.data();
            let gd = gv.data();
            let mut sg = vec![T::ZERO; c];
            let mut sgx = vec![T::ZERO; c];
            let mut dx = vec![T::ZERO; m * c];
            for r in 0..m {
                for ci in 0..c {
                    let g = dyd[r * c + ci];
                    sg[ci] += g;
                    sgx[ci] += g * xh[r * c + ci];
                    dx[r * c + ci] = g * gd[ci] * invd[ci];
                }
            }
            vec![
                (xi, Tensor::from_vec(&shape, dx)),
                (gi, Tensor::from_vec(&[c], sgx)),
                (bi, Tensor::from_vec(&[c], sg)),
            ]
        })
    }

    /// Instance normalization: per (n, c) over the spatial extent, no affine
    /// parameters.
    pub fn instance_norm2d(&mut self, x: Var, eps: T) -> Var {
        let xv = self.value(x).clone();
        let [n, h, w, c] = dims4(&xv);
        let m = h * w;
        assert!(m > 1, "instance norm needs more than one spatial position");
        let inv_m = T::from_f64(1.0 / m as f64);
        let xd = xv.data();
        let mut out = vec![T::ZERO; n * m * c];
        let mut xhat = vec![T::ZERO; n * m * c];
        let mut inv = vec![T::ZERO; n * c];
        for ni in 0..n {
            let base = ni * m * c;
            for ci in 0..c {
                let mut mu = T::ZERO;
                for p in 0..m {
                    mu += xd[base + p * c + ci];
                }
                mu *= inv_m;
                let mut v = T::ZERO;
                for p in 0..m {
                    let d = xd[base + p * c + ci] - mu;
                    v += d * d;
                }
                v *= inv_m;
                let iv = T::ONE / (v + eps).sqrt();
                inv[ni * c + ci] = iv;
                for p in 0..m {
                    let xh = (xd[base + p * c + ci] - mu) * iv;
                    xhat[base + p * c + ci] = xh;
                    out[base + p * c + ci] = xh;
                }
            }
        }
        let y = Tensor::from_vec(&[n, h, w, c], out);
        let xhat = Tensor::from_vec(&[n * m, c], xhat);
        let inv_t = Tensor::from_vec(&[n, c], inv);
        let xi = x.0;
        let shape = [n, h, w, c];
        self.push_op(&[x], y, move |dy| {
            let dyd = dy.data();
            let xh = xhat.data();
            let invd = inv_t.data();
            let m_t = T::from_f64(m as f64);
            let mut dx = vec![T::ZERO; n * m * c];
            for ni in 0..n {
                let base = ni * m * c;
                for ci in 0..c {
                    let mut sg = T::ZERO;
                    let mut sgx = T::ZERO;
                    for p in 0..m {
                        let g = dyd[base + p * c + ci];
                        sg += g;
                        sgx += g * xh[base + p * c + ci];
                    }
                    let iv = invd[ni * c + ci] * inv_m;
                    for p in 0..m {
                        let g = dyd[base + p * c + ci];
                        dx[base + p * c + ci] =
                            iv * (m_t * g - sg - xh[base + p * c + ci] * sgx);
                    }
                }
            }
            vec![(xi, Tensor::from_vec(&shape, dx))]
        })
    }

    /// Layer normalization across channels at every spatial position, with
    /// affine parameters γ, β of shape (C).
    pub fn layer_norm_c(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let xv = self.value(x).clone();
        let gv = self.value(gamma).clone();
        let bv = self.value(beta).clone();
        let [n, h, w, c] = dims4(&xv);
        assert!(c > 1, "layer norm needs more than one channel");
        assert_eq!(gv.shape(), &[c], "layer norm gamma shape");
        assert_eq!(bv.shape(), &[c], "layer norm beta shape");
        let rows = n * h * w;
        let inv_c = T::from_f64(1.0 / c as f64);
        let xd = xv.data();
        let (gd, bd) = (gv.data(), bv.data());
        let mut out = vec![T::ZERO; rows * c];
        let mut xhat = vec![T::ZERO; rows * c];
        let mut inv = vec![T::ZERO; rows];
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mut mu = T::ZERO;
            for &v in row {
                mu += v;
            }
            mu *= inv_c;
            let mut va = T::ZERO;
            for &v in row {
                let d = v - mu;
                va += d * d;
            }
            va *= inv_c;
            let iv = T::ONE / (va + eps).sqrt();
            inv[r] = iv;
            for ci in 0..c {
                let xh = (row[ci] - mu) * iv;
                xhat[r * c + ci] = xh;
                out[r * c + ci] = gd[ci] * xh + bd[ci];
            }
        }
        let y = Tensor::from_vec(&[n, h, w, c], out);
        let xhat = Tensor::from_vec(&[rows, c], xhat);
        let inv_t = Tensor::from_vec(&[rows], inv);
        let (xi, gi, bi) = (x.0, gamma.0, beta.0);
        let shape = [n, h, w, c];
        self.push_op(&[x, gamma, beta], y, move |dy| {
            let dyd = dy.data();
            let xh = xhat.data();
            let invd = inv_t.data();
            let gd = gv.data();
            let c_t = T::from_f64(c as f64);
            let mut dx = vec![T::ZERO; rows * c];
            let mut dgamma = vec![T::ZERO; c];
            let mut dbeta = vec![T::ZERO; c];
            for r in 0..rows {
                let mut sg = T::ZERO;
                let mut sgx = T::ZERO;
                for ci in 0..c {
                    let g = dyd[r * c + ci];
                    let gh = g * gd[ci];
                    dgamma[ci] += g * xh[r * c + ci];
                    dbeta[ci] += g;
                    sg += gh;
                    sgx += gh * xh[r * c + ci];
                }
                let iv = invd[r] * inv_c;
                for ci in 0..c {
                    let gh = dyd[r * c + ci] * gd[ci];
                    dx[r * c + ci] = iv * (c_t * gh - sg - xh[r * c + ci] * sgx);
                }
            }
            vec![
                (xi, Tensor::from_vec(&shape, dx)),
                (gi, Tensor::from_vec(&[c], dgamma)),
                (bi, Tensor::from_vec(&[c], dbeta)),
            ]
        })
    }
}
