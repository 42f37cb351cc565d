//! 2-D convolution and transposed convolution via im2col + GEMM.
//!
//! Layouts: activations NHWC; convolution weights (Kh,Kw,Cin,Cout);
//! transposed-convolution weights (Kh,Kw,Cout,Cin). Kernels are square.
//! Backward passes recompute the column matrix instead of caching it, trading
//! a little time for a much smaller live set.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

use super::reduce::dims4;

/// floor((in + 2·pad − k)/stride) + 1.
pub fn conv_out_dim(in_dim: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(
        in_dim + 2 * pad >= k,
        "convolution window k={k} larger than padded input {in_dim}+2·{pad}"
    );
    (in_dim + 2 * pad - k) / stride + 1
}

/// (in − 1)·stride + k − 2·pad.
pub fn conv_transpose_out_dim(in_dim: usize, k: usize, stride: usize, pad: usize) -> usize {
    let full = (in_dim - 1) * stride + k;
    assert!(full >= 2 * pad, "transposed convolution padding too large");
    full - 2 * pad
}

/// Unfolds NHWC `x` into (N·Ho·Wo, k·k·C) rows of receptive-field contents,
/// zero-filled where the window overlaps the padding.
fn im2col<T: Element>(x: &Tensor<T>, k: usize, stride: usize, pad: usize) -> Tensor<T> {
    let [n, h, w, c] = dims4(x);
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let row_len = k * k * c;
    let mut cols = vec![T::ZERO; n * ho * wo * row_len];
    let xd = x.data();
    for ni in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((ni * ho + oy) * wo + ox) * row_len;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src = ((ni * h + iy as usize) * w + ix as usize) * c;
                        let dst = row + (ky * k + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n * ho * wo, row_len], cols)
}

/// Adjoint of [`im2col`]: scatter-adds column rows back into an NHWC image.
fn col2im<T: Element>(
    cols: &Tensor<T>,
    shape: [usize; 4],
    k: usize,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let [n, h, w, c] = shape;
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let row_len = k * k * c;
    assert_eq!(cols.shape(), &[n * ho * wo, row_len], "col2im column shape");
    let cd = cols.data();
    let mut out = vec![T::ZERO; n * h * w * c];
    for ni in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((ni * ho + oy) * wo + ox) * row_len;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let dst = ((ni * h + iy as usize) * w + ix as usize) * c;
                        let src = row + (ky * k + kx) * c;
                        for ci in 0..c {
                            out[dst + ci] += cd[src + ci];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, h, w, c], out)
}

impl<T: Element> Graph<T> {
    /// Convolution of NHWC `x` with weights (k,k,Cin,Cout). Bias, when a layer
    /// has one, is applied separately with [`Graph::add_bias`].
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let [n, h, wd, cin] = dims4(&xv);
        let ws = wv.shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be (k,k,Cin,Cout)");
        let (k, cout) = (ws[0], ws[3]);
        assert_eq!(ws[1], k, "conv kernels are square");
        assert_eq!(ws[2], cin, "conv weight Cin {} vs input C {cin}", ws[2]);
        let ho = conv_out_dim(h, k, stride, pad);
        let wo = conv_out_dim(wd, k, stride, pad);

        let cols = im2col(&xv, k, stride, pad);
        let row_len = k * k * cin;
        let rows = n * ho * wo;
        let mut y = vec![T::ZERO; rows * cout];
        T::gemm(false, false, rows, row_len, cout, T::ONE, cols.data(), wv.data(), T::ZERO, &mut y);
        let y = Tensor::from_vec(&[n, ho, wo, cout], y);

        let (xi, wi) = (x.0, w.0);
        self.push_op(&[x, w], y, move |dy| {
            let dy2 = dy.reshape(&[rows, cout]);
            // dW = colsᵀ · dY (columns recomputed from the saved input).
            let cols = im2col(&xv, k, stride, pad);
            let mut dw = vec![T::ZERO; row_len * cout];
            T::gemm(true, false, row_len, rows, cout, T::ONE, cols.data(), dy2.data(), T::ZERO, &mut dw);
            // dX = col2im(dY · Wᵀ).
            let mut dcols = vec![T::ZERO; rows * row_len];
            T::gemm(false, true, rows, cout, row_len, T::ONE, dy2.data(), wv.data(), T::ZERO, &mut dcols);
            let dcols = Tensor::from_vec(&[rows, row_len], dcols);
            let dx = col2im(&dcols, [n, h, wd, cin], k, stride, pad);
            vec![
                (xi, dx),
                (wi, Tensor::from_vec(&ws, dw)),
            ]
        })
    }

    /// Transposed convolution (fractionally-strided upsampling) of NHWC `x`
    /// with weights (k,k,Cout,Cin); the exact adjoint of [`Graph::conv2d`]
    /// with the same stride and padding.
    pub fn conv2d_transpose(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Var {
        let xv = self.value(x).clone();
        let wv = self.value(w).clone();
        let [n, h, wd, cin] = dims4(&xv);
        let ws = wv.shape().to_vec();
        assert_eq!(ws.len(), 4, "deconv weight must be (k,k,Cout,Cin)");
        let (k, cout) = (ws[0], ws[2]);
        assert_eq!(ws[1], k, "deconv kernels are square");
        assert_eq!(ws[3], cin, "deconv weight Cin {} vs input C {cin}", ws[3]);
        let ho = conv_transpose_out_dim(h, k, stride, pad);
        let wo = conv_transpose_out_dim(wd, k, stride, pad);
        debug_assert_eq!(conv_out_dim(ho, k, stride, pad), h);
        debug_assert_eq!(conv_out_dim(wo, k, stride, pad), wd);

        let rows = n * h * wd;
        let row_len = k * k * cout;
        // cols = X₂d · Wᵀ, then scatter with col2im into the enlarged output.
        let x2 = xv.reshape(&[rows, cin]);
        let w2 = wv.reshape(&[row_len, cin]);
        let mut cols = vec![T::ZERO; rows * row_len];
        T::gemm(false, true, rows, cin, row_len, T::ONE, x2.data(), w2.data(), T::ZERO, &mut cols);
        let cols = Tensor::from_vec(&[rows, row_len], cols);
        let y = col2im(&cols, [n, ho, wo, cout], k, stride, pad);

        let (xi, wi) = (x.0, w.0);
        self.push_op(&[x, w], y, move |dy| {
            // dX₂d = im2col(dY) · W ; dW = im2col(dY)ᵀ · X₂d.
            let dcols = im2col(dy, k, stride, pad);
            let x2 = xv.reshape(&[rows, cin]);
            let mut dx = vec![T::ZERO; rows * cin];
            T::gemm(false, false, rows, row_len, cin, T::ONE, dcols.data(), wv.data(), T::ZERO, &mut dx);
            let mut dw = vec![T::ZERO; row_len * cin];
            T::gemm(true, false, row_len, rows, cin, T::ONE, dcols.data(), x2.data(), T::ZERO, &mut dw);
            vec![
                (xi, Tensor::from_vec(&[n, h, wd, cin], dx)),
                (wi, Tensor::from_vec(&ws, dw)),
            ]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn conv_identity_kernel_reproduces_input() {
        // 1x1 kernel with identity channel mix.
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::from_vec(&[1, 2, 2, 2], (1..=8).map(f64::from).collect()));
        let w = g.constant(Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let y = g.conv2d(x, w, 1, 0);
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv_sums_padded_neighborhood() {
        // All-ones 3x3 kernel on a 3x3 ramp with pad 1: centre sees the full sum.
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::from_vec(&[1, 3, 3, 1], (1..=9).map(f64::from).collect()));
        let w = g.constant(Tensor::full(&[3, 3, 1, 1], 1.0));
        let y = g.conv2d(x, w, 1, 1);
        assert_eq!(g.value(y).shape(), &[1, 3, 3, 1]);
        assert_eq!(g.value(y).at(&[0, 1, 1, 0]), 45.0);
        assert_eq!(g.value(y).at(&[0, 0, 0, 0]), 1.0 + 2.0 + 4.0 + 5.0);
    }

    #[test]
    fn conv_stride_two_shapes() {
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::zeros(&[2, 8, 8, 3]));
        let w = g.constant(Tensor::zeros(&[3, 3, 3, 5]));
        let y = g.conv2d(x, w, 2, 1);
        assert_eq!(g.value(y).shape(), &[2, 4, 4, 5]);
    }

    #[test]
    fn transpose_doubles_spatial_size_with_k4_s2_p1() {
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::zeros(&[1, 5, 5, 4]));
        let w = g.constant(Tensor::zeros(&[4, 4, 6, 4]));
        let y = g.conv2d_transpose(x, w, 2, 1);
        assert_eq!(g.value(y).shape(), &[1, 10, 10, 6]);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(x), y> must equal <x, convT(y)> when they share one weight.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let xv: Vec<f64> = (0..1 * 6 * 6 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let yv: Vec<f64> = (0..1 * 3 * 3 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wv: Vec<f64> = (0..2 * 2 * 2 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::from_vec(&[1, 6, 6, 2], xv.clone()));
        let w = g.constant(Tensor::from_vec(&[2, 2, 2, 3], wv.clone()));
        let cx = g.conv2d(x, w, 2, 0);
        let lhs: f64 = g
            .value(cx)
            .data()
            .iter()
            .zip(&yv)
            .map(|(&a, &b)| a * b)
            .sum();

        // The conv weight (k,k,Cin,Cout) and the convT weight (k,k,Cout,Cin)
        // describe the same flat array here: conv's Cin is convT's Cout.
        let y = g.constant(Tensor::from_vec(&[1, 3, 3, 3], yv));
        let wt = g.constant(Tensor::from_vec(&[2, 2, 2, 3], wv));
        let ty = g.conv2d_transpose(y, wt, 2, 0);
        let rhs: f64 = g
            .value(ty)
            .data()
            .iter()
            .zip(&xv)
            .map(|(&a, &b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12, "adjoint mismatch: {lhs} vs {rhs}");
    }
}
